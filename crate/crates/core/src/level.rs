use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in the model hierarchy. Lower index means higher accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ModelLevel {
    /// Isothermal Euler equations.
    Euler = 1,
    /// Semilinear model, convective term dropped.
    Semilinear = 2,
    /// Stationary algebraic model.
    Algebraic = 3,
}

impl ModelLevel {
    pub const ALL: [ModelLevel; 3] = [
        ModelLevel::Euler,
        ModelLevel::Semilinear,
        ModelLevel::Algebraic,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(level: u8) -> Result<Self> {
        match level {
            1 => Ok(ModelLevel::Euler),
            2 => Ok(ModelLevel::Semilinear),
            3 => Ok(ModelLevel::Algebraic),
            other => Err(Error::config(format!(
                "model level must be 1, 2 or 3, got {other}"
            ))),
        }
    }

    /// One step up the hierarchy (more accurate), `None` at M1.
    pub fn finer(self) -> Option<Self> {
        match self {
            ModelLevel::Euler => None,
            ModelLevel::Semilinear => Some(ModelLevel::Euler),
            ModelLevel::Algebraic => Some(ModelLevel::Semilinear),
        }
    }

    /// One step down the hierarchy, `None` at M3.
    pub fn coarser(self) -> Option<Self> {
        match self {
            ModelLevel::Euler => Some(ModelLevel::Semilinear),
            ModelLevel::Semilinear => Some(ModelLevel::Algebraic),
            ModelLevel::Algebraic => None,
        }
    }

    /// Level reached after `r_m` model refinements, if it exists.
    pub fn refined(self, r_m: u32) -> Option<Self> {
        let idx = self.index() as i64 - r_m as i64;
        if idx < 1 {
            None
        } else {
            Self::from_index(idx as u8).ok()
        }
    }

    /// How many model refinements are still possible from here.
    pub fn headroom(self) -> u32 {
        self.index() as u32 - 1
    }

    pub(crate) fn slot(self) -> usize {
        self.index() as usize - 1
    }
}

impl TryFrom<u8> for ModelLevel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::from_index(v)
    }
}

impl From<ModelLevel> for u8 {
    fn from(m: ModelLevel) -> u8 {
        m.index()
    }
}

impl fmt::Display for ModelLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.index())
    }
}
