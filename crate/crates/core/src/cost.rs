//! Power-law cost functional `C_m * n_x^alpha_m * n_t^beta_m`.
//!
//! Costs are model values in CPU-seconds, never measured wall-clock, so every
//! experiment built on them is reproducible across machines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::ModelLevel;

/// Fitted constants for one model level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    pub scale: f64,
    pub space_exponent: f64,
    pub time_exponent: f64,
}

/// Cost constants for all three levels, indexed by [`ModelLevel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub m1: LevelCost,
    pub m2: LevelCost,
    pub m3: LevelCost,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            m1: LevelCost {
                scale: 8.45e-5,
                space_exponent: 0.952,
                time_exponent: 0.937,
            },
            m2: LevelCost {
                scale: 1.06e-4,
                space_exponent: 0.908,
                time_exponent: 0.925,
            },
            m3: LevelCost {
                scale: 5.49e-5,
                space_exponent: 0.694,
                time_exponent: 0.857,
            },
        }
    }
}

impl CostParams {
    pub fn level(&self, m: ModelLevel) -> &LevelCost {
        match m {
            ModelLevel::Euler => &self.m1,
            ModelLevel::Semilinear => &self.m2,
            ModelLevel::Algebraic => &self.m3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in ModelLevel::ALL {
            let c = self.level(m);
            if !(c.scale > 0.0 && c.scale.is_finite()) {
                return Err(Error::config(format!(
                    "cost scale for {m} must be positive"
                )));
            }
            for (name, e) in [("space", c.space_exponent), ("time", c.time_exponent)] {
                if !(e > 0.0 && e <= 1.2) {
                    return Err(Error::config(format!(
                        "{name} cost exponent for {m} must lie in (0, 1.2], got {e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cost of one simulation with `n_x` spatial and `n_t` temporal nodes.
    pub fn cost(&self, m: ModelLevel, n_x: u64, n_t: u64) -> f64 {
        let c = self.level(m);
        c.scale * (n_x as f64).powf(c.space_exponent) * (n_t as f64).powf(c.time_exponent)
    }

    /// Cost after `r_x` spatial and `r_t` temporal halvings of the initial
    /// meshes. Identical to [`CostParams::cost`] on the doubled node counts.
    pub fn cost_refined(&self, m: ModelLevel, r_x: u32, r_t: u32, n_x0: u64, n_t0: u64) -> f64 {
        self.cost(m, n_x0 << r_x, n_t0 << r_t)
    }

    /// Marginal costs of one model, space and time refinement from the
    /// current configuration. The model entry is `None` at M1.
    pub fn cost_deltas(
        &self,
        m_c: ModelLevel,
        r_x: u32,
        r_t: u32,
        n_x0: u64,
        n_t0: u64,
    ) -> Result<CostDeltas> {
        let here = self.cost_refined(m_c, r_x, r_t, n_x0, n_t0);
        let model = match m_c.finer() {
            Some(up) => Some(self.cost_refined(up, r_x, r_t, n_x0, n_t0) - here),
            None => None,
        };
        let deltas = CostDeltas {
            model,
            space: self.cost_refined(m_c, r_x + 1, r_t, n_x0, n_t0) - here,
            time: self.cost_refined(m_c, r_x, r_t + 1, n_x0, n_t0) - here,
        };
        let checks = [
            ("model", deltas.model),
            ("space", Some(deltas.space)),
            ("time", Some(deltas.time)),
        ];
        for (kind, d) in checks {
            if let Some(delta) = d {
                if !(delta > 0.0) {
                    return Err(Error::DegenerateCostDelta {
                        level: m_c,
                        kind,
                        delta,
                    });
                }
            }
        }
        Ok(deltas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDeltas {
    pub model: Option<f64>,
    pub space: f64,
    pub time: f64,
}
