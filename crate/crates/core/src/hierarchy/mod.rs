//! Pipe-flow model hierarchy.
//!
//! | level | model | unknowns |
//! |-------|-------|----------|
//! | M1 | isothermal Euler, `(rho v)_t + (p + rho v^2)_x = friction + gravity` | `rho`, `q = rho v` |
//! | M2 | semilinear, convective term `(rho v^2)_x` dropped | `rho`, `q` |
//! | M3 | stationary, horizontal, closed form `p(x)^2 = p_in^2 - lambda c^2 x q|q| / D` | `q` constant |
//!
//! M1 and M2 are discretised with the implicit box scheme (second order in
//! space, first order in time). The gas follows `p = rho z(p) R T` with
//! `z(p) = 1 - alpha p`.

mod algebraic;
mod banded;
mod box_scheme;
mod eos;

pub use algebraic::{m3_field, m3_flux, solve_m3, M3Flux};
pub use banded::{BandedLu, BandedMatrix};
pub use box_scheme::{step_m1, step_m2, BoxScheme, Dynamics, Forcing, NewtonSettings, Step};
pub use eos::{density_from_pressure, pressure_from_density};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

/// Physical parameters of one pipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeConfig {
    /// Length [m].
    pub length: f64,
    /// Diameter [m].
    pub diameter: f64,
    /// Darcy friction coefficient.
    pub friction: f64,
    /// Slope `h'` of the pipe axis.
    #[serde(default)]
    pub slope: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Specific gas constant [J/(kg K)].
    pub gas_constant: f64,
    /// Temperature [K].
    pub temperature: f64,
    /// `alpha` in `z(p) = 1 - alpha p` [1/Pa].
    #[serde(default)]
    pub compressibility: f64,
}

impl PipeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("diameter", self.diameter),
            ("friction", self.friction),
            ("gas_constant", self.gas_constant),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "pipe {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.compressibility >= 0.0 && self.compressibility.is_finite()) {
            return Err(Error::config("pipe compressibility must be non-negative"));
        }
        if !self.slope.is_finite() || !self.gravity.is_finite() {
            return Err(Error::config("pipe slope and gravity must be finite"));
        }
        Ok(())
    }

    /// `R T` [m^2/s^2].
    pub fn rt(&self) -> f64 {
        self.gas_constant * self.temperature
    }

    /// Cross-section [m^2].
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }

    /// Uniform grid with `n_x` nodes on `[0, L]`.
    pub fn grid(&self, n_x: usize) -> Vec<f64> {
        let n = n_x.max(2);
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.length
                } else {
                    self.length * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Density and mass flux `q = rho v` on a pipe grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasField {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub q: Vec<f64>,
}

impl GasField {
    pub fn uniform(x: Vec<f64>, rho: f64, q: f64) -> Self {
        let n = x.len();
        GasField {
            x,
            rho: vec![rho; n],
            q: vec![q; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if n < 2 || self.rho.len() != n || self.q.len() != n {
            return Err(Error::NonPhysicalState(format!(
                "field needs at least two nodes and matching lengths ({n}, {}, {})",
                self.rho.len(),
                self.q.len()
            )));
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonPhysicalState(
                "grid must be strictly increasing".into(),
            ));
        }
        if let Some(i) = self.rho.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::NonPhysicalState(format!(
                "density {} at node {i}",
                self.rho[i]
            )));
        }
        if let Some(i) = self.q.iter().position(|q| !q.is_finite()) {
            return Err(Error::NonPhysicalState(format!(
                "flux {} at node {i}",
                self.q[i]
            )));
        }
        Ok(())
    }

    pub fn pressures(&self, cfg: &PipeConfig) -> Result<Vec<f64>> {
        self.rho
            .iter()
            .map(|&r| pressure_from_density(r, cfg))
            .collect()
    }

    /// Gas mass per unit cross-section, trapezoidal in space [kg/m^2].
    pub fn mass_per_area(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.rho.windows(2))
            .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
            .sum()
    }

    /// Piecewise-linear interpolation onto `x_new` (same pipe).
    pub fn interpolate(&self, x_new: &[f64]) -> GasField {
        let lerp = |values: &[f64], at: f64| -> f64 {
            let k = match self.x.partition_point(|&xi| xi <= at) {
                0 => 1,
                k if k >= self.x.len() => self.x.len() - 1,
                k => k,
            };
            let (x0, x1) = (self.x[k - 1], self.x[k]);
            let w = ((at - x0) / (x1 - x0)).clamp(0.0, 1.0);
            values[k - 1] * (1.0 - w) + values[k] * w
        };
        GasField {
            x: x_new.to_vec(),
            rho: x_new.iter().map(|&x| lerp(&self.rho, x)).collect(),
            q: x_new.iter().map(|&x| lerp(&self.q, x)).collect(),
        }
    }
}

/// Condition imposed at one pipe end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum BoundaryCondition {
    Density(f64),
    Pressure(f64),
    Flux(f64),
}

/// One condition per pipe end, i.e. one per characteristic family in
/// subsonic flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

#[cfg(test)]
pub(crate) fn test_pipe() -> PipeConfig {
    PipeConfig {
        length: 50_000.0,
        diameter: 0.6,
        friction: 0.011,
        slope: 0.0,
        gravity: STANDARD_GRAVITY,
        gas_constant: 500.0,
        temperature: 283.0,
        compressibility: 0.0,
    }
}
