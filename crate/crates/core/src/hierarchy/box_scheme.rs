//! Implicit box scheme for M1 and M2.
//!
//! Per cell `[x_j, x_{j+1}]` and step `t^n -> t^{n+1}`:
//!
//! ```text
//! (u_j + u_{j+1} - u_j^n - u_{j+1}^n) / (2 dt) + (f_{j+1} - f_j) / h = (g_j + g_{j+1}) / 2
//! ```
//!
//! with all unknowns at `t^{n+1}`. Unknowns are interleaved
//! `(rho_0, q_0, rho_1, q_1, ...)`; the left condition is the first row and the
//! right condition the last, which gives a matrix with two sub- and two
//! super-diagonals.

use super::banded::{BandedLu, BandedMatrix};
use super::eos::{density_from_pressure, dp_drho, drho_dp, pressure};
use super::{BoundaryCondition, BoundaryData, GasField, PipeConfig};
use crate::error::{Error, Result};

/// Which momentum flux the scheme discretises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// `p + q^2 / rho` (M1).
    Euler,
    /// `p` only (M2).
    Semilinear,
}

/// Extra source `(x, t) -> [continuity, momentum]`, used for manufactured solutions.
pub type Forcing<'a> = dyn Fn(f64, f64) -> [f64; 2] + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Bound on `|R_i| / S_i`, where `S_i` sums the magnitudes of the terms of row `i`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tolerance: 1e-12,
            max_iterations: 50,
        }
    }
}

#[derive(Clone, Copy)]
pub struct BoxScheme<'a> {
    pub cfg: &'a PipeConfig,
    pub dynamics: Dynamics,
    pub forcing: Option<&'a Forcing<'a>>,
    pub newton: NewtonSettings,
}

/// Result of one time step.
#[derive(Debug, Clone)]
pub struct Step {
    pub field: GasField,
    pub iterations: usize,
    lu: BandedLu,
    dt: f64,
    bc: BoundaryData,
}

const MAX_HALVINGS: usize = 12;

impl<'a> BoxScheme<'a> {
    pub fn new(cfg: &'a PipeConfig, dynamics: Dynamics) -> Self {
        BoxScheme {
            cfg,
            dynamics,
            forcing: None,
            newton: NewtonSettings::default(),
        }
    }

    pub fn with_forcing(mut self, forcing: &'a Forcing<'a>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    /// Advances `old` by `dt`, ending at time `t_new` (only used by the forcing).
    pub fn step(&self, old: &GasField, t_new: f64, dt: f64, bc: &BoundaryData) -> Result<Step> {
        old.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let n = old.len();
        let targets = [self.target(&bc.left)?, self.target(&bc.right)?];
        let sources: Vec<[f64; 2]> = match self.forcing {
            Some(f) => old.x.iter().map(|&x| f(x, t_new)).collect(),
            None => vec![[0.0; 2]; n],
        };
        let q_ref = 1e-6 * old.rho.iter().sum::<f64>() / n as f64 * self.cfg.rt().sqrt();

        let mut u: Vec<f64> = (0..n).flat_map(|i| [old.rho[i], old.q[i]]).collect();
        let mut r = vec![0.0; 2 * n];
        let mut s = vec![0.0; 2 * n];
        let mut lu = None;
        for iteration in 0..=self.newton.max_iterations {
            self.residual(old, &u, dt, bc, targets, &sources, q_ref, &mut r, &mut s);
            let norm = scaled_norm(&r, &s);
            if !norm.is_finite() {
                return Err(Error::SolverDiverged {
                    iterations: iteration,
                    residual: norm,
                });
            }
            if norm <= self.newton.tolerance {
                let lu = match lu {
                    Some(lu) => lu,
                    None => self.jacobian(old, &u, dt, bc).factor()?,
                };
                let field = GasField {
                    x: old.x.clone(),
                    rho: u.iter().step_by(2).copied().collect(),
                    q: u.iter().skip(1).step_by(2).copied().collect(),
                };
                return Ok(Step {
                    field,
                    iterations: iteration,
                    lu,
                    dt,
                    bc: *bc,
                });
            }
            if iteration == self.newton.max_iterations {
                return Err(Error::SolverDiverged {
                    iterations: iteration,
                    residual: norm,
                });
            }
            let factor =
                self.jacobian(old, &u, dt, bc)
                    .factor()
                    .map_err(|_| Error::SolverDiverged {
                        iterations: iteration,
                        residual: norm,
                    })?;
            let delta = factor.solve(&r);
            lu = Some(factor);

            let mut lambda = 1.0;
            let mut accepted = false;
            let scales = s.clone();
            let mut trial = vec![0.0; 2 * n];
            for _ in 0..=MAX_HALVINGS {
                for k in 0..2 * n {
                    trial[k] = u[k] - lambda * delta[k];
                }
                let positive = trial
                    .iter()
                    .step_by(2)
                    .all(|&rho| rho > 0.0 && rho.is_finite());
                if positive {
                    self.residual(
                        old, &trial, dt, bc, targets, &sources, q_ref, &mut r, &mut s,
                    );
                    let trial_norm = scaled_norm(&r, &scales);
                    if trial_norm.is_finite() && trial_norm < norm {
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                if trial.iter().step_by(2).any(|&rho| !(rho > 0.0)) {
                    return Err(Error::NonPhysicalState(format!(
                        "Newton iterate left the positive-density region after {iteration} iterations"
                    )));
                }
                return Err(Error::SolverDiverged {
                    iterations: iteration + 1,
                    residual: norm,
                });
            }
            std::mem::swap(&mut u, &mut trial);
        }
        unreachable!("loop returns on its last iteration")
    }

    /// Density (or flux) value imposed by a boundary condition.
    fn target(&self, bc: &BoundaryCondition) -> Result<f64> {
        match *bc {
            BoundaryCondition::Density(v) | BoundaryCondition::Flux(v) => {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonPhysicalState(format!("boundary value {v}")))
                }
            }
            BoundaryCondition::Pressure(p) => density_from_pressure(p, self.cfg),
        }
    }

    fn momentum_flux(&self, rho: f64, q: f64) -> (f64, f64, f64) {
        let p = pressure(rho, self.cfg);
        let dp = dp_drho(rho, self.cfg);
        match self.dynamics {
            Dynamics::Euler => (p + q * q / rho, dp - q * q / (rho * rho), 2.0 * q / rho),
            Dynamics::Semilinear => (p, dp, 0.0),
        }
    }

    /// Friction and gravity `g(rho, q)` with its partial derivatives.
    fn source(&self, rho: f64, q: f64) -> (f64, f64, f64) {
        let k = self.cfg.friction / (2.0 * self.cfg.diameter);
        let gh = self.cfg.gravity * self.cfg.slope;
        (
            -k * q * q.abs() / rho - gh * rho,
            k * q * q.abs() / (rho * rho) - gh,
            -2.0 * k * q.abs() / rho,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn residual(
        &self,
        old: &GasField,
        u: &[f64],
        dt: f64,
        bc: &BoundaryData,
        targets: [f64; 2],
        sources: &[[f64; 2]],
        q_ref: f64,
        r: &mut [f64],
        s: &mut [f64],
    ) {
        let n = old.len();
        let last = 2 * n - 1;
        let bc_row = |cond: &BoundaryCondition, rho: f64, q: f64, target: f64| match cond {
            BoundaryCondition::Flux(_) => (q - target, q.abs() + target.abs() + q_ref),
            _ => (rho - target, rho.abs() + target.abs()),
        };
        (r[0], s[0]) = bc_row(&bc.left, u[0], u[1], targets[0]);
        (r[last], s[last]) = bc_row(&bc.right, u[last - 1], u[last], targets[1]);

        let inv2dt = 0.5 / dt;
        for j in 0..n - 1 {
            let h = old.x[j + 1] - old.x[j];
            let (ra, qa, rb, qb) = (u[2 * j], u[2 * j + 1], u[2 * j + 2], u[2 * j + 3]);
            let (ra0, qa0, rb0, qb0) = (old.rho[j], old.q[j], old.rho[j + 1], old.q[j + 1]);
            let (sa, sb) = (sources[j], sources[j + 1]);

            let row = 2 * j + 1;
            r[row] = (ra + rb - ra0 - rb0) * inv2dt + (qb - qa) / h - 0.5 * (sa[0] + sb[0]);
            s[row] = (ra.abs() + rb.abs() + ra0.abs() + rb0.abs()) * inv2dt
                + (qa.abs() + qb.abs()) / h
                + 0.5 * (sa[0].abs() + sb[0].abs());

            let (fa, _, _) = self.momentum_flux(ra, qa);
            let (fb, _, _) = self.momentum_flux(rb, qb);
            let (ga, _, _) = self.source(ra, qa);
            let (gb, _, _) = self.source(rb, qb);
            let row = 2 * j + 2;
            r[row] = (qa + qb - qa0 - qb0) * inv2dt + (fb - fa) / h
                - 0.5 * (ga + gb)
                - 0.5 * (sa[1] + sb[1]);
            s[row] = (qa.abs() + qb.abs() + qa0.abs() + qb0.abs()) * inv2dt
                + (fa.abs() + fb.abs()) / h
                + 0.5 * (ga.abs() + gb.abs())
                + 0.5 * (sa[1].abs() + sb[1].abs());
        }
    }

    fn jacobian(&self, old: &GasField, u: &[f64], dt: f64, bc: &BoundaryData) -> BandedMatrix {
        let n = old.len();
        let last = 2 * n - 1;
        let mut jac = BandedMatrix::zeros(2 * n, 2, 2);
        match bc.left {
            BoundaryCondition::Flux(_) => jac.add(0, 1, 1.0),
            _ => jac.add(0, 0, 1.0),
        }
        match bc.right {
            BoundaryCondition::Flux(_) => jac.add(last, last, 1.0),
            _ => jac.add(last, last - 1, 1.0),
        }
        let inv2dt = 0.5 / dt;
        for j in 0..n - 1 {
            let h = old.x[j + 1] - old.x[j];
            let (a, b) = (2 * j, 2 * j + 2);
            let row = 2 * j + 1;
            jac.add(row, a, inv2dt);
            jac.add(row, b, inv2dt);
            jac.add(row, a + 1, -1.0 / h);
            jac.add(row, b + 1, 1.0 / h);

            let (_, fa_r, fa_q) = self.momentum_flux(u[a], u[a + 1]);
            let (_, fb_r, fb_q) = self.momentum_flux(u[b], u[b + 1]);
            let (_, ga_r, ga_q) = self.source(u[a], u[a + 1]);
            let (_, gb_r, gb_q) = self.source(u[b], u[b + 1]);
            let row = 2 * j + 2;
            jac.add(row, a, -fa_r / h - 0.5 * ga_r);
            jac.add(row, a + 1, inv2dt - fa_q / h - 0.5 * ga_q);
            jac.add(row, b, fb_r / h - 0.5 * gb_r);
            jac.add(row, b + 1, inv2dt + fb_q / h - 0.5 * gb_q);
        }
        jac
    }
}

fn scaled_norm(r: &[f64], s: &[f64]) -> f64 {
    r.iter()
        .zip(s)
        .map(|(r, s)| {
            if *r == 0.0 {
                0.0
            } else {
                r.abs() / s.max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max)
}

impl Step {
    /// Forward sensitivity of the new state to a parameter `theta`.
    ///
    /// `old_sens` is `d(old state)/d theta` in interleaved layout;
    /// `left_rate` and `right_rate` are the derivatives of the imposed boundary
    /// values (density, pressure or flux, matching the condition kind).
    pub fn propagate(
        &self,
        cfg: &PipeConfig,
        old_sens: Option<&[f64]>,
        left_rate: f64,
        right_rate: f64,
    ) -> Vec<f64> {
        let m = self.lu.size();
        let n = m / 2;
        let mut rhs = vec![0.0; m];
        let rate = |cond: &BoundaryCondition, v: f64| match *cond {
            BoundaryCondition::Pressure(p) => drho_dp(p, cfg) * v,
            _ => v,
        };
        rhs[0] = rate(&self.bc.left, left_rate);
        rhs[m - 1] = rate(&self.bc.right, right_rate);
        if let Some(old) = old_sens {
            let inv2dt = 0.5 / self.dt;
            for j in 0..n - 1 {
                rhs[2 * j + 1] = (old[2 * j] + old[2 * j + 2]) * inv2dt;
                rhs[2 * j + 2] = (old[2 * j + 1] + old[2 * j + 3]) * inv2dt;
            }
        }
        self.lu.solve(&rhs)
    }
}

/// One M1 step of size `dt`.
pub fn step_m1(cfg: &PipeConfig, state: &GasField, dt: f64, bc: &BoundaryData) -> Result<GasField> {
    Ok(BoxScheme::new(cfg, Dynamics::Euler)
        .step(state, dt, dt, bc)?
        .field)
}

/// One M2 step of size `dt`.
pub fn step_m2(cfg: &PipeConfig, state: &GasField, dt: f64, bc: &BoundaryData) -> Result<GasField> {
    Ok(BoxScheme::new(cfg, Dynamics::Semilinear)
        .step(state, dt, dt, bc)?
        .field)
}
