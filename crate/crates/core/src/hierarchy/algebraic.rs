//! Stationary algebraic model M3.

use super::eos::{density_from_pressure, drho_dp};
use super::{GasField, PipeConfig};
use crate::error::{Error, Result};

/// `c^2 = p_in / rho_in`, fixed at the inlet.
fn inlet_sound_speed_sq(p_in: f64, cfg: &PipeConfig) -> Result<f64> {
    Ok(p_in / density_from_pressure(p_in, cfg)?)
}

/// Pressures at `x` for inlet pressure `p_in` and mass flux `q`.
pub fn solve_m3(cfg: &PipeConfig, p_in: f64, q: f64, x: &[f64]) -> Result<Vec<f64>> {
    let c2 = inlet_sound_speed_sq(p_in, cfg)?;
    let k = cfg.friction * c2 * q * q.abs() / cfg.diameter;
    x.iter()
        .map(|&xi| {
            let radicand = p_in * p_in - k * xi;
            if radicand > 0.0 {
                Ok(radicand.sqrt())
            } else {
                Err(Error::PressureExhausted {
                    position: xi,
                    radicand,
                })
            }
        })
        .collect()
}

/// M3 state as a density/flux field.
pub fn m3_field(cfg: &PipeConfig, p_in: f64, q: f64, x: &[f64]) -> Result<GasField> {
    let p = solve_m3(cfg, p_in, q, x)?;
    Ok(GasField {
        x: x.to_vec(),
        rho: p
            .iter()
            .map(|&p| density_from_pressure(p, cfg))
            .collect::<Result<_>>()?,
        q: vec![q; x.len()],
    })
}

/// Flux through an M3 pipe with both end pressures given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M3Flux {
    pub q: f64,
    pub dq_dp_in: f64,
    pub dq_dp_out: f64,
}

/// Regularisation of `sign(s) sqrt|s|` near zero flow, in units of `q^2`.
const FLOW_REGULARISATION: f64 = 1e-6;

/// Inverts the M3 relation: the flux `q` with `p(0) = p_in`, `p(L) = p_out`.
///
/// `q = s (s^2 + eps^2)^(-1/4)` with `s = (p_in^2 - p_out^2) D / (lambda c^2 L)`,
/// which equals `sign(s) sqrt|s|` away from zero flow and stays differentiable there.
pub fn m3_flux(cfg: &PipeConfig, p_in: f64, p_out: f64) -> Result<M3Flux> {
    density_from_pressure(p_out, cfg)?;
    let c2 = inlet_sound_speed_sq(p_in, cfg)?;
    let k = cfg.diameter / (cfg.friction * cfg.length);
    let s = (p_in * p_in - p_out * p_out) * k / c2;
    // d(1/c^2)/dp_in where 1/c^2 = rho(p_in)/p_in.
    let rho_in = p_in / c2;
    let dinv_c2 = (drho_dp(p_in, cfg) * p_in - rho_in) / (p_in * p_in);
    let ds_dp_in = k * (2.0 * p_in / c2 + (p_in * p_in - p_out * p_out) * dinv_c2);
    let ds_dp_out = -2.0 * p_out * k / c2;

    let eps2 = FLOW_REGULARISATION * FLOW_REGULARISATION;
    let r = s * s + eps2;
    let q = s * r.powf(-0.25);
    let dq_ds = (0.5 * s * s + eps2) * r.powf(-1.25);
    Ok(M3Flux {
        q,
        dq_dp_in: dq_ds * ds_dp_in,
        dq_dp_out: dq_ds * ds_dp_out,
    })
}
