//! Real-gas equation of state `p = rho (1 - alpha p) R T`.
//!
//! The relation is linear in `p`, so both directions have closed forms:
//! `p = rho R T / (1 + alpha rho R T)` and `rho = p / (R T (1 - alpha p))`.

use super::PipeConfig;
use crate::error::{Error, Result};

pub fn pressure_from_density(rho: f64, cfg: &PipeConfig) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::NonPhysicalState(format!("density {rho} kg/m^3")));
    }
    let rrt = rho * cfg.rt();
    Ok(rrt / (1.0 + cfg.compressibility * rrt))
}

pub fn density_from_pressure(p: f64, cfg: &PipeConfig) -> Result<f64> {
    let z = 1.0 - cfg.compressibility * p;
    if !(p > 0.0 && p.is_finite()) || !(z > 0.0) {
        return Err(Error::NonPhysicalState(format!(
            "pressure {p} Pa has no positive density (z = {z})"
        )));
    }
    Ok(p / (cfg.rt() * z))
}

/// `dp/drho`, the squared sound speed.
pub(crate) fn dp_drho(rho: f64, cfg: &PipeConfig) -> f64 {
    let d = 1.0 + cfg.compressibility * rho * cfg.rt();
    cfg.rt() / (d * d)
}

/// `drho/dp` at pressure `p`.
pub(crate) fn drho_dp(p: f64, cfg: &PipeConfig) -> f64 {
    let z = 1.0 - cfg.compressibility * p;
    1.0 / (cfg.rt() * z * z)
}

/// Unchecked `p(rho)` for Newton iterates already known to be positive.
pub(crate) fn pressure(rho: f64, cfg: &PipeConfig) -> f64 {
    let rrt = rho * cfg.rt();
    rrt / (1.0 + cfg.compressibility * rrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::test_pipe;
    use proptest::prelude::*;

    fn gas(r: f64, t: f64, alpha: f64) -> PipeConfig {
        PipeConfig {
            gas_constant: r,
            temperature: t,
            compressibility: alpha,
            ..test_pipe()
        }
    }

    /// Root of `p - rho (1 - alpha p) R T` by bisection on `[0, rho R T]`.
    fn bisection_pressure(rho: f64, cfg: &PipeConfig) -> f64 {
        let f = |p: f64| p - rho * (1.0 - cfg.compressibility * p) * cfg.rt();
        let (mut lo, mut hi) = (0.0, rho * cfg.rt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn ideal_gas_reduction() {
        let cfg = gas(500.0, 300.0, 0.0);
        assert_eq!(pressure_from_density(1.0, &cfg).unwrap(), 150_000.0);
        assert_eq!(pressure_from_density(3.5, &cfg).unwrap(), 3.5 * 150_000.0);
    }

    #[test]
    fn real_gas_matches_bisection() {
        let cfg = gas(500.0, 300.0, 1e-8);
        let p = pressure_from_density(50.0, &cfg).unwrap();
        let oracle = bisection_pressure(50.0, &cfg);
        assert!((p - oracle).abs() <= 1e-12 * oracle, "{p} vs {oracle}");
        let residual = p - 50.0 * (1.0 - 1e-8 * p) * 150_000.0;
        assert!(residual.abs() <= 1e-12 * p);
    }

    #[test]
    fn non_physical_inputs() {
        let cfg = gas(500.0, 300.0, 1e-8);
        assert!(pressure_from_density(0.0, &cfg).is_err());
        assert!(pressure_from_density(f64::NAN, &cfg).is_err());
        assert!(density_from_pressure(-1.0, &cfg).is_err());
        // z(p) <= 0 beyond 1/alpha.
        assert!(density_from_pressure(2e8, &cfg).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cfg = gas(500.0, 283.0, 2e-8);
        let rho = 45.0;
        let h = 1e-4;
        let fd = (pressure(rho + h, &cfg) - pressure(rho - h, &cfg)) / (2.0 * h);
        assert!((dp_drho(rho, &cfg) / fd - 1.0).abs() < 1e-8);
        let p = pressure(rho, &cfg);
        assert!((drho_dp(p, &cfg) * dp_drho(rho, &cfg) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn density_pressure_round_trip(rho in 0.01..120.0f64, alpha in 0.0..3e-8f64, t in 250.0..320.0f64) {
            let cfg = gas(518.0, t, alpha);
            let p = pressure_from_density(rho, &cfg).unwrap();
            let back = density_from_pressure(p, &cfg).unwrap();
            prop_assert!((back / rho - 1.0).abs() <= 1e-10);
            let p2 = pressure_from_density(density_from_pressure(p, &cfg).unwrap(), &cfg).unwrap();
            prop_assert!((p2 / p - 1.0).abs() <= 1e-10);
        }
    }
}
