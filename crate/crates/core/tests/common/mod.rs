#![allow(dead_code)]

use gasadapt::hierarchy::{
    pressure_from_density, BoundaryCondition, BoundaryData, BoxScheme, Dynamics, GasField,
    PipeConfig,
};

pub fn mms_pipe(compressibility: f64) -> PipeConfig {
    PipeConfig {
        length: 10_000.0,
        diameter: 0.5,
        friction: 0.012,
        slope: 2e-3,
        gravity: 9.81,
        gas_constant: 500.0,
        temperature: 283.0,
        compressibility,
    }
}

/// Exact solution with its first derivatives: `(rho, rho_x, rho_t, q, q_x, q_t)`.
pub type Exact = dyn Fn(f64, f64) -> [f64; 6] + Sync;

/// Source terms that make `exact` solve the chosen model.
pub fn forcing<'a>(
    cfg: &'a PipeConfig,
    dynamics: Dynamics,
    exact: &'a Exact,
) -> impl Fn(f64, f64) -> [f64; 2] + Sync + 'a {
    move |x, t| {
        let [r, r_x, r_t, q, q_x, q_t] = exact(x, t);
        let rt = cfg.rt();
        let d = 1.0 + cfg.compressibility * r * rt;
        let p_x = rt / (d * d) * r_x;
        let conv_x = match dynamics {
            Dynamics::Euler => 2.0 * q * q_x / r - q * q * r_x / (r * r),
            Dynamics::Semilinear => 0.0,
        };
        let g =
            -cfg.friction / (2.0 * cfg.diameter) * q * q.abs() / r - cfg.gravity * cfg.slope * r;
        [r_t + q_x, q_t + p_x + conv_x - g]
    }
}

/// Max-norm error at `t_end` after `n_t` steps on `n_x` nodes.
pub fn mms_error(
    cfg: &PipeConfig,
    dynamics: Dynamics,
    exact: &Exact,
    n_x: usize,
    n_t: usize,
    t_end: f64,
) -> f64 {
    let src = forcing(cfg, dynamics, exact);
    let scheme = BoxScheme::new(cfg, dynamics).with_forcing(&src);
    let x = cfg.grid(n_x);
    let sample = |t: f64| GasField {
        rho: x.iter().map(|&x| exact(x, t)[0]).collect(),
        q: x.iter().map(|&x| exact(x, t)[3]).collect(),
        x: x.clone(),
    };
    let mut f = sample(0.0);
    let dt = t_end / n_t as f64;
    for k in 1..=n_t {
        let t = dt * k as f64;
        let bc = BoundaryData {
            left: BoundaryCondition::Pressure(
                pressure_from_density(exact(0.0, t)[0], cfg).unwrap(),
            ),
            right: BoundaryCondition::Flux(exact(cfg.length, t)[3]),
        };
        f = scheme
            .step(&f, t, dt, &bc)
            .expect("manufactured step")
            .field;
    }
    let want = sample(t_end);
    let rho_err = f
        .rho
        .iter()
        .zip(&want.rho)
        .map(|(a, b)| (a - b).abs() / 40.0)
        .fold(0.0, f64::max);
    let q_err =
        f.q.iter()
            .zip(&want.q)
            .map(|(a, b)| (a - b).abs() / 100.0)
            .fold(0.0, f64::max);
    rho_err.max(q_err)
}

/// Smooth in space and linear in time, so the time discretisation is exact.
pub fn space_solution(length: f64) -> impl Fn(f64, f64) -> [f64; 6] + Sync {
    let k = 2.0 * std::f64::consts::PI / length;
    let m = std::f64::consts::PI / length;
    move |x, t| {
        let rho = 40.0 + 2.0 * (k * x).sin() + 1e-3 * t * (m * x).cos();
        let rho_x = 2.0 * k * (k * x).cos() - 1e-3 * t * m * (m * x).sin();
        let rho_t = 1e-3 * (m * x).cos();
        let q = 100.0 + 20.0 * (k * x).cos() + 1e-2 * t * (m * x).sin();
        let q_x = -20.0 * k * (k * x).sin() + 1e-2 * t * m * (m * x).cos();
        let q_t = 1e-2 * (m * x).sin();
        [rho, rho_x, rho_t, q, q_x, q_t]
    }
}

/// Linear in space and smooth in time; with an ideal gas and M2 the spatial
/// discretisation is exact.
pub fn time_solution(length: f64, period: f64) -> impl Fn(f64, f64) -> [f64; 6] + Sync {
    let w = 2.0 * std::f64::consts::PI / period;
    move |x, t| {
        let s = x / length;
        let rho = 40.0 + (2.0 + (w * t).sin()) * s;
        let q = 100.0 + 15.0 * (w * t).cos() * (1.0 - s);
        [
            rho,
            (2.0 + (w * t).sin()) / length,
            w * (w * t).cos() * s,
            q,
            -15.0 * (w * t).cos() / length,
            -15.0 * w * (w * t).sin() * (1.0 - s),
        ]
    }
}

/// Observed orders `log2(e_k / e_{k+1})` for successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

/// Observed orders `(space, time)` of the box scheme for the given model.
pub fn box_scheme_orders(dynamics: Dynamics) -> ((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>)) {
    let cfg = mms_pipe(1e-8);
    let exact = space_solution(cfg.length);
    let space_errors: Vec<f64> = [11, 21, 41, 81, 161]
        .iter()
        .map(|&n| mms_error(&cfg, dynamics, &exact, n, 4, 2000.0))
        .collect();
    let ideal = PipeConfig {
        compressibility: 0.0,
        ..mms_pipe(0.0)
    };
    let exact = time_solution(ideal.length, 3600.0);
    let time_errors: Vec<f64> = [64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| mms_error(&ideal, Dynamics::Semilinear, &exact, 11, n, 1800.0))
        .collect();
    (
        (observed_orders(&space_errors), space_errors),
        (observed_orders(&time_errors), time_errors),
    )
}
