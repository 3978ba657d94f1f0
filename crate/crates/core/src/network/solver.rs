//! Coupled time stepping of all pipes.
//!
//! Junction pressures at the end of each global step are the unknowns of a
//! Newton iteration on nodal mass balance. Within a global step every pipe is
//! advanced with its own number of substeps, seeing junction pressures
//! interpolated linearly in time, and reports its end fluxes averaged over the
//! substeps together with their derivatives with respect to the new junction
//! pressures. Balancing averaged fluxes keeps the network conservative when
//! pipes run at different rates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::topology::{EndKind, NetworkTopology, Pipe, TargetFunctional};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::error_model::Refinement;
use crate::hierarchy::{
    density_from_pressure, m3_field, m3_flux, pressure_from_density, BoundaryCondition,
    BoundaryData, BoxScheme, Dynamics, GasField, PipeConfig,
};
use crate::level::ModelLevel;

/// Model and mesh of one pipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipeSetting {
    pub level: ModelLevel,
    /// Spatial nodes.
    pub n_x: u64,
    /// Time steps per window.
    pub n_t: u64,
}

impl PipeSetting {
    pub fn initial(topo: &NetworkTopology) -> Vec<PipeSetting> {
        topo.pipes
            .iter()
            .map(|p| PipeSetting {
                level: p.initial_model,
                n_x: p.initial_n_x,
                n_t: p.initial_n_t,
            })
            .collect()
    }

    /// Halves the spacing `r.space` times, the step `r.time` times and moves
    /// `r.model` levels towards M1.
    pub fn refined(&self, r: &Refinement) -> PipeSetting {
        PipeSetting {
            level: self.level.refined(r.model).unwrap_or(ModelLevel::Euler),
            n_x: ((self.n_x - 1) << r.space) + 1,
            n_t: self.n_t << r.time,
        }
    }

    pub fn cost(&self, params: &CostParams) -> f64 {
        params.cost(self.level, self.n_x, self.n_t)
    }
}

/// Fields of all pipes and junction pressures at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub time: f64,
    pub fields: Vec<GasField>,
    pub junction_pressure: Vec<f64>,
}

impl NetworkState {
    /// Linear interpolation of every field onto the meshes of `settings`.
    pub fn remeshed(&self, topo: &NetworkTopology, settings: &[PipeSetting]) -> NetworkState {
        let fields = self
            .fields
            .iter()
            .zip(settings)
            .zip(&topo.pipes)
            .map(|((f, s), p)| {
                if f.len() as u64 == s.n_x {
                    f.clone()
                } else {
                    f.interpolate(&p.config.grid(s.n_x as usize))
                }
            })
            .collect();
        NetworkState {
            time: self.time,
            fields,
            junction_pressure: self.junction_pressure.clone(),
        }
    }

    /// Gas mass stored in all pipes [kg].
    pub fn mass(&self, topo: &NetworkTopology) -> f64 {
        self.fields
            .iter()
            .zip(&topo.pipes)
            .map(|(f, p)| p.config.area() * f.mass_per_area())
            .sum()
    }
}

/// Integrated boundary quantities of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub end: NetworkState,
    /// Mass withdrawn at sinks [kg].
    pub sink_outflow: f64,
    /// Mass injected at sources [kg].
    pub source_inflow: f64,
    /// Time integral of the summed sink pressures [Pa s].
    pub sink_pressure: f64,
}

impl WindowOutcome {
    pub fn value(&self, functional: TargetFunctional) -> f64 {
        match functional {
            TargetFunctional::SinkOutflow => self.sink_outflow,
            TargetFunctional::SourceInflow => self.source_inflow,
            TargetFunctional::SinkPressure => self.sink_pressure,
        }
    }
}

/// Target functional of a completed run: the sum over its windows.
pub fn target_functional(outcomes: &[WindowOutcome], functional: TargetFunctional) -> f64 {
    outcomes.iter().map(|o| o.value(functional)).sum()
}

const NETWORK_TOLERANCE: f64 = 1e-9;
/// Junction imbalance below which a stalled line search is accepted; the
/// pipe solves are only accurate to about this level on fine meshes.
const NOISE_FLOOR: f64 = 1e-7;
const NETWORK_MAX_ITERATIONS: usize = 40;
const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy)]
struct StepWindow {
    t_a: f64,
    t_b: f64,
    /// Boundary data evaluated at this time instead of along the step.
    frozen: Option<f64>,
}

impl StepWindow {
    fn data_time(&self, t: f64) -> f64 {
        self.frozen.unwrap_or(t)
    }
}

#[derive(Debug, Clone)]
struct PipeResponse {
    field: GasField,
    q0: f64,
    ql: f64,
    /// Derivatives with respect to the new pressure of the junction at the
    /// left and right end.
    dq0: [f64; 2],
    dql: [f64; 2],
    sink_pressure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn pipe_node(pipe: &Pipe, side: Side) -> usize {
    match side {
        Side::Left => pipe.from,
        Side::Right => pipe.to,
    }
}

/// `p(0)` of an M3 pipe with flux `q` and outlet pressure `p_out`.
fn m3_inlet_pressure(cfg: &PipeConfig, q: f64, p_out: f64) -> Result<f64> {
    let k = cfg.friction * cfg.rt() * cfg.length * q * q.abs() / cfg.diameter;
    let b = k * cfg.compressibility;
    let disc = b * b + 4.0 * (k + p_out * p_out);
    let p0 = 0.5 * (-b + disc.max(0.0).sqrt());
    if !(disc > 0.0 && p0 > 0.0) {
        return Err(Error::PressureExhausted {
            position: 0.0,
            radicand: k + p_out * p_out,
        });
    }
    Ok(p0)
}

/// Stationary M3 state for the given end conditions, with `dq/dp` at each end.
fn m3_response(
    cfg: &PipeConfig,
    bc: &BoundaryData,
    x: &[f64],
) -> Result<(GasField, f64, [f64; 2])> {
    use BoundaryCondition::*;
    match (bc.left, bc.right) {
        (Pressure(a), Pressure(b)) => {
            let f = m3_flux(cfg, a, b)?;
            Ok((m3_field(cfg, a, f.q, x)?, f.q, [f.dq_dp_in, f.dq_dp_out]))
        }
        (Pressure(a), Flux(q)) => Ok((m3_field(cfg, a, q, x)?, q, [0.0, 0.0])),
        (Flux(q), Pressure(b)) => {
            let p0 = m3_inlet_pressure(cfg, q, b)?;
            Ok((m3_field(cfg, p0, q, x)?, q, [0.0, 0.0]))
        }
        _ => Err(Error::config(
            "an algebraic pipe needs a pressure at one end at least",
        )),
    }
}

pub(crate) struct Simulator<'a> {
    pub topo: &'a NetworkTopology,
}

impl<'a> Simulator<'a> {
    pub fn new(topo: &'a NetworkTopology) -> Self {
        Simulator { topo }
    }

    fn end_condition(
        &self,
        pipe: &Pipe,
        side: Side,
        t: f64,
        w: f64,
        window: &StepWindow,
        p_old: &[f64],
        p_new: &[f64],
    ) -> BoundaryCondition {
        let node = pipe_node(pipe, side);
        match self.topo.end_kind(node) {
            EndKind::Source => {
                BoundaryCondition::Pressure(self.topo.node_value(node, window.data_time(t)))
            }
            EndKind::Sink => {
                let q = self.topo.node_value(node, window.data_time(t)) / pipe.config.area();
                BoundaryCondition::Flux(if side == Side::Right { q } else { -q })
            }
            EndKind::Junction(j) => {
                BoundaryCondition::Pressure(p_old[j] + w * (p_new[j] - p_old[j]))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn respond(
        &self,
        index: usize,
        setting: &PipeSetting,
        substeps: usize,
        start: &GasField,
        p_old: &[f64],
        p_new: &[f64],
        window: &StepWindow,
    ) -> Result<PipeResponse> {
        let pipe = &self.topo.pipes[index];
        let cfg = &pipe.config;
        let dt = (window.t_b - window.t_a) / substeps as f64;
        let junction_side = |side: Side| {
            matches!(
                self.topo.end_kind(pipe_node(pipe, side)),
                EndKind::Junction(_)
            )
        };
        let sink_side = [Side::Left, Side::Right]
            .into_iter()
            .find(|&s| matches!(self.topo.end_kind(pipe_node(pipe, s)), EndKind::Sink));
        let end_pressure = |f: &GasField, side: Side| -> Result<f64> {
            let i = if side == Side::Left { 0 } else { f.len() - 1 };
            pressure_from_density(f.rho[i], cfg)
        };
        let mut sink_p = match sink_side {
            Some(s) => end_pressure(start, s)?,
            None => 0.0,
        };

        let n = start.len();
        let mut out = PipeResponse {
            field: start.clone(),
            q0: 0.0,
            ql: 0.0,
            dq0: [0.0; 2],
            dql: [0.0; 2],
            sink_pressure: 0.0,
        };
        let scheme = match setting.level {
            ModelLevel::Euler => Some(BoxScheme::new(cfg, Dynamics::Euler)),
            ModelLevel::Semilinear => Some(BoxScheme::new(cfg, Dynamics::Semilinear)),
            ModelLevel::Algebraic => None,
        };
        let mut sens: [Option<Vec<f64>>; 2] = [None, None];
        let avg = 1.0 / substeps as f64;
        for k in 1..=substeps {
            let w = k as f64 / substeps as f64;
            let t = window.t_a + dt * k as f64;
            let bc = BoundaryData {
                left: self.end_condition(pipe, Side::Left, t, w, window, p_old, p_new),
                right: self.end_condition(pipe, Side::Right, t, w, window, p_old, p_new),
            };
            match &scheme {
                Some(scheme) => {
                    let step = scheme.step(&out.field, t, dt, &bc)?;
                    for (param, side) in [Side::Left, Side::Right].into_iter().enumerate() {
                        if !junction_side(side) {
                            continue;
                        }
                        let (lr, rr) = if side == Side::Left {
                            (w, 0.0)
                        } else {
                            (0.0, w)
                        };
                        let s = step.propagate(cfg, sens[param].as_deref(), lr, rr);
                        out.dq0[param] += avg * s[1];
                        out.dql[param] += avg * s[2 * n - 1];
                        sens[param] = Some(s);
                    }
                    out.field = step.field;
                }
                None => {
                    let (field, _, dq) = m3_response(cfg, &bc, &start.x)?;
                    for (param, side) in [Side::Left, Side::Right].into_iter().enumerate() {
                        if junction_side(side) {
                            out.dq0[param] += avg * w * dq[param];
                            out.dql[param] += avg * w * dq[param];
                        }
                    }
                    out.field = field;
                }
            }
            out.q0 += avg * out.field.q[0];
            out.ql += avg * out.field.q[n - 1];
            if let Some(s) = sink_side {
                let p = end_pressure(&out.field, s)?;
                out.sink_pressure += 0.5 * dt * (sink_p + p);
                sink_p = p;
            }
        }
        Ok(out)
    }

    fn respond_all(
        &self,
        settings: &[PipeSetting],
        substeps: &[usize],
        fields: &[GasField],
        p_old: &[f64],
        p_new: &[f64],
        window: &StepWindow,
    ) -> Result<Vec<PipeResponse>> {
        (0..self.topo.pipes.len())
            .map(|i| {
                self.respond(
                    i,
                    &settings[i],
                    substeps[i],
                    &fields[i],
                    p_old,
                    p_new,
                    window,
                )
            })
            .collect()
    }

    /// Mass imbalance per junction (inflow minus outflow) and row scales.
    fn balance(&self, responses: &[PipeResponse]) -> (Vec<f64>, Vec<f64>) {
        let nj = self.topo.junctions.len();
        let mut f = vec![0.0; nj];
        let mut s = vec![0.0; nj];
        for (pipe, r) in self.topo.pipes.iter().zip(responses) {
            let a = pipe.config.area();
            if let EndKind::Junction(j) = self.topo.end_kind(pipe.to) {
                f[j] += a * r.ql;
                s[j] += a * (r.ql.abs() + 1e-2);
            }
            if let EndKind::Junction(j) = self.topo.end_kind(pipe.from) {
                f[j] -= a * r.q0;
                s[j] += a * (r.q0.abs() + 1e-2);
            }
        }
        (f, s)
    }

    fn jacobian(&self, responses: &[PipeResponse]) -> DMatrix<f64> {
        let nj = self.topo.junctions.len();
        let mut jac = DMatrix::zeros(nj, nj);
        for (pipe, r) in self.topo.pipes.iter().zip(responses) {
            let a = pipe.config.area();
            let ends = [self.topo.end_kind(pipe.from), self.topo.end_kind(pipe.to)];
            if let EndKind::Junction(j) = ends[1] {
                for (param, end) in ends.iter().enumerate() {
                    if let EndKind::Junction(k) = end {
                        jac[(j, *k)] += a * r.dql[param];
                    }
                }
            }
            if let EndKind::Junction(j) = ends[0] {
                for (param, end) in ends.iter().enumerate() {
                    if let EndKind::Junction(k) = end {
                        jac[(j, *k)] -= a * r.dq0[param];
                    }
                }
            }
        }
        jac
    }

    /// One global step; returns the pipe responses and new junction pressures.
    fn global_step(
        &self,
        settings: &[PipeSetting],
        substeps: &[usize],
        fields: &[GasField],
        p_old: &[f64],
        window: &StepWindow,
    ) -> Result<(Vec<PipeResponse>, Vec<f64>)> {
        let norm = |f: &[f64], s: &[f64]| {
            f.iter()
                .zip(s)
                .map(|(f, s)| f.abs() / s)
                .fold(0.0, f64::max)
        };
        let mut p = p_old.to_vec();
        let mut responses = self.respond_all(settings, substeps, fields, p_old, &p, window)?;
        let (mut f, mut s) = self.balance(&responses);
        for iteration in 0..NETWORK_MAX_ITERATIONS {
            let current = norm(&f, &s);
            if current <= NETWORK_TOLERANCE {
                return Ok((responses, p));
            }
            let jac = self.jacobian(&responses);
            let delta =
                jac.lu()
                    .solve(&DVector::from_column_slice(&f))
                    .ok_or(Error::SolverDiverged {
                        iterations: iteration,
                        residual: current,
                    })?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = p
                    .iter()
                    .zip(delta.iter())
                    .map(|(p, d)| p - lambda * d)
                    .collect();
                if trial.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    if let Ok(r) =
                        self.respond_all(settings, substeps, fields, p_old, &trial, window)
                    {
                        let (tf, ts) = self.balance(&r);
                        if norm(&tf, &s) < current || norm(&tf, &ts) <= NETWORK_TOLERANCE {
                            p = trial;
                            responses = r;
                            (f, s) = (tf, ts);
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                if current <= NOISE_FLOOR {
                    return Ok((responses, p));
                }
                return Err(Error::SolverDiverged {
                    iterations: iteration + 1,
                    residual: current,
                });
            }
        }
        let current = norm(&f, &s);
        if current <= NETWORK_TOLERANCE {
            Ok((responses, p))
        } else {
            Err(Error::SolverDiverged {
                iterations: NETWORK_MAX_ITERATIONS,
                residual: current,
            })
        }
    }

    /// Global steps per window and substeps per pipe.
    ///
    /// The coarsest dynamic pipe sets the global step and every dynamic `n_t`
    /// must be a multiple of it. Algebraic pipes have no time derivative and
    /// are evaluated at least once per global step.
    fn substeps(settings: &[PipeSetting]) -> Result<(u64, Vec<usize>)> {
        let dynamic = |s: &&PipeSetting| s.level != ModelLevel::Algebraic;
        let coarsest = settings
            .iter()
            .filter(dynamic)
            .map(|s| s.n_t)
            .min()
            .or_else(|| settings.iter().map(|s| s.n_t).min())
            .unwrap_or(1)
            .max(1);
        let sub = settings
            .iter()
            .map(|s| {
                if s.level == ModelLevel::Algebraic {
                    Ok(((s.n_t / coarsest) as usize).max(1))
                } else if s.n_t % coarsest == 0 {
                    Ok((s.n_t / coarsest) as usize)
                } else {
                    Err(Error::config(format!(
                        "time steps {} are not a multiple of the coarsest {coarsest}",
                        s.n_t
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Ok((coarsest, sub))
    }

    /// Advances `start` (on the meshes of `settings`) to `t_end`.
    pub fn simulate_window(
        &self,
        settings: &[PipeSetting],
        start: &NetworkState,
        t_end: f64,
    ) -> Result<WindowOutcome> {
        let (global, substeps) = Self::substeps(settings)?;
        let dt = (t_end - start.time) / global as f64;
        let mut fields = start.fields.clone();
        let mut p = start.junction_pressure.clone();
        let mut out = WindowOutcome {
            end: start.clone(),
            sink_outflow: 0.0,
            source_inflow: 0.0,
            sink_pressure: 0.0,
        };
        for g in 0..global {
            let window = StepWindow {
                t_a: start.time + dt * g as f64,
                t_b: if g + 1 == global {
                    t_end
                } else {
                    start.time + dt * (g + 1) as f64
                },
                frozen: None,
            };
            let (responses, p_new) = self.global_step(settings, &substeps, &fields, &p, &window)?;
            let h = window.t_b - window.t_a;
            for (pipe, r) in self.topo.pipes.iter().zip(&responses) {
                let a = pipe.config.area();
                // Mass leaving the pipe through each end.
                let out_left = -a * r.q0 * h;
                let out_right = a * r.ql * h;
                for (node, leaving) in [(pipe.from, out_left), (pipe.to, out_right)] {
                    match self.topo.end_kind(node) {
                        EndKind::Source => out.source_inflow -= leaving,
                        EndKind::Sink => out.sink_outflow += leaving,
                        EndKind::Junction(_) => {}
                    }
                }
                out.sink_pressure += r.sink_pressure;
            }
            fields = responses.into_iter().map(|r| r.field).collect();
            p = p_new;
        }
        out.end = NetworkState {
            time: t_end,
            fields,
            junction_pressure: p,
        };
        Ok(out)
    }

    /// Stationary state for the boundary data at `t0`, by pseudo-time stepping.
    pub fn stationary_state(&self, settings: &[PipeSetting], t0: f64) -> Result<NetworkState> {
        let sources: Vec<f64> = self
            .topo
            .sources()
            .map(|i| self.topo.node_value(i, t0))
            .collect();
        let p_ref = sources.iter().sum::<f64>() / sources.len() as f64;
        let mut fields = Vec::with_capacity(self.topo.pipes.len());
        for (pipe, s) in self.topo.pipes.iter().zip(settings) {
            let rho = density_from_pressure(p_ref, &pipe.config)?;
            fields.push(GasField::uniform(
                pipe.config.grid(s.n_x as usize),
                rho,
                0.0,
            ));
        }
        let mut p = vec![p_ref; self.topo.junctions.len()];
        let single = vec![1usize; settings.len()];
        let mut dt = 10.0;
        const MAX_PSEUDO_STEPS: usize = 400;
        for iteration in 0..MAX_PSEUDO_STEPS {
            let window = StepWindow {
                t_a: t0,
                t_b: t0 + dt,
                frozen: Some(t0),
            };
            let (responses, p_new) = self.global_step(settings, &single, &fields, &p, &window)?;
            let mut change = p_new
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs() / b)
                .fold(0.0, f64::max);
            for (r, old) in responses.iter().zip(&fields) {
                let q_scale = old.q.iter().fold(1.0f64, |m, q| m.max(q.abs()));
                for i in 0..old.len() {
                    change = change
                        .max((r.field.rho[i] - old.rho[i]).abs() / old.rho[i])
                        .max((r.field.q[i] - old.q[i]).abs() / q_scale);
                }
            }
            fields = responses.into_iter().map(|r| r.field).collect();
            p = p_new;
            if dt >= 1e7 && change < 1e-12 {
                return Ok(NetworkState {
                    time: t0,
                    fields,
                    junction_pressure: p,
                });
            }
            if iteration + 1 == MAX_PSEUDO_STEPS {
                return Err(Error::SolverDiverged {
                    iterations: MAX_PSEUDO_STEPS,
                    residual: change,
                });
            }
            dt = (dt * 4.0).min(1e7);
        }
        unreachable!("loop returns on its last iteration")
    }
}

/// Stationary initial state of `topo` on the given meshes and models.
pub fn stationary_state(
    topo: &NetworkTopology,
    settings: &[PipeSetting],
    t0: f64,
) -> Result<NetworkState> {
    Simulator::new(topo).stationary_state(settings, t0)
}

/// Simulates one window from `start`, which is remeshed to `settings` first.
pub fn simulate_window(
    topo: &NetworkTopology,
    settings: &[PipeSetting],
    start: &NetworkState,
    t_end: f64,
) -> Result<WindowOutcome> {
    let start = start.remeshed(topo, settings);
    Simulator::new(topo).simulate_window(settings, &start, t_end)
}
