//! Window-by-window adaptive loop, error estimation and coarsening.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{
    simulate_window, stationary_state, NetworkState, PipeSetting, Simulator, WindowOutcome,
};
use super::topology::{NetworkTopology, SimulationPlan, TargetFunctional};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::error_model::{ErrorTriple, RefinementKind, StrategyConfig};
use crate::level::ModelLevel;
use crate::strategies::{PipeRefinementState, RefinementScheme};

/// Everything decided in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Target functional of the accepted solution.
    pub functional: f64,
    /// Estimates after the first simulation.
    pub pre_errors: Vec<ErrorTriple>,
    /// Estimates of the accepted simulation.
    pub post_errors: Vec<ErrorTriple>,
    pub pre_relative_error: f64,
    pub relative_error: f64,
    /// Schemes applied before each re-simulation.
    pub schemes: Vec<RefinementScheme>,
    pub resimulations: usize,
    /// Model cost of all simulations of this window [CPU-s].
    pub cost: f64,
    /// Models and meshes of the accepted simulation.
    pub settings: Vec<PipeSetting>,
    /// Coarsening applied per pipe before the next window.
    pub coarsening: Vec<Option<RefinementKind>>,
}

impl WindowReport {
    /// Sum of the applied refinements per pipe.
    pub fn total_refinements(&self) -> Vec<[u32; 3]> {
        let n = self.settings.len();
        let mut total = vec![[0u32; 3]; n];
        for s in &self.schemes {
            for (t, r) in total.iter_mut().zip(&s.refinements) {
                t[0] += r.model;
                t[1] += r.space;
                t[2] += r.time;
            }
        }
        total
    }

    pub fn refinement_count(&self) -> u32 {
        self.total_refinements().iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun {
    pub reports: Vec<WindowReport>,
    pub outcomes: Vec<WindowOutcome>,
    pub initial_state: NetworkState,
    pub final_state: NetworkState,
    pub final_settings: Vec<PipeSetting>,
    /// Target functional over the whole horizon.
    pub functional: f64,
    /// Model cost over all windows [CPU-s].
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub settings: Vec<PipeSetting>,
    pub outcomes: Vec<WindowOutcome>,
    pub final_state: NetworkState,
    pub functional: f64,
    pub cost: f64,
}

/// Alternative simulation used to estimate one error contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    /// Pipe switched to M1.
    Model(usize),
    /// Pipe switched one level down.
    Coarser(usize),
    Space(usize),
    Time(usize),
    /// Every pipe's time step halved.
    AllTime,
}

impl Probe {
    fn apply(self, settings: &[PipeSetting]) -> Vec<PipeSetting> {
        let mut s = settings.to_vec();
        match self {
            Probe::Model(i) => s[i].level = ModelLevel::Euler,
            Probe::Coarser(i) => s[i].level = s[i].level.coarser().expect("coarser level"),
            Probe::Space(i) => s[i].n_x = 2 * s[i].n_x - 1,
            Probe::Time(i) => s[i].n_t *= 2,
            Probe::AllTime => s.iter_mut().for_each(|p| p.n_t *= 2),
        }
        s
    }
}

/// Functional change of each probe relative to `baseline`.
fn probe_deltas(
    topo: &NetworkTopology,
    settings: &[PipeSetting],
    start: &NetworkState,
    t_end: f64,
    functional: TargetFunctional,
    baseline: f64,
    probes: &[Probe],
) -> Result<Vec<f64>> {
    probes
        .par_iter()
        .map(|p| {
            let outcome = simulate_window(topo, &p.apply(settings), start, t_end)?;
            Ok(outcome.value(functional) - baseline)
        })
        .collect()
}

fn richardson(order: f64) -> f64 {
    let f = order.exp2();
    f / (f - 1.0)
}

/// Per-pipe error estimates for a simulated window.
///
/// The model error of a pipe is the change of the functional when only that
/// pipe is switched to M1. Discretisation errors are Richardson estimates from
/// halving the pipe's spacing or time step. With `cfg.uniform_time` the time
/// error comes from halving every step at once and is shared equally by the
/// dynamic pipes.
pub fn estimate_errors(
    topo: &NetworkTopology,
    settings: &[PipeSetting],
    start: &NetworkState,
    t_end: f64,
    functional: TargetFunctional,
    baseline: &WindowOutcome,
    cfg: &StrategyConfig,
) -> Result<Vec<ErrorTriple>> {
    let n = settings.len();
    let mut probes = Vec::new();
    for (i, s) in settings.iter().enumerate() {
        if s.level != ModelLevel::Euler {
            probes.push(Probe::Model(i));
        }
        if s.level != ModelLevel::Algebraic {
            probes.push(Probe::Space(i));
            if !cfg.uniform_time {
                probes.push(Probe::Time(i));
            }
        }
    }
    let dynamic = settings
        .iter()
        .filter(|s| s.level != ModelLevel::Algebraic)
        .count();
    if cfg.uniform_time && dynamic > 0 {
        probes.push(Probe::AllTime);
    }
    let deltas = probe_deltas(
        topo,
        settings,
        start,
        t_end,
        functional,
        baseline.value(functional),
        &probes,
    )?;
    let mut errors = vec![ErrorTriple::default(); n];
    let (rx, rt) = (richardson(cfg.space_order), richardson(cfg.time_order));
    for (probe, delta) in probes.iter().zip(deltas) {
        match *probe {
            Probe::Model(i) => errors[i].model = delta.abs(),
            Probe::Space(i) => errors[i].space = rx * delta.abs(),
            Probe::Time(i) => errors[i].time = rt * delta.abs(),
            Probe::AllTime => {
                let share = rt * delta.abs() / dynamic as f64;
                for (e, s) in errors.iter_mut().zip(settings) {
                    if s.level != ModelLevel::Algebraic {
                        e.time = share;
                    }
                }
            }
            Probe::Coarser(_) => unreachable!("not an estimation probe"),
        }
    }
    Ok(errors)
}

/// Coarsening step per pipe that keeps the predicted relative error at or
/// below `headroom * tol`.
///
/// Predictions invert the refinement model: a coarser mesh multiplies the
/// discretisation error by `2^order`, a coarser model adds `model_gaps[i]`
/// (the measured change of the functional) to the model error and drops the
/// discretisation errors when it reaches M3. Pipes never go below `floors`.
/// Pipes are visited in order and each takes the admissible step that saves
/// the most cost.
pub fn coarsen(
    states: &[PipeRefinementState],
    floors: &[PipeSetting],
    model_gaps: &[Option<f64>],
    cfg: &StrategyConfig,
    params: &CostParams,
    headroom: f64,
) -> Vec<Option<RefinementKind>> {
    let budget = headroom * cfg.budget();
    let sum = |e: &ErrorTriple| e.model + e.space + e.time;
    let mut total: f64 = states.iter().map(|s| sum(&s.errors)).sum();
    let mut actions = vec![None; states.len()];
    if !(total <= budget) {
        return actions;
    }
    let setting = |s: &PipeRefinementState| PipeSetting {
        level: s.level,
        n_x: s.n_x,
        n_t: s.n_t,
    };
    let time_ok = |s: &PipeRefinementState, f: &PipeSetting| s.n_t % 2 == 0 && s.n_t / 2 >= f.n_t;
    for (i, (s, floor)) in states.iter().zip(floors).enumerate() {
        let current = setting(s);
        let mut options: Vec<(RefinementKind, PipeSetting, ErrorTriple)> = Vec::new();
        if s.level.index() < floor.level.index() {
            if let Some(gap) = model_gaps[i] {
                let level = s.level.coarser().expect("above floor");
                let mut e = s.errors;
                e.model += gap;
                if level == ModelLevel::Algebraic {
                    e.space = 0.0;
                    e.time = 0.0;
                }
                options.push((RefinementKind::Model, PipeSetting { level, ..current }, e));
            }
        }
        if (s.n_x - 1) % 2 == 0 && (s.n_x - 1) / 2 + 1 >= floor.n_x && s.n_x > floor.n_x {
            let mut e = s.errors;
            e.space *= cfg.space_order.exp2();
            options.push((
                RefinementKind::Space,
                PipeSetting {
                    n_x: (s.n_x - 1) / 2 + 1,
                    ..current
                },
                e,
            ));
        }
        if !cfg.uniform_time && time_ok(s, floor) {
            let mut e = s.errors;
            e.time *= cfg.time_order.exp2();
            options.push((
                RefinementKind::Time,
                PipeSetting {
                    n_t: s.n_t / 2,
                    ..current
                },
                e,
            ));
        }
        let best = options
            .into_iter()
            .filter(|(_, _, e)| total - sum(&s.errors) + sum(e) <= budget)
            .map(|(k, set, e)| (k, current.cost(params) - set.cost(params), e))
            .fold(
                None::<(RefinementKind, f64, ErrorTriple)>,
                |acc, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                },
            );
        if let Some((kind, _, e)) = best {
            total += sum(&e) - sum(&s.errors);
            actions[i] = Some(kind);
        }
    }
    // A shared time mesh coarsens as a whole, and only in a window where no
    // pipe took another step.
    if cfg.uniform_time
        && actions.iter().all(Option::is_none)
        && states.iter().zip(floors).all(|(s, f)| time_ok(s, f))
    {
        let extra: f64 = states
            .iter()
            .map(|s| s.errors.time * (cfg.time_order.exp2() - 1.0))
            .sum();
        if total + extra <= budget {
            actions
                .iter_mut()
                .for_each(|a| *a = Some(RefinementKind::Time));
        }
    }
    actions
}

fn apply_coarsening(
    settings: &[PipeSetting],
    actions: &[Option<RefinementKind>],
) -> Vec<PipeSetting> {
    settings
        .iter()
        .zip(actions)
        .map(|(s, a)| match a {
            Some(RefinementKind::Model) => PipeSetting {
                level: s.level.coarser().unwrap_or(s.level),
                ..*s
            },
            Some(RefinementKind::Space) => PipeSetting {
                n_x: (s.n_x - 1) / 2 + 1,
                ..*s
            },
            Some(RefinementKind::Time) => PipeSetting {
                n_t: s.n_t / 2,
                ..*s
            },
            None => *s,
        })
        .collect()
}

fn relative(errors: &[ErrorTriple], value: f64) -> f64 {
    let sum: f64 = errors.iter().map(|e| e.model + e.space + e.time).sum();
    if sum == 0.0 {
        0.0
    } else {
        sum / value.abs()
    }
}

fn states_of(
    topo: &NetworkTopology,
    settings: &[PipeSetting],
    errors: &[ErrorTriple],
) -> Vec<PipeRefinementState> {
    topo.pipes
        .iter()
        .zip(settings)
        .zip(errors)
        .map(|((p, s), e)| PipeRefinementState::new(p.id.clone(), s.level, s.n_x, s.n_t, *e))
        .collect()
}

struct WindowResult {
    report: WindowReport,
    outcome: WindowOutcome,
    next_settings: Vec<PipeSetting>,
}

fn run_window(
    topo: &NetworkTopology,
    plan: &SimulationPlan,
    floors: &[PipeSetting],
    index: usize,
    state: &NetworkState,
    mut settings: Vec<PipeSetting>,
) -> Result<WindowResult> {
    let (t_start, t_end) = plan.window_bounds(index);
    let mut cfg = plan.refinement.clone();
    let checking = cfg.tol.is_finite();
    let mut cost = 0.0;
    let mut schemes = Vec::new();
    let mut pre: Option<(Vec<ErrorTriple>, f64)> = None;
    let mut passes = 0;
    loop {
        let start = state.remeshed(topo, &settings);
        let outcome = Simulator::new(topo).simulate_window(&settings, &start, t_end)?;
        passes += 1;
        cost += settings.iter().map(|s| s.cost(&plan.cost)).sum::<f64>();
        let value = outcome.value(plan.functional);
        let errors = if checking {
            estimate_errors(
                topo,
                &settings,
                &start,
                t_end,
                plan.functional,
                &outcome,
                &cfg,
            )?
        } else {
            vec![ErrorTriple::default(); settings.len()]
        };
        let rel = relative(&errors, value);
        let (pre_errors, pre_rel) = pre.get_or_insert_with(|| (errors.clone(), rel)).clone();
        if rel <= cfg.tol {
            let mut coarsening = vec![None; settings.len()];
            let mut next = settings.clone();
            if checking {
                cfg.target_value = value.abs();
                let probes: Vec<Probe> = settings
                    .iter()
                    .zip(floors)
                    .enumerate()
                    .filter(|(_, (s, f))| s.level.index() < f.level.index())
                    .map(|(i, _)| Probe::Coarser(i))
                    .collect();
                let deltas = probe_deltas(
                    topo,
                    &settings,
                    &start,
                    t_end,
                    plan.functional,
                    value,
                    &probes,
                )?;
                let mut gaps = vec![None; settings.len()];
                for (p, d) in probes.iter().zip(deltas) {
                    if let Probe::Coarser(i) = p {
                        gaps[*i] = Some(d.abs());
                    }
                }
                let states = states_of(topo, &settings, &errors);
                coarsening = coarsen(
                    &states,
                    floors,
                    &gaps,
                    &cfg,
                    &plan.cost,
                    plan.coarsening_headroom,
                );
                next = apply_coarsening(&settings, &coarsening);
            }
            let report = WindowReport {
                index,
                t_start,
                t_end,
                functional: value,
                pre_errors,
                post_errors: errors,
                pre_relative_error: pre_rel,
                relative_error: rel,
                resimulations: schemes.len(),
                schemes,
                cost,
                settings,
                coarsening,
            };
            return Ok(WindowResult {
                report,
                outcome,
                next_settings: next,
            });
        }
        if passes >= plan.max_passes {
            return Err(Error::Unsatisfiable {
                iterations: passes,
                error: rel,
                tol: cfg.tol,
            });
        }
        cfg.target_value = value.abs();
        let states = states_of(topo, &settings, &errors);
        let scheme = plan.strategy.run(&states, &cfg, &plan.cost)?;
        if scheme.is_zero() {
            return Err(Error::Unsatisfiable {
                iterations: passes,
                error: rel,
                tol: cfg.tol,
            });
        }
        let uniform_time = scheme.refinements.iter().map(|r| r.time).max().unwrap_or(0);
        settings = settings
            .iter()
            .zip(&scheme.refinements)
            .map(|(s, r)| {
                let mut r = *r;
                if cfg.uniform_time {
                    r.time = uniform_time;
                }
                s.refined(&r)
            })
            .collect();
        schemes.push(scheme);
    }
}

/// Adaptive simulation over the whole horizon.
pub fn run_adaptive(topo: &NetworkTopology, plan: &SimulationPlan) -> Result<AdaptiveRun> {
    plan.validate()?;
    let floors = PipeSetting::initial(topo);
    if plan.refinement.uniform_time && floors.iter().any(|s| s.n_t != floors[0].n_t) {
        return Err(Error::config(
            "uniform time stepping needs the same n_t on every pipe",
        ));
    }
    let mut settings = floors.clone();
    let initial_state = stationary_state(topo, &settings, 0.0)?;
    let mut state = initial_state.clone();
    let mut reports = Vec::with_capacity(plan.windows);
    let mut outcomes = Vec::with_capacity(plan.windows);
    for index in 0..plan.windows {
        let result = run_window(topo, plan, &floors, index, &state, settings).map_err(|e| {
            Error::Window {
                index,
                source: Box::new(e),
            }
        })?;
        state = result.outcome.end.clone();
        settings = result.next_settings;
        outcomes.push(result.outcome);
        reports.push(result.report);
    }
    let functional = outcomes.iter().map(|o| o.value(plan.functional)).sum();
    let cost = reports.iter().map(|r| r.cost).sum();
    let final_settings = reports
        .last()
        .map(|r| r.settings.clone())
        .unwrap_or(settings);
    Ok(AdaptiveRun {
        reports,
        outcomes,
        initial_state,
        final_state: state,
        final_settings,
        functional,
        cost,
    })
}

/// Meshes of the reference: every pipe on M1, refined by the plan's factors.
pub fn reference_settings(topo: &NetworkTopology, plan: &SimulationPlan) -> Vec<PipeSetting> {
    PipeSetting::initial(topo)
        .into_iter()
        .map(|s| PipeSetting {
            level: ModelLevel::Euler,
            n_x: (s.n_x - 1) * plan.reference_space_factor + 1,
            n_t: s.n_t * plan.reference_time_factor,
        })
        .collect()
}

/// Non-adaptive fine M1 simulation.
pub fn run_reference(topo: &NetworkTopology, plan: &SimulationPlan) -> Result<ReferenceRun> {
    plan.validate()?;
    let settings = reference_settings(topo, plan);
    run_fixed(topo, plan, settings)
}

/// Forward simulation without adaptivity on fixed models and meshes.
pub fn run_fixed(
    topo: &NetworkTopology,
    plan: &SimulationPlan,
    settings: Vec<PipeSetting>,
) -> Result<ReferenceRun> {
    let mut state = stationary_state(topo, &settings, 0.0)?;
    let sim = Simulator::new(topo);
    let mut outcomes = Vec::with_capacity(plan.windows);
    for index in 0..plan.windows {
        let (_, t_end) = plan.window_bounds(index);
        let outcome = sim
            .simulate_window(&settings, &state, t_end)
            .map_err(|e| Error::Window {
                index,
                source: Box::new(e),
            })?;
        state = outcome.end.clone();
        outcomes.push(outcome);
    }
    let window_cost: f64 = settings.iter().map(|s| s.cost(&plan.cost)).sum();
    Ok(ReferenceRun {
        functional: outcomes.iter().map(|o| o.value(plan.functional)).sum(),
        cost: window_cost * plan.windows as f64,
        final_state: state,
        outcomes,
        settings,
    })
}
