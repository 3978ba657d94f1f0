//! Network-level refinement strategies.
//!
//! Each strategy takes the per-pipe error estimates of the current simulation
//! and returns how many model, spatial and temporal refinements every pipe
//! should receive so that the predicted relative network error
//! `sum_j (e_m + e_x + e_t) / |M|` drops to the tolerance.
//!
//! - [`individual_bounds`] splits the tolerance into fixed per-pipe,
//!   per-error-type bounds.
//! - [`maximal_error_refinement`] greedily refines the pipes whose best single
//!   refinement removes (close to) the most error.
//! - [`maximal_error_to_cost_refinement`] does the same on the ratio of error
//!   removed to cost added.
//!
//! All loops run on the predictive error model; nothing is re-simulated here.

mod oracle;

pub use oracle::{
    knapsack_oracle, scheme_oracle, KnapsackInstance, KnapsackItem, KnapsackSolution,
    OracleSolution,
};

use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{Error, Result};
pub use crate::error_model::Refinement;
use crate::error_model::{
    best_option, error_reductions, pipe_error_sum, predicted_model_error, ErrorReductions,
    ErrorTriple, RefinementKind, StrategyConfig,
};
use crate::level::ModelLevel;

/// What a strategy knows about one pipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeRefinementState {
    pub id: String,
    /// Model the pipe was simulated with.
    pub level: ModelLevel,
    /// Spatial nodes of the simulated mesh.
    pub n_x: u64,
    /// Temporal nodes of the simulated mesh.
    pub n_t: u64,
    pub errors: ErrorTriple,
    /// Refinements already scheduled; strategies continue from these.
    #[serde(default)]
    pub pending: Refinement,
}

impl PipeRefinementState {
    pub fn new(
        id: impl Into<String>,
        level: ModelLevel,
        n_x: u64,
        n_t: u64,
        errors: ErrorTriple,
    ) -> Self {
        PipeRefinementState {
            id: id.into(),
            level,
            n_x,
            n_t,
            errors,
            pending: Refinement::ZERO,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.errors.is_valid() {
            return Err(Error::config(format!(
                "pipe {}: errors must be finite and non-negative",
                self.id
            )));
        }
        if self.n_x < 1 || self.n_t < 1 {
            return Err(Error::config(format!(
                "pipe {}: node counts must be positive",
                self.id
            )));
        }
        if self.pending.model > self.level.headroom() {
            return Err(Error::config(format!(
                "pipe {}: {} model refinements from {} leave the hierarchy",
                self.id, self.pending.model, self.level
            )));
        }
        Ok(())
    }

    /// Model level after applying `r`.
    pub fn level_after(&self, r: &Refinement) -> ModelLevel {
        self.level
            .refined(r.model)
            .expect("model refinement beyond M1")
    }
}

/// Per-pipe refinement counts returned by a strategy, in input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementScheme {
    pub refinements: Vec<Refinement>,
    /// Strategy iterations spent.
    pub iterations: usize,
}

impl RefinementScheme {
    pub fn zero(n: usize) -> Self {
        RefinementScheme {
            refinements: vec![Refinement::ZERO; n],
            iterations: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.refinements.iter().all(Refinement::is_zero)
    }

    /// Simulation cost of the refined network, `sum_j F_c(m_j, r_x, r_t)`.
    pub fn cost(&self, states: &[PipeRefinementState], params: &CostParams) -> f64 {
        states
            .iter()
            .zip(&self.refinements)
            .map(|(s, r)| params.cost_refined(s.level_after(r), r.space, r.time, s.n_x, s.n_t))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// S1
    #[serde(alias = "s1")]
    IndividualBounds,
    /// S2
    #[serde(alias = "s2")]
    MaximalError,
    /// S3
    #[serde(alias = "s3")]
    MaximalErrorToCost,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::IndividualBounds,
        Strategy::MaximalError,
        Strategy::MaximalErrorToCost,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::IndividualBounds => "S1",
            Strategy::MaximalError => "S2",
            Strategy::MaximalErrorToCost => "S3",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "individualbounds" | "individual-bounds" => Some(Strategy::IndividualBounds),
            "s2" | "maximalerror" | "maximal-error" => Some(Strategy::MaximalError),
            "s3" | "maximalerrortocost" | "maximal-error-to-cost" => {
                Some(Strategy::MaximalErrorToCost)
            }
            _ => None,
        }
    }

    /// Whether `phi` influences the strategy.
    pub fn uses_phi(self) -> bool {
        !matches!(self, Strategy::IndividualBounds)
    }

    pub fn run(
        self,
        states: &[PipeRefinementState],
        cfg: &StrategyConfig,
        params: &CostParams,
    ) -> Result<RefinementScheme> {
        match self {
            Strategy::IndividualBounds => individual_bounds(states, cfg),
            Strategy::MaximalError => maximal_error_refinement(states, cfg),
            Strategy::MaximalErrorToCost => maximal_error_to_cost_refinement(states, cfg, params),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn absolute_error(
    states: &[PipeRefinementState],
    scheme: &[Refinement],
    cfg: &StrategyConfig,
) -> f64 {
    states
        .iter()
        .zip(scheme)
        .map(|(s, r)| pipe_error_sum(&s.errors, s.level, *r, cfg))
        .sum()
}

/// Predicted relative network error under each pipe's pending refinements.
pub fn network_error(states: &[PipeRefinementState], cfg: &StrategyConfig) -> f64 {
    let pending: Vec<Refinement> = states.iter().map(|s| s.pending).collect();
    network_error_with(states, &pending, cfg)
}

/// Predicted relative network error under an explicit scheme.
pub fn network_error_with(
    states: &[PipeRefinementState],
    scheme: &[Refinement],
    cfg: &StrategyConfig,
) -> f64 {
    absolute_error(states, scheme, cfg) / cfg.target_value
}

fn prepare(states: &[PipeRefinementState], cfg: &StrategyConfig) -> Result<Vec<Refinement>> {
    cfg.validate()?;
    if states.is_empty() {
        return Err(Error::config("network has no pipes"));
    }
    for s in states {
        s.validate()?;
    }
    Ok(states.iter().map(|s| s.pending).collect())
}

fn unsatisfiable(
    states: &[PipeRefinementState],
    r: &[Refinement],
    cfg: &StrategyConfig,
    iterations: usize,
) -> Error {
    Error::Unsatisfiable {
        iterations,
        error: network_error_with(states, r, cfg),
        tol: cfg.tol,
    }
}

/// Individual bounds (S1).
pub fn individual_bounds(
    states: &[PipeRefinementState],
    cfg: &StrategyConfig,
) -> Result<RefinementScheme> {
    let mut r = prepare(states, cfg)?;
    let budget = cfg.budget();
    let n_p = states.len() as f64;
    let model_bound = cfg.kappa * budget / n_p;
    let disc_bound = (1.0 - cfg.kappa) / 2.0 * budget / n_p;

    let refinements_needed = |e: f64, order: f64| -> u32 {
        let steps = (cfg.safety_factor * e / disc_bound).ln() / 2f64.powf(order).ln();
        steps.ceil().max(0.0) as u32
    };

    let mut iterations = 0;
    while absolute_error(states, &r, cfg) > budget {
        if iterations == cfg.max_iterations {
            return Err(unsatisfiable(states, &r, cfg, iterations));
        }
        iterations += 1;
        let before = r.clone();

        for (s, rj) in states.iter().zip(r.iter_mut()) {
            if s.errors.space > disc_bound {
                rj.space = rj
                    .space
                    .max(refinements_needed(s.errors.space, cfg.space_order));
            }
            if s.errors.time > disc_bound {
                rj.time = rj
                    .time
                    .max(refinements_needed(s.errors.time, cfg.time_order));
            }
        }
        if cfg.uniform_time {
            let shared = r.iter().map(|rj| rj.time).max().unwrap_or(0);
            r.iter_mut().for_each(|rj| rj.time = shared);
        }

        if absolute_error(states, &r, cfg) > budget {
            for (s, rj) in states.iter().zip(r.iter_mut()) {
                let remaining = crate::error_model::predicted_model_error(
                    s.level,
                    s.errors.model,
                    rj.model,
                    cfg,
                );
                if remaining > model_bound && rj.model < s.level.headroom() {
                    rj.model += 1;
                }
            }
        }

        if r == before {
            return Err(unsatisfiable(states, &r, cfg, iterations));
        }
    }
    Ok(RefinementScheme {
        refinements: r,
        iterations,
    })
}

/// Shared network controller of S2 and S3: refine every pipe whose best
/// option reaches `phi` times the largest one until the tolerance holds.
fn greedy_refinement<F>(
    states: &[PipeRefinementState],
    cfg: &StrategyConfig,
    values: F,
) -> Result<RefinementScheme>
where
    F: Fn(&PipeRefinementState, Refinement) -> Result<ErrorReductions>,
{
    let mut r = prepare(states, cfg)?;
    let budget = cfg.budget();
    let mut options = states
        .iter()
        .zip(&r)
        .map(|(s, rj)| values(s, *rj))
        .collect::<Result<Vec<_>>>()?;

    let mut iterations = 0;
    while absolute_error(states, &r, cfg) > budget {
        if iterations == cfg.max_iterations {
            return Err(unsatisfiable(states, &r, cfg, iterations));
        }
        iterations += 1;

        let best: Vec<(f64, RefinementKind)> = options.iter().map(best_option).collect();
        let max_b = best.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
        // Mesh refinement alone can never push the error below the summed
        // model errors, so once those exceed the budget some pipe must be
        // upgraded even if every upgrade looks harmful right now.
        let model_floor: f64 = states
            .iter()
            .zip(&r)
            .map(|(s, rj)| predicted_model_error(s.level, s.errors.model, rj.model, cfg))
            .sum();
        let helpful_upgrade = options.iter().any(|o| o.model.is_some_and(|m| m > 0.0));
        if !(max_b > 0.0) || (model_floor > budget && !helpful_upgrade) {
            // Leaving M3 exposes discretisation errors larger than the model
            // error it removes. Take the least harmful upgrade; the exposed
            // errors can be refined afterwards.
            let upgrade = options
                .iter()
                .enumerate()
                .filter_map(|(j, o)| o.model.map(|m| (j, m)))
                .fold(None::<(usize, f64)>, |acc, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                });
            let Some((j, _)) = upgrade else {
                return Err(unsatisfiable(states, &r, cfg, iterations));
            };
            r[j].model += 1;
            options[j] = values(&states[j], r[j])?;
            continue;
        }
        let bound = cfg.phi * max_b;
        let mut shared_time_refined = false;

        for j in 0..states.len() {
            let (b, kind) = best[j];
            // The argmax always qualifies so that phi = 1 makes progress.
            if !(b > 0.0 && (b > bound || b == max_b)) {
                continue;
            }
            if cfg.uniform_time && kind == RefinementKind::Time {
                if shared_time_refined {
                    continue;
                }
                shared_time_refined = true;
                for rk in r.iter_mut() {
                    rk.time += 1;
                }
                for (k, s) in states.iter().enumerate() {
                    options[k] = values(s, r[k])?;
                }
            } else {
                r[j] = r[j].bumped(kind);
                options[j] = values(&states[j], r[j])?;
            }
        }
    }
    Ok(RefinementScheme {
        refinements: r,
        iterations,
    })
}

/// Maximal error refinement (S2).
pub fn maximal_error_refinement(
    states: &[PipeRefinementState],
    cfg: &StrategyConfig,
) -> Result<RefinementScheme> {
    greedy_refinement(states, cfg, |s, r| {
        Ok(error_reductions(s.level, r, &s.errors, cfg))
    })
}

/// Error reductions divided by the matching cost increases.
pub fn error_to_cost_ratios(
    state: &PipeRefinementState,
    r: Refinement,
    cfg: &StrategyConfig,
    params: &CostParams,
) -> Result<ErrorReductions> {
    let red = error_reductions(state.level, r, &state.errors, cfg);
    let deltas =
        params.cost_deltas(state.level_after(&r), r.space, r.time, state.n_x, state.n_t)?;
    Ok(ErrorReductions {
        model: red.model.zip(deltas.model).map(|(e, c)| e / c),
        space: red.space / deltas.space,
        time: red.time / deltas.time,
    })
}

/// Maximal error-to-cost refinement (S3).
pub fn maximal_error_to_cost_refinement(
    states: &[PipeRefinementState],
    cfg: &StrategyConfig,
    params: &CostParams,
) -> Result<RefinementScheme> {
    greedy_refinement(states, cfg, |s, r| error_to_cost_ratios(s, r, cfg, params))
}
