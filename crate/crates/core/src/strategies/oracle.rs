//! Exhaustive reference solvers for the refinement problem.
//!
//! [`knapsack_oracle`] solves the generalised unbounded knapsack form with
//! explicit per-item reduction/cost sequences. [`scheme_oracle`] searches
//! all refinement schemes of a small pipe network directly, which captures
//! the coupling between model switches and discretisation errors that the
//! item form cannot express.

use serde::{Deserialize, Serialize};

use super::{PipeRefinementState, Refinement, RefinementScheme};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::error_model::{pipe_error_sum, StrategyConfig};

/// One refinement possibility: the `k`-th repetition removes `reductions[k]`
/// error and adds `costs[k]` cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub reductions: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub base_cost: f64,
    pub base_error: f64,
    pub tol: f64,
    pub items: Vec<KnapsackItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSolution {
    pub counts: Vec<u32>,
    pub cost: f64,
    pub error: f64,
}

impl KnapsackInstance {
    fn validate(&self) -> Result<()> {
        for (i, item) in self.items.iter().enumerate() {
            if item.reductions.len() != item.costs.len() {
                return Err(Error::config(format!(
                    "item {i}: reductions and costs differ in length"
                )));
            }
            if item.reductions.iter().any(|w| !(*w >= 0.0))
                || item.costs.iter().any(|v| !(*v > 0.0))
            {
                return Err(Error::config(format!(
                    "item {i}: reductions must be >= 0 and costs > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Minimum of `c + sum v_ik` subject to `eta - sum w_ik <= tol`, by
/// enumerating every count vector with entries up to `max_depth`.
pub fn knapsack_oracle(instance: &KnapsackInstance, max_depth: u32) -> Result<KnapsackSolution> {
    instance.validate()?;
    // Prefix sums per item: (reduction, cost) after k repetitions.
    let prefix: Vec<Vec<(f64, f64)>> = instance
        .items
        .iter()
        .map(|item| {
            let depth = (max_depth as usize).min(item.costs.len());
            let mut acc = vec![(0.0, 0.0)];
            for k in 0..depth {
                let (w, v) = acc[k];
                acc.push((w + item.reductions[k], v + item.costs[k]));
            }
            acc
        })
        .collect();
    let best_reduction_after: Vec<f64> = suffix_sums(prefix.iter().map(|p| p.last().unwrap().0));

    let mut best: Option<KnapsackSolution> = None;
    let mut counts = vec![0u32; prefix.len()];
    search_items(
        instance,
        &prefix,
        &best_reduction_after,
        0,
        0.0,
        0.0,
        &mut counts,
        &mut best,
    );
    best.ok_or(Error::Infeasible { max_depth })
}

fn suffix_sums(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Vec<f64> {
    let mut out = vec![0.0; values.len() + 1];
    let v: Vec<f64> = values.collect();
    for i in (0..v.len()).rev() {
        out[i] = out[i + 1] + v[i];
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn search_items(
    inst: &KnapsackInstance,
    prefix: &[Vec<(f64, f64)>],
    reduction_bound: &[f64],
    i: usize,
    reduced: f64,
    added: f64,
    counts: &mut Vec<u32>,
    best: &mut Option<KnapsackSolution>,
) {
    if let Some(b) = best {
        if inst.base_cost + added >= b.cost {
            return;
        }
    }
    if inst.base_error - reduced - reduction_bound[i] > inst.tol {
        return;
    }
    if i == prefix.len() {
        let error = inst.base_error - reduced;
        if error <= inst.tol {
            *best = Some(KnapsackSolution {
                counts: counts.clone(),
                cost: inst.base_cost + added,
                error,
            });
        }
        return;
    }
    for (k, (w, v)) in prefix[i].iter().enumerate() {
        counts[i] = k as u32;
        search_items(
            inst,
            prefix,
            reduction_bound,
            i + 1,
            reduced + w,
            added + v,
            counts,
            best,
        );
    }
    counts[i] = 0;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub scheme: RefinementScheme,
    pub cost: f64,
    /// Predicted relative network error of the optimal scheme.
    pub error: f64,
}

struct PipeOption {
    refinement: Refinement,
    error: f64,
    cost: f64,
}

/// Cheapest refinement scheme meeting the tolerance under the error model,
/// over all schemes with `r_x, r_t <= max_depth` on top of each pipe's
/// pending refinements. Costs follow [`RefinementScheme::cost`].
pub fn scheme_oracle(
    states: &[PipeRefinementState],
    cfg: &StrategyConfig,
    params: &CostParams,
    max_depth: u32,
) -> Result<OracleSolution> {
    cfg.validate()?;
    let options: Vec<Vec<PipeOption>> = states
        .iter()
        .map(|s| {
            let mut opts = Vec::new();
            for r_m in s.pending.model..=s.level.headroom() {
                for r_x in s.pending.space..=s.pending.space + max_depth {
                    for r_t in s.pending.time..=s.pending.time + max_depth {
                        let r = Refinement::new(r_m, r_x, r_t);
                        opts.push(PipeOption {
                            refinement: r,
                            error: pipe_error_sum(&s.errors, s.level, r, cfg),
                            cost: params.cost_refined(s.level_after(&r), r_x, r_t, s.n_x, s.n_t),
                        });
                    }
                }
            }
            opts.sort_by(|a, b| a.cost.total_cmp(&b.cost));
            opts
        })
        .collect();

    let min_error_after = suffix_sums(
        options
            .iter()
            .map(|o| o.iter().map(|p| p.error).fold(f64::INFINITY, f64::min)),
    );
    let min_cost_after = suffix_sums(options.iter().map(|o| o[0].cost));

    let budget = cfg.budget();
    let mut chosen = vec![0usize; options.len()];
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    search_schemes(
        &options,
        &min_error_after,
        &min_cost_after,
        budget,
        0,
        0.0,
        0.0,
        &mut chosen,
        &mut best,
    );

    let (picked, cost, error) = best.ok_or(Error::Infeasible { max_depth })?;
    Ok(OracleSolution {
        scheme: RefinementScheme {
            refinements: picked
                .iter()
                .zip(&options)
                .map(|(&k, o)| o[k].refinement)
                .collect(),
            iterations: 0,
        },
        cost,
        error: error / cfg.target_value,
    })
}

#[allow(clippy::too_many_arguments)]
fn search_schemes(
    options: &[Vec<PipeOption>],
    min_error_after: &[f64],
    min_cost_after: &[f64],
    budget: f64,
    i: usize,
    error: f64,
    cost: f64,
    chosen: &mut Vec<usize>,
    best: &mut Option<(Vec<usize>, f64, f64)>,
) {
    if error + min_error_after[i] > budget {
        return;
    }
    if let Some((_, best_cost, _)) = best {
        if cost + min_cost_after[i] >= *best_cost {
            return;
        }
    }
    if i == options.len() {
        *best = Some((chosen.clone(), cost, error));
        return;
    }
    for (k, opt) in options[i].iter().enumerate() {
        if let Some((_, best_cost, _)) = best {
            // Options are sorted by cost, so nothing later can win.
            if cost + opt.cost + min_cost_after[i + 1] >= *best_cost {
                break;
            }
        }
        chosen[i] = k;
        search_schemes(
            options,
            min_error_after,
            min_cost_after,
            budget,
            i + 1,
            error + opt.error,
            cost + opt.cost,
            chosen,
            best,
        );
    }
}
