//! Randomised comparison of the refinement strategies.
//!
//! Every sample is a network of pipes that all start on the algebraic model
//! with random error estimates and node counts. Each strategy variant refines
//! the sample until the predicted network error meets the tolerance, and the
//! cost of the refined network is recorded. Samples draw from independent
//! ChaCha streams keyed by `(seed, sample index)`, so results do not depend
//! on evaluation order or thread count.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::error_model::{ErrorTriple, StrategyConfig};
use crate::level::ModelLevel;
use crate::numfmt::sig;
use crate::strategies::scheme_oracle;
use crate::strategies::{network_error_with, PipeRefinementState, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipes: usize,
    pub samples: usize,
    pub seed: u64,
    /// Inclusive range of initial spatial and temporal node counts.
    pub nodes: [u64; 2],
    pub model_error: [f64; 2],
    pub discretisation_error: [f64; 2],
    pub tol: f64,
    /// Defaults to `2.5 * pipes`.
    pub target_value: Option<f64>,
    pub kappa: f64,
    pub phis: Vec<f64>,
    pub safety_factor: f64,
    pub space_order: f64,
    pub time_order: f64,
    pub model_reduction_32: f64,
    pub model_reduction_21: f64,
    /// Strategies to report; S1 always runs as the savings baseline.
    pub strategies: Vec<Strategy>,
    pub cost: CostParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = StrategyConfig::default();
        ExperimentConfig {
            pipes: 12,
            samples: 10_000,
            seed: 2019,
            nodes: [100, 200],
            model_error: [0.0, 1.0],
            discretisation_error: [0.0, 0.2],
            tol: s.tol,
            target_value: None,
            kappa: s.kappa,
            phis: vec![0.8, 0.9, 1.0],
            safety_factor: s.safety_factor,
            space_order: s.space_order,
            time_order: s.time_order,
            model_reduction_32: s.model_reduction_32,
            model_reduction_21: s.model_reduction_21,
            strategies: Strategy::ALL.to_vec(),
            cost: CostParams::default(),
        }
    }
}

/// One strategy with a fixed `phi` (none for S1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub strategy: Strategy,
    pub phi: Option<f64>,
}

impl Variant {
    pub fn label(&self) -> String {
        match self.phi {
            Some(phi) => format!("{}(phi={phi})", self.strategy),
            None => self.strategy.label().to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0] >= 0.0 && r[1].is_finite();
        if self.pipes == 0 || self.samples == 0 {
            return Err(Error::config("pipes and samples must be at least 1"));
        }
        if self.nodes[0] < 1 || self.nodes[0] > self.nodes[1] {
            return Err(Error::config(
                "nodes must be a non-empty range of positive counts",
            ));
        }
        if !ordered(self.model_error) || !ordered(self.discretisation_error) {
            return Err(Error::config(
                "error ranges must be non-empty and non-negative",
            ));
        }
        if self.phis.is_empty() && self.strategies.iter().any(|s| s.uses_phi()) {
            return Err(Error::config("phis must not be empty"));
        }
        self.cost.validate()?;
        for phi in self.phis_or_one() {
            self.strategy_config(Some(phi)).validate()?;
        }
        Ok(())
    }

    fn phis_or_one(&self) -> Vec<f64> {
        if self.phis.is_empty() {
            vec![1.0]
        } else {
            self.phis.clone()
        }
    }

    pub fn target(&self) -> f64 {
        self.target_value.unwrap_or(2.5 * self.pipes as f64)
    }

    pub fn strategy_config(&self, phi: Option<f64>) -> StrategyConfig {
        StrategyConfig {
            tol: self.tol,
            kappa: self.kappa,
            phi: phi.unwrap_or(1.0),
            safety_factor: self.safety_factor,
            space_order: self.space_order,
            time_order: self.time_order,
            model_reduction_32: self.model_reduction_32,
            model_reduction_21: self.model_reduction_21,
            target_value: self.target(),
            ..StrategyConfig::default()
        }
    }

    /// Reported variants in table order: S1, then each phi of S2, then S3.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for strategy in Strategy::ALL {
            if !self.strategies.contains(&strategy) {
                continue;
            }
            if strategy.uses_phi() {
                out.extend(self.phis.iter().map(|&phi| Variant {
                    strategy,
                    phi: Some(phi),
                }));
            } else {
                out.push(Variant {
                    strategy,
                    phi: None,
                });
            }
        }
        out
    }

    /// Deterministic generator for sample `index`.
    pub fn sample_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Draws one synthetic network: all pipes on M3, uniform errors and node
/// counts. Discretisation errors on M3 are latent; they only count once a
/// model refinement moves the pipe to M2.
pub fn sample_instance(cfg: &ExperimentConfig, rng: &mut impl Rng) -> Vec<PipeRefinementState> {
    let uniform = |rng: &mut dyn rand::RngCore, r: [f64; 2]| -> f64 {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..r[1])
        }
    };
    (0..cfg.pipes)
        .map(|j| {
            let n_x = rng.random_range(cfg.nodes[0]..=cfg.nodes[1]);
            let n_t = rng.random_range(cfg.nodes[0]..=cfg.nodes[1]);
            let e_m = uniform(rng, cfg.model_error);
            let e_x = uniform(rng, cfg.discretisation_error);
            let e_t = uniform(rng, cfg.discretisation_error);
            PipeRefinementState::new(
                format!("P{:02}", j + 1),
                ModelLevel::Algebraic,
                n_x,
                n_t,
                ErrorTriple::new(e_m, e_x, e_t),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub mean_cost: f64,
    /// `100 (1 - mean / mean_S1)`.
    pub savings_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub variants: Vec<VariantResult>,
    pub baseline_mean: f64,
    /// `per_sample[v][i]`: total cost of variant `v` on sample `i`.
    pub per_sample: Vec<Vec<f64>>,
}

/// Runs `strategy` on one sample and returns the refined network cost,
/// checking the tolerance on the way out.
pub fn evaluate(
    states: &[PipeRefinementState],
    variant: Variant,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    let scfg = cfg.strategy_config(variant.phi);
    let scheme = variant.strategy.run(states, &scfg, &cfg.cost)?;
    let error = network_error_with(states, &scheme.refinements, &scfg);
    if error > scfg.tol {
        return Err(Error::Unsatisfiable {
            iterations: scheme.iterations,
            error,
            tol: scfg.tol,
        });
    }
    Ok(scheme.cost(states, &cfg.cost))
}

/// Runs every variant on every sample.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let variants = cfg.variants();
    let baseline = Variant {
        strategy: Strategy::IndividualBounds,
        phi: None,
    };

    // rows[i] = (baseline cost, costs per reported variant)
    let rows: Vec<(f64, Vec<f64>)> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let states = sample_instance(cfg, &mut cfg.sample_rng(i));
            let wrap = |e: Error| Error::Sample {
                index: i,
                source: Box::new(e),
            };
            let base = evaluate(&states, baseline, cfg).map_err(wrap)?;
            let costs = variants
                .iter()
                .map(|v| {
                    if *v == baseline {
                        Ok(base)
                    } else {
                        evaluate(&states, *v, cfg)
                    }
                })
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            Ok((base, costs))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.samples as f64;
    let baseline_mean = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let per_sample: Vec<Vec<f64>> = (0..variants.len())
        .map(|v| rows.iter().map(|r| r.1[v]).collect())
        .collect();
    let variants = variants
        .iter()
        .zip(&per_sample)
        .map(|(variant, costs)| {
            let mean_cost = costs.iter().sum::<f64>() / n;
            VariantResult {
                variant: *variant,
                mean_cost,
                savings_pct: 100.0 * (1.0 - mean_cost / baseline_mean),
            }
        })
        .collect();
    Ok(ExperimentResult {
        variants,
        baseline_mean,
        per_sample,
    })
}

/// Collects the indices of failing samples instead of stopping at the first.
pub fn failing_samples(cfg: &ExperimentConfig) -> Vec<(usize, String)> {
    let variants = cfg.variants();
    let mut failures: Vec<(usize, String)> = (0..cfg.samples)
        .into_par_iter()
        .filter_map(|i| {
            let states = sample_instance(cfg, &mut cfg.sample_rng(i));
            variants.iter().find_map(|v| {
                evaluate(&states, *v, cfg)
                    .err()
                    .map(|e| (i, format!("{}: {e}", v.label())))
            })
        })
        .collect();
    failures.sort_by_key(|f| f.0);
    failures
}

pub const SUMMARY_HEADER: [&str; 4] = ["strategy", "phi", "mean_cost", "savings_pct"];

fn phi_field(phi: Option<f64>) -> String {
    phi.map(|p| p.to_string()).unwrap_or_default()
}

/// Writes the summary table, one row per variant, six significant digits.
pub fn write_summary<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for v in &result.variants {
        w.write_record([
            v.variant.strategy.label().to_string(),
            phi_field(v.variant.phi),
            sig(v.mean_cost, 6),
            sig(v.savings_pct, 6),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Long-format per-sample costs: `sample,strategy,phi,cost`.
pub fn write_per_sample<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "strategy", "phi", "cost"])?;
    for (v, costs) in result.variants.iter().zip(&result.per_sample) {
        let phi = phi_field(v.variant.phi);
        for (i, c) in costs.iter().enumerate() {
            w.write_record([
                i.to_string(),
                v.variant.strategy.label().to_string(),
                phi.clone(),
                c.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the summary CSV to `path`, plus the per-sample CSV when given.
pub fn export_results(
    result: &ExperimentResult,
    path: &Path,
    per_sample: Option<&Path>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary(result, std::io::BufWriter::new(file))?;
    if let Some(p) = per_sample {
        let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_per_sample(result, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// One parsed summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub phi: Option<f64>,
    pub mean_cost: f64,
    pub savings_pct: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let parse_err = |m: String| Error::Parse {
        path: path.to_path_buf(),
        message: m,
    };
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(parse_err(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e| parse_err(format!("column {}: {e}", SUMMARY_HEADER[i])))
        };
        rows.push(SummaryRow {
            strategy: Strategy::parse(&rec[0])
                .ok_or_else(|| parse_err(format!("unknown strategy {}", &rec[0])))?,
            phi: if rec[1].is_empty() {
                None
            } else {
                Some(num(1)?)
            },
            mean_cost: num(2)?,
            savings_pct: num(3)?,
        });
    }
    Ok(rows)
}

/// Strategy costs on one instance next to the exhaustive optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub instance: usize,
    pub oracle_cost: f64,
    /// Cost per reported variant, in [`ExperimentConfig::variants`] order.
    pub costs: Vec<f64>,
}

/// Solves `cfg.samples` instances with every variant and with the scheme
/// oracle limited to `max_depth` halvings per pipe and dimension.
pub fn oracle_gaps(cfg: &ExperimentConfig, max_depth: u32) -> Result<Vec<GapRow>> {
    cfg.validate()?;
    let variants = cfg.variants();
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let wrap = |e: Error| Error::Sample {
                index: i,
                source: Box::new(e),
            };
            let states = sample_instance(cfg, &mut cfg.sample_rng(i));
            let oracle = scheme_oracle(&states, &cfg.strategy_config(None), &cfg.cost, max_depth)
                .map_err(wrap)?;
            let costs = variants
                .iter()
                .map(|v| evaluate(&states, *v, cfg))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            Ok(GapRow {
                instance: i,
                oracle_cost: oracle.cost,
                costs,
            })
        })
        .collect()
}

/// Geometric mean of `cost / oracle_cost` per variant.
pub fn geometric_mean_gaps(rows: &[GapRow], variants: usize) -> Vec<f64> {
    (0..variants)
        .map(|v| {
            let log_sum: f64 = rows.iter().map(|r| (r.costs[v] / r.oracle_cost).ln()).sum();
            (log_sum / rows.len() as f64).exp()
        })
        .collect()
}

pub const GAP_HEADER: [&str; 6] = ["instance", "strategy", "phi", "cost", "oracle_cost", "gap"];

/// Long-format gap table, one row per instance and variant.
pub fn write_gaps<W: Write>(cfg: &ExperimentConfig, rows: &[GapRow], out: W) -> Result<()> {
    let variants = cfg.variants();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GAP_HEADER)?;
    for r in rows {
        for (v, c) in variants.iter().zip(&r.costs) {
            w.write_record([
                r.instance.to_string(),
                v.strategy.label().to_string(),
                phi_field(v.phi),
                c.to_string(),
                r.oracle_cost.to_string(),
                (c / r.oracle_cost).to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
