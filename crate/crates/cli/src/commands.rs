use std::path::Path;

use anyhow::{bail, Context, Result};
use gasadapt::experiment::{
    export_results, failing_samples, geometric_mean_gaps, oracle_gaps, run_experiment, write_gaps,
    ExperimentConfig,
};
use gasadapt::network::{
    export_window_reports, run_adaptive, run_reference, write_fields, NetworkFile,
};
use gasadapt::numfmt::sig;
use gasadapt::strategies::scheme_oracle;
use gasadapt::{
    CostParams, Error, PipeRefinementState, RefinementScheme, Strategy, StrategyConfig,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{config_error, ensure_dir, load_config, RunManifest};
use crate::{CostArgs, ExperimentArgs, OracleArgs, SimulateArgs};

pub const SUMMARY_FILE: &str = "experiment.csv";
pub const PER_SAMPLE_FILE: &str = "per_sample.csv";
pub const WINDOWS_FILE: &str = "windows.csv";
pub const FIELDS_DIR: &str = "fields";
pub const GAPS_FILE: &str = "oracle_gaps.csv";

pub fn experiment(args: &ExperimentArgs, out: &Path) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => load_config(path, "experiment")?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = args.tol {
        cfg.tol = tol;
    }
    if let Some(phis) = &args.phi {
        cfg.phis = phis.clone();
    }
    if let Some(s) = &args.strategies {
        cfg.strategies = s.clone();
    }
    cfg.validate()?;

    ensure_dir(out)?;
    RunManifest::new(
        "experiment",
        args.config.as_deref(),
        Some(cfg.seed),
        out,
        &cfg,
    )?
    .write(out)?;
    let result = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e)
            if matches!(
                e.root(),
                Error::Unsatisfiable { .. } | Error::SolverDiverged { .. }
            ) =>
        {
            let failures = failing_samples(&cfg);
            for (i, msg) in &failures {
                eprintln!("sample {i}: {msg}");
            }
            let indices: Vec<String> = failures.iter().map(|f| f.0.to_string()).collect();
            bail!("{} samples failed: {}", failures.len(), indices.join(","));
        }
        Err(e) => return Err(e.into()),
    };
    let per_sample = args.per_sample.then(|| out.join(PER_SAMPLE_FILE));
    export_results(&result, &out.join(SUMMARY_FILE), per_sample.as_deref())?;
    println!("{:<14} {:>12} {:>9}", "variant", "mean_cost", "savings");
    for v in &result.variants {
        println!(
            "{:<14} {:>12} {:>8}%",
            v.variant.label(),
            sig(v.mean_cost, 6),
            sig(v.savings_pct, 4)
        );
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, out: &Path) -> Result<()> {
    let path = &args.network;
    let mut file: NetworkFile = if path.extension().is_some_and(|e| e == "json") {
        load_config(path, "simulate")?
    } else {
        NetworkFile::load(path).map_err(|e| config_error(e.to_string()))?
    };
    let plan = &mut file.simulation;
    if let Some(s) = args.strategy {
        plan.strategy = s;
    }
    if let Some(phi) = args.phi {
        plan.refinement.phi = phi;
    }
    if let Some(tol) = args.tol {
        plan.refinement.tol = tol;
    }
    if args.uniform_time {
        plan.refinement.uniform_time = true;
    }
    let topo = file.topology()?;
    let plan = &file.simulation;
    plan.validate()?;

    ensure_dir(out)?;
    RunManifest::new("simulate", Some(path), None, out, &file)?.write(out)?;
    let run = run_adaptive(&topo, plan)?;
    export_window_reports(&topo, &run.reports, &out.join(WINDOWS_FILE))?;
    write_fields(&topo, &run.final_state, &out.join(FIELDS_DIR))?;

    let refinements: u32 = run.reports.iter().map(|r| r.refinement_count()).sum();
    let resimulations: usize = run.reports.iter().map(|r| r.resimulations).sum();
    let mut summary = format!(
        "strategy={} phi={} tol={:e} windows={} {}={} cost={} refinements={refinements} resimulations={resimulations}",
        plan.strategy,
        plan.refinement.phi,
        plan.refinement.tol,
        plan.windows,
        plan.functional.label(),
        sig(run.functional, 10),
        sig(run.cost, 6),
    );
    if args.reference {
        let reference = run_reference(&topo, plan).context("reference run")?;
        let error = (run.functional - reference.functional).abs() / reference.functional.abs();
        summary += &format!(
            " reference_{}={} reference_cost={} relative_error={}",
            plan.functional.label(),
            sig(reference.functional, 10),
            sig(reference.cost, 6),
            sig(error, 4)
        );
    }
    println!("{summary}");
    Ok(())
}

/// A single refinement problem for the oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleInstance {
    #[serde(default)]
    config: StrategyConfig,
    #[serde(default)]
    cost: CostParams,
    pipes: Vec<PipeRefinementState>,
}

fn scheme_text(scheme: &RefinementScheme) -> String {
    scheme
        .refinements
        .iter()
        .map(|r| format!("({},{},{})", r.model, r.space, r.time))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn oracle(args: &OracleArgs, out: &Path) -> Result<()> {
    if let Some(n) = args.batch {
        return oracle_batch(args, n, out);
    }
    let path = args
        .instance
        .as_deref()
        .expect("clap requires an instance without --batch");
    let inst: OracleInstance = load_config(path, "oracle")?;
    let mut cfg = inst.config.clone();
    cfg.validate()?;
    let best = scheme_oracle(&inst.pipes, &cfg, &inst.cost, args.depth)?;
    println!(
        "{:<7} cost={} error={} scheme={}",
        "oracle",
        sig(best.cost, 8),
        sig(best.error, 6),
        scheme_text(&best.scheme)
    );
    cfg.phi = args.phi;
    for s in Strategy::ALL {
        let scheme = s.run(&inst.pipes, &cfg, &inst.cost)?;
        let cost = scheme.cost(&inst.pipes, &inst.cost);
        println!(
            "{:<7} cost={} gap={} scheme={}",
            s.label(),
            sig(cost, 8),
            sig(cost / best.cost, 6),
            scheme_text(&scheme)
        );
    }
    Ok(())
}

fn oracle_batch(args: &OracleArgs, n: usize, out: &Path) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => load_config(path, "oracle")?,
        None => ExperimentConfig::default(),
    };
    cfg.samples = n;
    cfg.pipes = args.pipes;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    ensure_dir(out)?;
    RunManifest::new("oracle", args.config.as_deref(), Some(cfg.seed), out, &cfg)?.write(out)?;
    let rows = oracle_gaps(&cfg, args.depth)?;
    let path = out.join(GAPS_FILE);
    let file =
        std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_gaps(&cfg, &rows, std::io::BufWriter::new(file))?;
    let variants = cfg.variants();
    for (v, g) in variants
        .iter()
        .zip(geometric_mean_gaps(&rows, variants.len()))
    {
        println!("{:<14} geometric_mean_gap={}", v.label(), sig(g, 6));
    }
    Ok(())
}

pub fn cost(args: &CostArgs) -> Result<()> {
    let params: CostParams = match &args.config {
        Some(path) => load_config(path, "cost")?,
        None => CostParams::default(),
    };
    params.validate()?;
    if args.n_x == 0 || args.n_t == 0 {
        return Err(config_error("node counts must be positive"));
    }
    let c = params.cost_refined(args.model, args.r_x, args.r_t, args.n_x, args.n_t);
    println!("{c:e}");
    Ok(())
}
