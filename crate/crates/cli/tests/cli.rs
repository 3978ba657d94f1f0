use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gasadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasadapt"))
        .args(args)
        .env_remove("GASADAPT_OUTPUT_DIR")
        .output()
        .expect("failed to run gasadapt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

fn regression_network() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/regression_network.toml")
}

#[test]
fn single_sample_reports_seven_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gasadapt(&["experiment", "--samples", "1", "--seed", "7", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("experiment.csv"));
    assert_eq!(rows.len(), 7);
    assert!(rows[0].starts_with("S1,,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "experiment");
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["effective_config"]
        .as_str()
        .unwrap()
        .contains("samples = 1"));
}

#[test]
fn filtering_by_phi_and_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gasadapt(&[
        "experiment",
        "--samples",
        "20",
        "--phi",
        "1.0",
        "--strategies",
        "s2,s3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("experiment.csv"));
    assert_eq!(rows.len(), 2);
    assert!(
        rows[0].starts_with("S2,1,") && rows[1].starts_with("S3,1,"),
        "{rows:?}"
    );
}

#[test]
fn manifest_replay_is_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = gasadapt(&[
        "experiment",
        "--samples",
        "200",
        "--seed",
        "11",
        "--per-sample",
        "--out",
        first.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = first.path().join("manifest.json");
    let o = gasadapt(&[
        "experiment",
        "--config",
        manifest.to_str().unwrap(),
        "--per-sample",
        "--threads",
        "1",
        "--out",
        second.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for file in ["experiment.csv", "per_sample.csv"] {
        let a = fs::read(first.path().join(file)).unwrap();
        let b = fs::read(second.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gasadapt"))
        .args(["experiment", "--samples", "1"])
        .env("GASADAPT_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("experiment.csv").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasadapt(&["experiment", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "samples = 2\nbogus = 1\n").unwrap();
    let o = gasadapt(&[
        "experiment",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = gasadapt(&[
        "simulate",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = gasadapt(&["cost", "--model", "4", "--n-x", "1", "--n-t", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsatisfiable_samples_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasadapt(&[
        "experiment",
        "--samples",
        "3",
        "--tol",
        "1e-12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("3 samples failed: 0,1,2"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["experiment", "simulate", "oracle", "cost"] {
        let o = gasadapt(&[sub, "--help"]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("--out"), "{sub}");
    }
    let help = stdout(&gasadapt(&["simulate", "--help"]));
    for flag in [
        "--strategy",
        "--phi",
        "--tol",
        "--uniform-time",
        "--reference",
        "--threads",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn cost_matches_table_constant() {
    let o = gasadapt(&["cost", "--model", "3", "--n-x", "1", "--n-t", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "5.49e-5");
    let o = gasadapt(&[
        "cost", "--model", "2", "--n-x", "50", "--n-t", "100", "--r-x", "1",
    ]);
    let refined: f64 = stdout(&o).trim().parse().unwrap();
    let direct: f64 = stdout(&gasadapt(&[
        "cost", "--model", "2", "--n-x", "100", "--n-t", "100",
    ]))
    .trim()
    .parse()
    .unwrap();
    assert_eq!(refined, direct);
}

#[test]
fn infinite_tolerance_simulation_never_refines() {
    let dir = tempfile::tempdir().unwrap();
    let net = regression_network();
    let o = gasadapt(&[
        "simulate",
        net.to_str().unwrap(),
        "--tol",
        "inf",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    assert!(
        summary.contains("refinements=0 resimulations=0"),
        "{summary}"
    );
    let rows = csv_rows(&dir.path().join("windows.csv"));
    assert_eq!(rows.len(), 8 * 12);
    assert!(rows.iter().all(|r| r.contains(",3,129,4,")), "{}", rows[0]);
    let field = csv_rows(&dir.path().join("fields/P01.csv"));
    assert_eq!(field.len(), 129);
}

#[test]
fn uniform_time_simulation_shares_one_time_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let net = regression_network();
    let o = gasadapt(&[
        "simulate",
        net.to_str().unwrap(),
        "--strategy",
        "s2",
        "--phi",
        "0.9",
        "--uniform-time",
        "--tol",
        "1e-4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("windows.csv")).unwrap();
    let mut per_window: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    for rec in reader.records() {
        let rec = rec.unwrap();
        per_window
            .entry(rec[0].to_string())
            .or_default()
            .push(rec[6].to_string());
    }
    assert_eq!(per_window.len(), 8);
    assert!(
        per_window.values().any(|n_t| n_t[0] != "4"),
        "expected some time refinement"
    );
    for (w, n_t) in &per_window {
        assert!(n_t.iter().all(|n| *n == n_t[0]), "window {w}: {n_t:?}");
    }
}

#[test]
fn oracle_on_satisfied_instance_has_unit_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("instance.toml");
    fs::write(
        &inst,
        r#"
[config]
tol = 0.1
target_value = 10.0

[[pipes]]
id = "a"
level = 3
n_x = 120
n_t = 140
errors = { model = 0.1, space = 0.05, time = 0.05 }

[[pipes]]
id = "b"
level = 2
n_x = 100
n_t = 100
errors = { model = 0.2, space = 0.1, time = 0.1 }
"#,
    )
    .unwrap();
    let o = gasadapt(&["oracle", inst.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let gaps: Vec<&str> = text
        .lines()
        .filter_map(|l| l.split("gap=").nth(1))
        .collect();
    assert_eq!(gaps.len(), 3, "{text}");
    for g in gaps {
        assert!(g.starts_with("1.00000 "), "{text}");
    }
}

#[test]
fn oracle_batch_writes_gap_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasadapt(&[
        "oracle",
        "--batch",
        "30",
        "--depth",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("oracle_gaps.csv"));
    assert_eq!(rows.len(), 30 * 7);
    for row in rows {
        let gap: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap >= 1.0 - 1e-12, "{row}");
    }
}
