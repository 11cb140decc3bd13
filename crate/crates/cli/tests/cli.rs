use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hawkes_rkhs::{build_basis, FittedModel, KernelSpec};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hawkes-rkhs"));
    cmd.env_remove("HAWKES_RKHS_SEED");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulates a short mutually-exciting run into `events.csv`.
fn simulated(horizon: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "mutually-exciting",
            "--horizon",
            horizon,
            "--seed",
            "1",
            "--out",
            "events.csv",
        ],
    );
    dir
}

#[test]
fn tiny_horizon_gives_header_only_file() {
    let dir = simulated("0.001");
    let text = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("# T=0.001 U=3"));
    assert_eq!(lines[1], "time,mark");
    assert!(dir.path().join("events.curves.csv").exists());
}

#[test]
fn unknown_scenario_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "nope",
            "--horizon",
            "10",
            "--seed",
            "1",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("mutually-exciting") && err.contains("refractory"), "{err}");
}

#[test]
fn simulate_without_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "refractory",
            "--horizon",
            "10",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duplicate_timestamp_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.csv"), "# T=10 U=1\ntime,mark\n1.0,1\n2.5,1\n2.5,1\n").unwrap();
    let out = run(dir.path(), &["fit", "--events", "e.csv", "--model-out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("duplicate event time at line 5"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_output_directory_fails_before_work() {
    let dir = simulated("300");
    let out = run(
        dir.path(),
        &["fit", "--events", "events.csv", "--model-out", "missing/m.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("does not exist"));
}

#[test]
fn fit_uses_documented_defaults() {
    let dir = simulated("300");
    let stdout = ok(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.csv",
            "--model-out",
            "m.json",
            "--curves-out",
            "g.csv",
        ],
    );
    assert!(stdout.contains("M = 100, γ = 1, β = 1"), "{stdout}");
    let model = json(dir.path().join("m.json"));
    assert_eq!(model["gamma"], 1.0);
    assert_eq!(model["A"], 5.0);
    let curves = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(
        curves.lines().next().unwrap(),
        "s,g_11,g_12,g_13,g_21,g_22,g_23,g_31,g_32,g_33"
    );
    assert_eq!(curves.lines().count(), 501);
}

#[test]
fn grid_search_reports_nine_cells_and_feeds_fit() {
    let dir = simulated("300");
    let stdout = ok(
        dir.path(),
        &[
            "grid-search",
            "--events",
            "events.csv",
            "--features",
            "20",
            "--seed",
            "4",
            "--out",
            "grid.json",
        ],
    );
    assert!(stdout.contains("<- chosen"));
    let report = json(dir.path().join("grid.json"));
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 9);
    assert_eq!(cells.iter().filter(|c| c["chosen"] == true).count(), 1);
    assert_eq!(report["split_time"], 240.0);

    ok(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.csv",
            "--features",
            "20",
            "--grid-report",
            "grid.json",
            "--model-out",
            "m.json",
        ],
    );
    let model = json(dir.path().join("m.json"));
    assert_eq!(model["gamma"], report["best_gamma"]);
    assert_eq!(model["basis_ref"]["seed"], 4);
}

#[test]
fn empty_validation_window_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.csv"), "# T=10 U=1\ntime,mark\n1.0,1\n2.0,1\n").unwrap();
    let out = run(
        dir.path(),
        &["grid-search", "--events", "e.csv", "--features", "8", "--out", "g.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("validation window empty"), "{}", stderr(&out));
}

#[test]
fn evaluating_against_own_curves_gives_zero() {
    let dir = simulated("300");
    ok(
        dir.path(),
        &[
            "fit",
            "--events",
            "events.csv",
            "--model-out",
            "m.json",
            "--curves-out",
            "g.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "m.json",
            "--truth-curves",
            "g.csv",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(json(dir.path().join("r.json"))["delta_sq"], 0.0);
}

#[test]
fn zero_model_scores_the_squared_truth() {
    let dir = tempfile::tempdir().unwrap();
    let basis = build_basis(&KernelSpec::gaussian(1.0).unwrap(), 10, 0).unwrap();
    let model = FittedModel::zero(basis, 3, 5.0, 100.0).unwrap();
    fs::write(dir.path().join("zero.json"), model.to_json().unwrap()).unwrap();
    fs::create_dir(dir.path().join("curves")).unwrap();
    ok(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "zero.json",
            "--scenario",
            "mutually-exciting",
            "--out",
            "r.json",
            "--curves-dir",
            "curves",
        ],
    );
    let delta = json(dir.path().join("r.json"))["delta_sq"].as_f64().unwrap();
    // ∫ g² summed over the nine true kernels, from an external high-precision integrator
    assert!((delta - 0.709_937_771_045_109_8).abs() < 1e-10, "{delta}");
    let pair = fs::read_to_string(dir.path().join("curves/g_2_1.csv")).unwrap();
    assert_eq!(pair.lines().next().unwrap(), "s,g_true,g_hat");
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let a = simulated("200");
    let b = simulated("200");
    assert_eq!(
        fs::read(a.path().join("events.csv")).unwrap(),
        fs::read(b.path().join("events.csv")).unwrap()
    );
    ok(
        a.path(),
        &[
            "fit",
            "--events",
            "events.csv",
            "--model-out",
            "m.json",
            "--workers",
            "1",
        ],
    );
    ok(
        b.path(),
        &[
            "fit",
            "--events",
            "events.csv",
            "--model-out",
            "m.json",
            "--workers",
            "3",
        ],
    );
    assert_eq!(
        fs::read(a.path().join("m.json")).unwrap(),
        fs::read(b.path().join("m.json")).unwrap()
    );
}

#[test]
fn config_supplies_flags_and_explicit_flags_win() {
    let dir = simulated("300");
    fs::write(
        dir.path().join("c.toml"),
        "seed = 9\n[fit]\nevents = \"events.csv\"\nmodel_out = \"m.json\"\ngamma = 0.5\nfeatures = 12\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "c.toml", "fit"]);
    let model = json(dir.path().join("m.json"));
    assert_eq!(model["gamma"], 0.5);
    assert_eq!(model["basis_ref"]["seed"], 9);
    assert_eq!(model["basis_ref"]["omega"].as_array().unwrap().len(), 12);

    ok(
        dir.path(),
        &["fit", "--config", "c.toml", "--gamma", "0.25", "--seed", "3"],
    );
    let model = json(dir.path().join("m.json"));
    assert_eq!(model["gamma"], 0.25);
    assert_eq!(model["basis_ref"]["seed"], 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "gamma = 1.0\n").unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "fit"]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("unknown top-level key `gamma`"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_executes_config_sections_in_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        r#"seed = 2

[evaluate]
model = "m.json"
scenario = "mutually-exciting"
out = "eval.json"

[fit]
events = "events.csv"
grid_report = "grid.json"
features = 16
model_out = "m.json"

[grid-search]
events = "events.csv"
features = 16
gamma_grid = [0.5, 1.0]
beta_grid = [1.0]
out = "grid.json"

[simulate]
scenario = "mutually-exciting"
horizon = 200.0
out = "events.csv"
"#,
    )
    .unwrap();
    let stdout = ok(dir.path(), &["--config", "c.toml", "run"]);
    let order: Vec<&str> = stdout.lines().filter(|l| l.starts_with("== ")).collect();
    assert_eq!(order, ["== simulate", "== grid-search", "== fit", "== evaluate"]);
    assert_eq!(json(dir.path().join("grid.json"))["cells"].as_array().unwrap().len(), 2);
    assert!(json(dir.path().join("eval.json"))["delta_sq"].as_f64().unwrap() > 0.0);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("HAWKES_RKHS_SEED", "1")
        .args([
            "simulate",
            "--scenario",
            "mutually-exciting",
            "--horizon",
            "300",
            "--out",
            "env.csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "mutually-exciting",
            "--horizon",
            "300",
            "--seed",
            "1",
            "--out",
            "flag.csv",
        ],
    );
    assert_eq!(
        fs::read(dir.path().join("env.csv")).unwrap(),
        fs::read(dir.path().join("flag.csv")).unwrap()
    );
}
