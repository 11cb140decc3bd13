use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use hawkes_rkhs::eval::{
    bench_factorization, bench_scaling, grid_search, ise, ise_curves, ls_contrast_model, write_comparison_csv,
    FactorizationScaling, GridResult, GridSpec, ScalingTable,
};
use hawkes_rkhs::events::CsvMeta;
use hawkes_rkhs::simulate::{
    refractory_scenario_with_baseline, scenario_by_name, simulate_with, KernelCurves, SimOptions, SCENARIO_NAMES,
};
use hawkes_rkhs::{build_basis, fit, EventSequence, FitConfig, FittedModel, KernelSpec, ScenarioSpec};

use crate::{BenchArgs, Cli, Command, EvaluateArgs, EventArgs, FitArgs, GridArgs, SimulateArgs, UsageError, SEED_ENV};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::GridSearch(a) => grid(cli, a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(cli, a),
        Command::Run => bail!(UsageError("`run` cannot be nested".into())),
    }
}

fn seed(cli: &Cli) -> Result<Option<u64>> {
    if let Some(s) = cli.seed {
        return Ok(Some(s));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| {
            format!("${SEED_ENV} must be an unsigned integer, got `{v}`")
        })?)),
        Err(_) => Ok(None),
    }
}

fn builtin_scenario(name: &str) -> Result<ScenarioSpec> {
    scenario_by_name(name).ok_or_else(|| {
        UsageError(format!(
            "unknown scenario `{name}`; valid scenarios: {}",
            SCENARIO_NAMES.join(", ")
        ))
        .into()
    })
}

fn scenario_file(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    ScenarioSpec::from_json(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

/// Fails early when an output's directory is missing.
fn check_output(path: &Path) -> Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    Ok(())
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn read_events(a: &EventArgs) -> Result<(EventSequence, CsvMeta)> {
    let file = File::open(&a.events).with_context(|| format!("opening {}", a.events.display()))?;
    EventSequence::read_csv(BufReader::new(file), a.horizon, a.dims)
        .with_context(|| format!("reading events from {}", a.events.display()))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let Some(seed) = seed(cli)? else {
        bail!(UsageError(format!("simulate needs --seed or ${SEED_ENV}")));
    };
    let mut spec = match (&a.scenario, &a.scenario_file) {
        (Some(name), _) => builtin_scenario(name)?,
        (None, Some(path)) => scenario_file(path)?,
        (None, None) => bail!(UsageError("pass --scenario or --scenario-file".into())),
    };
    if let Some(mu) = a.baseline {
        spec = if spec.name == "refractory" {
            refractory_scenario_with_baseline(mu)
        } else {
            ScenarioSpec {
                mu: vec![mu; spec.dims()],
                ..spec
            }
        };
    }
    let curves_out = a
        .curves_out
        .clone()
        .unwrap_or_else(|| a.out.with_extension("curves.csv"));
    check_output(&a.out)?;
    check_output(&curves_out)?;

    let opts = SimOptions {
        max_events: a.max_events,
        ..Default::default()
    };
    let result = simulate_with(&spec, a.horizon, seed, &opts)
        .with_context(|| format!("simulating `{}` on [0, {}]", spec.name, a.horizon))?;
    let meta = CsvMeta {
        seed: Some(seed),
        scenario: Some(spec.name.clone()),
        ..Default::default()
    };
    let mut w = create(&a.out)?;
    result.events.write_csv(&mut w, &meta)?;
    w.flush()?;
    let mut w = create(&curves_out)?;
    spec.curves(a.curve_points).write_csv(&mut w)?;
    w.flush()?;

    let counts = result.events.counts();
    say!(
        "{} events on [0, {}] (per dimension: {:?}) -> {}",
        result.events.len(),
        a.horizon,
        counts,
        a.out.display()
    );
    say!("ground-truth curves -> {}", curves_out.display());
    Ok(())
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Result<()> {
    check_input(&a.input.events)?;
    check_output(&a.model_out)?;
    if let Some(p) = &a.curves_out {
        check_output(p)?;
    }
    let mut seed = seed(cli)?;
    let (gamma, beta) = match &a.grid_report {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let report: GridResult =
                serde_json::from_str(&text).with_context(|| format!("parsing grid report {}", path.display()))?;
            seed = seed.or(Some(report.seed));
            (report.best_gamma, report.best_beta)
        }
        None => (a.gamma.unwrap_or(1.0), a.beta.unwrap_or(1.0)),
    };
    let seed = seed.unwrap_or(0);
    let (events, _) = read_events(&a.input)?;
    let basis = build_basis(&KernelSpec::gaussian(beta)?, a.features, seed)?;
    let mut config = FitConfig::new(gamma, a.window, basis);
    config.clip_intensity = !a.no_clip;
    let model = fit(&events, &config).with_context(|| format!("fitting {}", a.input.events.display()))?;

    let mut w = create(&a.model_out)?;
    w.write_all(model.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    if let Some(p) = &a.curves_out {
        let curves = KernelCurves::from_fn(model.dims(), model.window(), a.curve_points, |i, j, s| model.g(i, j, s));
        let mut w = create(p)?;
        curves.write_csv(&mut w)?;
        w.flush()?;
    }

    say!(
        "fitted U = {}, M = {}, γ = {gamma}, β = {beta} on {} events (T = {})",
        model.dims(),
        a.features,
        events.len(),
        events.horizon()
    );
    for (i, mu) in model.mu_hat().iter().enumerate() {
        say!("  μ̂_{} = {mu:.4e}", i + 1);
    }
    let t = model.timings();
    say!(
        "timings [s]: Ξ build {:.4}, statistics {:.4}, factorization {:.4}, solve {:.4}, total {:.4}",
        t.xi_build.as_secs_f64(),
        t.statistics.as_secs_f64(),
        t.factorization.as_secs_f64(),
        t.solve.as_secs_f64(),
        t.total().as_secs_f64()
    );
    if let Some(c) = model.condition_estimate() {
        say!("condition estimate {c:.4e}");
    }
    say!("model -> {}", a.model_out.display());
    Ok(())
}

fn grid(cli: &Cli, a: &GridArgs) -> Result<()> {
    check_input(&a.input.events)?;
    check_output(&a.out)?;
    let seed = seed(cli)?.unwrap_or(0);
    let spec = GridSpec {
        gamma_grid: a.gamma_grid.clone(),
        beta_grid: a.beta_grid.clone(),
        split_fraction: a.split,
    };
    let (events, _) = read_events(&a.input)?;
    let result = grid_search(&events, &spec, a.features, a.window, seed)
        .with_context(|| format!("grid search on {}", a.input.events.display()))?;
    write_json(&a.out, &result)?;

    say!("validation window [{:.4}, {}]", result.split_time, events.horizon());
    say!("{:>10} {:>10} {:>14}  ", "gamma", "beta", "loss");
    for c in &result.cells {
        let loss = match (c.validation_loss, &c.error) {
            (Some(l), _) => format!("{l:>14.4e}"),
            (None, Some(e)) => format!("{:>14}  {e}", "failed"),
            (None, None) => format!("{:>14}", "-"),
        };
        say!(
            "{:>10} {:>10} {loss}{}",
            c.gamma,
            c.beta,
            if c.chosen { "  <- chosen" } else { "" }
        );
    }
    say!("report -> {}", a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    check_input(&a.model)?;
    check_output(&a.out)?;
    if let Some(dir) = &a.curves_dir {
        if !dir.is_dir() {
            bail!("curves directory {} does not exist", dir.display());
        }
    }
    let text = std::fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = FittedModel::from_json(&text).with_context(|| format!("parsing model {}", a.model.display()))?;

    let (mut report, curves) = if let Some(path) = &a.truth_curves {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let curves = KernelCurves::read_csv(BufReader::new(file))
            .with_context(|| format!("reading truth curves {}", path.display()))?;
        (ise_curves(&curves, &model)?, curves)
    } else {
        let spec = match (&a.scenario, &a.scenario_file) {
            (Some(name), _) => builtin_scenario(name)?,
            (None, Some(path)) => scenario_file(path)?,
            (None, None) => bail!(UsageError("pass --scenario, --scenario-file or --truth-curves".into())),
        };
        (ise(&spec, &model, a.nodes)?, spec.curves(a.curve_points))
    };
    if let Some(path) = &a.events {
        let (events, _) = read_events(&EventArgs {
            events: path.clone(),
            horizon: None,
            dims: Some(model.dims()),
        })?;
        report.ls_loss = Some(ls_contrast_model(&model, &events, 0.0, events.horizon())?);
    }
    write_json(&a.out, &report)?;
    if let Some(dir) = &a.curves_dir {
        for i in 0..model.dims() {
            for j in 0..model.dims() {
                let path = dir.join(format!("g_{}_{}.csv", i + 1, j + 1));
                let mut w = create(&path)?;
                write_comparison_csv(&mut w, &curves.s, &curves.values[i][j], &model, i, j)?;
                w.flush()?;
            }
        }
    }
    say_raw!("{}", report.summary());
    say!("report -> {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    scenario: String,
    scaling: ScalingTable,
    factorization: FactorizationScaling,
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    let seed = seed(cli)?.unwrap_or(0);
    let spec = builtin_scenario(&a.scenario)?;
    let scaling = bench_scaling(&spec, &a.horizons, a.features, a.reps, seed)?;
    say_raw!("{}", scaling.summary());
    let events = hawkes_rkhs::simulate(&spec, a.horizons[0], seed)?.events;
    let factorization = bench_factorization(&events, spec.window, &a.factor_features, a.reps, seed)?;
    say!("{:>8} {:>12}", "M", "factor [s]");
    for (m, t) in factorization.features.iter().zip(&factorization.seconds) {
        say!("{m:>8} {t:>12.4e}");
    }
    say!("factorization slope vs M: {:.4}", factorization.slope);
    if let Some(p) = &a.out {
        write_json(
            p,
            &BenchReport {
                scenario: spec.name,
                scaling,
                factorization,
            },
        )?;
        say!("report -> {}", p.display());
    }
    Ok(())
}
