//! `hawkes-rkhs`: simulate, fit, select hyperparameters for and score
//! nonparametric multivariate Hawkes models.

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// `print!` that ignores a closed stdout.
macro_rules! say_raw {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const SEED_ENV: &str = "HAWKES_RKHS_SEED";

#[derive(Debug, Parser)]
#[command(name = "hawkes-rkhs", version, about, args_override_self = true)]
pub struct Cli {
    /// Flat TOML file whose keys supply default flag values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for the parallel kernels (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Random seed; falls back to $HAWKES_RKHS_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write events plus ground-truth kernel curves.
    Simulate(SimulateArgs),
    /// Fit baselines and triggering kernels to an event file.
    Fit(FitArgs),
    /// Choose (γ, β) by fitting on [0, split·T] and scoring [split·T, T].
    GridSearch(GridArgs),
    /// Score a fitted model against ground-truth kernels.
    Evaluate(EvaluateArgs),
    /// Measure fit runtime scaling.
    Bench(BenchArgs),
    /// Run every command section of the config file in pipeline order.
    Run,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "scenario_file", required_unless_present = "scenario_file")]
    pub scenario: Option<String>,
    /// Scenario description as JSON.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// Override every baseline μ_i.
    #[arg(long)]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub horizon: f64,
    /// Events CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth curves CSV (default: next to the events file).
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub curve_points: usize,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_events: usize,
}

#[derive(Debug, Args)]
pub struct EventArgs {
    /// Events CSV (`time,mark`, 1-based marks).
    #[arg(long)]
    pub events: PathBuf,
    /// Observation horizon T, if the file header lacks it.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Dimension count U, if not the largest mark.
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: EventArgs,
    #[arg(long, conflicts_with = "grid_report")]
    pub gamma: Option<f64>,
    #[arg(long, conflicts_with = "grid_report")]
    pub beta: Option<f64>,
    /// Take γ and β from the chosen cell of a grid-search report.
    #[arg(long)]
    pub grid_report: Option<PathBuf>,
    /// Number of random Fourier features M.
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    /// Kernel support window A.
    #[arg(long, default_value_t = 5.0)]
    pub window: f64,
    /// Report raw linear intensities instead of clipping at zero.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Fitted kernel curves CSV `s,g_11,...`.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub curve_points: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub input: EventArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    pub gamma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5])]
    pub beta_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    #[arg(long, default_value_t = 5.0)]
    pub window: f64,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Built-in scenario supplying the true kernels.
    #[arg(long, conflicts_with = "truth_curves", required_unless_present_any = ["truth_curves", "scenario_file"])]
    pub scenario: Option<String>,
    #[arg(long, conflicts_with_all = ["truth_curves", "scenario"])]
    pub scenario_file: Option<PathBuf>,
    /// True kernels tabulated as `s,g_11,...,g_UU`.
    #[arg(long)]
    pub truth_curves: Option<PathBuf>,
    /// Simpson nodes on [0, A] for scenario truth.
    #[arg(long, default_value_t = 2001)]
    pub nodes: usize,
    /// Events to compute the least-squares contrast on [0, T].
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-pair `s,g_true,g_hat` CSVs.
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub curve_points: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "mutually-exciting")]
    pub scenario: String,
    #[arg(long, value_delimiter = ',', default_values_t = [500.0, 1000.0, 2000.0, 4000.0])]
    pub horizons: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    /// Feature counts for the factorization sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256])]
    pub factor_features: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Splices config-file flags in after the subcommand name. Scans the raw
/// arguments directly since required flags may come from the file.
fn expand_config(raw: Vec<OsString>) -> Result<Vec<OsString>, clap::Error> {
    let mut path = None;
    let mut pos = None;
    let mut k = 1;
    while k < raw.len() {
        let arg = raw[k].to_string_lossy();
        if arg == "--config" {
            path = raw.get(k + 1).map(PathBuf::from);
            k += 2;
            continue;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if pos.is_none() && (config::SECTIONS.contains(&arg.as_ref()) || arg == "run") {
            pos = Some(k);
        }
        k += 1;
    }
    let (Some(path), Some(pos)) = (path, pos) else {
        return Ok(raw);
    };
    let name = raw[pos].to_string_lossy().into_owned();
    let invalid = |e: anyhow::Error| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{e:#}\n"));
    let table = config::load(&path).map_err(invalid)?;
    let from_file = config::to_args(&table, &name).map_err(invalid)?;
    let mut args = vec![raw[0].clone(), OsString::from(&name)];
    args.extend(from_file.into_iter().map(OsString::from));
    args.extend(
        raw.iter()
            .enumerate()
            .skip(1)
            .filter(|(k, _)| *k != pos)
            .map(|(_, a)| a.clone()),
    );
    Ok(args)
}

fn parse(raw: Vec<OsString>) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(expand_config(raw)?)
}

fn report(err: anyhow::Error) -> ExitCode {
    eprintln!("error: {err:#}");
    if err.downcast_ref::<UsageError>().is_some() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let cli = match parse(raw.clone()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(anyhow::anyhow!("configuring {n} workers: {e}"));
        }
    }
    let result = match &cli.command {
        Command::Run => run_pipeline(&cli, &raw),
        _ => commands::dispatch(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn run_pipeline(cli: &Cli, raw: &[OsString]) -> anyhow::Result<()> {
    let Some(path) = &cli.config else {
        return Err(UsageError("`run` needs --config".into()).into());
    };
    let table = config::load(path)?;
    let steps = config::sections(&table);
    if steps.is_empty() {
        return Err(UsageError(format!("config {} has no command sections", path.display())).into());
    }
    for step in steps {
        let mut args: Vec<OsString> = raw.iter().filter(|a| *a != "run").cloned().collect();
        args.push(step.into());
        let parsed = parse(args).map_err(|e| UsageError(format!("[{step}] {e}")))?;
        say!("== {step}");
        commands::dispatch(&parsed)?;
    }
    Ok(())
}
