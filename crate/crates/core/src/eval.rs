//! Scoring and model selection: the least-squares contrast on a time window,
//! the integrated squared kernel error `Δ²`, the train/validation grid search
//! and runtime scaling measurements.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    add_phi_tilde, build_xi_window, integral_phi_tilde, Design, FittedModel, SystemFactor, XiMatrix,
};
use crate::events::EventSequence;
use crate::features::{build_basis, FeatureBasis, KernelSpec};
use crate::quad::{simpson_weights, uniform_grid};
use crate::simulate::{simulate, KernelCurves, ScenarioSpec};

pub const DEFAULT_ISE_NODES: usize = 2001;

/// Sufficient statistics of the contrast on `[t0, t1]` for a fixed basis.
///
/// The contrast is a quadratic in `(μ, c)`, so one set of terms scores any
/// number of models sharing the basis.
#[derive(Clone, Debug)]
pub struct ContrastTerms {
    duration: f64,
    integral: Vec<f64>,
    xi: XiMatrix,
    counts: Vec<usize>,
    event_sums: Vec<Vec<f64>>,
}

impl ContrastTerms {
    pub fn new(events: &EventSequence, basis: &FeatureBasis, window: f64, t0: f64, t1: f64) -> Result<Self> {
        let horizon = events.horizon();
        if !(0.0 <= t0 && t0 <= t1 && t1 <= horizon) {
            return Err(Error::InvalidParameter(format!(
                "contrast window [{t0}, {t1}] must lie inside [0, {horizon}]"
            )));
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "window A must be positive, got {window}"
            )));
        }
        let dims = events.dims();
        let size = basis.len() * dims;
        let mut counts = vec![0; dims];
        let mut event_sums = vec![vec![0.0; size]; dims];
        let (start, end) = (events.lower_bound(t0), events.lower_bound(t1));
        for n in start..end {
            let (t, i) = (events.times()[n], events.marks()[n]);
            counts[i] += 1;
            add_phi_tilde(events, basis, window, t, &mut event_sums[i]);
        }
        Ok(Self {
            duration: t1 - t0,
            integral: integral_phi_tilde(events, basis, window, t0, t1),
            xi: build_xi_window(events, basis, window, t0, t1),
            counts,
            event_sums,
        })
    }

    /// `Σ_i [(t1−t0)μ_i² + 2μ_i c_iᵀF + c_iᵀΞc_i − 2(|N_i|μ_i + c_iᵀS_i)]`.
    pub fn evaluate(&self, mu: &[f64], coeff: &[Vec<f64>]) -> Result<f64> {
        let size = self.integral.len();
        if mu.len() != self.counts.len() || coeff.len() != mu.len() || coeff.iter().any(|c| c.len() != size) {
            return Err(Error::InvalidParameter(format!(
                "expected {} baselines and coefficient vectors of length {size}",
                self.counts.len()
            )));
        }
        let xi = self.xi.matrix();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut total = 0.0;
        for (i, (&m, c)) in mu.iter().zip(coeff).enumerate() {
            let mut quad = 0.0;
            for col in 0..size {
                if c[col] != 0.0 {
                    let column = xi.column(col);
                    quad += c[col] * dot(column.as_slice(), c);
                }
            }
            total += self.duration * m * m + 2.0 * m * dot(c, &self.integral) + quad
                - 2.0 * (self.counts[i] as f64 * m + dot(c, &self.event_sums[i]));
        }
        Ok(total)
    }
}

/// Least-squares contrast `Σ_i [∫_{t0}^{t1} λ_i² − 2 Σ_{t_n ∈ N_i ∩ [t0, t1)} λ_i(t_n)]`
/// of the linear intensity with baselines `mu` and coefficients `coeff`.
/// Intensities on the window are driven by the full event history.
pub fn ls_contrast(
    basis: &FeatureBasis,
    mu: &[f64],
    coeff: &[Vec<f64>],
    events: &EventSequence,
    t0: f64,
    t1: f64,
    window: f64,
) -> Result<f64> {
    ContrastTerms::new(events, basis, window, t0, t1)?.evaluate(mu, coeff)
}

/// [`ls_contrast`] for a fitted model.
pub fn ls_contrast_model(model: &FittedModel, events: &EventSequence, t0: f64, t1: f64) -> Result<f64> {
    let coeff: Vec<Vec<f64>> = (0..model.dims()).map(|i| model.coeff(i).to_vec()).collect();
    ls_contrast(model.basis(), model.mu_hat(), &coeff, events, t0, t1, model.window())
}

/// Wall-clock seconds per fit phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub xi_build: f64,
    pub statistics: f64,
    pub factorization: f64,
    pub solve: f64,
}

impl WallTimes {
    pub fn from_model(model: &FittedModel) -> Self {
        let t = model.timings();
        Self {
            xi_build: t.xi_build.as_secs_f64(),
            statistics: t.statistics.as_secs_f64(),
            factorization: t.factorization.as_secs_f64(),
            solve: t.solve.as_secs_f64(),
        }
    }

    pub fn total(&self) -> f64 {
        self.xi_build + self.statistics + self.factorization + self.solve
    }
}

/// Scores of one model. Wall times are not serialized so that reports are
/// reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `Δ² = Σ_ij ∫₀^A (g_ij − ĝ_ij)² ds`
    pub delta_sq: f64,
    /// `per_pair[i][j] = ∫₀^A (g_ij − ĝ_ij)² ds`
    pub per_pair: Vec<Vec<f64>>,
    pub n_nodes: usize,
    pub ls_loss: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    #[serde(skip)]
    pub wall_times: WallTimes,
}

impl EvalReport {
    /// Aligned-column summary with 4 significant digits.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "Δ² = {:.4e}   (γ = {}, β = {}, {} nodes)\n",
            self.delta_sq, self.gamma, self.beta, self.n_nodes
        );
        if let Some(loss) = self.ls_loss {
            out.push_str(&format!("L_LS = {loss:.4e}\n"));
        }
        out.push_str(&format!("{:>6} {:>12}\n", "pair", "sq. error"));
        for (i, row) in self.per_pair.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out.push_str(&format!("{:>6} {:>12.4e}\n", format!("g_{}{}", i + 1, j + 1), e));
            }
        }
        out
    }
}

fn check_shape(model: &FittedModel, dims: usize, window: f64) -> Result<()> {
    if model.dims() != dims {
        return Err(Error::InvalidParameter(format!(
            "truth has U = {dims} but the model has U = {}",
            model.dims()
        )));
    }
    if (model.window() - window).abs() > 1e-12 * window.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "truth has A = {window} but the model has A = {}",
            model.window()
        )));
    }
    Ok(())
}

fn ise_on_nodes<F: Fn(usize, usize, usize) -> f64>(
    model: &FittedModel,
    dims: usize,
    nodes: &[f64],
    truth: F,
) -> EvalReport {
    let h = if nodes.len() > 1 { nodes[1] - nodes[0] } else { 0.0 };
    let weights = simpson_weights(nodes.len(), h);
    let per_pair: Vec<Vec<f64>> = (0..dims)
        .map(|i| {
            (0..dims)
                .map(|j| {
                    nodes
                        .iter()
                        .enumerate()
                        .map(|(k, &s)| weights[k] * (truth(i, j, k) - model.g(i, j, s)).powi(2))
                        .sum()
                })
                .collect()
        })
        .collect();
    EvalReport {
        delta_sq: per_pair.iter().flatten().sum(),
        per_pair,
        n_nodes: nodes.len(),
        ls_loss: None,
        gamma: model.gamma(),
        beta: model.basis().beta(),
        wall_times: WallTimes::from_model(model),
    }
}

/// `Δ²` against scenario kernels by composite Simpson on `n_nodes` points of `[0, A]`.
pub fn ise(truth: &ScenarioSpec, model: &FittedModel, n_nodes: usize) -> Result<EvalReport> {
    check_shape(model, truth.dims(), truth.window)?;
    if n_nodes < 2 {
        return Err(Error::InvalidParameter("ise needs at least two nodes".into()));
    }
    let nodes = uniform_grid(0.0, truth.window, n_nodes);
    Ok(ise_on_nodes(model, truth.dims(), &nodes, |i, j, k| {
        truth.g(i, j, nodes[k])
    }))
}

/// `Δ²` against tabulated curves, integrating by Simpson on their own uniform grid.
pub fn ise_curves(truth: &KernelCurves, model: &FittedModel) -> Result<EvalReport> {
    let s = &truth.s;
    let window = *s.last().unwrap_or(&0.0);
    if s.first() != Some(&0.0) {
        return Err(Error::InvalidParameter("truth curves must start at s = 0".into()));
    }
    check_shape(model, truth.dims(), window)?;
    let h = window / (s.len() - 1) as f64;
    if s.iter()
        .enumerate()
        .any(|(k, &x)| (x - h * k as f64).abs() > 1e-9 * window)
    {
        return Err(Error::InvalidParameter("truth curves must use a uniform grid".into()));
    }
    Ok(ise_on_nodes(model, truth.dims(), s, |i, j, k| truth.values[i][j][k]))
}

/// CSV `s,g_true,g_hat` for one kernel pair on the given nodes.
pub fn write_comparison_csv<W: Write>(
    mut w: W,
    s: &[f64],
    truth: &[f64],
    model: &FittedModel,
    i: usize,
    j: usize,
) -> Result<()> {
    writeln!(w, "s,g_true,g_hat")?;
    for (&x, &g) in s.iter().zip(truth) {
        writeln!(w, "{x:.16e},{g:.16e},{:.16e}", model.g(i, j, x))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub split_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gamma_grid: vec![0.1, 0.5, 1.0],
            beta_grid: vec![0.5, 1.0, 1.5],
            split_fraction: 0.8,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(Error::InvalidParameter("γ and β grids must be nonempty".into()));
        }
        if let Some(v) = self
            .gamma_grid
            .iter()
            .chain(&self.beta_grid)
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "grid values must be positive, got {v}"
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub beta: f64,
    /// Contrast on the validation window; absent when the cell failed.
    pub validation_loss: Option<f64>,
    pub error: Option<String>,
    pub chosen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub split_time: f64,
    pub features: usize,
    pub window: f64,
    pub seed: u64,
    /// Ordered by β, then γ, as given in the grid.
    pub cells: Vec<GridCell>,
    pub best_gamma: f64,
    pub best_beta: f64,
    pub best_loss: f64,
}

/// Fits every `(γ, β)` on events before `split·T` and scores the contrast on
/// `[split·T, T]`. The lowest loss wins; exact ties go to larger `γ`, then
/// larger `β`. A cell whose fit fails is recorded and skipped.
pub fn grid_search(events: &EventSequence, grid: &GridSpec, m: usize, window: f64, seed: u64) -> Result<GridResult> {
    grid.validate()?;
    let horizon = events.horizon();
    let split = grid.split_fraction * horizon;
    if events.lower_bound(split) == events.len() {
        return Err(Error::EmptyValidation(split));
    }
    let train = events.truncate(split)?;

    let per_beta: Vec<Vec<GridCell>> = grid
        .beta_grid
        .par_iter()
        .map(|&beta| {
            let failed = |e: Error| {
                grid.gamma_grid
                    .iter()
                    .map(|&gamma| GridCell {
                        gamma,
                        beta,
                        validation_loss: None,
                        error: Some(e.to_string()),
                        chosen: false,
                    })
                    .collect::<Vec<_>>()
            };
            let prepared = KernelSpec::gaussian(beta)
                .and_then(|spec| build_basis(&spec, m, seed))
                .and_then(|basis| {
                    let design = Design::new(&train, &basis, window.min(split))?;
                    let terms = ContrastTerms::new(events, &basis, window, split, horizon)?;
                    Ok((design, terms))
                });
            let (design, terms) = match prepared {
                Ok(p) => p,
                Err(e) => return failed(e),
            };
            grid.gamma_grid
                .iter()
                .map(|&gamma| {
                    let scored = design.fit(gamma, true).and_then(|model| {
                        let coeff: Vec<Vec<f64>> = (0..model.dims()).map(|i| model.coeff(i).to_vec()).collect();
                        terms.evaluate(model.mu_hat(), &coeff)
                    });
                    let (validation_loss, error) = match scored {
                        Ok(v) if v.is_finite() => (Some(v), None),
                        Ok(v) => (None, Some(format!("validation loss is {v}"))),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    GridCell {
                        gamma,
                        beta,
                        validation_loss,
                        error,
                        chosen: false,
                    }
                })
                .collect()
        })
        .collect();

    let mut cells: Vec<GridCell> = per_beta.into_iter().flatten().collect();
    let Some(k) = select_best(&cells) else {
        let reason = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(Error::InvalidParameter(format!("every grid cell failed: {reason}")));
    };
    let (gamma, beta) = (cells[k].gamma, cells[k].beta);
    let loss = cells[k].validation_loss.unwrap_or(f64::NAN);
    cells[k].chosen = true;
    Ok(GridResult {
        split_time: split,
        features: m,
        window,
        seed,
        cells,
        best_gamma: gamma,
        best_beta: beta,
        best_loss: loss,
    })
}

/// Index of the scored cell with the lowest loss; ties go to larger `γ`, then larger `β`.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.validation_loss.map(|l| (k, l, c.gamma, c.beta)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)).then(b.3.total_cmp(&a.3)))
        .map(|(k, ..)| k)
}

/// Median wall time of `f` over `reps` runs.
fn median_time<F: FnMut() -> Result<Duration>>(reps: usize, mut f: F) -> Result<f64> {
    let mut times = (0..reps.max(1))
        .map(|_| f().map(|d| d.as_secs_f64()))
        .collect::<Result<Vec<_>>>()?;
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub horizon: f64,
    pub events: usize,
    /// Median seconds.
    pub xi_build: f64,
    pub factorization: f64,
    pub solve: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub features: usize,
    pub workers: usize,
    pub rows: Vec<ScalingRow>,
    /// Log–log slope of `Ξ`-build time against event count.
    pub xi_slope: f64,
}

impl ScalingTable {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "M = {}, workers = {}\n{:>10} {:>8} {:>12} {:>12} {:>12}\n",
            self.features, self.workers, "T", "events", "xi [s]", "factor [s]", "solve [s]"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10} {:>8} {:>12.4e} {:>12.4e} {:>12.4e}\n",
                r.horizon, r.events, r.xi_build, r.factorization, r.solve
            ));
        }
        out.push_str(&format!("Ξ-build slope vs events: {:.4}\n", self.xi_slope));
        out
    }
}

/// Simulates `scenario` at each horizon, fits with `γ = 1`, `β = 1` and `M`
/// features, and records the median time per phase over `reps` fits.
pub fn bench_scaling(
    scenario: &ScenarioSpec,
    horizons: &[f64],
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ScalingTable> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "horizons must be nonempty and increasing".into(),
        ));
    }
    let basis = build_basis(&KernelSpec::gaussian(1.0)?, m, seed)?;
    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        let events = simulate(scenario, horizon, seed)?.events;
        let window = scenario.window.min(horizon);
        let mut phases = Vec::with_capacity(reps.max(1));
        for _ in 0..reps.max(1) {
            let model = Design::new(&events, &basis, window)?.fit(1.0, true)?;
            phases.push(*model.timings());
        }
        let median = |f: fn(&crate::estimator::FitTimings) -> Duration| {
            let mut v: Vec<f64> = phases.iter().map(|t| f(t).as_secs_f64()).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        rows.push(ScalingRow {
            horizon,
            events: events.len(),
            xi_build: median(|t| t.xi_build),
            factorization: median(|t| t.factorization),
            solve: median(|t| t.solve),
        });
    }
    let counts: Vec<f64> = rows.iter().map(|r| r.events as f64).collect();
    let times: Vec<f64> = rows.iter().map(|r| r.xi_build.max(1e-9)).collect();
    Ok(ScalingTable {
        features: m,
        workers: rayon::current_num_threads(),
        xi_slope: if rows.len() > 1 {
            log_log_slope(&counts, &times)
        } else {
            f64::NAN
        },
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationScaling {
    pub features: Vec<usize>,
    /// Median seconds per factorization of `γ⁻¹I + Ξ`.
    pub seconds: Vec<f64>,
    /// Log–log slope of factorization time against `M`.
    pub slope: f64,
}

/// Times the `(γ⁻¹I + Ξ)` factorization on fixed events for each feature count.
pub fn bench_factorization(
    events: &EventSequence,
    window: f64,
    features: &[usize],
    reps: usize,
    seed: u64,
) -> Result<FactorizationScaling> {
    let spec = KernelSpec::gaussian(1.0)?;
    let mut seconds = Vec::with_capacity(features.len());
    for &m in features {
        let basis = build_basis(&spec, m, seed)?;
        let xi = build_xi_window(events, &basis, window, 0.0, events.horizon());
        seconds.push(median_time(reps, || {
            let started = Instant::now();
            let factor = SystemFactor::new(&xi, 1.0)?;
            let elapsed = started.elapsed();
            std::hint::black_box(factor);
            Ok(elapsed)
        })?);
    }
    let x: Vec<f64> = features.iter().map(|&m| m as f64).collect();
    Ok(FactorizationScaling {
        slope: log_log_slope(&x, &seconds),
        features: features.to_vec(),
        seconds,
    })
}
