//! Closed-form penalized least-squares estimator.
//!
//! With `φ̃(s) ∈ R^{MU}` stacking the windowed feature maps of past events per
//! dimension, the penalized least-squares objective is quadratic in the
//! baselines `μ_i` and the coefficient vectors `c_i` (where `ĝ_ij(s) = φ(s)ᵀ[c_i]_j`):
//!
//! ```text
//! Σ_i [ T μ_i² + 2 μ_i c_iᵀF + c_iᵀ Ξ c_i − 2 |N_i| μ_i − 2 c_iᵀ S_i + γ⁻¹ ‖c_i‖² ]
//! F   = ∫₀^T φ̃(t) dt
//! S_i = Σ_{n ∈ N_i} φ̃(t_n)
//! Ξ   = ∫₀^T φ̃(t) φ̃(t)ᵀ dt
//! ```
//!
//! One Cholesky factorization of `γ⁻¹I + Ξ` serves all `U + 1` right-hand sides.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::features::{add_integral_phi_range, FeatureBasis, OuterIntegrator, WindowIntegralTable};

/// Upper bound on memory held by per-worker `Ξ` accumulators.
const XI_ACCUMULATOR_BUDGET_BYTES: usize = 256 << 20;
const XI_MAX_ACCUMULATORS: usize = 16;
const XI_MIN_EVENTS_PER_ACCUMULATOR: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    /// Regularization `γ`; the RKHS penalty is weighted by `1/γ`.
    pub gamma: f64,
    /// Support window `A` of the triggering kernels.
    pub window: f64,
    pub basis: FeatureBasis,
    /// Clip predicted intensities at zero.
    pub clip_intensity: bool,
}

impl FitConfig {
    pub fn new(gamma: f64, window: f64, basis: FeatureBasis) -> Self {
        Self {
            gamma,
            window,
            basis,
            clip_intensity: true,
        }
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        validate_gamma(self.gamma)?;
        validate_window(self.window, horizon)
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn validate_window(window: f64, horizon: f64) -> Result<()> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "window A must be positive, got {window}"
        )));
    }
    if window > horizon {
        return Err(Error::InvalidParameter(format!(
            "window A = {window} exceeds the horizon T = {horizon}"
        )));
    }
    Ok(())
}

/// Adds `φ̃(s)` into `out` (length `MU`).
pub(crate) fn add_phi_tilde(events: &EventSequence, basis: &FeatureBasis, window: f64, s: f64, out: &mut [f64]) {
    let m = basis.len();
    let times = events.times();
    // 0 < s − t_n ≤ A  ⇔  s − A ≤ t_n < s
    let start = events.lower_bound(s - window);
    let end = events.lower_bound(s);
    for n in start..end {
        let u = events.marks()[n];
        basis.add_phi(s - times[n], &mut out[u * m..(u + 1) * m]);
    }
}

/// `φ̃(s)`: block `i` sums `φ(s − t_n)` over dimension-`i` events with `0 < s − t_n ≤ A`.
pub fn phi_tilde(events: &EventSequence, basis: &FeatureBasis, window: f64, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis.len() * events.dims()];
    add_phi_tilde(events, basis, window, s, &mut out);
    out
}

/// `∫_{t0}^{t1} φ̃(t) dt`, using the whole event history.
pub fn integral_phi_tilde(events: &EventSequence, basis: &FeatureBasis, window: f64, t0: f64, t1: f64) -> Vec<f64> {
    let m = basis.len();
    let mut out = vec![0.0; m * events.dims()];
    let times = events.times();
    let start = times.partition_point(|&x| x <= t0 - window);
    let end = events.lower_bound(t1);
    for n in start..end {
        let (t, u) = (times[n], events.marks()[n]);
        let lo = t0.max(t) - t;
        let hi = t1.min(t + window) - t;
        add_integral_phi_range(basis, lo, hi, &mut out[u * m..(u + 1) * m]);
    }
    out
}

/// The Gram matrix `Ξ = ∫ φ̃ φ̃ᵀ dt`, stored densely as `U × U` blocks of size `M × M`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiMatrix {
    matrix: DMatrix<f64>,
    dims: usize,
    m: usize,
}

impl XiMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn features(&self) -> usize {
        self.m
    }

    /// Block `Ξ_ij`.
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        let m = self.m;
        self.matrix.view((i * m, j * m), (m, m))
    }
}

/// Builds `Ξ` over `[0, T]`.
pub fn build_xi(events: &EventSequence, basis: &FeatureBasis, window: f64) -> XiMatrix {
    build_xi_window(events, basis, window, 0.0, events.horizon())
}

/// Builds `∫_{t0}^{t1} φ̃(t) φ̃(t)ᵀ dt`.
///
/// Only event pairs closer than `A` are visited. Each unordered pair
/// `(n, n')` with `t_n ≤ t_n'` adds its integral once, to block
/// `(u_n, u_n')`; the transposed contribution of `(n', n)` comes from
/// symmetrizing the accumulator at the end. Events are split into a number of
/// contiguous chunks that depends only on the problem size, and the per-chunk
/// accumulators are summed in chunk order, so the result does not depend on
/// the worker count.
pub fn build_xi_window(events: &EventSequence, basis: &FeatureBasis, window: f64, t0: f64, t1: f64) -> XiMatrix {
    let m = basis.len();
    let dims = events.dims();
    let size = m * dims;
    let times = events.times();
    let start = times.partition_point(|&x| x <= t0 - window);
    let end = events.lower_bound(t1);
    let active = end.saturating_sub(start);

    let bytes_per_acc = size * size * std::mem::size_of::<f64>();
    let chunks = (active.div_ceil(XI_MIN_EVENTS_PER_ACCUMULATOR))
        .min(XI_MAX_ACCUMULATORS)
        .min((XI_ACCUMULATOR_BUDGET_BYTES / bytes_per_acc.max(1)).max(1))
        .max(1);
    let per_chunk = active.div_ceil(chunks).max(1);

    let accumulate = |range: std::ops::Range<usize>| -> DMatrix<f64> {
        let mut acc = DMatrix::<f64>::zeros(size, size);
        let mut integrator = OuterIntegrator::new(basis);
        let mut pair = vec![0.0; m * m];
        let marks = events.marks();
        for n in range {
            let (tn, i) = (times[n], marks[n]);
            let b = t1.min(tn + window);
            for np in n..end {
                let tnp = times[np];
                if tnp - tn >= window {
                    break;
                }
                let a = t0.max(tnp);
                if a >= b {
                    continue;
                }
                integrator.compute(tn, tnp, a, b, &mut pair);
                let j = marks[np];
                add_pair(&mut acc, &pair, m, i, j, n == np);
            }
        }
        acc
    };

    let ranges: Vec<_> = (0..chunks)
        .map(|k| {
            let lo = start + k * per_chunk;
            lo.min(end)..(lo + per_chunk).min(end)
        })
        .collect();
    let partials: Vec<DMatrix<f64>> = if chunks == 1 {
        ranges.into_iter().map(accumulate).collect()
    } else {
        ranges.into_par_iter().map(accumulate).collect()
    };
    let mut acc = DMatrix::<f64>::zeros(size, size);
    for p in &partials {
        acc += p;
    }
    let full = &acc + acc.transpose();
    XiMatrix { matrix: full, dims, m }
}

/// Adds a column-major pair integral `P = ∫ φ(t − t_n) φ(t − t_n')ᵀ dt`
/// into block `(i, j)`; half of it when `n = n'`, since the final
/// symmetrization counts it twice.
fn add_pair(acc: &mut DMatrix<f64>, pair: &[f64], m: usize, i: usize, j: usize, same_event: bool) {
    let size = acc.nrows();
    let data = acc.as_mut_slice();
    let weight = if same_event { 0.5 } else { 1.0 };
    for c in 0..m {
        let start = (j * m + c) * size + i * m;
        for (d, &p) in data[start..start + m].iter_mut().zip(&pair[c * m..(c + 1) * m]) {
            *d += weight * p;
        }
    }
}

/// Cholesky factorization of `γ⁻¹I + Ξ`.
#[derive(Clone, Debug)]
pub struct SystemFactor {
    chol: Cholesky<f64, Dyn>,
    gamma: f64,
    condition_estimate: f64,
}

impl SystemFactor {
    pub fn new(xi: &XiMatrix, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        let mut system = xi.matrix.clone();
        for k in 0..system.nrows() {
            system[(k, k)] += 1.0 / gamma;
        }
        let diag = system.diagonal();
        let (diag_min, diag_max) = (diag.min(), diag.max());
        let chol = Cholesky::new(system).ok_or(Error::Factorization {
            gamma,
            diag_min,
            diag_max,
        })?;
        let l = chol.l_dirty().diagonal();
        let (lmin, lmax) = (l.min(), l.max());
        if !(lmin > 0.0 && lmin.is_finite() && lmax.is_finite()) {
            return Err(Error::Factorization {
                gamma,
                diag_min,
                diag_max,
            });
        }
        Ok(Self {
            chol,
            gamma,
            condition_estimate: (lmax / lmin).powi(2),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Cheap condition estimate `(max L_kk / min L_kk)²` from the Cholesky factor.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
    }

    pub fn solve_columns(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// Wall-clock time per fit phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTimings {
    pub xi_build: Duration,
    pub statistics: Duration,
    pub factorization: Duration,
    pub solve: Duration,
}

impl FitTimings {
    pub fn total(&self) -> Duration {
        self.xi_build + self.statistics + self.factorization + self.solve
    }
}

/// Everything the fit needs that does not depend on `γ`: `Ξ`, `F` and the `S_i`.
#[derive(Clone, Debug)]
pub struct Design {
    basis: FeatureBasis,
    window: f64,
    horizon: f64,
    counts: Vec<usize>,
    xi: XiMatrix,
    integral: Vec<f64>,
    event_sums: Vec<Vec<f64>>,
    timings: FitTimings,
}

impl Design {
    pub fn new(events: &EventSequence, basis: &FeatureBasis, window: f64) -> Result<Self> {
        validate_window(window, events.horizon())?;
        if events.is_empty() {
            return Err(Error::InvalidEvents("cannot fit without any events".into()));
        }
        let started = Instant::now();
        let xi = build_xi(events, basis, window);
        let xi_build = started.elapsed();

        let started = Instant::now();
        let m = basis.len();
        let dims = events.dims();
        let table = WindowIntegralTable::new(basis, events.times(), events.horizon(), window);
        let mut integral = vec![0.0; m * dims];
        for (n, &u) in events.marks().iter().enumerate() {
            for (acc, &v) in integral[u * m..(u + 1) * m].iter_mut().zip(table.get(n)) {
                *acc += v;
            }
        }
        let mut event_sums = vec![vec![0.0; m * dims]; dims];
        for (&t, &i) in events.times().iter().zip(events.marks()) {
            add_phi_tilde(events, basis, window, t, &mut event_sums[i]);
        }
        let statistics = started.elapsed();

        Ok(Self {
            basis: basis.clone(),
            window,
            horizon: events.horizon(),
            counts: events.counts(),
            xi,
            integral,
            event_sums,
            timings: FitTimings {
                xi_build,
                statistics,
                ..Default::default()
            },
        })
    }

    pub fn xi(&self) -> &XiMatrix {
        &self.xi
    }

    /// `F = ∫₀^T φ̃(t) dt`
    pub fn integral(&self) -> &[f64] {
        &self.integral
    }

    /// `S_i = Σ_{n ∈ N_i} φ̃(t_n)`
    pub fn event_sum(&self, i: usize) -> &[f64] {
        &self.event_sums[i]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Solves for `(μ̂, c)` at regularization `γ`.
    pub fn fit(&self, gamma: f64, clip_intensity: bool) -> Result<FittedModel> {
        let started = Instant::now();
        let factor = SystemFactor::new(&self.xi, gamma)?;
        let factorization = started.elapsed();

        let started = Instant::now();
        let dims = self.counts.len();
        let size = self.integral.len();
        let mut rhs = DMatrix::<f64>::zeros(size, dims + 1);
        rhs.column_mut(0).copy_from_slice(&self.integral);
        for (i, s) in self.event_sums.iter().enumerate() {
            rhs.column_mut(i + 1).copy_from_slice(s);
        }
        let sol = factor.solve_columns(&rhs);
        let f = DVector::from_column_slice(&self.integral);
        let b0 = sol.column(0);
        let denominator = self.horizon - f.dot(&b0);
        if !(denominator > 0.0 && denominator.is_finite()) {
            return Err(Error::DegenerateDesign(denominator));
        }
        let mut mu_hat = Vec::with_capacity(dims);
        let mut coeff = Vec::with_capacity(dims);
        for i in 0..dims {
            let bi = sol.column(i + 1);
            let mu = (self.counts[i] as f64 - f.dot(&bi)) / denominator;
            let c: Vec<f64> = bi.iter().zip(b0.iter()).map(|(&x, &y)| x - mu * y).collect();
            mu_hat.push(mu);
            coeff.push(c);
        }
        let solve = started.elapsed();

        let mut model =
            FittedModel::from_coefficients(self.basis.clone(), self.window, self.horizon, gamma, mu_hat, coeff)?;
        model.clip_intensity = clip_intensity;
        model.condition_estimate = Some(factor.condition_estimate());
        model.timings = FitTimings {
            factorization,
            solve,
            ..self.timings
        };
        Ok(model)
    }
}

/// Fits `(μ̂, ĝ)` in closed form.
pub fn fit(events: &EventSequence, config: &FitConfig) -> Result<FittedModel> {
    config.validate(events.horizon())?;
    Design::new(events, &config.basis, config.window)?.fit(config.gamma, config.clip_intensity)
}

/// Estimated baselines and kernel coefficients.
///
/// Serializes to `{U, M, T, A, gamma, basis_ref, mu_hat[], coeff[][], ...}`.
/// `mu_hat` is the raw estimate (it may be negative); `mu_hat_clipped` is
/// `max(μ̂, 0)`. Timings are kept in memory only so that model files are
/// reproducible byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedModel {
    #[serde(rename = "U")]
    dims: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(rename = "A")]
    window: f64,
    gamma: f64,
    #[serde(rename = "basis_ref")]
    basis: FeatureBasis,
    mu_hat: Vec<f64>,
    mu_hat_clipped: Vec<f64>,
    coeff: Vec<Vec<f64>>,
    clip_intensity: bool,
    /// `None` for models not produced by a fit.
    condition_estimate: Option<f64>,
    #[serde(skip)]
    timings: FitTimings,
}

impl FittedModel {
    /// Wraps given baselines and coefficients; `coeff[i]` has length `MU`.
    pub fn from_coefficients(
        basis: FeatureBasis,
        window: f64,
        horizon: f64,
        gamma: f64,
        mu_hat: Vec<f64>,
        coeff: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dims = mu_hat.len();
        let m = basis.len();
        let model = Self {
            dims,
            m,
            horizon,
            window,
            gamma,
            mu_hat_clipped: mu_hat.iter().map(|&x| x.max(0.0)).collect(),
            basis,
            mu_hat,
            coeff,
            clip_intensity: true,
            condition_estimate: None,
            timings: FitTimings::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// A model with every coefficient and baseline zero.
    pub fn zero(basis: FeatureBasis, dims: usize, window: f64, horizon: f64) -> Result<Self> {
        let size = basis.len() * dims;
        Self::from_coefficients(
            basis,
            window,
            horizon,
            1.0,
            vec![0.0; dims],
            vec![vec![0.0; size]; dims],
        )
    }

    fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        let size = self.m * self.dims;
        if self.dims == 0 || self.m != self.basis.len() {
            return Err(Error::InvalidParameter("model dimensions are inconsistent".into()));
        }
        if self.coeff.len() != self.dims || self.coeff.iter().any(|c| c.len() != size) {
            return Err(Error::InvalidParameter(format!(
                "model needs {} coefficient vectors of length {size}",
                self.dims
            )));
        }
        if self.mu_hat_clipped.len() != self.dims {
            return Err(Error::InvalidParameter("mu_hat_clipped has the wrong length".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    pub fn mu_hat_clipped(&self) -> &[f64] {
        &self.mu_hat_clipped
    }

    /// `c_i ∈ R^{MU}`.
    pub fn coeff(&self, i: usize) -> &[f64] {
        &self.coeff[i]
    }

    pub fn clip_intensity(&self) -> bool {
        self.clip_intensity
    }

    pub fn set_clip_intensity(&mut self, clip: bool) {
        self.clip_intensity = clip;
    }

    pub fn condition_estimate(&self) -> Option<f64> {
        self.condition_estimate
    }

    pub fn timings(&self) -> &FitTimings {
        &self.timings
    }

    /// `ĝ_ij(s) = φ(s)ᵀ [c_i]_j`. Values outside `[0, A]` are extrapolation.
    pub fn g(&self, i: usize, j: usize, s: f64) -> f64 {
        let m = self.m;
        self.basis.dot_phi(s, &self.coeff[i][j * m..(j + 1) * m])
    }

    /// `μ̂_i + φ̃(t)ᵀ c_i`, without clipping.
    pub fn linear_intensity(&self, events: &EventSequence, i: usize, t: f64) -> f64 {
        let times = events.times();
        let start = events.lower_bound(t - self.window);
        let end = events.lower_bound(t);
        self.mu_hat[i]
            + (start..end)
                .map(|n| self.g(i, events.marks()[n], t - times[n]))
                .sum::<f64>()
    }

    /// Predicted intensity of dimension `i` at `t`, clipped at zero when configured.
    pub fn intensity(&self, events: &EventSequence, i: usize, t: f64) -> f64 {
        let value = self.linear_intensity(events, i, t);
        if self.clip_intensity {
            value.max(0.0)
        } else {
            value
        }
    }
}

/// `ĝ_ij(s)`.
pub fn evaluate_g(model: &FittedModel, i: usize, j: usize, s: f64) -> f64 {
    model.g(i, j, s)
}

/// `λ̂_i(t)`.
pub fn intensity(model: &FittedModel, events: &EventSequence, i: usize, t: f64) -> f64 {
    model.intensity(events, i, t)
}

/// Equivalent kernels `h_j(s, s') = φ(s)ᵀ [(γ⁻¹I + Ξ)⁻¹ φ̃(s')]_j` for a fixed
/// event sequence. These solve the coupled Fredholm equations whose solution
/// expands `ĝ` with unit dual coefficients.
pub struct EquivalentKernels<'a> {
    events: &'a EventSequence,
    basis: &'a FeatureBasis,
    window: f64,
    factor: SystemFactor,
}

impl<'a> EquivalentKernels<'a> {
    pub fn new(events: &'a EventSequence, basis: &'a FeatureBasis, gamma: f64, window: f64) -> Result<Self> {
        validate_window(window, events.horizon())?;
        let xi = build_xi(events, basis, window);
        let factor = SystemFactor::new(&xi, gamma)?;
        Ok(Self {
            events,
            basis,
            window,
            factor,
        })
    }

    pub fn factor(&self) -> &SystemFactor {
        &self.factor
    }

    /// `(γ⁻¹I + Ξ)⁻¹ φ̃(s')`
    pub fn dual_vector(&self, s_prime: f64) -> Vec<f64> {
        self.factor
            .solve(&phi_tilde(self.events, self.basis, self.window, s_prime))
    }

    pub fn h(&self, j: usize, s: f64, s_prime: f64) -> f64 {
        let m = self.basis.len();
        let v = self.dual_vector(s_prime);
        self.basis.dot_phi(s, &v[j * m..(j + 1) * m])
    }

    /// `h_j(s, ·)` at many `s` for one `s'`.
    pub fn h_many(&self, j: usize, s: &[f64], s_prime: f64) -> Vec<f64> {
        let m = self.basis.len();
        let v = self.dual_vector(s_prime);
        s.iter()
            .map(|&x| self.basis.dot_phi(x, &v[j * m..(j + 1) * m]))
            .collect()
    }
}

/// One-shot evaluation of `h_j(s, s')`. Refactorizes on every call; reuse
/// [`EquivalentKernels`] for repeated evaluation.
pub fn evaluate_h(
    events: &EventSequence,
    basis: &FeatureBasis,
    gamma: f64,
    window: f64,
    j: usize,
    s: f64,
    s_prime: f64,
) -> Result<f64> {
    Ok(EquivalentKernels::new(events, basis, gamma, window)?.h(j, s, s_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_basis, integral_phi_outer, phi, KernelSpec};
    use crate::quad::adaptive_gauss_kronrod;

    fn basis(m: usize) -> FeatureBasis {
        build_basis(&KernelSpec::gaussian(1.0).unwrap(), m, 11).unwrap()
    }

    fn naive_phi_tilde(ev: &EventSequence, b: &FeatureBasis, window: f64, s: f64) -> Vec<f64> {
        let m = b.len();
        let mut out = vec![0.0; m * ev.dims()];
        for (&t, &u) in ev.times().iter().zip(ev.marks()) {
            let lag = s - t;
            if lag > 0.0 && lag <= window {
                for (k, v) in phi(b, lag).into_iter().enumerate() {
                    out[u * m + k] += v;
                }
            }
        }
        out
    }

    #[test]
    fn phi_tilde_cases() {
        let b = basis(8);
        let ev = EventSequence::new(vec![1.0], vec![0], 10.0, 2).unwrap();
        assert!(phi_tilde(&ev, &b, 5.0, 0.5).iter().all(|&x| x == 0.0));
        assert!(phi_tilde(&ev, &b, 5.0, 1.0).iter().all(|&x| x == 0.0));
        let v = phi_tilde(&ev, &b, 5.0, 2.0);
        assert_eq!(&v[..8], phi(&b, 1.0).as_slice());
        assert!(v[8..].iter().all(|&x| x == 0.0));
        // lag exactly A is inside the window
        assert_eq!(&phi_tilde(&ev, &b, 5.0, 6.0)[..8], phi(&b, 5.0).as_slice());

        let ev = EventSequence::new(vec![0.5, 1.2, 2.0, 2.7, 6.1], vec![1, 0, 1, 1, 0], 9.0, 2).unwrap();
        for s in [0.7, 2.0, 3.3, 6.5, 7.0, 8.9] {
            assert_eq!(phi_tilde(&ev, &b, 2.5, s), naive_phi_tilde(&ev, &b, 2.5, s));
        }
    }

    #[test]
    fn xi_of_no_events_is_zero() {
        let ev = EventSequence::empty(10.0, 2).unwrap();
        let xi = build_xi(&ev, &basis(4), 5.0);
        assert_eq!(xi.matrix().nrows(), 8);
        assert!(xi.matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn xi_single_event_matches_quadrature() {
        let b = basis(8);
        let ev = EventSequence::new(vec![1.0], vec![0], 10.0, 1).unwrap();
        let xi = build_xi(&ev, &b, 5.0);
        for r in 0..8 {
            for c in 0..8 {
                let q = adaptive_gauss_kronrod(|t| phi(&b, t - 1.0)[r] * phi(&b, t - 1.0)[c], 1.0, 6.0, 1e-14);
                assert!((xi.matrix()[(r, c)] - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn xi_is_symmetric_and_matches_naive_pair_sum() {
        let b = basis(6);
        let ev = EventSequence::new(
            vec![0.2, 0.9, 1.5, 3.1, 3.3, 7.9, 8.5],
            vec![0, 2, 1, 0, 2, 1, 1],
            9.0,
            3,
        )
        .unwrap();
        let window = 2.0;
        let xi = build_xi(&ev, &b, window);
        let m = 6;
        let mut naive = DMatrix::<f64>::zeros(18, 18);
        for (n, (&tn, &i)) in ev.times().iter().zip(ev.marks()).enumerate() {
            for (np, (&tnp, &j)) in ev.times().iter().zip(ev.marks()).enumerate() {
                let _ = (n, np);
                let a = tn.max(tnp);
                let bb = 9.0f64.min(window + tn).min(window + tnp);
                if a < bb {
                    let p = integral_phi_outer(&b, tn, tnp, a, bb).unwrap();
                    let mut view = naive.view_mut((i * m, j * m), (m, m));
                    view += &p;
                }
            }
        }
        let diff = (xi.matrix() - &naive).amax();
        assert!(diff < 1e-12 * naive.amax(), "{diff}");
        assert_eq!(xi.matrix(), &xi.matrix().transpose());
    }

    #[test]
    fn empty_dimension_has_zero_estimates() {
        let b = basis(8);
        let ev = EventSequence::new(vec![0.5, 1.0, 2.5, 4.0, 4.2], vec![0, 0, 0, 0, 0], 6.0, 2).unwrap();
        let model = fit(&ev, &FitConfig::new(1.0, 2.0, b)).unwrap();
        assert_eq!(model.mu_hat()[1], 0.0);
        assert!(model.coeff(1).iter().all(|&x| x == 0.0));
        for s in [0.0, 0.7, 1.9] {
            assert_eq!(model.g(1, 0, s), 0.0);
            assert_eq!(model.g(1, 1, s), 0.0);
        }
    }

    #[test]
    fn tiny_gamma_shrinks_kernels_and_gives_empirical_rate() {
        let b = basis(8);
        let ev = EventSequence::new(vec![0.5, 1.0, 2.5, 4.0, 4.2, 7.5], vec![0, 1, 0, 0, 1, 0], 10.0, 2).unwrap();
        let model = fit(&ev, &FitConfig::new(1e-9, 5.0, b)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..=50 {
                    assert!(model.g(i, j, 0.1 * k as f64).abs() <= 1e-4);
                }
            }
        }
        assert!((model.mu_hat()[0] - 0.4).abs() < 1e-6);
        assert!((model.mu_hat()[1] - 0.2).abs() < 1e-6);

        let h = EquivalentKernels::new(&ev, model.basis(), 1e-9, 5.0).unwrap();
        assert!(h.h(0, 1.0, 4.5).abs() < 1e-7);
    }

    #[test]
    fn rejects_invalid_configs() {
        let b = basis(4);
        let ev = EventSequence::new(vec![0.5], vec![0], 10.0, 1).unwrap();
        assert!(fit(&ev, &FitConfig::new(0.0, 5.0, b.clone())).is_err());
        assert!(fit(&ev, &FitConfig::new(1.0, -1.0, b.clone())).is_err());
        assert!(fit(&ev, &FitConfig::new(1.0, 11.0, b.clone())).is_err());
        let empty = EventSequence::empty(10.0, 1).unwrap();
        assert!(fit(&empty, &FitConfig::new(1.0, 5.0, b)).is_err());
    }

    #[test]
    fn zero_model_and_intensity() {
        let b = basis(4);
        let ev = EventSequence::new(vec![0.5, 1.5], vec![0, 1], 10.0, 2).unwrap();
        let zero = FittedModel::zero(b, 2, 5.0, 10.0).unwrap();
        for t in [0.0, 1.0, 3.0] {
            assert_eq!(zero.g(0, 1, t), 0.0);
            assert_eq!(zero.intensity(&ev, 1, t), 0.0);
        }
    }

    #[test]
    fn intensity_matches_double_loop_and_clips() {
        let b = basis(8);
        let ev = EventSequence::new(vec![0.5, 1.0, 2.5, 4.0, 4.2, 7.5], vec![0, 1, 0, 0, 1, 0], 10.0, 2).unwrap();
        let mut model = fit(&ev, &FitConfig::new(1.0, 3.0, b)).unwrap();
        model.set_clip_intensity(false);
        for t in [0.2, 1.3, 4.1, 5.0, 9.9] {
            for i in 0..2 {
                let mut naive = model.mu_hat()[i];
                for (&tn, &u) in ev.times().iter().zip(ev.marks()) {
                    if t - tn > 0.0 && t - tn <= 3.0 {
                        naive += model.g(i, u, t - tn);
                    }
                }
                assert!((model.intensity(&ev, i, t) - naive).abs() < 1e-13);
            }
        }
        // before the first event only the baseline remains
        assert_eq!(model.intensity(&ev, 0, 0.1), model.mu_hat()[0]);

        let negative = FittedModel::from_coefficients(
            model.basis().clone(),
            3.0,
            10.0,
            1.0,
            vec![-0.5, 0.2],
            vec![vec![0.0; 16]; 2],
        )
        .unwrap();
        assert_eq!(negative.intensity(&ev, 0, 0.1), 0.0);
    }

    #[test]
    fn model_json_round_trip() {
        let b = basis(4);
        let ev = EventSequence::new(vec![0.5, 1.0, 2.5], vec![0, 1, 0], 10.0, 2).unwrap();
        let model = fit(&ev, &FitConfig::new(0.5, 3.0, b)).unwrap();
        let text = model.to_json().unwrap();
        for key in [
            "\"U\"",
            "\"M\"",
            "\"T\"",
            "\"A\"",
            "\"gamma\"",
            "\"basis_ref\"",
            "\"mu_hat\"",
            "\"coeff\"",
        ] {
            assert!(text.contains(key), "missing {key}");
        }
        let back = FittedModel::from_json(&text).unwrap();
        assert_eq!(back.mu_hat(), model.mu_hat());
        assert_eq!(back.coeff(1), model.coeff(1));
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn xi_is_independent_of_worker_count() {
        let b = basis(10);
        let times: Vec<f64> = (0..400)
            .map(|k| 0.37 * k as f64 + 0.01 * ((k * 7) % 5) as f64)
            .collect();
        let marks: Vec<usize> = (0..400).map(|k| (k * 5) % 3).collect();
        let ev = EventSequence::new(times, marks, 160.0, 3).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| build_xi(&ev, &b, 2.0));
        let c = four.install(|| build_xi(&ev, &b, 2.0));
        assert_eq!(a, c);
    }
}
