//! Quasi-Monte-Carlo random Fourier features for shift-invariant kernels.
//!
//! A basis of `M` features approximates `k(s, s') ≈ φ(s)ᵀφ(s')` with
//!
//! ```text
//! φ_m(s) = √(2/M) cos(ω_m s + θ_m)
//! ```
//!
//! where the first `M/2` frequencies are quantiles of the kernel's spectral
//! density (`θ = 0`) and the second half repeats them with `θ = −π/2`, so each
//! frequency contributes a `(cos, sin)` pair. All integrals of `φ` needed by
//! the estimator have closed forms and are evaluated here.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Below this magnitude `sinc` switches to its Taylor series.
const SINC_SERIES_CUTOFF: f64 = 1e-4;

/// Below this magnitude of `(ω ± ω')(b − a)/2` the pair integrator falls back
/// from the antiderivative difference to the `cos · sinc` form.
const DIFFERENCE_FORM_CUTOFF: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `k(s, s') = exp(−(β|s − s'|)²)`
    Gaussian,
}

/// A shift-invariant RKHS kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Inverse length scale (1/time).
    pub beta: f64,
}

impl KernelSpec {
    pub fn gaussian(beta: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::Gaussian,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel beta must be positive and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Exact kernel value.
    pub fn eval(&self, s: f64, s_prime: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d = self.beta * (s - s_prime);
                (-d * d).exp()
            }
        }
    }

    /// Standard deviation of the (normalized) spectral density, in rad/time.
    fn spectral_std(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => std::f64::consts::SQRT_2 * self.beta,
        }
    }
}

/// `M` Fourier frequencies and phases. Immutable once built.
///
/// Serializes to `{family, beta, M, seed, omega[], theta[]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBasis {
    family: KernelFamily,
    beta: f64,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
    omega: Vec<f64>,
    theta: Vec<f64>,
}

impl FeatureBasis {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            family: self.family,
            beta: self.beta,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `√(2/M)`
    pub fn scale(&self) -> f64 {
        (2.0 / self.m as f64).sqrt()
    }

    /// Writes `φ(s)` into `out` (length `M`).
    pub fn phi_into(&self, s: f64, out: &mut [f64]) {
        let scale = self.scale();
        for ((o, &w), &th) in out.iter_mut().zip(&self.omega).zip(&self.theta) {
            *o = scale * (w * s + th).cos();
        }
    }

    /// Adds `φ(s)` into `out` (length `M`).
    pub fn add_phi(&self, s: f64, out: &mut [f64]) {
        let scale = self.scale();
        for ((o, &w), &th) in out.iter_mut().zip(&self.omega).zip(&self.theta) {
            *o += scale * (w * s + th).cos();
        }
    }

    /// `φ(s)ᵀ v` without materializing `φ(s)`.
    pub fn dot_phi(&self, s: f64, v: &[f64]) -> f64 {
        let scale = self.scale();
        self.omega
            .iter()
            .zip(&self.theta)
            .zip(v)
            .map(|((&w, &th), &x)| (w * s + th).cos() * x)
            .sum::<f64>()
            * scale
    }

    /// The approximate kernel `φ(s)ᵀφ(s')`.
    pub fn kernel_approx(&self, s: f64, s_prime: f64) -> f64 {
        let mut a = vec![0.0; self.m];
        self.phi_into(s, &mut a);
        self.dot_phi(s_prime, &a)
    }

    /// Checks the paired layout after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()?;
        if self.m < 2 || !self.m.is_multiple_of(2) {
            return Err(Error::InvalidFeatureCount(self.m));
        }
        if self.omega.len() != self.m || self.theta.len() != self.m {
            return Err(Error::InvalidParameter(format!(
                "basis declares M = {} but has {} frequencies and {} phases",
                self.m,
                self.omega.len(),
                self.theta.len()
            )));
        }
        let half = self.m / 2;
        for k in 0..half {
            let paired =
                self.omega[k] == self.omega[k + half] && self.theta[k] == 0.0 && self.theta[k + half] == -FRAC_PI_2;
            if !paired || !self.omega[k].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "basis feature {k} breaks the (cos, sin) pairing"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let basis: Self = serde_json::from_str(text)?;
        basis.validate()?;
        Ok(basis)
    }
}

/// Builds an `M`-feature basis for `spec`.
///
/// The `M/2` base frequencies are the spectral-density quantiles of a
/// centered one-dimensional lattice `(k + ½ + δ)/(M/2)`, whose Cranley–Patterson
/// shift `δ ∈ [−¼, ¼)` is drawn from `seed`. The shift keeps every point
/// strictly inside `(0, 1)`, so no quantile is infinite.
pub fn build_basis(spec: &KernelSpec, m: usize, seed: u64) -> Result<FeatureBasis> {
    spec.validate()?;
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::InvalidFeatureCount(m));
    }
    let half = m / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: f64 = rng.random_range(-0.25..0.25);
    let spectral =
        Normal::new(0.0, spec.spectral_std()).map_err(|e| Error::InvalidParameter(format!("spectral density: {e}")))?;

    let base: Vec<f64> = (0..half)
        .map(|k| spectral.inverse_cdf((k as f64 + 0.5 + shift) / half as f64))
        .collect();
    let mut omega = base.clone();
    omega.extend_from_slice(&base);
    let mut theta = vec![0.0; half];
    theta.extend(std::iter::repeat_n(-FRAC_PI_2, half));

    Ok(FeatureBasis {
        family: spec.family,
        beta: spec.beta,
        m,
        seed,
        omega,
        theta,
    })
}

/// `φ(s) ∈ R^M`.
pub fn phi(basis: &FeatureBasis, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    basis.phi_into(s, &mut out);
    out
}

/// Unnormalized `sin(x)/x`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    } else {
        x.sin() / x
    }
}

/// `∫_lo^hi φ(u) du`, zero when `hi ≤ lo`.
///
/// Component `m` is `√(2/M)(sin(ω hi + θ) − sin(ω lo + θ))/ω`, evaluated as
/// `√(2/M)(hi − lo) cos(ω(hi + lo)/2 + θ) sinc(ω(hi − lo)/2)` which has the
/// `ω → 0` limit built in.
pub fn integral_phi_range(basis: &FeatureBasis, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = vec![0.0; basis.len()];
    add_integral_phi_range(basis, lo, hi, &mut out);
    out
}

/// Accumulating form of [`integral_phi_range`].
pub fn add_integral_phi_range(basis: &FeatureBasis, lo: f64, hi: f64, out: &mut [f64]) {
    if hi <= lo {
        return;
    }
    let len = hi - lo;
    let mid = 0.5 * (hi + lo);
    let half = 0.5 * len;
    let scale = basis.scale() * len;
    for ((o, &w), &th) in out.iter_mut().zip(&basis.omega).zip(&basis.theta) {
        *o += scale * (w * mid + th).cos() * sinc(w * half);
    }
}

/// `∫₀^L φ(u) du` with `L = max(0, min(T − t_event, A))`: the integral over
/// `[0, T]` of one event's windowed feature map `φ(s − t_event) 1{0 < s − t_event ≤ A}`.
pub fn integral_phi_window(basis: &FeatureBasis, t_event: f64, horizon: f64, window: f64) -> Vec<f64> {
    let upper = (horizon - t_event).min(window).max(0.0);
    integral_phi_range(basis, 0.0, upper)
}

/// `∫_a^b φ(t − t_n) φ(t − t_np)ᵀ dt` through the `ζ` closed form:
///
/// ```text
/// (b − a)/M [ζ(ω, ωᵀ, θ, θᵀ) + ζ(ω, −ωᵀ, θ, −θᵀ)]
/// ζ(ω, ω', θ, θ') = cos[(b + a)(ω + ω')/2 + θ + θ' − ω t_n − ω' t_np] sinc[(b − a)(ω + ω')/2]
/// ```
///
/// This is the reference implementation; `Ξ` assembly uses [`OuterIntegrator`].
pub fn integral_phi_outer(basis: &FeatureBasis, t_n: f64, t_np: f64, a: f64, b: f64) -> Result<DMatrix<f64>> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidInterval { a, b });
    }
    let m = basis.len();
    let mut out = DMatrix::zeros(m, m);
    if a == b {
        return Ok(out);
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    // Shifts are applied before multiplying by ω to keep phases small for large t.
    let (dn, dnp) = (mid - t_n, mid - t_np);
    let factor = (b - a) / m as f64;
    for r in 0..m {
        let (p, tp) = (basis.omega[r], basis.theta[r]);
        for c in 0..m {
            let (q, tq) = (basis.omega[c], basis.theta[c]);
            let zeta_sum = (p * dn + q * dnp + tp + tq).cos() * sinc(half * (p + q));
            let zeta_diff = (p * dn - q * dnp + tp - tq).cos() * sinc(half * (p - q));
            out[(r, c)] = factor * (zeta_sum + zeta_diff);
        }
    }
    Ok(out)
}

/// Fast evaluator of `∫_a^b φ(t − t_n) φ(t − t_np)ᵀ dt` for many event pairs.
///
/// Each entry is `(1/M)[S(ω+ω') + S(ω−ω')]` where `S(α)` is the difference of
/// the antiderivative `sin(αt + β)/α` at `b` and `a`. Expanding the sines of
/// sums reduces an `M × M` block to `O(M)` trigonometric calls and a
/// branch-free inner loop. Entries whose argument `|α|(b − a)/2` falls below
/// a cutoff are then recomputed in the `cos · sinc` form; frequencies are
/// presorted by `|ω ± ω'|` so only those entries are visited.
pub(crate) struct OuterIntegrator<'a> {
    basis: &'a FeatureBasis,
    // 1/(M(ω_r ± ω_c)), column-major, zero where the frequency vanishes
    inv_sum: Vec<f64>,
    inv_diff: Vec<f64>,
    // (|ω_r + ω_c|, r, c) and (|ω_r − ω_c|, r, c), ascending
    small_sum: Vec<(f64, usize, usize)>,
    small_diff: Vec<(f64, usize, usize)>,
    // sin/cos of ω(b − t) + θ and ω(a − t) + θ for the row and column events
    row: [Vec<f64>; 4],
    col: [Vec<f64>; 4],
}

impl<'a> OuterIntegrator<'a> {
    pub(crate) fn new(basis: &'a FeatureBasis) -> Self {
        let m = basis.len();
        let inv_m = 1.0 / m as f64;
        let mut inv_sum = vec![0.0; m * m];
        let mut inv_diff = vec![0.0; m * m];
        let mut small_sum = Vec::with_capacity(m * m);
        let mut small_diff = Vec::with_capacity(m * m);
        for c in 0..m {
            for r in 0..m {
                let (p, q) = (basis.omega[r], basis.omega[c]);
                let (sum, diff) = (p + q, p - q);
                inv_sum[c * m + r] = if sum == 0.0 { 0.0 } else { inv_m / sum };
                inv_diff[c * m + r] = if diff == 0.0 { 0.0 } else { inv_m / diff };
                small_sum.push((sum.abs(), r, c));
                small_diff.push((diff.abs(), r, c));
            }
        }
        small_sum.sort_by(|x, y| x.0.total_cmp(&y.0));
        small_diff.sort_by(|x, y| x.0.total_cmp(&y.0));
        let z = || vec![0.0; m];
        Self {
            basis,
            inv_sum,
            inv_diff,
            small_sum,
            small_diff,
            row: [z(), z(), z(), z()],
            col: [z(), z(), z(), z()],
        }
    }

    fn fill_trig(basis: &FeatureBasis, t: f64, a: f64, b: f64, out: &mut [Vec<f64>; 4]) {
        let [sb, cb, sa, ca] = out;
        for (k, (&w, &th)) in basis.omega.iter().zip(&basis.theta).enumerate() {
            let (s1, c1) = (w * (b - t) + th).sin_cos();
            let (s0, c0) = (w * (a - t) + th).sin_cos();
            sb[k] = s1;
            cb[k] = c1;
            sa[k] = s0;
            ca[k] = c0;
        }
    }

    /// `(b − a) cos(α · mid + β) sinc(α (b − a)/2)`, the `S(α)` term in product form.
    fn product_term(half: f64, phase: f64, alpha: f64) -> f64 {
        2.0 * half * phase.cos() * sinc(half * alpha)
    }

    /// Writes the column-major `M × M` integral into `out`: entry `(r, c)` at
    /// `c * M + r` pairs feature `r` of event `n` with feature `c` of event `n'`.
    /// Requires `a < b`.
    pub(crate) fn compute(&mut self, t_n: f64, t_np: f64, a: f64, b: f64, out: &mut [f64]) {
        let basis = self.basis;
        let m = basis.len();
        debug_assert!(a < b && out.len() == m * m);
        Self::fill_trig(basis, t_n, a, b, &mut self.row);
        Self::fill_trig(basis, t_np, a, b, &mut self.col);
        let [rsb, rcb, rsa, rca] = &self.row;
        let [csb, ccb, csa, cca] = &self.col;

        for c in 0..m {
            let (sb, cb, sa, ca) = (csb[c], ccb[c], csa[c], cca[c]);
            let col_out = &mut out[c * m..(c + 1) * m];
            let inv_sum = &self.inv_sum[c * m..(c + 1) * m];
            let inv_diff = &self.inv_diff[c * m..(c + 1) * m];
            for r in 0..m {
                // sin(x ± y) = sin x cos y ± cos x sin y at both limits
                let s_part = rsb[r] * cb - rsa[r] * ca;
                let c_part = rcb[r] * sb - rca[r] * sa;
                col_out[r] = (s_part + c_part) * inv_sum[r] + (s_part - c_part) * inv_diff[r];
            }
        }

        let half = 0.5 * (b - a);
        let cutoff = DIFFERENCE_FORM_CUTOFF / half;
        let inv_m = 1.0 / m as f64;
        let (dn, dnp) = (0.5 * (a + b) - t_n, 0.5 * (a + b) - t_np);
        let omega = &basis.omega;
        let theta = &basis.theta;
        let entry = |r: usize, c: usize| {
            let (p, q, tp, tq) = (omega[r], omega[c], theta[r], theta[c]);
            let (sum, diff) = (p + q, p - q);
            let t_sum = if sum.abs() > cutoff {
                let upper = rsb[r] * ccb[c] + rcb[r] * csb[c];
                let lower = rsa[r] * cca[c] + rca[r] * csa[c];
                (upper - lower) / sum
            } else {
                Self::product_term(half, p * dn + q * dnp + tp + tq, sum)
            };
            let t_diff = if diff.abs() > cutoff {
                let upper = rsb[r] * ccb[c] - rcb[r] * csb[c];
                let lower = rsa[r] * cca[c] - rca[r] * csa[c];
                (upper - lower) / diff
            } else {
                Self::product_term(half, p * dn - q * dnp + tp - tq, diff)
            };
            inv_m * (t_sum + t_diff)
        };
        for list in [&self.small_sum, &self.small_diff] {
            for &(_, r, c) in list.iter().take_while(|e| e.0 <= cutoff) {
                out[c * m + r] = entry(r, c);
            }
        }
    }
}

/// Per-event window integrals `v_n = ∫₀^{min(T − t_n, A)} φ(u) du`.
#[derive(Clone, Debug)]
pub struct WindowIntegralTable {
    m: usize,
    data: Vec<f64>,
}

impl WindowIntegralTable {
    pub fn new(basis: &FeatureBasis, times: &[f64], horizon: f64, window: f64) -> Self {
        let m = basis.len();
        let mut data = vec![0.0; m * times.len()];
        for (chunk, &t) in data.chunks_exact_mut(m).zip(times) {
            let upper = (horizon - t).min(window).max(0.0);
            add_integral_phi_range(basis, 0.0, upper, chunk);
        }
        Self { m, data }
    }

    pub fn get(&self, n: usize) -> &[f64] {
        &self.data[n * self.m..(n + 1) * self.m]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.m.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
