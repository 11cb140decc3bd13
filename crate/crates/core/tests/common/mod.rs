//! Independent numerical oracles shared by the integration tests.
//!
//! Feature maps are re-evaluated from the raw frequencies and phases, and
//! every integral is taken by quadrature rather than closed form.

#![allow(dead_code)]

use hawkes_rkhs::{build_basis, EventSequence, FeatureBasis, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn basis(beta: f64, m: usize, seed: u64) -> FeatureBasis {
    build_basis(&KernelSpec::gaussian(beta).unwrap(), m, seed).unwrap()
}

/// `φ(s)` from `√(2/M) cos(ω s + θ)`.
pub fn phi(basis: &FeatureBasis, s: f64) -> Vec<f64> {
    let scale = (2.0 / basis.len() as f64).sqrt();
    basis
        .omega()
        .iter()
        .zip(basis.theta())
        .map(|(w, th)| scale * (w * s + th).cos())
        .collect()
}

/// `φ̃(s)` by direct summation over all events.
pub fn phi_tilde(events: &EventSequence, basis: &FeatureBasis, window: f64, s: f64) -> Vec<f64> {
    let m = basis.len();
    let mut out = vec![0.0; m * events.dims()];
    for (&t, &u) in events.times().iter().zip(events.marks()) {
        let lag = s - t;
        if lag > 0.0 && lag <= window {
            for (o, v) in out[u * m..(u + 1) * m].iter_mut().zip(phi(basis, lag)) {
                *o += v;
            }
        }
    }
    out
}

/// Sorted interval endpoints on which `φ̃` is smooth.
pub fn knots(events: &EventSequence, window: f64, t0: f64, t1: f64) -> Vec<f64> {
    let mut k = vec![t0, t1];
    for &t in events.times() {
        for x in [t, t + window] {
            if x > t0 && x < t1 {
                k.push(x);
            }
        }
    }
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss–Legendre nodes and weights on the pieces between
/// `knots`, about `total` nodes overall. Nodes never touch a knot, so
/// one-sided limits of piecewise-smooth integrands are respected.
pub fn composite_gauss(knots: &[f64], total: usize) -> Vec<(f64, f64)> {
    let span = knots.last().unwrap() - knots[0];
    let mut out = Vec::with_capacity(total + 5 * knots.len());
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let panels = (((b - a) / span * total as f64 / 5.0).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, wt) in GL5_X.iter().zip(&GL5_W) {
                out.push((mid + 0.5 * h * x, 0.5 * h * wt));
            }
        }
    }
    out
}

/// `∫_{t0}^{t1} φ̃ φ̃ᵀ dt` by composite quadrature.
pub fn gram_quadrature(
    events: &EventSequence,
    basis: &FeatureBasis,
    window: f64,
    t0: f64,
    t1: f64,
    nodes: usize,
) -> DMatrix<f64> {
    let size = basis.len() * events.dims();
    let mut g = DMatrix::zeros(size, size);
    for (t, w) in composite_gauss(&knots(events, window, t0, t1), nodes) {
        let v = DVector::from_vec(phi_tilde(events, basis, window, t));
        g.ger(w, &v, &v, 1.0);
    }
    g
}

/// `∫_{t0}^{t1} φ̃ dt` by composite quadrature.
pub fn integral_quadrature(
    events: &EventSequence,
    basis: &FeatureBasis,
    window: f64,
    t0: f64,
    t1: f64,
    nodes: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; basis.len() * events.dims()];
    for (t, w) in composite_gauss(&knots(events, window, t0, t1), nodes) {
        for (o, v) in out.iter_mut().zip(phi_tilde(events, basis, window, t)) {
            *o += w * v;
        }
    }
    out
}

/// Random event sequence with `n` distinct times on `[0, T)`.
pub fn random_events(rng: &mut ChaCha8Rng, dims: usize, n: usize, horizon: f64) -> EventSequence {
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let marks = times.iter().map(|_| rng.random_range(0..dims)).collect();
    EventSequence::new(times, marks, horizon, dims).unwrap()
}

/// The joint quadratic objective over `x = (μ_1..μ_U, c_1..c_U)`:
/// `xᵀHx − 2 rhsᵀx` with `H` block diagonal in `i`,
/// `H_i = [[T, Fᵀ], [F, Ξ + γ⁻¹I]]` and `rhs_i = (|N_i|, S_i)`.
pub struct JointSystem {
    pub h: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub dims: usize,
    pub size: usize,
}

impl JointSystem {
    pub fn new(
        xi: &DMatrix<f64>,
        integral: &[f64],
        event_sums: &[Vec<f64>],
        counts: &[usize],
        horizon: f64,
        gamma: f64,
    ) -> Self {
        let dims = counts.len();
        let size = integral.len();
        let block = size + 1;
        let n = dims * block;
        let mut h = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..dims {
            let o = i * block;
            h[(o, o)] = horizon;
            for k in 0..size {
                h[(o, o + 1 + k)] = integral[k];
                h[(o + 1 + k, o)] = integral[k];
                for l in 0..size {
                    h[(o + 1 + k, o + 1 + l)] = xi[(k, l)];
                }
                h[(o + 1 + k, o + 1 + k)] += 1.0 / gamma;
                rhs[o + 1 + k] = event_sums[i][k];
            }
            rhs[o] = counts[i] as f64;
        }
        Self { h, rhs, dims, size }
    }

    /// Dense LU solve of `H x = rhs`.
    pub fn solve(&self) -> DVector<f64> {
        self.h.clone().lu().solve(&self.rhs).expect("joint system is singular")
    }

    pub fn pack(&self, mu: &[f64], coeff: &[Vec<f64>]) -> DVector<f64> {
        let mut x = DVector::zeros(self.dims * (self.size + 1));
        for i in 0..self.dims {
            let o = i * (self.size + 1);
            x[o] = mu[i];
            for k in 0..self.size {
                x[o + 1 + k] = coeff[i][k];
            }
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let b = self.size + 1;
        let mu = (0..self.dims).map(|i| x[i * b]).collect();
        let coeff = (0..self.dims)
            .map(|i| x.rows(i * b + 1, self.size).iter().copied().collect())
            .collect();
        (mu, coeff)
    }

    /// `∇ = 2(Hx − rhs)`
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.h * x - &self.rhs) * 2.0
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.h * x)) - 2.0 * self.rhs.dot(x)
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
