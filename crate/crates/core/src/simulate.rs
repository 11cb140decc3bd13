//! Ogata thinning for linear and softplus-link multivariate Hawkes processes,
//! and the two synthetic benchmark scenarios.
//!
//! The intensity of dimension `i` is
//!
//! ```text
//! λ_i(t) = link(μ_i + Σ_{n: 0 < t − t_n ≤ A} g_{i u_n}(t − t_n))
//! ```
//!
//! Thinning needs an upper bound on `Σ_i λ_i` over a short lookahead. Each
//! kernel is replaced by a tabulated nonincreasing envelope
//! `ḡ(s) ≥ sup_{s ≤ u ≤ A} g(u)`; since the link is monotone, plugging the
//! envelope at the current lags bounds the intensity until the next event.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::quad::uniform_grid;

/// Parametric triggering kernel shapes used by the scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelFn {
    Zero,
    /// `a e^{−r s}`
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    /// `a e^{−r (s − c)²}`
    GaussianBump {
        amplitude: f64,
        rate: f64,
        center: f64,
    },
    /// `a 2^{−r s}`
    PowerOfTwo {
        amplitude: f64,
        rate: f64,
    },
    /// `a (1 + cos(f s)) e^{−r s}`
    DampedCosine {
        amplitude: f64,
        frequency: f64,
        rate: f64,
    },
    /// `(8s² − 1)` for `s ≤ 0.5`, `e^{−d (s − 0.5)}` beyond: self-inhibition
    /// right after an event followed by excitation.
    Refractory {
        decay: f64,
    },
}

impl KernelFn {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            KernelFn::Zero => 0.0,
            KernelFn::Exponential { amplitude, rate } => amplitude * (-rate * s).exp(),
            KernelFn::GaussianBump {
                amplitude,
                rate,
                center,
            } => amplitude * (-rate * (s - center).powi(2)).exp(),
            KernelFn::PowerOfTwo { amplitude, rate } => amplitude * (-rate * s).exp2(),
            KernelFn::DampedCosine {
                amplitude,
                frequency,
                rate,
            } => amplitude * (1.0 + (frequency * s).cos()) * (-rate * s).exp(),
            KernelFn::Refractory { decay } => {
                if s <= 0.5 {
                    8.0 * s * s - 1.0
                } else {
                    (-decay * (s - 0.5)).exp()
                }
            }
        }
    }

    fn parameters(&self) -> Vec<f64> {
        match *self {
            KernelFn::Zero => vec![],
            KernelFn::Exponential { amplitude, rate } | KernelFn::PowerOfTwo { amplitude, rate } => {
                vec![amplitude, rate]
            }
            KernelFn::GaussianBump {
                amplitude,
                rate,
                center,
            } => vec![amplitude, rate, center],
            KernelFn::DampedCosine {
                amplitude,
                frequency,
                rate,
            } => vec![amplitude, frequency, rate],
            KernelFn::Refractory { decay } => vec![decay],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Link {
    Identity,
    /// `log(1 + e^{w x}) / w`
    Softplus {
        w: f64,
    },
}

impl Link {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Link::Identity => x,
            Link::Softplus { w } => {
                let z = w * x;
                if z > 30.0 {
                    x + (-z).exp().ln_1p() / w
                } else {
                    z.exp().ln_1p() / w
                }
            }
        }
    }
}

/// Ground truth for synthetic generation and scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Baselines `μ_i`.
    pub mu: Vec<f64>,
    /// `kernels[i][j]` is `g_ij`, the effect of a dimension-`j` event on dimension `i`.
    pub kernels: Vec<Vec<KernelFn>>,
    pub link: Link,
    /// Support window `A`; kernels vanish beyond it.
    pub window: f64,
}

/// Baseline of the refractory scenario. Gives about 2150 events on average at `T = 2000`.
pub const REFRACTORY_DEFAULT_BASELINE: f64 = 0.01;

pub const SCENARIO_NAMES: [&str; 2] = ["mutually-exciting", "refractory"];

impl ScenarioSpec {
    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    /// `g_ij(s)` on `[0, A]`, zero elsewhere.
    pub fn g(&self, i: usize, j: usize, s: f64) -> f64 {
        if (0.0..=self.window).contains(&s) {
            self.kernels[i][j].eval(s)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.dims();
        let bad = |msg: String| Err(Error::InvalidParameter(format!("scenario `{}`: {msg}", self.name)));
        if u == 0 {
            return bad("needs at least one dimension".into());
        }
        if self.kernels.len() != u || self.kernels.iter().any(|row| row.len() != u) {
            return bad(format!("kernel grid must be {u}×{u}"));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return bad("baselines must be finite".into());
        }
        if self
            .kernels
            .iter()
            .flatten()
            .any(|k| k.parameters().iter().any(|p| !p.is_finite()))
        {
            return bad("kernel parameters must be finite".into());
        }
        match self.link {
            Link::Softplus { w } if !(w > 0.0 && w.is_finite()) => {
                return bad(format!("softplus w must be positive, got {w}"));
            }
            Link::Identity => {
                if self.mu.iter().any(|&m| m < 0.0) {
                    return bad("identity-link baselines must be nonnegative".into());
                }
                let grid = uniform_grid(0.0, self.window, 4001);
                for (i, row) in self.kernels.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        if grid.iter().any(|&s| k.eval(s) < 0.0) {
                            return bad(format!(
                                "identity-link kernel g_{}{} goes negative on [0, A]",
                                i + 1,
                                j + 1
                            ));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Ground-truth curves on `n` uniform points over `[0, A]`.
    pub fn curves(&self, n: usize) -> KernelCurves {
        KernelCurves::from_fn(self.dims(), self.window, n, |i, j, s| self.g(i, j, s))
    }
}

/// Looks up a built-in scenario by name.
pub fn scenario_by_name(name: &str) -> Option<ScenarioSpec> {
    match name {
        "mutually-exciting" => Some(mutually_exciting_scenario()),
        "refractory" => Some(refractory_scenario()),
        _ => None,
    }
}

/// Three-dimensional linear Hawkes process with nonnegative kernels and
/// `μ_i = 0.01`, `A = 5`.
///
/// `g_32(s) = 0.25(1 + cos(πs))e^{−s}`.
pub fn mutually_exciting_scenario() -> ScenarioSpec {
    use KernelFn::*;
    let exp = |a, r| Exponential { amplitude: a, rate: r };
    let bump = |a, r, c| GaussianBump {
        amplitude: a,
        rate: r,
        center: c,
    };
    ScenarioSpec {
        name: "mutually-exciting".into(),
        mu: vec![0.01; 3],
        kernels: vec![
            vec![exp(0.5, 1.0), bump(0.5, 10.0, 1.0), bump(0.5, 20.0, 3.0)],
            vec![
                // 2^{−5s−1}
                PowerOfTwo {
                    amplitude: 0.5,
                    rate: 5.0,
                },
                exp(0.3, 0.5),
                bump(0.5, 20.0, 2.0),
            ],
            vec![
                bump(0.2, 3.0, 2.0),
                DampedCosine {
                    amplitude: 0.25,
                    frequency: PI,
                    rate: 1.0,
                },
                exp(0.5, 1.0),
            ],
        ],
        link: Link::Identity,
        window: 5.0,
    }
}

/// Three-dimensional softplus-link (`w = 100`) process with short-term
/// self-inhibition, `A = 5`, baselines [`REFRACTORY_DEFAULT_BASELINE`].
pub fn refractory_scenario() -> ScenarioSpec {
    refractory_scenario_with_baseline(REFRACTORY_DEFAULT_BASELINE)
}

pub fn refractory_scenario_with_baseline(mu: f64) -> ScenarioSpec {
    use KernelFn::*;
    let bump = |a, r, c| GaussianBump {
        amplitude: a,
        rate: r,
        center: c,
    };
    ScenarioSpec {
        name: "refractory".into(),
        mu: vec![mu; 3],
        kernels: vec![
            vec![Refractory { decay: 2.5 }, bump(0.6, 10.0, 1.0), bump(0.8, 20.0, 3.0)],
            vec![
                PowerOfTwo {
                    amplitude: 0.6,
                    rate: 5.0,
                },
                Refractory { decay: 1.0 },
                bump(0.8, 20.0, 2.0),
            ],
            vec![Zero, Zero, Refractory { decay: 1.0 }],
        ],
        link: Link::Softplus { w: 100.0 },
        window: 5.0,
    }
}

/// Kernel values on a shared uniform grid over `[0, A]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCurves {
    pub s: Vec<f64>,
    /// `values[i][j][k] = g_ij(s_k)`
    pub values: Vec<Vec<Vec<f64>>>,
}

impl KernelCurves {
    pub fn from_fn<F: Fn(usize, usize, f64) -> f64>(dims: usize, window: f64, n: usize, g: F) -> Self {
        let s = uniform_grid(0.0, window, n);
        let values = (0..dims)
            .map(|i| (0..dims).map(|j| s.iter().map(|&x| g(i, j, x)).collect()).collect())
            .collect();
        Self { s, values }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    /// CSV with header `s,g_11,g_12,...,g_UU` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let u = self.dims();
        let mut header = String::from("s");
        for i in 1..=u {
            for j in 1..=u {
                header.push_str(&format!(",g_{i}{j}"));
            }
        }
        writeln!(w, "{header}")?;
        for (k, &s) in self.s.iter().enumerate() {
            let mut line = format!("{s:.16e}");
            for row in &self.values {
                for col in row {
                    line.push_str(&format!(",{:.16e}", col[k]));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (dims, _) = loop {
            let Some((idx, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty curves file".into(),
                });
            };
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let cols = text.split(',').count() - 1;
            let dims = (cols as f64).sqrt().round() as usize;
            if dims == 0 || dims * dims != cols || !text.starts_with('s') {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected header `s,g_11,...,g_UU`, got `{text}`"),
                });
            }
            break (dims, idx);
        };
        let mut s = Vec::new();
        let mut values = vec![vec![Vec::new(); dims]; dims];
        for (idx, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = text
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("invalid number: {e}"),
                })?;
            if fields.len() != dims * dims + 1 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} columns, got {}", dims * dims + 1, fields.len()),
                });
            }
            s.push(fields[0]);
            for i in 0..dims {
                for j in 0..dims {
                    values[i][j].push(fields[1 + i * dims + j]);
                }
            }
        }
        if s.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                message: "curves file needs at least two grid points".into(),
            });
        }
        Ok(Self { s, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Abort once this many events have been generated.
    pub max_events: usize,
    /// Length of the interval over which one intensity bound is used.
    pub lookahead: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: 2_000_000,
            lookahead: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub events: EventSequence,
    /// `λ_{u_n}(t_n)` at each accepted event.
    pub intensities: Vec<f64>,
    pub seed: u64,
    pub proposals: usize,
}

const ENVELOPE_CELLS: usize = 2048;
const ENVELOPE_SUBSAMPLES: usize = 8;

/// Nonincreasing upper envelope of one kernel on `[0, A]`.
struct Envelope {
    cell: f64,
    values: Vec<f64>,
}

impl Envelope {
    fn new(k: &KernelFn, window: f64) -> Result<Self> {
        let cell = window / ENVELOPE_CELLS as f64;
        let mut values = vec![f64::NEG_INFINITY; ENVELOPE_CELLS];
        let mut peak: f64 = 0.0;
        for (c, v) in values.iter_mut().enumerate() {
            for q in 0..=ENVELOPE_SUBSAMPLES {
                let s = (c as f64 + q as f64 / ENVELOPE_SUBSAMPLES as f64) * cell;
                let g = k.eval(s.min(window));
                if !g.is_finite() {
                    return Err(Error::UnboundedIntensity(format!(
                        "kernel {k:?} is not finite at s = {s}"
                    )));
                }
                *v = v.max(g);
                peak = peak.max(g.abs());
            }
        }
        let margin = 1e-3 * peak + 1e-12;
        for c in (0..ENVELOPE_CELLS - 1).rev() {
            values[c] = values[c].max(values[c + 1]);
        }
        for v in &mut values {
            *v += margin;
        }
        Ok(Self { cell, values })
    }

    /// Bound on `sup_{u ≥ lag} g(u)` for `lag ≥ 0`.
    fn at(&self, lag: f64) -> f64 {
        let c = ((lag / self.cell) as usize).min(ENVELOPE_CELLS - 1);
        self.values[c]
    }
}

/// Simulates `spec` on `[0, T]` by Ogata thinning with default options.
pub fn simulate(spec: &ScenarioSpec, horizon: f64, seed: u64) -> Result<SimResult> {
    simulate_with(spec, horizon, seed, &SimOptions::default())
}

pub fn simulate_with(spec: &ScenarioSpec, horizon: f64, seed: u64, opts: &SimOptions) -> Result<SimResult> {
    spec.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let u = spec.dims();
    let window = spec.window;
    let lookahead = opts.lookahead.min(window);
    let envelopes: Vec<Vec<Envelope>> = spec
        .kernels
        .iter()
        .map(|row| row.iter().map(|k| Envelope::new(k, window)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = Vec::new();
    let mut marks: Vec<usize> = Vec::new();
    let mut intensities = Vec::new();
    let mut first_active = 0usize;
    let mut lambda = vec![0.0; u];
    let mut proposals = 0usize;
    let mut t = 0.0f64;

    while t < horizon {
        while first_active < times.len() && t - times[first_active] > window {
            first_active += 1;
        }
        let active = first_active..times.len();

        let mut bound = 0.0;
        for i in 0..u {
            let mut x = spec.mu[i];
            for n in active.clone() {
                x += envelopes[i][marks[n]].at(t - times[n]);
            }
            bound += spec.link.apply(x).max(0.0);
        }
        let segment_end = t + lookahead;
        if !(bound.is_finite()) {
            return Err(Error::UnboundedIntensity(format!("bound is {bound} at t = {t}")));
        }
        if bound <= 0.0 {
            t = segment_end;
            continue;
        }
        let wait = Exp::new(bound)
            .map_err(|e| Error::UnboundedIntensity(format!("{e}")))?
            .sample(&mut rng);
        if t + wait > segment_end {
            t = segment_end;
            continue;
        }
        t += wait;
        if t >= horizon {
            break;
        }
        proposals += 1;

        let mut total = 0.0;
        for (i, l) in lambda.iter_mut().enumerate() {
            let mut x = spec.mu[i];
            for n in active.clone() {
                let lag = t - times[n];
                if lag > 0.0 && lag <= window {
                    x += spec.kernels[i][marks[n]].eval(lag);
                }
            }
            if spec.link == Link::Identity && x < 0.0 {
                return Err(Error::UnboundedIntensity(format!(
                    "linear intensity of dimension {} is negative ({x}) at t = {t}",
                    i + 1
                )));
            }
            *l = spec.link.apply(x);
            total += *l;
        }
        if total > bound * (1.0 + 1e-9) {
            return Err(Error::UnboundedIntensity(format!(
                "intensity {total} exceeds thinning bound {bound} at t = {t}"
            )));
        }
        let draw: f64 = rng.random::<f64>() * bound;
        if draw >= total {
            continue;
        }
        if times.last().is_some_and(|&last| t <= last) {
            continue;
        }
        let mut pick = draw;
        let mut dim = u - 1;
        for (i, &l) in lambda.iter().enumerate() {
            if pick < l {
                dim = i;
                break;
            }
            pick -= l;
        }
        if lambda[dim] <= 0.0 {
            continue;
        }
        times.push(t);
        marks.push(dim);
        intensities.push(lambda[dim]);
        if times.len() > opts.max_events {
            return Err(Error::RunawayProcess {
                cap: opts.max_events,
                time: t,
            });
        }
    }

    Ok(SimResult {
        events: EventSequence::new(times, marks, horizon, u)?,
        intensities,
        seed,
        proposals,
    })
}
