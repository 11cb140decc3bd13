//! Nonparametric estimation of triggering kernels for linear multivariate
//! Hawkes processes in a reproducing kernel Hilbert space.
//!
//! The estimator minimizes the penalized least-squares contrast
//!
//! ```text
//! L_LS = Σ_i [ ∫₀^T λ_i(t)² dt − 2 Σ_{n ∈ N_i} λ_i(t_n) ] + γ⁻¹ Σ_ij ‖g_ij‖²
//! ```
//!
//! over baselines `μ_i` and kernels `g_ij`. The optimum is a linear
//! combination of equivalent kernels whose dual coefficients are all one, so
//! with a random Fourier feature approximation of the RKHS kernel the fit
//! reduces to a single `MU × MU` symmetric positive-definite solve:
//!
//! ```text
//! c_i = (γ⁻¹ I + Ξ)⁻¹ (Σ_{n ∈ N_i} φ̃(t_n) − μ̂_i ∫₀^T φ̃(t) dt)
//! ĝ_ij(s) = φ(s)ᵀ [c_i]_j
//! ```
//!
//! Modules:
//! - [`features`]: quasi-Monte-Carlo Fourier feature bases and their closed-form integrals.
//! - [`events`]: event sequences and the `time,mark` CSV format.
//! - [`estimator`]: the `Ξ` assembly, the closed-form fit, equivalent kernels and intensities.
//! - [`simulate`]: Ogata thinning for linear and softplus-link Hawkes processes, benchmark scenarios.
//! - [`eval`]: least-squares contrast, integrated squared error, grid search and scaling benchmarks.
//! - [`quad`]: quadrature rules shared by evaluation code and numerical oracles.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod events;
pub mod features;
pub mod quad;
pub mod simulate;

pub use error::{Error, Result};
pub use estimator::{build_xi, fit, phi_tilde, EquivalentKernels, FitConfig, FittedModel, XiMatrix};
pub use events::EventSequence;
pub use features::{build_basis, phi, FeatureBasis, KernelFamily, KernelSpec};
pub use simulate::{simulate, KernelFn, Link, ScenarioSpec, SimOptions, SimResult};
