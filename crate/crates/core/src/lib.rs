//! Function-space dynamics of a two-layer linear network trained on a single
//! example with gradient descent.
//!
//! The network `f(x) = vᵀUx / √n_eff` under MSE loss collapses to a closed map
//! on the residual `Δf = f − y` and the Hessian trace `λ = Tr H`. This crate
//! implements that map, its fixed points and their stability, phase-portrait
//! sampling, the one-dimensional map on the edge-of-stability manifold with
//! bifurcation scans, and the time-series tools used to read sharpness
//! trajectories.
//!
//! Every analytic routine is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! experiments use: chaotic orbits amplify rounding quickly enough that `f32`
//! loses the closure property within a few dozen steps.

pub mod eos;
pub mod error;
pub mod fixed_points;
pub mod portrait;
pub mod scalar;
pub mod seed;
pub mod signal;
pub mod uv;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default cut-off on `max(|Δf|, λ)` beyond which an orbit counts as diverged.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e8;

pub type UvHyper64 = uv::UvHyper<f64>;
pub type UvHyper32 = uv::UvHyper<f32>;
pub type FunctionState64 = uv::FunctionState<f64>;
pub type FunctionState32 = uv::FunctionState<f32>;
pub type UvParams64 = uv::UvParams<f64>;
pub type Trajectory64 = uv::Trajectory<f64>;
pub type FixedPointReport64 = fixed_points::FixedPointReport<f64>;
pub type CriticalRates64 = fixed_points::CriticalRates<f64>;
pub type Mat2x64 = fixed_points::Mat2<f64>;
pub type PortraitGrid64 = portrait::PortraitGrid<f64>;
pub type BifurcationDiagram64 = eos::BifurcationDiagram<f64>;
