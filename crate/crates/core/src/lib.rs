//! Simulation and numerical verification for the one-dimensional
//! parabolic–parabolic Keller–Segel particle system.
//!
//! Each particle feels the time-integrated interaction
//!
//! ```text
//! dX^i_t = { (χ/N) Σ_{j≠i} ∫_0^t K_{t-s}(X^i_t - X^j_s) ds } dt + dW^i_t,
//! K_t(x) = e^{-λt} ∂_x g_t(x),   g_t = N(0, t) density,
//! ```
//!
//! so the drift at time `t` depends on the full history of every other
//! particle. The crate provides
//!
//! * [`kernel`]: exact evaluation, `L^p` norms and closed-form time integrals
//!   of `K`;
//! * [`particles`]: Euler–Maruyama simulation of the interacting system and of
//!   the partially driftless system used for Girsanov arguments;
//! * [`pde`] and [`mean_field`]: a finite-volume reference solver for the
//!   limiting PDE and the nonlinear SDE driven by its density;
//! * [`stochastic`]: Monte Carlo estimators for the functional `F`, its
//!   exponential moments and Girsanov weights;
//! * [`diagnostics`]: Wasserstein distances, kernel density estimates and
//!   the propagation-of-chaos study;
//! * [`runner`]: reproducible experiment commands with run manifests, used by
//!   the `ks-particles` binary.
//!
//! Runnable walk-throughs for every capability live in `examples/`.

mod error;

pub mod diagnostics;
pub mod fast_erf;
pub mod grid;
pub mod initial;
pub mod io;
pub mod kernel;
pub mod mean_field;
pub mod particles;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
pub use grid::{SpatialGrid, TimeGrid};
pub use initial::InitialLaw;
pub use kernel::KernelParams;
pub use particles::PathEnsemble;
pub use pde::{DensityGrid, PdeState};
