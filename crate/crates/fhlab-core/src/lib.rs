//! Numerical laboratory for space-time linear statistics of the stationary
//! Hermitian Ornstein-Uhlenbeck matrix process: exact matrix-dynamics
//! simulation, closed-form moment asymptotics with root- and jump-type
//! singular test functions, determinantal-kernel and Fredholm machinery, and
//! the limiting log-correlated field with its multiplicative-chaos measures.
//!
//! The crate is organized bottom-up:
//!
//! * [`specfun`] - scalar special functions (Chebyshev, Hermite, Barnes G,
//!   semicircle Stieltjes transform and quantiles);
//! * [`transforms`] - test-function descriptors, weighted Hilbert transforms
//!   and the covariance bilinear form of linear statistics;
//! * [`predictor`] - closed-form asymptotic predictions for joint moments;
//! * [`dynamics`] - exact sampling of the matrix process and Monte Carlo
//!   measurement of the same moments;
//! * [`kernels`] - correlation kernels and Fredholm-determinant transforms;
//! * [`gmc`] - the limiting field and multiplicative-chaos measures;
//! * [`harness`] - experiment configuration, orchestration and reports.

pub mod dynamics;
pub mod error;
pub mod gmc;
pub mod harness;
pub mod kernels;
pub mod predictor;
pub mod quad;
pub mod rng;
pub mod specfun;
pub mod transforms;

pub use error::{Error, Result};
pub use transforms::{Charge, FunctionSpec, Singularity, SmoothComponent};
