//! Gaussian-process tools for system identification.
//!
//! * [`numerics`]: dense Cholesky, triangular solves, log-determinants and
//!   the matrix exponential.
//! * [`kernels`]: squared-exponential and half-integer Matérn covariance
//!   functions with log-hyperparameter gradients.
//! * [`gp`]: exact GP regression, the negative log marginal likelihood and
//!   hyperparameter optimization.
//! * [`lag`]: NFIR / NARX / NOE models built by lag embedding of
//!   input-output sequences.
//! * [`temporal`]: O(N) temporal GP regression through the state-space form
//!   of Matérn kernels, Kalman filtering and RTS smoothing.
//! * [`gpss`]: GP state-space models learned from observed states, the
//!   sinusoidal basis-function reduction, simulation and a bootstrap
//!   particle filter.
//! * [`synth`]: seeded synthetic data generators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gp;
pub mod gpss;
pub mod kernels;
pub mod lag;
pub mod numerics;
pub mod optim;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
pub use gp::{Dataset, GpFitOptions, HyperFit, MeanFunction, Posterior, TrainedGP};
pub use gpss::{
    BasisModel, GpssModel, LinearGaussianModel, SimMode, StateSpaceModel, StateTrajectory,
};
pub use kernels::{HyperVector, Kernel, KernelFamily};
pub use lag::{EvalMode, LagFitOptions, LagModel, LagSpec, Metrics, SignalRecord};
pub use numerics::{CholeskyFactor, Matrix};
pub use optim::{OptimConfig, StopReason};
pub use temporal::{LtiSde, TemporalGp};
