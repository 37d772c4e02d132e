//! Meshfree PDE solving with random cosine features.
//!
//! A solution is approximated as `u(x) = sum_k c_k cos(<w_k, x> + b_k)` where the
//! frequencies `w_k` are drawn from the Fourier density of a shift-invariant kernel
//! and only the coefficients `c_k` are trained. Linear PDEs reduce to a single
//! least-squares or minimum-norm solve; nonlinear PDEs are trained with a
//! regularized Gauss-Newton / Levenberg-Marquardt iteration or with full-batch
//! gradient descent.
//!
//! The crate is organized as
//!
//! * [`features`]: sampling and analytic evaluation of the cosine features, plus the
//!   Monte-Carlo kernel estimator,
//! * [`problems`]: the point-wise operator abstraction and the builtin benchmark PDEs,
//! * [`assembly`]: collocation sets, model evaluation, residuals, Jacobians and the
//!   block linear system for linear PDEs,
//! * [`solvers`]: dense linear solvers and the nonlinear trainers,
//! * [`evaluation`]: test errors, convergence studies and log-log rate fitting.

pub mod assembly;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod points;
pub mod problems;
pub mod rng;
pub mod solvers;

pub use assembly::{CollocationSet, Model, SamplingScheme};
pub use error::{Error, Result};
pub use evaluation::{ErrorReport, StudyResult, TestScheme};
pub use features::{FeatureDistribution, FeatureEval, FeatureKind, FeatureSet};
pub use pipeline::{RunOutcome, RunSpec};
pub use points::Points;
pub use problems::{DomainBox, OperatorPoint, ProblemSpec};
pub use solvers::{FitReport, SolverConfig, SolverMethod};

/// Re-exported so downstream crates use the same matrix type.
pub use faer;
