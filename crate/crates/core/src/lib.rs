//! One-step RKHS estimation of the average marginal effect (AME) of an
//! endogenous scalar treatment in the partially linear instrumental
//! variables model
//!
//! ```text
//! Y = h(Z) + X'beta + eps,    E[eps | X, W] = 0,    AME = E[h'(Z)],
//! ```
//!
//! together with a Bayesian-bootstrap test of `AME = theta`, two-fold
//! cross-validation of the single penalty parameter, and a Monte Carlo
//! harness for size and power studies.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`numerics`] | minimum-norm symmetric solves, quantiles, standardization, random streams |
//! | [`kernels`] | Gaussian and Sobolev kernels, Gram and derivative-Gram matrices |
//! | [`weighting`] | characteristic-function weighting matrix and its bootstrap reweighting |
//! | [`estimator`] | the closed-form penalized estimator and the AME |
//! | [`inference`] | bootstrap draws, tests, p-values and confidence intervals |
//! | [`selection`] | cross-validated choice of the penalty |
//! | [`simulation`] | data-generating processes and Monte Carlo experiments |
//!
//! Independent work items (bootstrap draws, replications, grid points) run
//! on the rayon pool when the default `parallel` feature is on; see
//! [`Execution`].

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
mod exec;
pub mod inference;
pub mod kernels;
pub mod numerics;
pub mod selection;
pub mod simulation;
pub mod weighting;

pub use error::{Error, ErrorKind, Result};
pub use estimator::{fit, Conditioning, Dataset, Fit, FitConfig, Problem};
pub use exec::Execution;
pub use kernels::{KernelFamily, KernelSpec};
pub use numerics::RandomStream;
pub use weighting::MuSpec;
