//! Asymptotic bias analysis for linear regression with omitted or
//! error-prone covariates.
//!
//! The library computes omitted-variable bias (OVB) and measurement-error
//! bias (MEB) exactly from a partitioned covariance structure, verifies the
//! sign guarantees those formulas obey under positive-correlation
//! assumptions, reproduces a large Monte Carlo study of how often the
//! biases are negative, and runs a three-regression validation scheme with
//! a cluster bootstrap on panel data.
//!
//! Modules:
//! - [`linalg`] — small dense symmetric-matrix kernels (Cholesky, Schur
//!   complements, partial correlations, Z/M-matrix predicates);
//! - [`bias`] — the OVB/MEB formulas, the Omega decomposition, and the
//!   analytic comparison cases;
//! - [`assumptions`] — positivity predicates on covariances and
//!   coefficients;
//! - [`montecarlo`] — the seeded, parallel simulation experiment;
//! - [`panel`] — fixed-effects panel regressions, the ground-truth /
//!   omitted / error-prone triple, and the cluster bootstrap;
//! - [`theory`] — randomized verification battery and instance generators.

pub mod assumptions;
pub mod bias;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod theory;

pub use error::{Error, Result};
