//! Order estimation for finite-alphabet Markov chains by penalized maximum
//! likelihood, with diagnostics for the quantities that control its
//! deviations.
//!
//! Contexts of length `r` are encoded as base-`m` integers with the most
//! recent symbol in the least significant digit.

pub mod counts;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod likelihood;
pub mod model;
pub mod penalty;
pub mod rng;

pub use counts::{build_counts, ContextCounts};
pub use error::{Error, Result};
pub use estimator::{consistency_experiment, estimate_order, underestimation_gap, EstimateResult};
pub use likelihood::{lil_statistic, lr_statistic, max_loglik, mixture_kernel, MixtureKernel};
pub use model::{Alphabet, LogLik, MarkovModel, PathSample, Symbol};
pub use penalty::{cutoff_value, penalty_value, CutoffRule, CutoffSpec, PenaltySpec};
