//! Estimation of optimal dynamic treatment rules from fused randomized
//! trials in which one discrete effect modifier is measured in only one
//! of the pooled trials.
//!
//! The pipeline: simulate or ingest fused-trial data ([`dgp`], [`data`]),
//! cross-fit the four nuisance regressions ([`crossfit`]), build the
//! doubly-robust pseudo-outcome and second-stage surfaces ([`drlearner`]),
//! convert surfaces into per-subject treatment decisions with bounds for
//! subjects missing the modifier ([`rules`]), evaluate candidate rules with
//! a targeted substitution estimator ([`policyvalue`]), and replicate the
//! whole thing to measure bias and RMSE ([`metrics`]).

pub mod crossfit;
pub mod data;
pub mod dgp;
pub mod drlearner;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod policyvalue;
pub mod rng;
pub mod rules;
pub mod special;

pub use crossfit::{FoldPlan, NuisanceConfig, NuisanceFits};
pub use data::{Dataset, Observation};
pub use dgp::{DgpCoefficients, DgpParams, TruthTable};

pub use error::Error;




/// Lower clip bound for every calibrated probability that can appear in a
/// denominator. Keeps the inverse-probability weights bounded.
pub const EPS_CLIP: f64 = 0.01;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
