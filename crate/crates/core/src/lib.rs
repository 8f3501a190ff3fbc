//! Predictive modeling with stacked Bayesian logistic regressions.
//!
//! The pipeline: declare a core model plus disjoint candidate extensions,
//! fit each by adaptive HMC, score them with leave-one-out predictive
//! densities, combine them with simplex-constrained stacking weights,
//! validate the ensemble with grouped posterior predictive checks, and
//! summarize it with focal-grid predictive comparisons and gap posteriors.

pub mod comparisons;
pub mod dataset;
pub mod error;
pub mod loo;
pub mod math;
pub mod model;
pub mod ppc;
pub mod rng;
pub mod sampler;
pub mod stacking;
pub mod svg;

pub use error::{Error, Result};
