//! Nonuniform negative sampling for rare-events binary regression.
//!
//! All positive records are kept and negatives are subsampled with
//! per-record inclusion probabilities. Two subsample estimators are
//! provided: inverse-probability weighting ([`estimators::fit_ipw`]) and the
//! log-odds corrected likelihood ([`estimators::fit_lik`]). The
//! [`variance`] module evaluates plug-in asymptotic variances and
//! [`experiments`] holds the replicated simulation harness.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod model;
pub mod pilot;
pub mod rng;
pub mod sampling;
pub mod variance;

pub use error::{Error, Result};
pub use estimators::{fit_ipw, fit_lik, fit_mle, FitResult, FitSpec};
pub use model::{Dataset, LogOddsModel, Theta};
pub use pilot::{PilotConfig, Perturbation};
pub use sampling::{PilotBundle, SamplingPlan, Scheme, Subsample};
