//! Marginal dynamic linear models for sparse longitudinal outcomes with
//! daily time-varying covariates.
//!
//! Outcomes follow a Gaussian observation model around a latent AR(1) mean
//! process driven by daily covariates (typically medication adherence on a
//! +1/-1 coding). The latent states are integrated out analytically, giving
//! an exact marginal likelihood for the non-dynamic parameters; their
//! posterior is sampled by MCMC, and the latent states are recovered
//! afterwards from their closed-form Gaussian conditional. Missing adherence
//! is handled by Beta-Bernoulli multiple imputation, and two non-dynamic
//! comparison models (average and dichotomized adherence with patient random
//! effects) share the same machinery.
//!
//! Module map:
//! - [`types`]: records, parameters, dimensions, cohort validation
//! - [`marginal`]: exact marginal moments and log-likelihood
//! - [`smoother`]: latent-state conditional posterior and composition sampling
//! - [`sampler`]: adaptive random-walk Metropolis over the non-dynamic
//!   parameters, convergence diagnostics, posterior summaries
//! - [`imputation`]: Beta-Bernoulli multiple imputation of missing adherence
//! - [`baselines`]: average / dichotomized adherence models with random
//!   effects marginalized analytically
//! - [`simkit`]: synthetic cohorts and the independent Kalman filter /
//!   smoother oracle

pub mod baselines;
pub mod error;
pub mod imputation;
mod linalg;
pub mod marginal;
mod rng;
pub mod sampler;
pub mod simkit;
pub mod smoother;
pub mod types;

pub use error::Error;
pub use types::{
    CanonicalObs, CompleteDynamics, DynamicCovariates, ModelDims, Observation, PatientRecord,
    RecordValidation, ThetaParams, ValidationReport,
};
pub use types::validate_cohort;
