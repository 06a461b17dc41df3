//! Run configuration: a single TOML file plus command-line overrides.
//! Unknown keys are rejected and every numeric field is bounds-checked.

use serde::Deserialize;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub imputation: ImputationConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub smooth: SmoothConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub sim: SimSection,
}

fn default_seed() -> u64 {
    0
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_chains() -> usize {
    4
}
fn default_warmup() -> usize {
    40_000
}
fn default_draws() -> usize {
    10_000
}
fn default_thin() -> usize {
    4
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: default_chains(),
            warmup: default_warmup(),
            draws: default_draws(),
            thin: default_thin(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputationConfig {
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_m() -> usize {
    20
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self { m: default_m() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_mode() -> String {
    "average".to_string()
}
fn default_thresholds() -> Vec<f64> {
    vec![0.8]
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothConfig {
    #[serde(default = "default_smooth_draws")]
    pub draws: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_smooth_draws() -> usize {
    400
}
fn default_level() -> f64 {
    0.90
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            draws: default_smooth_draws(),
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_intercept_means")]
    pub intercept_means: Vec<f64>,
    #[serde(default = "default_intercept_var")]
    pub intercept_var: f64,
    #[serde(default = "default_coefficient_var")]
    pub coefficient_var: f64,
    #[serde(default = "default_phi_var")]
    pub phi_var: f64,
    #[serde(default = "default_sigma_eps_max")]
    pub sigma_eps_max: f64,
    #[serde(default = "default_sigma_nu_max")]
    pub sigma_nu_max: f64,
    #[serde(default = "default_sigma_0_max")]
    pub sigma_0_max: f64,
}

fn default_intercept_means() -> Vec<f64> {
    vec![120.0, 80.0]
}
fn default_intercept_var() -> f64 {
    400.0
}
fn default_coefficient_var() -> f64 {
    400.0
}
fn default_phi_var() -> f64 {
    25.0
}
fn default_sigma_eps_max() -> f64 {
    30.0
}
fn default_sigma_nu_max() -> f64 {
    10.0
}
fn default_sigma_0_max() -> f64 {
    30.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            intercept_means: default_intercept_means(),
            intercept_var: default_intercept_var(),
            coefficient_var: default_coefficient_var(),
            phi_var: default_phi_var(),
            sigma_eps_max: default_sigma_eps_max(),
            sigma_nu_max: default_sigma_nu_max(),
            sigma_0_max: default_sigma_0_max(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_patients")]
    pub patients: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_outcomes")]
    pub outcomes: usize,
    #[serde(default = "default_p")]
    pub baseline_covariates: usize,
    #[serde(default = "default_q")]
    pub adherence_prob: f64,
    #[serde(default = "default_visit_rate")]
    pub visit_rate: f64,
    #[serde(default)]
    pub beta: Vec<Vec<f64>>,
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub phi: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_eps_sd: Vec<f64>,
    #[serde(default)]
    pub rho_eps: Vec<f64>,
    #[serde(default)]
    pub sigma_nu_sd: Vec<f64>,
    #[serde(default)]
    pub sigma_0_sd: Vec<f64>,
}

fn default_patients() -> usize {
    50
}
fn default_horizon() -> usize {
    100
}
fn default_outcomes() -> usize {
    2
}
fn default_p() -> usize {
    3
}
fn default_q() -> f64 {
    0.9
}
fn default_visit_rate() -> f64 {
    3.0 / 98.0
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            patients: default_patients(),
            horizon: default_horizon(),
            outcomes: default_outcomes(),
            baseline_covariates: default_p(),
            adherence_prob: default_q(),
            visit_rate: default_visit_rate(),
            beta: Vec::new(),
            rho: Vec::new(),
            phi: Vec::new(),
            sigma_eps_sd: Vec::new(),
            rho_eps: Vec::new(),
            sigma_nu_sd: Vec::new(),
            sigma_0_sd: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Validation(format!("config: {msg}")));
        if self.mcmc.chains == 0 || self.mcmc.draws == 0 || self.mcmc.thin == 0 {
            return fail("mcmc.chains, mcmc.draws, and mcmc.thin must be positive");
        }
        if self.imputation.m == 0 {
            return fail("imputation.m must be positive");
        }
        if !matches!(self.baseline.mode.as_str(), "average" | "dichotomized") {
            return fail("baseline.mode must be `average` or `dichotomized`");
        }
        if self.baseline.thresholds.is_empty()
            || self
                .baseline
                .thresholds
                .iter()
                .any(|p| !(*p > 0.0 && *p < 1.0))
        {
            return fail("baseline.thresholds must be probabilities in (0,1)");
        }
        if self.smooth.draws == 0 {
            return fail("smooth.draws must be positive");
        }
        if !(self.smooth.level > 0.0 && self.smooth.level < 1.0) {
            return fail("smooth.level must lie in (0,1)");
        }
        for (name, v) in [
            ("priors.intercept_var", self.priors.intercept_var),
            ("priors.coefficient_var", self.priors.coefficient_var),
            ("priors.phi_var", self.priors.phi_var),
            ("priors.sigma_eps_max", self.priors.sigma_eps_max),
            ("priors.sigma_nu_max", self.priors.sigma_nu_max),
            ("priors.sigma_0_max", self.priors.sigma_0_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(&format!("{name} must be positive and finite"));
            }
        }
        if self.sim.patients == 0 || self.sim.horizon == 0 {
            return fail("sim.patients and sim.horizon must be positive");
        }
        if self.sim.outcomes == 0 || self.sim.baseline_covariates == 0 {
            return fail("sim.outcomes and sim.baseline_covariates must be positive");
        }
        if !(0.0..=1.0).contains(&self.sim.adherence_prob) {
            return fail("sim.adherence_prob must lie in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.sim.visit_rate) {
            return fail("sim.visit_rate must lie in [0,1]");
        }
        Ok(())
    }

    /// Prior specification implied by the `[priors]` section for K outcomes.
    pub fn prior_spec(&self, outcomes: usize) -> mdlm::sampler::PriorSpec {
        use mdlm::sampler::{NormalPrior, UniformPrior};
        let mut beta_intercepts = Vec::with_capacity(outcomes);
        for k in 0..outcomes {
            let mean = self.priors.intercept_means.get(k).copied().unwrap_or(0.0);
            beta_intercepts.push(NormalPrior {
                mean,
                var: self.priors.intercept_var,
            });
        }
        mdlm::sampler::PriorSpec {
            beta_intercepts,
            beta_other: NormalPrior {
                mean: 0.0,
                var: self.priors.coefficient_var,
            },
            phi: NormalPrior {
                mean: 0.0,
                var: self.priors.phi_var,
            },
            rho: UniformPrior { lo: -1.0, hi: 1.0 },
            sigma_eps_sd: UniformPrior {
                lo: 0.0,
                hi: self.priors.sigma_eps_max,
            },
            rho_eps: UniformPrior { lo: -1.0, hi: 1.0 },
            sigma_nu_sd: UniformPrior {
                lo: 0.0,
                hi: self.priors.sigma_nu_max,
            },
            sigma_0_sd: UniformPrior {
                lo: 0.0,
                hi: self.priors.sigma_0_max,
            },
        }
    }

    pub fn sampler_config(&self, seed: u64) -> mdlm::sampler::SamplerConfig {
        mdlm::sampler::SamplerConfig {
            n_chains: self.mcmc.chains,
            warmup: self.mcmc.warmup,
            draws: self.mcmc.draws,
            thin: self.mcmc.thin,
            seed,
            prior_only: false,
            fixed: Vec::new(),
        }
    }
}
