//! Non-dynamic comparison models: outcomes regressed on baseline covariates
//! and a scalar adherence summary (average or dichotomized), with per-patient
//! random intercepts integrated out analytically.
//!
//! Marginalizing the random effects gives each patient a compound-symmetry
//! covariance per outcome (sigma_delta^2 on every same-outcome pair) plus the
//! same measurement-event noise structure as the dynamic model, so the
//! likelihood is again a product of small per-patient Gaussians.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::linalg::mvn_logpdf;
use crate::sampler::engine::{
    run_blocked_rwm, EngineConfig, Init, ParamDef, ParamLayout, PriorDensity, Transform,
};
use crate::sampler::{
    quantile, ChainSet, NormalPrior, ParamSummary, SamplerConfig, UniformPrior,
};
use crate::types::{sampling_noise_entry, ModelDims, PatientRecord};

/// How daily adherence is collapsed into one scalar per patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdherenceSummary {
    /// Mean of the +1/-1 daily values, in [-1, 1].
    Average,
    /// Indicator that the mean exceeds `2p - 1`, i.e. that the fraction of
    /// adherent days strictly exceeds `p`.
    Dichotomized { threshold: f64 },
}

pub const DEFAULT_DICHOTOMIZE_THRESHOLD: f64 = 0.8;

/// Priors and summary choice for a baseline model fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModelSpec {
    pub summary: AdherenceSummary,
    pub beta_intercepts: Vec<NormalPrior>,
    pub beta_other: NormalPrior,
    /// Adherence-summary effects gamma.
    pub gamma: NormalPrior,
    /// Random-intercept standard deviations.
    pub sigma_delta_sd: UniformPrior,
    pub sigma_eps_sd: UniformPrior,
    pub rho_eps: UniformPrior,
}

impl BaselineModelSpec {
    pub fn default_for(dims: &ModelDims, summary: AdherenceSummary) -> Self {
        let dlm = crate::sampler::PriorSpec::default_for(dims);
        Self {
            summary,
            beta_intercepts: dlm.beta_intercepts,
            beta_other: dlm.beta_other,
            gamma: NormalPrior { mean: 0.0, var: 25.0 },
            sigma_delta_sd: UniformPrior { lo: 0.0, hi: 30.0 },
            sigma_eps_sd: dlm.sigma_eps_sd,
            rho_eps: dlm.rho_eps,
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<(), Error> {
        if let AdherenceSummary::Dichotomized { threshold } = self.summary {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Error::InvalidConfig(
                    "dichotomization threshold must lie in (0,1)".into(),
                ));
            }
        }
        if self.beta_intercepts.len() != dims.outcomes {
            return Err(Error::InvalidConfig(format!(
                "expected {} intercept priors, got {}",
                dims.outcomes,
                self.beta_intercepts.len()
            )));
        }
        Ok(())
    }
}

/// Parameters of the baseline model in constrained form. `sigma_delta`
/// holds variances.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub beta: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub sigma_delta: DVector<f64>,
    pub sigma_eps: DMatrix<f64>,
}

/// Scalar adherence summary for one patient. Requires complete (possibly
/// imputed) adherence in the first dynamic covariate column.
pub fn summarize_adherence(record: &PatientRecord, summary: &AdherenceSummary) -> Result<f64, Error> {
    let mut total = 0.0;
    for day in 1..=record.horizon {
        match record.dynamic.get(day, 0) {
            Some(v) => total += v,
            None => {
                return Err(Error::InvalidCovariate(format!(
                    "record `{}` has missing adherence; impute first",
                    record.id
                )))
            }
        }
    }
    let mean = total / record.horizon as f64;
    Ok(match summary {
        AdherenceSummary::Average => mean,
        AdherenceSummary::Dichotomized { threshold } => {
            if mean > 2.0 * threshold - 1.0 {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Marginal log-likelihood of one patient under the baseline model, with the
/// random intercepts integrated out.
fn record_log_likelihood(
    record: &PatientRecord,
    params: &BaselineParams,
    summary: &AdherenceSummary,
) -> Result<f64, Error> {
    if record.observations.is_empty() {
        return Err(Error::NoObservations {
            id: record.id.clone(),
        });
    }
    let cbar = summarize_adherence(record, summary)?;
    let x = DVector::from_column_slice(&record.baseline);
    let shift = &params.beta * &x;
    let canon = record.canonical_observations();
    let m = canon.len();
    let mut mean = DVector::zeros(m);
    let mut cov = DMatrix::zeros(m, m);
    let mut values = DVector::zeros(m);
    for a in 0..m {
        let oa = &canon[a];
        mean[a] = shift[oa.outcome] + params.gamma[oa.outcome] * cbar;
        values[a] = oa.value;
        for b in 0..=a {
            let ob = &canon[b];
            let random_effect = if oa.outcome == ob.outcome {
                params.sigma_delta[oa.outcome]
            } else {
                0.0
            };
            let entry = random_effect + sampling_noise_entry(&params.sigma_eps, oa, ob);
            cov[(a, b)] = entry;
            cov[(b, a)] = entry;
        }
    }
    mvn_logpdf(&values, &mean, &cov).map_err(|e| e.for_record(&record.id))
}

/// Cohort log-likelihood for the baseline model (id-ordered summation, same
/// contract as the dynamic model).
pub fn baseline_log_likelihood(
    records: &[PatientRecord],
    params: &BaselineParams,
    summary: &AdherenceSummary,
) -> Result<f64, Error> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    let mut total = 0.0;
    for idx in order {
        total += record_log_likelihood(&records[idx], params, summary)?;
    }
    Ok(total)
}

/// Cohort preprocessed for repeated baseline-likelihood evaluation: adherence
/// summaries and canonical observations cached, records in summation order.
struct PreparedBaseline {
    entries: Vec<PreparedBaselineRecord>,
}

struct PreparedBaselineRecord {
    id: String,
    x: DVector<f64>,
    cbar: f64,
    canon: Vec<crate::types::CanonicalObs>,
    values: DVector<f64>,
}

fn prepare_baseline(
    records: &[PatientRecord],
    summary: &AdherenceSummary,
) -> Result<PreparedBaseline, Error> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    let mut entries = Vec::with_capacity(records.len());
    for idx in order {
        let record = &records[idx];
        if record.observations.is_empty() {
            return Err(Error::NoObservations {
                id: record.id.clone(),
            });
        }
        let canon = record.canonical_observations();
        let values = DVector::from_iterator(canon.len(), canon.iter().map(|o| o.value));
        entries.push(PreparedBaselineRecord {
            id: record.id.clone(),
            x: DVector::from_column_slice(&record.baseline),
            cbar: summarize_adherence(record, summary)?,
            canon,
            values,
        });
    }
    Ok(PreparedBaseline { entries })
}

impl PreparedBaseline {
    fn log_likelihood(&self, params: &BaselineParams) -> Result<f64, Error> {
        let mut total = 0.0;
        for entry in &self.entries {
            let shift = &params.beta * &entry.x;
            let m = entry.canon.len();
            let mut mean = DVector::zeros(m);
            let mut cov = DMatrix::zeros(m, m);
            for a in 0..m {
                let oa = &entry.canon[a];
                mean[a] = shift[oa.outcome] + params.gamma[oa.outcome] * entry.cbar;
                for b in 0..=a {
                    let ob = &entry.canon[b];
                    let random_effect = if oa.outcome == ob.outcome {
                        params.sigma_delta[oa.outcome]
                    } else {
                        0.0
                    };
                    let value = random_effect + sampling_noise_entry(&params.sigma_eps, oa, ob);
                    cov[(a, b)] = value;
                    cov[(b, a)] = value;
                }
            }
            total += mvn_logpdf(&entry.values, &mean, &cov)
                .map_err(|e| e.for_record(&entry.id))?;
        }
        Ok(total)
    }
}

/// Parameter order: beta (row-major), gamma, sigma_delta SDs, sigma_eps SDs,
/// sampling-error correlations.
fn baseline_layout(dims: &ModelDims, spec: &BaselineModelSpec) -> ParamLayout {
    let k = dims.outcomes;
    let mut defs = Vec::new();
    for row in 0..k {
        for col in 0..dims.baseline_covariates {
            let normal = if col == 0 {
                spec.beta_intercepts[row]
            } else {
                spec.beta_other
            };
            defs.push(ParamDef {
                name: format!("beta[{}][{}]", row + 1, col + 1),
                transform: Transform::Identity,
                prior: PriorDensity::Normal { mean: normal.mean, var: normal.var },
                block: 0,
                init: if col == 0 { Init::At(normal.mean) } else { Init::PriorDraw },
                fixed: None,
            });
        }
    }
    for row in 0..k {
        defs.push(ParamDef {
            name: format!("gamma[{}]", row + 1),
            transform: Transform::Identity,
            prior: PriorDensity::Normal { mean: spec.gamma.mean, var: spec.gamma.var },
            block: 0,
            init: Init::PriorDraw,
            fixed: None,
        });
    }
    for row in 0..k {
        defs.push(ParamDef {
            name: format!("sigma_delta[{}]", row + 1),
            transform: Transform::LogScale,
            prior: PriorDensity::Uniform { lo: spec.sigma_delta_sd.lo, hi: spec.sigma_delta_sd.hi },
            block: 1,
            init: Init::At(0.5 * (spec.sigma_delta_sd.lo + spec.sigma_delta_sd.hi)),
            fixed: None,
        });
    }
    for row in 0..k {
        defs.push(ParamDef {
            name: format!("sigma_eps[{}]", row + 1),
            transform: Transform::LogScale,
            prior: PriorDensity::Uniform { lo: spec.sigma_eps_sd.lo, hi: spec.sigma_eps_sd.hi },
            block: 1,
            init: Init::At(0.5 * (spec.sigma_eps_sd.lo + spec.sigma_eps_sd.hi)),
            fixed: None,
        });
    }
    for row in 0..k {
        for col in (row + 1)..k {
            defs.push(ParamDef {
                name: format!("rho_eps[{}][{}]", row + 1, col + 1),
                transform: Transform::Tanh,
                prior: PriorDensity::Uniform { lo: spec.rho_eps.lo, hi: spec.rho_eps.hi },
                block: 1,
                init: Init::PriorDraw,
                fixed: None,
            });
        }
    }
    ParamLayout {
        defs,
        block_names: vec!["location".into(), "scales".into()],
        joint_blocks: vec![],
    }
}

/// Rebuilds baseline parameters from constrained values in layout order.
pub fn baseline_params_from_values(dims: &ModelDims, values: &[f64]) -> Option<BaselineParams> {
    let k = dims.outcomes;
    let p = dims.baseline_covariates;
    let n_corr = k * (k - 1) / 2;
    if values.len() != k * p + k + k + k + n_corr {
        return None;
    }
    let mut idx = 0;
    let mut take = |n: usize| {
        let out = &values[idx..idx + n];
        idx += n;
        out
    };
    let beta = DMatrix::from_row_slice(k, p, take(k * p));
    let gamma = DVector::from_column_slice(take(k));
    let sigma_delta = DVector::from_iterator(k, take(k).iter().map(|s| s * s));
    let eps_sds = take(k).to_vec();
    let corr = take(n_corr).to_vec();
    let sigma_eps = crate::types::ThetaParams::sigma_eps_from_sd_corr(&eps_sds, &corr).ok()?;
    if sigma_eps.clone().cholesky().is_none() {
        return None;
    }
    Some(BaselineParams {
        beta,
        gamma,
        sigma_delta,
        sigma_eps,
    })
}

/// Fits a baseline model with the shared blocked random-walk engine.
pub fn fit_baseline(
    records: &[PatientRecord],
    dims: &ModelDims,
    spec: &BaselineModelSpec,
    config: &SamplerConfig,
) -> Result<ChainSet, Error> {
    dims.validate()?;
    spec.validate(dims)?;
    if records.is_empty() && !config.prior_only {
        return Err(Error::InvalidConfig("cannot fit an empty cohort".into()));
    }
    let layout = baseline_layout(dims, spec).with_fixed(&config.fixed)?;
    let engine_config = EngineConfig {
        n_chains: config.n_chains,
        warmup: config.warmup,
        draws: config.draws,
        thin: config.thin,
        seed: config.seed,
    };
    let dims_copy = *dims;
    let prepared = if config.prior_only {
        None
    } else {
        Some(prepare_baseline(records, &spec.summary)?)
    };
    let log_likelihood = move |values: &[f64]| -> f64 {
        let Some(cohort) = &prepared else {
            return 0.0;
        };
        match baseline_params_from_values(&dims_copy, values) {
            Some(params) => match cohort.log_likelihood(&params) {
                Ok(ll) => ll,
                Err(_) => f64::NEG_INFINITY,
            },
            None => f64::NEG_INFINITY,
        }
    };
    let chains = run_blocked_rwm(&layout, &log_likelihood, &engine_config)?;
    Ok(ChainSet {
        param_names: layout.names(),
        chains,
        warmup: config.warmup,
        seed: config.seed,
        fixed_mask: layout.fixed_mask(),
    })
}

/// One cell of the model-comparison report.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Interval excludes zero (the starred-effect convention; for baseline
    /// columns this is the dagger/double-dagger role).
    pub significant: bool,
}

impl CellSummary {
    fn from_draws(mut draws: Vec<f64>, level: f64) -> Self {
        draws.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let lower = quantile(&draws, tail);
        let upper = quantile(&draws, 1.0 - tail);
        Self {
            mean,
            lower,
            upper,
            significant: lower > 0.0 || upper < 0.0,
        }
    }
}

/// Side-by-side posterior comparison of the dynamic model and baseline fits.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub row_labels: Vec<String>,
    pub model_labels: Vec<String>,
    /// `cells[model][row]`.
    pub cells: Vec<Vec<Option<CellSummary>>>,
    pub level: f64,
}

fn cell_for_param(set: &ChainSet, name: &str, level: f64) -> Option<CellSummary> {
    set.param_index(name)
        .map(|idx| CellSummary::from_draws(set.pooled(idx), level))
}

/// Builds the comparison: every dynamic-model parameter row, an adherence
/// row per outcome pairing the daily effect with each baseline's gamma, and
/// the asymptotic adherence effect (dynamic model only), followed by the
/// baseline-only random-effect scales.
pub fn compare_models(
    dlm: &ChainSet,
    dims: &ModelDims,
    baselines: &[(String, &ChainSet)],
    level: f64,
) -> ComparisonReport {
    let k = dims.outcomes;
    let mut row_labels: Vec<String> = dlm.param_names.clone();
    for outcome in 0..k {
        row_labels.push(format!("adherence[{}]", outcome + 1));
        row_labels.push(format!("asymptotic[{}]", outcome + 1));
    }
    for outcome in 0..k {
        row_labels.push(format!("sigma_delta[{}]", outcome + 1));
    }

    let mut model_labels = vec!["dlm".to_string()];
    model_labels.extend(baselines.iter().map(|(label, _)| label.clone()));

    let mut cells: Vec<Vec<Option<CellSummary>>> = Vec::with_capacity(1 + baselines.len());

    let dlm_cells: Vec<Option<CellSummary>> = row_labels
        .iter()
        .map(|row| {
            if let Some(rest) = row.strip_prefix("adherence[") {
                let outcome: usize = rest.trim_end_matches(']').parse().unwrap();
                return cell_for_param(dlm, &format!("phi[{outcome}][1]"), level);
            }
            if let Some(rest) = row.strip_prefix("asymptotic[") {
                let outcome: usize = rest.trim_end_matches(']').parse().unwrap();
                let phi_idx = dlm.param_index(&format!("phi[{outcome}][1]"))?;
                let rho_idx = dlm.param_index(&format!("rho[{outcome}]"))?;
                let phi = dlm.pooled(phi_idx);
                let rho = dlm.pooled(rho_idx);
                let draws: Vec<f64> = phi
                    .iter()
                    .zip(&rho)
                    .map(|(p, r)| p / (1.0 - r))
                    .collect();
                return Some(CellSummary::from_draws(draws, level));
            }
            cell_for_param(dlm, row, level)
        })
        .collect();
    cells.push(dlm_cells);

    for (_, set) in baselines {
        let model_cells: Vec<Option<CellSummary>> = row_labels
            .iter()
            .map(|row| {
                if let Some(rest) = row.strip_prefix("adherence[") {
                    let outcome: usize = rest.trim_end_matches(']').parse().unwrap();
                    return cell_for_param(set, &format!("gamma[{outcome}]"), level);
                }
                if row.starts_with("asymptotic[") {
                    return None;
                }
                cell_for_param(set, row, level)
            })
            .collect();
        cells.push(model_cells);
    }

    ComparisonReport {
        row_labels,
        model_labels,
        cells,
        level,
    }
}

/// Posterior summaries for a baseline fit (same shape as the dynamic model's).
pub fn summarize_baseline(chainset: &ChainSet, level: f64) -> Vec<ParamSummary> {
    crate::sampler::summarize(chainset, level)
}
