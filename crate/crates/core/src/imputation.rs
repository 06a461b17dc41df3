//! Beta-Bernoulli multiple imputation of missing daily adherence.
//!
//! Each patient's adherence rate gets a uniform prior, so the posterior
//! after observing `n_pos` adherent and `n_neg` non-adherent days is
//! Beta(n_pos + 1, n_neg + 1). For each imputed dataset one rate is drawn
//! per patient (days are conditionally i.i.d. given the rate) and missing
//! entries are filled with Bernoulli draws mapped to the +1/-1 coding.
//! The imputation model deliberately uses adherence data alone: no outcomes,
//! no covariates.

use rand::{Rng, RngExt};
use rand_distr::{Beta, Distribution};

use crate::error::Error;
use crate::rng::stream;
use crate::sampler::ChainSet;
use crate::types::PatientRecord;

/// Posterior over one patient's adherence rate: Beta(n_pos+1, n_neg+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdherencePosterior {
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AdherencePosterior {
    pub fn alpha(&self) -> f64 {
        (self.n_pos + 1) as f64
    }

    pub fn beta(&self) -> f64 {
        (self.n_neg + 1) as f64
    }

    /// Posterior mean (n_pos+1)/(n_obs+2).
    pub fn mean(&self) -> f64 {
        self.alpha() / (self.alpha() + self.beta())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        Beta::new(self.alpha(), self.beta())
            .expect("valid Beta parameters")
            .sample(rng)
    }
}

fn column_posterior(record: &PatientRecord, col: usize) -> Result<AdherencePosterior, Error> {
    let mut n_pos = 0usize;
    let mut n_neg = 0usize;
    for day in 1..=record.horizon {
        match record.dynamic.get(day, col) {
            Some(v) if v > 0.0 => n_pos += 1,
            Some(_) => n_neg += 1,
            None => {}
        }
    }
    if n_pos + n_neg == 0 {
        return Err(Error::NoObservedAdherence {
            id: record.id.clone(),
        });
    }
    Ok(AdherencePosterior { n_pos, n_neg })
}

/// Adherence-rate posterior from the observed days of the adherence column
/// (the first dynamic covariate). Errors when every day is missing.
pub fn adherence_posterior(record: &PatientRecord) -> Result<AdherencePosterior, Error> {
    column_posterior(record, 0)
}

/// Fills a record's missing entries using a fixed adherence rate (one shared
/// rate across columns). Mainly a test hook for degenerate-rate cases; the
/// production path draws the rate from its posterior per dataset.
pub fn impute_record_with_rate<R: Rng>(
    record: &PatientRecord,
    rate: f64,
    rng: &mut R,
) -> PatientRecord {
    let mut filled = record.clone();
    for day in 1..=record.horizon {
        for col in 0..record.dynamic.width() {
            if filled.dynamic.get(day, col).is_none() {
                let adherent = rng.random::<f64>() < rate;
                filled
                    .dynamic
                    .set(day, col, Some(if adherent { 1.0 } else { -1.0 }));
            }
        }
    }
    filled
}

fn impute_record<R: Rng>(record: &PatientRecord, rng: &mut R) -> Result<PatientRecord, Error> {
    let mut filled = record.clone();
    for col in 0..record.dynamic.width() {
        let has_missing = (1..=record.horizon).any(|day| record.dynamic.get(day, col).is_none());
        if !has_missing {
            continue;
        }
        let rate = column_posterior(record, col)?.sample(rng);
        for day in 1..=record.horizon {
            if filled.dynamic.get(day, col).is_none() {
                let adherent = rng.random::<f64>() < rate;
                filled
                    .dynamic
                    .set(day, col, Some(if adherent { 1.0 } else { -1.0 }));
            }
        }
    }
    Ok(filled)
}

/// Imputes one record for dataset index `dataset` and patient index
/// `patient` under the root seed; the same coordinates always produce the
/// same fill. Records without missing entries are returned unchanged.
pub fn impute_record_seeded(
    record: &PatientRecord,
    seed: u64,
    dataset: u64,
    patient: u64,
) -> Result<PatientRecord, Error> {
    if !record.has_missing_covariates() {
        return Ok(record.clone());
    }
    let mut rng = stream(seed, dataset, patient);
    impute_record(record, &mut rng)
}

/// Produces `m` complete cohorts: observed entries are copied bit-for-bit,
/// missing entries are imputed from each patient's Beta-Bernoulli posterior
/// with one rate draw per dataset per patient. Deterministic given the seed.
pub fn impute_cohort(
    records: &[PatientRecord],
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<PatientRecord>>, Error> {
    let mut datasets = Vec::with_capacity(m);
    for dataset in 0..m {
        let mut cohort = Vec::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            cohort.push(impute_record_seeded(record, seed, dataset as u64, i as u64)?);
        }
        datasets.push(cohort);
    }
    Ok(datasets)
}

/// Pools per-dataset chain sets into one: chains are concatenated (in dataset
/// order) with their imputation index recorded, so pooled quantiles weight
/// every dataset equally.
pub fn pool_draws(chainsets: Vec<ChainSet>) -> Result<ChainSet, Error> {
    let first = chainsets
        .first()
        .ok_or_else(|| Error::MismatchedParameters("no chain sets to pool".into()))?;
    let names = first.param_names.clone();
    let draws = first.n_draws_per_chain();
    let warmup = first.warmup;
    let seed = first.seed;
    let fixed_mask = first.fixed_mask.clone();
    let mut chains = Vec::new();
    for (idx, set) in chainsets.into_iter().enumerate() {
        if set.param_names != names {
            return Err(Error::MismatchedParameters(format!(
                "chain set {idx} has different parameter names"
            )));
        }
        if set.n_draws_per_chain() != draws {
            return Err(Error::MismatchedParameters(format!(
                "chain set {idx} has {} draws per chain, expected {draws}",
                set.n_draws_per_chain()
            )));
        }
        for mut chain in set.chains {
            chain.imputation_index = Some(idx);
            chains.push(chain);
        }
    }
    Ok(ChainSet {
        param_names: names,
        chains,
        warmup,
        seed,
        fixed_mask,
    })
}

/// Fits the dynamic model under multiple imputation: impute `m` complete
/// cohorts, run the sampler on each (seeds derived per dataset), and pool the
/// draws with equal weight. Cohorts without missing entries collapse to a
/// single ordinary fit.
pub fn fit_multiply_imputed(
    records: &[PatientRecord],
    dims: &crate::types::ModelDims,
    prior: &crate::sampler::PriorSpec,
    config: &crate::sampler::SamplerConfig,
    m: usize,
) -> Result<ChainSet, Error> {
    let any_missing = records.iter().any(PatientRecord::has_missing_covariates);
    if !any_missing {
        return crate::sampler::run_chains(records, dims, prior, config);
    }
    if m == 0 {
        return Err(Error::InvalidConfig("imputation count must be positive".into()));
    }
    let datasets = impute_cohort(records, m, config.seed)?;
    let mut chainsets = Vec::with_capacity(m);
    for (idx, cohort) in datasets.iter().enumerate() {
        let mut dataset_config = config.clone();
        dataset_config.seed = crate::rng::derive_seed(config.seed, 0xF17, idx as u64);
        chainsets.push(crate::sampler::run_chains(cohort, dims, prior, &dataset_config)?);
    }
    pool_draws(chainsets)
}
