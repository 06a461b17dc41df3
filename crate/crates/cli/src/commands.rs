//! The six workflows behind the subcommands. Each writes its artifacts into
//! the output directory and reports convergence-gate failures through the
//! exit status while still leaving the (flagged) summary on disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mdlm::baselines::{
    compare_models, fit_baseline, AdherenceSummary, BaselineModelSpec,
};
use mdlm::imputation::{fit_multiply_imputed, impute_cohort, impute_record_seeded, pool_draws};
use mdlm::sampler::{summarize, theta_from_values, ChainSet, SamplerConfig};
use mdlm::simkit::{simulate_cohort, HorizonSpec, ObsTimes, SimConfig};
use mdlm::smoother::sample_latent;
use mdlm::types::NO_OBSERVATIONS_FAILURE;
use mdlm::{validate_cohort, ModelDims, PatientRecord, ThetaParams};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::ingest::{emit, ingest, ingest_adherence_only, write_text, Cohort};
use crate::output::{
    read_draws, write_draws, write_report, write_smooth, write_summary, SmoothRow,
};
use crate::CliError;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Cohort validation shared by fitting commands. Writes the per-record
/// report; hard-fails on any failure unless `allow_no_observations`.
fn validate_or_bail(
    cohort: &Cohort,
    out_dir: &Path,
    allow_no_observations: bool,
) -> Result<(), CliError> {
    let report = validate_cohort(&cohort.records, &cohort.dims);
    let mut text = String::new();
    for entry in &report.records {
        if entry.is_valid() {
            let _ = writeln!(text, "{}: ok", entry.id);
        } else {
            let _ = writeln!(text, "{}: {}", entry.id, entry.failures.join("; "));
        }
    }
    write_text(&out_dir.join("validation.txt"), &text)?;
    let blocking: Vec<&str> = report
        .records
        .iter()
        .flat_map(|r| r.failures.iter())
        .filter(|f| !(allow_no_observations && f.as_str() == NO_OBSERVATIONS_FAILURE))
        .map(String::as_str)
        .collect();
    if blocking.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "cohort failed validation ({} problem(s); see validation.txt)",
            blocking.len()
        )))
    }
}

/// True parameters for simulation, from the `[sim]` config section; entries
/// left empty fall back to documented defaults cycled over outcomes.
pub fn sim_theta(config: &RunConfig) -> Result<ThetaParams, CliError> {
    let sim = &config.sim;
    let k = sim.outcomes;
    let p = sim.baseline_covariates;
    let bad = |msg: String| CliError::Validation(format!("config [sim]: {msg}"));

    let beta = if sim.beta.is_empty() {
        DMatrix::from_fn(k, p, |row, col| {
            if col == 0 {
                (120 - 40 * row.min(2)) as f64
            } else if (row + col) % 2 == 0 {
                2.0
            } else {
                -1.0
            }
        })
    } else {
        if sim.beta.len() != k || sim.beta.iter().any(|r| r.len() != p) {
            return Err(bad(format!("beta must be {k} rows of {p} values")));
        }
        DMatrix::from_fn(k, p, |row, col| sim.beta[row][col])
    };
    let rho = if sim.rho.is_empty() {
        DVector::from_fn(k, |row, _| 0.8 - 0.1 * (row % 5) as f64)
    } else {
        if sim.rho.len() != k {
            return Err(bad(format!("rho must have {k} entries")));
        }
        DVector::from_column_slice(&sim.rho)
    };
    let phi = if sim.phi.is_empty() {
        DMatrix::from_fn(k, 1, |row, _| -0.5 + 0.25 * (row % 2) as f64)
    } else {
        if sim.phi.len() != k || sim.phi.iter().any(|r| r.len() != 1) {
            return Err(bad(format!("phi must be {k} rows of 1 value")));
        }
        DMatrix::from_fn(k, 1, |row, _| sim.phi[row][0])
    };
    let eps_sds: Vec<f64> = if sim.sigma_eps_sd.is_empty() {
        (0..k).map(|row| if row == 0 { 13.0 } else { 8.0 }).collect()
    } else {
        if sim.sigma_eps_sd.len() != k {
            return Err(bad(format!("sigma_eps_sd must have {k} entries")));
        }
        sim.sigma_eps_sd.clone()
    };
    let n_corr = k * (k - 1) / 2;
    let corr: Vec<f64> = if sim.rho_eps.is_empty() {
        vec![0.6; n_corr]
    } else {
        if sim.rho_eps.len() != n_corr {
            return Err(bad(format!("rho_eps must have {n_corr} entries")));
        }
        sim.rho_eps.clone()
    };
    let sigma_eps = ThetaParams::sigma_eps_from_sd_corr(&eps_sds, &corr)
        .map_err(|e| bad(e.to_string()))?;
    let sigma_nu = if sim.sigma_nu_sd.is_empty() {
        DVector::from_fn(k, |row, _| if row == 0 { 0.25 } else { 0.16 })
    } else {
        if sim.sigma_nu_sd.len() != k {
            return Err(bad(format!("sigma_nu_sd must have {k} entries")));
        }
        DVector::from_iterator(k, sim.sigma_nu_sd.iter().map(|s| s * s))
    };
    let sigma_0 = if sim.sigma_0_sd.is_empty() {
        DVector::from_fn(k, |row, _| if row == 0 { 25.0 } else { 9.0 })
    } else {
        if sim.sigma_0_sd.len() != k {
            return Err(bad(format!("sigma_0_sd must have {k} entries")));
        }
        DVector::from_iterator(k, sim.sigma_0_sd.iter().map(|s| s * s))
    };
    Ok(ThetaParams {
        beta,
        rho,
        phi,
        sigma_eps,
        sigma_nu,
        sigma_0,
    })
}

pub fn cmd_simulate(config: &RunConfig, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let theta = sim_theta(config)?;
    let dims = ModelDims::new(config.sim.outcomes, config.sim.baseline_covariates, 1);
    let sim = SimConfig {
        dims,
        theta: theta.clone(),
        n_patients: config.sim.patients,
        horizon: HorizonSpec::Fixed(config.sim.horizon),
        adherence_prob: config.sim.adherence_prob,
        observation_times: ObsTimes::FirstPlusRate(config.sim.visit_rate),
        seed,
    };
    let (records, truth) = simulate_cohort(&sim)?;
    let outcome_names: Vec<String> = (1..=dims.outcomes).map(|k| format!("y{k}")).collect();
    let baseline_names: Vec<String> = (1..dims.baseline_covariates)
        .map(|j| format!("x{j}"))
        .collect();
    emit(&records, &outcome_names, &baseline_names, out_dir)?;

    let mut params = String::from("parameter,value\n");
    let names = dlm_param_names(&dims);
    for (name, value) in names.iter().zip(mdlm::sampler::values_from_theta(&theta)) {
        let _ = writeln!(params, "{name},{value}");
    }
    write_text(&out_dir.join("truth_params.csv"), &params)?;

    let mut states = String::from("patient_id,day,outcome,alpha\n");
    for (rec, tr) in records.iter().zip(&truth) {
        for outcome in 0..dims.outcomes {
            for day in 1..=rec.horizon {
                let _ = writeln!(
                    states,
                    "{},{day},{},{}",
                    rec.id,
                    outcome_names[outcome],
                    tr.states[(outcome, day - 1)]
                );
            }
        }
    }
    write_text(&out_dir.join("truth_states.csv"), &states)?;
    Ok(())
}

fn dlm_param_names(dims: &ModelDims) -> Vec<String> {
    let k = dims.outcomes;
    let mut names = Vec::new();
    for row in 1..=k {
        for col in 1..=dims.baseline_covariates {
            names.push(format!("beta[{row}][{col}]"));
        }
    }
    for row in 1..=k {
        for col in 1..=dims.dynamic_covariates {
            names.push(format!("phi[{row}][{col}]"));
        }
    }
    for row in 1..=k {
        names.push(format!("rho[{row}]"));
    }
    for row in 1..=k {
        names.push(format!("sigma_eps[{row}]"));
    }
    for row in 1..=k {
        for col in (row + 1)..=k {
            names.push(format!("rho_eps[{row}][{col}]"));
        }
    }
    for row in 1..=k {
        names.push(format!("sigma_nu[{row}]"));
    }
    for row in 1..=k {
        names.push(format!("sigma_0[{row}]"));
    }
    names
}

pub struct DataPaths {
    pub adherence: PathBuf,
    pub outcomes: PathBuf,
    pub baseline: PathBuf,
}

pub fn cmd_fit(
    config: &RunConfig,
    seed: u64,
    paths: &DataPaths,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let cohort = ingest(&paths.adherence, &paths.outcomes, &paths.baseline)?;
    validate_or_bail(&cohort, out_dir, false)?;
    let prior = config.prior_spec(cohort.dims.outcomes);
    let sampler_config = config.sampler_config(seed);
    let chains = fit_multiply_imputed(
        &cohort.records,
        &cohort.dims,
        &prior,
        &sampler_config,
        config.imputation.m,
    )?;
    write_draws(&out_dir.join("draws.csv"), &chains)?;
    let summaries = summarize(&chains, 0.90);
    write_summary(&out_dir.join("summary.csv"), &summaries)?;
    if chains.converged() {
        Ok(())
    } else {
        Err(CliError::Convergence(format!(
            "max R-hat {:.4} is at or above the 1.1 gate (summary written and flagged)",
            chains.max_rhat()
        )))
    }
}

fn baseline_summary_mode(mode: &str, threshold: f64) -> AdherenceSummary {
    match mode {
        "dichotomized" => AdherenceSummary::Dichotomized { threshold },
        _ => AdherenceSummary::Average,
    }
}

fn fit_baseline_multiimpute(
    records: &[PatientRecord],
    dims: &ModelDims,
    spec: &BaselineModelSpec,
    config: &SamplerConfig,
    m: usize,
) -> Result<ChainSet, CliError> {
    let any_missing = records.iter().any(PatientRecord::has_missing_covariates);
    if !any_missing {
        return Ok(fit_baseline(records, dims, spec, config)?);
    }
    let datasets = impute_cohort(records, m, config.seed)?;
    let mut chainsets = Vec::with_capacity(m);
    for (idx, cohort) in datasets.iter().enumerate() {
        let mut dataset_config = config.clone();
        dataset_config.seed = config.seed.wrapping_add(0x9E37_79B9).wrapping_mul(idx as u64 + 1);
        chainsets.push(fit_baseline(cohort, dims, spec, &dataset_config)?);
    }
    Ok(pool_draws(chainsets)?)
}

pub fn cmd_baseline(
    config: &RunConfig,
    seed: u64,
    paths: &DataPaths,
    mode: &str,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let cohort = ingest(&paths.adherence, &paths.outcomes, &paths.baseline)?;
    validate_or_bail(&cohort, out_dir, false)?;
    let sampler_config = config.sampler_config(seed);
    let thresholds: Vec<f64> = if mode == "dichotomized" {
        config.baseline.thresholds.clone()
    } else {
        vec![f64::NAN] // unused for the average summary
    };
    let mut gate_failure = None;
    for (idx, threshold) in thresholds.iter().enumerate() {
        let summary_mode = baseline_summary_mode(mode, *threshold);
        let spec = BaselineModelSpec {
            summary: summary_mode,
            ..BaselineModelSpec::default_for(&cohort.dims, summary_mode)
        };
        let chains = fit_baseline_multiimpute(
            &cohort.records,
            &cohort.dims,
            &spec,
            &sampler_config,
            config.imputation.m,
        )?;
        let (draws_name, summary_name) = if idx == 0 {
            ("draws.csv".to_string(), "summary.csv".to_string())
        } else {
            let pct = (threshold * 100.0).round() as i64;
            (format!("draws_p{pct}.csv"), format!("summary_p{pct}.csv"))
        };
        write_draws(&out_dir.join(draws_name), &chains)?;
        write_summary(&out_dir.join(summary_name), &summarize(&chains, 0.90))?;
        if !chains.converged() && gate_failure.is_none() {
            gate_failure = Some(chains.max_rhat());
        }
    }
    match gate_failure {
        None => Ok(()),
        Some(rhat) => Err(CliError::Convergence(format!(
            "max R-hat {rhat:.4} is at or above the 1.1 gate (summary written and flagged)"
        ))),
    }
}

/// Infers model dimensions from the parameter names of a draws file.
fn dims_from_names(names: &[String]) -> Result<ModelDims, CliError> {
    let mut outcomes = 0usize;
    let mut p = 0usize;
    let mut r = 0usize;
    for name in names {
        if let Some(rest) = name.strip_prefix("beta[") {
            let body = rest.trim_end_matches(']');
            let mut it = body.split("][");
            let row: usize = it.next().unwrap_or("0").parse().unwrap_or(0);
            let col: usize = it.next().unwrap_or("0").parse().unwrap_or(0);
            outcomes = outcomes.max(row);
            p = p.max(col);
        }
        if let Some(rest) = name.strip_prefix("phi[") {
            let body = rest.trim_end_matches(']');
            let col: usize = body.split("][").nth(1).unwrap_or("0").parse().unwrap_or(0);
            r = r.max(col);
        }
    }
    if outcomes == 0 || p == 0 {
        return Err(CliError::Validation(
            "draws file does not contain beta parameters".into(),
        ));
    }
    Ok(ModelDims::new(outcomes, p, r.max(1)))
}

pub fn cmd_smooth(
    config: &RunConfig,
    seed: u64,
    paths: &DataPaths,
    draws_file: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let cohort = ingest(&paths.adherence, &paths.outcomes, &paths.baseline)?;
    validate_or_bail(&cohort, out_dir, true)?;
    let chains = read_draws(draws_file)?;
    let dims = dims_from_names(&chains.param_names)?;
    if dims.outcomes != cohort.dims.outcomes || dims.baseline_covariates != cohort.dims.baseline_covariates
    {
        return Err(CliError::Validation(format!(
            "draws file dimensions (K={}, p={}) do not match the cohort (K={}, p={})",
            dims.outcomes,
            dims.baseline_covariates,
            cohort.dims.outcomes,
            cohort.dims.baseline_covariates
        )));
    }

    // evenly spaced subsample of the pooled draws
    let total = chains.total_draws();
    let n_keep = config.smooth.draws.min(total);
    let thetas: Vec<ThetaParams> = (0..n_keep)
        .map(|j| {
            let pooled_index = j * total / n_keep;
            let values = chains.draw_values(pooled_index);
            theta_from_values(&dims, &values).ok_or_else(|| {
                CliError::Validation("draws file has an unusable parameter vector".into())
            })
        })
        .collect::<Result<_, _>>()?;

    let tail = 0.5 * (1.0 - config.smooth.level);
    let rows: Vec<Vec<SmoothRow>> = cohort
        .records
        .par_iter()
        .enumerate()
        .map(|(i, record)| -> Result<Vec<SmoothRow>, CliError> {
            let horizon = record.horizon;
            let k = dims.outcomes;
            let mut mu = vec![vec![Vec::with_capacity(thetas.len()); horizon]; k];
            for (d, theta) in thetas.iter().enumerate() {
                let filled = impute_record_seeded(record, seed ^ 0xAD4E, d as u64, i as u64)?;
                let mut rng = mdlm::smoother::draw_stream(seed, d, i);
                let alpha = sample_latent(&filled, theta, &mut rng)?;
                let x = DVector::from_column_slice(&record.baseline);
                let shift = &theta.beta * &x;
                for outcome in 0..k {
                    for day in 1..=horizon {
                        mu[outcome][day - 1]
                            .push(shift[outcome] + alpha[outcome * horizon + day - 1]);
                    }
                }
            }
            let mut out = Vec::with_capacity(k * horizon);
            for outcome in 0..k {
                for day in 1..=horizon {
                    let draws = &mut mu[outcome][day - 1];
                    draws.sort_by(f64::total_cmp);
                    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
                    out.push(SmoothRow {
                        patient_id: record.id.clone(),
                        day,
                        outcome: cohort.outcome_names[outcome].clone(),
                        post_mean: mean,
                        q05: mdlm::sampler::quantile(draws, tail),
                        q95: mdlm::sampler::quantile(draws, 1.0 - tail),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let flat: Vec<SmoothRow> = rows.into_iter().flatten().collect();
    write_smooth(&out_dir.join("smooth.csv"), &flat)
}

pub fn cmd_impute(
    config: &RunConfig,
    seed: u64,
    adherence_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let records = ingest_adherence_only(adherence_path)?;
    let datasets = impute_cohort(&records, config.imputation.m, seed)?;
    let mut text = String::from("imputation,patient_id,day,adherent\n");
    for (m, cohort) in datasets.iter().enumerate() {
        for rec in cohort {
            for day in 1..=rec.horizon {
                let v = match rec.dynamic.get(day, 0) {
                    Some(v) if v > 0.0 => 1,
                    _ => 0,
                };
                let _ = writeln!(text, "{},{},{day},{v}", m + 1, rec.id);
            }
        }
    }
    write_text(&out_dir.join("imputed_adherence.csv"), &text)
}

pub fn cmd_compare(
    dlm_draws: &Path,
    baseline_draws: &[(String, PathBuf)],
    level: f64,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Validation("level must lie in (0,1)".into()));
    }
    let dlm = read_draws(dlm_draws)?;
    let dims = dims_from_names(&dlm.param_names)?;
    let baselines: Vec<(String, ChainSet)> = baseline_draws
        .iter()
        .map(|(label, path)| Ok((label.clone(), read_draws(path)?)))
        .collect::<Result<_, CliError>>()?;
    let refs: Vec<(String, &ChainSet)> = baselines
        .iter()
        .map(|(label, set)| (label.clone(), set))
        .collect();
    let report = compare_models(&dlm, &dims, &refs, level);
    write_report(&out_dir.join("report.csv"), &report)
}
