//! Statistical checks of the baseline (non-dynamic) models.

use mdlm::baselines::{
    fit_baseline, summarize_adherence, AdherenceSummary, BaselineModelSpec,
};
use mdlm::sampler::SamplerConfig;
use mdlm::{DynamicCovariates, ModelDims, Observation, PatientRecord};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Builds a patient with a chosen fraction of adherent days and outcomes
/// generated as y = beta.x + gamma*cbar + delta + noise.
#[allow(clippy::too_many_arguments)]
fn gen_record(
    id: &str,
    adherent_days: usize,
    horizon: usize,
    x1: f64,
    beta: &[f64],
    gamma: f64,
    sigma_delta: f64,
    sigma_eps: f64,
    n_obs: usize,
    rng: &mut ChaCha8Rng,
) -> PatientRecord {
    let mut adherence = vec![1.0; adherent_days];
    adherence.extend(vec![-1.0; horizon - adherent_days]);
    let cbar = adherence.iter().sum::<f64>() / horizon as f64;
    let delta: f64 = sigma_delta * Distribution::<f64>::sample(&StandardNormal, rng);
    let mean = beta[0] + beta[1] * x1 + gamma * cbar + delta;
    let observations = (0..n_obs)
        .map(|j| Observation {
            day: 1 + (j * horizon / n_obs),
            outcome: 0,
            value: mean + sigma_eps * Distribution::<f64>::sample(&StandardNormal, rng),
        })
        .collect();
    PatientRecord::new(
        id,
        DynamicCovariates::complete_column(&adherence),
        vec![1.0, x1],
        observations,
    )
}

#[test]
fn vanishing_random_effects_reduce_to_least_squares() {
    // sigma_delta pinned at ~0 and sigma_eps known: the model collapses to
    // ordinary linear regression and the posterior mean of (beta, gamma)
    // must match the closed-form estimate within Monte Carlo error.
    let dims = ModelDims::new(1, 2, 1);
    let spec = BaselineModelSpec::default_for(&dims, AdherenceSummary::Average);
    let sigma_eps = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut records = Vec::new();
    for i in 0..20 {
        // spread adherence fractions over the full range so gamma is
        // strongly identified and prior shrinkage is negligible
        let horizon = 30;
        let adherent_days = (i * horizon) / 19;
        let x1: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
        records.push(gen_record(
            &format!("gls{i:02}"),
            adherent_days,
            horizon,
            x1,
            &[120.0, 3.0],
            -5.0,
            0.0,
            sigma_eps,
            3,
            &mut rng,
        ));
    }

    // closed-form least squares on the stacked system
    let n: usize = records.iter().map(|r| r.n_observations()).sum();
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for rec in &records {
        let cbar = summarize_adherence(rec, &AdherenceSummary::Average).unwrap();
        for obs in &rec.observations {
            x[(row, 0)] = 1.0;
            x[(row, 1)] = rec.baseline[1];
            x[(row, 2)] = cbar;
            y[row] = obs.value;
            row += 1;
        }
    }
    let xtx = x.transpose() * &x;
    let gls = xtx.try_inverse().unwrap() * x.transpose() * &y;

    let config = SamplerConfig {
        n_chains: 2,
        warmup: 2_000,
        draws: 10_000,
        seed: 3,
        prior_only: false,
        thin: 1,
        fixed: vec![
            ("sigma_delta[1]".into(), 1e-4),
            ("sigma_eps[1]".into(), sigma_eps),
        ],
    };
    let chains = fit_baseline(&records, &dims, &spec, &config).unwrap();
    for (j, name) in ["beta[1][1]", "beta[1][2]", "gamma[1]"].iter().enumerate() {
        let idx = chains.param_index(name).unwrap();
        let draws = chains.pooled(idx);
        let m = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / m;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        // Monte Carlo error with a conservative effective sample size, plus
        // room for the (tiny) vague-prior shrinkage
        let tol = 4.0 * sd / (1_000f64).sqrt() + 0.02 * sd;
        assert!(
            (mean - gls[j]).abs() < tol,
            "{name}: posterior mean {mean} vs least squares {} (tol {tol})",
            gls[j]
        );
    }
}

#[test]
fn gamma_interval_calibrated_under_null() {
    // Data generated with gamma = 0: the 90% interval for gamma must contain
    // zero in at least 80% of 20 replications.
    let dims = ModelDims::new(1, 2, 1);
    let spec = BaselineModelSpec::default_for(&dims, AdherenceSummary::Average);
    let reps = 20;
    let mut contains_zero = 0usize;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + rep);
        let mut records = Vec::new();
        for i in 0..15 {
            let horizon = 30;
            let adherent_days = 3 + ((i * 7 + rep as usize) % 27);
            let x1: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
            records.push(gen_record(
                &format!("null{i:02}"),
                adherent_days,
                horizon,
                x1,
                &[120.0, 2.0],
                0.0,
                2.0,
                3.0,
                4,
                &mut rng,
            ));
        }
        let config = SamplerConfig {
            n_chains: 2,
            warmup: 800,
            draws: 1_500,
            seed: 900 + rep,
            thin: 1,
            ..Default::default()
        };
        let chains = fit_baseline(&records, &dims, &spec, &config).unwrap();
        let summaries = mdlm::baselines::summarize_baseline(&chains, 0.90);
        let gamma = summaries
            .iter()
            .find(|s| s.name == "gamma[1]")
            .unwrap();
        if gamma.lower <= 0.0 && 0.0 <= gamma.upper {
            contains_zero += 1;
        }
    }
    assert!(
        contains_zero * 5 >= reps as usize * 4,
        "gamma interval contained 0 in only {contains_zero} / {reps}"
    );
}

#[test]
fn prior_only_baseline_recovers_gamma_prior() {
    let dims = ModelDims::new(1, 1, 1);
    let spec = BaselineModelSpec::default_for(&dims, AdherenceSummary::Average);
    let config = SamplerConfig {
        n_chains: 2,
        warmup: 1_000,
        draws: 10_000,
        seed: 12,
        prior_only: true,
        thin: 1,
        ..Default::default()
    };
    let chains = fit_baseline(&[], &dims, &spec, &config).unwrap();
    let idx = chains.param_index("gamma[1]").unwrap();
    let draws = chains.pooled(idx);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.35, "gamma prior mean {mean}");
    assert!((sd - 5.0).abs() / 5.0 < 0.1, "gamma prior sd {sd}");
}

#[test]
fn mixed_rng_helper_is_deterministic() {
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(a.random::<f64>(), b.random::<f64>());
}
