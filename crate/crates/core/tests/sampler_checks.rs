//! Statistical checks of the posterior sampler: a conjugate restriction with
//! a closed-form answer, prior recovery through the transforms, and
//! desk-scale interval calibration on simulated cohorts.

use mdlm::marginal::{assemble_marginal, subset_to_observations};
use mdlm::sampler::{run_chains, summarize, PriorSpec, SamplerConfig};
use mdlm::simkit::{simulate_cohort, HorizonSpec, ObsTimes, SimConfig};
use mdlm::{DynamicCovariates, ModelDims, Observation, PatientRecord, ThetaParams};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist, Uniform as UniformDist};

fn ks_statistic<F: Fn(f64) -> f64>(draws: &mut [f64], cdf: F) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, x) in draws.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        worst = worst.max((f - lo).abs()).max((hi - f).abs());
    }
    worst
}

#[test]
fn conjugate_restriction_matches_closed_form() {
    // Fix everything except beta on one patient. The marginal likelihood is
    // Gaussian with known covariance, the prior is Gaussian, so the beta
    // posterior is Gaussian in closed form.
    let dims = ModelDims::new(1, 2, 1);
    let prior = PriorSpec::default_for(&dims);
    let theta_fixed = ThetaParams {
        beta: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
        rho: DVector::from_vec(vec![0.6]),
        phi: DMatrix::from_vec(1, 1, vec![0.3]),
        sigma_eps: DMatrix::from_vec(1, 1, vec![4.0]),
        sigma_nu: DVector::from_vec(vec![0.64]),
        sigma_0: DVector::from_vec(vec![2.25]),
    };
    let record = PatientRecord::new(
        "conj",
        DynamicCovariates::complete_column(&[1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0]),
        vec![1.0, 0.5],
        vec![
            Observation { day: 1, outcome: 0, value: 121.0 },
            Observation { day: 3, outcome: 0, value: 119.5 },
            Observation { day: 5, outcome: 0, value: 122.5 },
            Observation { day: 8, outcome: 0, value: 120.2 },
        ],
    );

    // closed form: (y - E_obs) ~ N(X beta, S)
    let moments = assemble_marginal(&record, &theta_fixed).unwrap();
    let (mean0, s) = subset_to_observations(&moments);
    let y = moments.observed_values() - mean0; // strips E_obs (beta = 0 here)
    let x = DMatrix::from_fn(4, 2, |_, j| record.baseline[j]);
    let s_inv = s.clone().try_inverse().unwrap();
    let prior_prec = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 400.0, 1.0 / 400.0]));
    let prior_mean = DVector::from_vec(vec![120.0, 0.0]);
    let post_prec = &prior_prec + x.transpose() * &s_inv * &x;
    let post_cov = post_prec.try_inverse().unwrap();
    let post_mean = &post_cov * (prior_prec * prior_mean + x.transpose() * &s_inv * y);

    let config = SamplerConfig {
        n_chains: 2,
        warmup: 2_000,
        draws: 20_000,
        thin: 1,
        seed: 61,
        prior_only: false,
        fixed: vec![
            ("phi[1][1]".into(), 0.3),
            ("rho[1]".into(), 0.6),
            ("sigma_eps[1]".into(), 2.0),
            ("sigma_nu[1]".into(), 0.8),
            ("sigma_0[1]".into(), 1.5),
        ],
    };
    let chains = run_chains(std::slice::from_ref(&record), &dims, &prior, &config).unwrap();
    for (j, name) in ["beta[1][1]", "beta[1][2]"].iter().enumerate() {
        let idx = chains.param_index(name).unwrap();
        let draws = chains.pooled(idx);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let want_mean = post_mean[j];
        let want_sd = post_cov[(j, j)].sqrt();
        // three Monte Carlo standard errors at a conservative effective
        // sample size of ~1,500
        let mc_se = want_sd / 1_500f64.sqrt();
        assert!(
            (mean - want_mean).abs() < 3.0 * mc_se,
            "{name}: mean {mean} vs {want_mean} (3 mcse {})",
            3.0 * mc_se
        );
        assert!(
            (sd - want_sd).abs() / want_sd < 0.10,
            "{name}: sd {sd} vs {want_sd}"
        );
    }
}

#[test]
fn prior_only_sampling_recovers_every_prior_marginal() {
    // Transform correctness: with the likelihood disabled, each default
    // prior marginal must be reproduced (KS < 0.02 on 50,000 pooled draws).
    let dims = ModelDims::new(2, 1, 1);
    let prior = PriorSpec::default_for(&dims);
    let config = SamplerConfig {
        n_chains: 4,
        warmup: 3_000,
        draws: 12_500,
        thin: 8,
        seed: 1234,
        prior_only: true,
        fixed: vec![],
    };
    let chains = run_chains(&[], &dims, &prior, &config).unwrap();
    assert_eq!(chains.total_draws(), 50_000);

    let normal_cdf = |mean: f64, var: f64| {
        let d = NormalDist::new(mean, var.sqrt()).unwrap();
        move |x: f64| d.cdf(x)
    };
    let uniform_cdf = |lo: f64, hi: f64| {
        let d = UniformDist::new(lo, hi).unwrap();
        move |x: f64| d.cdf(x)
    };

    let checks: Vec<(&str, Box<dyn Fn(f64) -> f64>)> = vec![
        ("beta[1][1]", Box::new(normal_cdf(120.0, 400.0))),
        ("beta[2][1]", Box::new(normal_cdf(80.0, 400.0))),
        ("phi[1][1]", Box::new(normal_cdf(0.0, 25.0))),
        ("phi[2][1]", Box::new(normal_cdf(0.0, 25.0))),
        ("rho[1]", Box::new(uniform_cdf(-1.0, 1.0))),
        ("rho[2]", Box::new(uniform_cdf(-1.0, 1.0))),
        ("sigma_eps[1]", Box::new(uniform_cdf(0.0, 30.0))),
        ("sigma_eps[2]", Box::new(uniform_cdf(0.0, 30.0))),
        ("rho_eps[1][2]", Box::new(uniform_cdf(-1.0, 1.0))),
        ("sigma_nu[1]", Box::new(uniform_cdf(0.0, 10.0))),
        ("sigma_nu[2]", Box::new(uniform_cdf(0.0, 10.0))),
        ("sigma_0[1]", Box::new(uniform_cdf(0.0, 30.0))),
        ("sigma_0[2]", Box::new(uniform_cdf(0.0, 30.0))),
    ];
    for (name, cdf) in checks {
        let idx = chains.param_index(name).unwrap();
        let mut draws = chains.pooled(idx);
        let ks = ks_statistic(&mut draws, cdf);
        assert!(ks < 0.02, "{name}: KS statistic {ks}");
    }
}

#[test]
fn uninformative_data_leaves_phi_at_its_prior() {
    // One observation on day 1 never touches phi (the day-1 state has no
    // covariate drive), so the phi posterior is its N(0,25) prior.
    let dims = ModelDims::new(1, 1, 1);
    let prior = PriorSpec::default_for(&dims);
    let record = PatientRecord::new(
        "flat",
        DynamicCovariates::complete_column(&[1.0, -1.0, 1.0]),
        vec![1.0],
        vec![Observation { day: 1, outcome: 0, value: 150.0 }],
    );
    let config = SamplerConfig {
        n_chains: 2,
        warmup: 2_000,
        draws: 25_000,
        seed: 5150,
        thin: 1,
        ..Default::default()
    };
    let chains = run_chains(std::slice::from_ref(&record), &dims, &prior, &config).unwrap();
    let idx = chains.param_index("phi[1][1]").unwrap();
    let draws = chains.pooled(idx);
    assert_eq!(draws.len(), 50_000);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd - 5.0).abs() / 5.0 < 0.10, "phi sample sd {sd}, want ~5");
    assert!(mean.abs() < 0.5, "phi sample mean {mean}, want ~0");
}

#[test]
fn desk_scale_interval_calibration() {
    // 20 simulated cohorts from a known truth; each scalar parameter's 90%
    // interval must cover the truth in at least 80% of replications. The
    // design needs enough visits per patient to identify the variance split,
    // otherwise fixed-truth coverage of the ridge parameters is meaningless.
    let dims = ModelDims::new(1, 2, 1);
    let truth = ThetaParams {
        beta: DMatrix::from_row_slice(1, 2, &[118.0, 3.0]),
        rho: DVector::from_vec(vec![0.6]),
        phi: DMatrix::from_vec(1, 1, vec![-0.4]),
        sigma_eps: DMatrix::from_vec(1, 1, vec![6.25]),
        sigma_nu: DVector::from_vec(vec![0.64]),
        sigma_0: DVector::from_vec(vec![4.0]),
    };
    let truth_values = mdlm::sampler::values_from_theta(&truth);
    let prior = PriorSpec::default_for(&dims);
    let reps = 20;
    let mut covered = vec![0usize; truth_values.len()];
    let mut names: Vec<String> = Vec::new();
    for rep in 0..reps {
        let sim = SimConfig {
            dims,
            theta: truth.clone(),
            n_patients: 40,
            horizon: HorizonSpec::Fixed(40),
            adherence_prob: 0.85,
            observation_times: ObsTimes::FirstPlusRate(0.3),
            seed: 51_000 + rep as u64,
        };
        let (records, _) = simulate_cohort(&sim).unwrap();
        let config = SamplerConfig {
            n_chains: 2,
            warmup: 1_200,
            draws: 2_500,
            seed: 40 + rep as u64,
            thin: 1,
            ..Default::default()
        };
        let chains = run_chains(&records, &dims, &prior, &config).unwrap();
        let summaries = summarize(&chains, 0.90);
        if names.is_empty() {
            names = summaries.iter().map(|s| s.name.clone()).collect();
        }
        for (p, s) in summaries.iter().enumerate() {
            if s.lower <= truth_values[p] && truth_values[p] <= s.upper {
                covered[p] += 1;
            }
        }
    }
    // fixed-threshold binomial gate at n=20 is noisy at ~90% true
    // coverage, so the simulation seed is pinned; the pooled rate below is
    // the stable aggregate signal
    for (p, name) in names.iter().enumerate() {
        assert!(
            covered[p] * 5 >= reps * 4,
            "{name}: covered {} / {reps}",
            covered[p]
        );
    }
    let pooled: usize = covered.iter().sum();
    let total = reps * covered.len();
    assert!(
        (pooled as f64) / (total as f64) >= 0.85,
        "pooled coverage {pooled}/{total}"
    );
}
