//! Synthetic cohort generation from the generative model, plus an independent
//! Kalman filter / fixed-interval smoother used as a verification oracle.
//!
//! The oracle computes the observed-data log-likelihood by prediction-error
//! decomposition and latent posteriors by forward-filter backward-smoothing.
//! It deliberately shares no code with the `marginal` and `smoother` modules:
//! agreement between the two routes is the correctness argument for both.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::rng::stream;
use crate::types::{
    CanonicalObs, DynamicCovariates, ModelDims, Observation, PatientRecord, ThetaParams,
};

const LN_2PI: f64 = 1.8378770664093453;

/// Default per-day probability of a clinic visit after the first day,
/// approximating 2-3 visits over a ~98-day tracking period.
pub const DEFAULT_VISIT_RATE: f64 = 3.0 / 98.0;

/// Horizon distribution for simulated patients.
#[derive(Debug, Clone)]
pub enum HorizonSpec {
    Fixed(usize),
    /// Uniform over `lo..=hi`.
    Uniform { lo: usize, hi: usize },
}

/// Observation-time process for simulated patients.
#[derive(Debug, Clone)]
pub enum ObsTimes {
    /// Day 1 is always observed; each later day is observed independently
    /// with the given rate.
    FirstPlusRate(f64),
    /// Observe exactly these days (1-based; out-of-horizon days are dropped).
    FixedDays(Vec<usize>),
}

/// Configuration for [`simulate_cohort`].
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dims: ModelDims,
    pub theta: ThetaParams,
    pub n_patients: usize,
    pub horizon: HorizonSpec,
    /// Probability that a dynamic covariate entry is +1 rather than -1.
    pub adherence_prob: f64,
    pub observation_times: ObsTimes,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.dims.validate()?;
        if !(0.0..=1.0).contains(&self.adherence_prob) {
            return Err(Error::InvalidConfig("adherence_prob must be in [0,1]".into()));
        }
        match &self.horizon {
            HorizonSpec::Fixed(t) if *t >= 1 => {}
            HorizonSpec::Uniform { lo, hi } if *lo >= 1 && lo <= hi => {}
            _ => return Err(Error::InvalidConfig("horizon must be at least 1".into())),
        }
        if let ObsTimes::FirstPlusRate(rate) = &self.observation_times {
            if !(0.0..=1.0).contains(rate) {
                return Err(Error::InvalidConfig("visit rate must be in [0,1]".into()));
            }
        }
        Ok(())
    }
}

/// Ground-truth latent states for one simulated patient (outcome-major rows).
#[derive(Debug, Clone)]
pub struct TrueLatent {
    /// K x T matrix of simulated alpha values.
    pub states: DMatrix<f64>,
}

/// Simulates a cohort by running the generative model forward, returning the
/// records together with the true latent states. Deterministic given the
/// config seed. Zero variances are permitted here (the generative direction
/// has no positivity requirement), which supports noiseless edge cases.
pub fn simulate_cohort(config: &SimConfig) -> Result<(Vec<PatientRecord>, Vec<TrueLatent>), Error> {
    config.validate()?;
    let k = config.dims.outcomes;
    let p = config.dims.baseline_covariates;
    let r = config.dims.dynamic_covariates;
    let theta = &config.theta;

    let eps_chol = if theta.sigma_eps.amax() == 0.0 {
        None
    } else {
        Some(
            theta
                .sigma_eps
                .clone()
                .cholesky()
                .ok_or(Error::NumericallySingular)?,
        )
    };

    let mut records = Vec::with_capacity(config.n_patients);
    let mut truths = Vec::with_capacity(config.n_patients);
    for i in 0..config.n_patients {
        let mut rng = stream(config.seed, 0x51, i as u64);
        let horizon = match &config.horizon {
            HorizonSpec::Fixed(t) => *t,
            HorizonSpec::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
        };

        let mut covariates = Vec::with_capacity(horizon * r);
        for _ in 0..horizon * r {
            let adherent = rng.random::<f64>() < config.adherence_prob;
            covariates.push(Some(if adherent { 1.0 } else { -1.0 }));
        }
        let dynamic = DynamicCovariates::new(horizon, r, covariates)?;
        let complete = dynamic.require_complete()?;

        let mut baseline = Vec::with_capacity(p);
        baseline.push(1.0);
        for _ in 1..p {
            baseline.push(StandardNormal.sample(&mut rng));
        }

        // Latent AR(1) forward pass; day 1 carries no covariate drive.
        let mut states = DMatrix::zeros(k, horizon);
        for outcome in 0..k {
            let z: f64 = StandardNormal.sample(&mut rng);
            states[(outcome, 0)] = theta.sigma_0[outcome].sqrt() * z;
        }
        for t in 1..horizon {
            let row = complete.day_row(t + 1);
            for outcome in 0..k {
                let drive: f64 = (0..r).map(|j| theta.phi[(outcome, j)] * row[j]).sum();
                let z: f64 = StandardNormal.sample(&mut rng);
                states[(outcome, t)] = theta.rho[outcome] * states[(outcome, t - 1)]
                    + drive
                    + theta.sigma_nu[outcome].sqrt() * z;
            }
        }

        let mut visit_days: Vec<usize> = match &config.observation_times {
            ObsTimes::FirstPlusRate(rate) => {
                let mut days = vec![1usize];
                for day in 2..=horizon {
                    if rng.random::<f64>() < *rate {
                        days.push(day);
                    }
                }
                days
            }
            ObsTimes::FixedDays(days) => {
                days.iter().copied().filter(|d| *d >= 1 && *d <= horizon).collect()
            }
        };
        visit_days.sort_unstable();

        let x = DVector::from_column_slice(&baseline);
        let shift = &theta.beta * &x;
        let mut observations = Vec::with_capacity(visit_days.len() * k);
        for &day in &visit_days {
            let noise = match &eps_chol {
                Some(chol) => {
                    let z = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut rng)));
                    chol.l() * z
                }
                None => DVector::zeros(k),
            };
            for outcome in 0..k {
                observations.push(Observation {
                    day,
                    outcome,
                    value: shift[outcome] + states[(outcome, day - 1)] + noise[outcome],
                });
            }
        }

        records.push(PatientRecord::new(
            format!("sim{i:05}"),
            dynamic,
            baseline,
            observations,
        ));
        truths.push(TrueLatent { states });
    }
    Ok((records, truths))
}

/// Observation triples for one day, grouped into measurement events.
struct DayObs {
    day: usize,
    triples: Vec<CanonicalObs>,
}

fn group_by_day(canon: &[CanonicalObs]) -> Vec<DayObs> {
    let mut days: Vec<DayObs> = Vec::new();
    for obs in canon {
        match days.last_mut() {
            Some(d) if d.day == obs.day => d.triples.push(*obs),
            _ => days.push(DayObs {
                day: obs.day,
                triples: vec![*obs],
            }),
        }
    }
    days
}

/// Builds the day-t measurement pieces: selection matrix H, mean shift b,
/// noise covariance R, and the stacked values y. Same-day triples share a
/// sampling-error draw exactly when they share a replicate index.
fn day_system(
    day: &DayObs,
    theta: &ThetaParams,
    shift: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let k = theta.outcomes();
    let n = day.triples.len();
    let mut h = DMatrix::zeros(n, k);
    let mut b = DVector::zeros(n);
    let mut r = DMatrix::zeros(n, n);
    let mut y = DVector::zeros(n);
    for (a, oa) in day.triples.iter().enumerate() {
        h[(a, oa.outcome)] = 1.0;
        b[a] = shift[oa.outcome];
        y[a] = oa.value;
        for (bidx, ob) in day.triples.iter().enumerate() {
            if oa.replicate == ob.replicate {
                r[(a, bidx)] = theta.sigma_eps[(oa.outcome, ob.outcome)];
            }
        }
    }
    (h, b, r, y)
}

struct FilterPass {
    log_likelihood: f64,
    pred_mean: Vec<DVector<f64>>,
    pred_cov: Vec<DMatrix<f64>>,
    filt_mean: Vec<DVector<f64>>,
    filt_cov: Vec<DMatrix<f64>>,
}

fn forward_filter(record: &PatientRecord, theta: &ThetaParams) -> Result<FilterPass, Error> {
    let k = theta.outcomes();
    let horizon = record.horizon;
    let complete = record.complete_dynamics()?;
    let x = DVector::from_column_slice(&record.baseline);
    let shift = &theta.beta * &x;
    let canon = record.canonical_observations();
    let days = group_by_day(&canon);
    let mut day_idx = 0usize;

    let transition = DMatrix::from_diagonal(&theta.rho);
    let innovation = DMatrix::from_diagonal(&theta.sigma_nu);

    let mut pred_mean = Vec::with_capacity(horizon);
    let mut pred_cov = Vec::with_capacity(horizon);
    let mut filt_mean = Vec::with_capacity(horizon);
    let mut filt_cov = Vec::with_capacity(horizon);
    let mut log_likelihood = 0.0;

    let mut mean = DVector::<f64>::zeros(k);
    let mut cov = DMatrix::from_diagonal(&theta.sigma_0);

    for t in 1..=horizon {
        if t > 1 {
            let row = complete.day_row(t);
            let mut drive = DVector::zeros(k);
            for outcome in 0..k {
                drive[outcome] = (0..row.len())
                    .map(|j| theta.phi[(outcome, j)] * row[j])
                    .sum();
            }
            mean = &transition * &mean + drive;
            cov = &transition * &cov * transition.transpose() + &innovation;
        }
        pred_mean.push(mean.clone());
        pred_cov.push(cov.clone());

        if day_idx < days.len() && days[day_idx].day == t {
            let (h, b, r, y) = day_system(&days[day_idx], theta, &shift);
            let n = y.len();
            let innov = &y - (&b + &h * &mean);
            let s = &h * &cov * h.transpose() + &r;
            let chol = s.clone().cholesky().ok_or(Error::NumericallySingular)?;
            let half = chol
                .l()
                .solve_lower_triangular(&innov)
                .ok_or(Error::NumericallySingular)?;
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            log_likelihood += -0.5 * (n as f64 * LN_2PI + log_det + half.norm_squared());

            // gain = P H' S^{-1}
            let gain = (chol.solve(&(&h * &cov))).transpose();
            mean += &gain * innov;
            // Joseph-form covariance update
            let ikh = DMatrix::<f64>::identity(k, k) - &gain * &h;
            cov = &ikh * &cov * ikh.transpose() + &gain * &r * gain.transpose();
            day_idx += 1;
        }
        filt_mean.push(mean.clone());
        filt_cov.push(cov.clone());
    }

    Ok(FilterPass {
        log_likelihood,
        pred_mean,
        pred_cov,
        filt_mean,
        filt_cov,
    })
}

/// Observed-data log-likelihood by sequential prediction-error decomposition.
/// Equals the marginal-likelihood route in exact arithmetic.
pub fn kalman_loglik(record: &PatientRecord, theta: &ThetaParams) -> Result<f64, Error> {
    if record.observations.is_empty() {
        return Err(Error::NoObservations {
            id: record.id.clone(),
        });
    }
    Ok(forward_filter(record, theta)?.log_likelihood)
}

/// Per-day posterior moments of the latent states from the oracle smoother.
#[derive(Debug, Clone)]
pub struct SmoothedStates {
    /// `mean[k][t-1]` is the posterior mean of alpha on day t for outcome k.
    pub mean: Vec<Vec<f64>>,
    /// `var[k][t-1]` is the posterior variance of alpha on day t for outcome k.
    pub var: Vec<Vec<f64>>,
}

/// Fixed-interval smoother: forward filter then Rauch-Tung-Striebel backward
/// pass, treating unobserved days as missing.
pub fn kalman_smoother(record: &PatientRecord, theta: &ThetaParams) -> Result<SmoothedStates, Error> {
    let pass = forward_filter(record, theta)?;
    let k = theta.outcomes();
    let horizon = record.horizon;
    let transition = DMatrix::from_diagonal(&theta.rho);

    let mut smooth_mean = vec![DVector::<f64>::zeros(k); horizon];
    let mut smooth_cov = vec![DMatrix::<f64>::zeros(k, k); horizon];
    smooth_mean[horizon - 1] = pass.filt_mean[horizon - 1].clone();
    smooth_cov[horizon - 1] = pass.filt_cov[horizon - 1].clone();

    for t in (0..horizon - 1).rev() {
        let pred_next_cov = &pass.pred_cov[t + 1];
        // C_t = P_t|t A' (P_{t+1|t})^{-1}
        let gain = match pred_next_cov.clone().cholesky() {
            Some(chol) => chol
                .solve(&(&transition * &pass.filt_cov[t]))
                .transpose(),
            // Degenerate prediction covariance: no information flows back.
            None => DMatrix::zeros(k, k),
        };
        smooth_mean[t] = &pass.filt_mean[t]
            + &gain * (&smooth_mean[t + 1] - &pass.pred_mean[t + 1]);
        smooth_cov[t] = &pass.filt_cov[t]
            + &gain * (&smooth_cov[t + 1] - pred_next_cov) * gain.transpose();
    }

    let mut mean = vec![vec![0.0; horizon]; k];
    let mut var = vec![vec![0.0; horizon]; k];
    for t in 0..horizon {
        for outcome in 0..k {
            mean[outcome][t] = smooth_mean[t][outcome];
            var[outcome][t] = smooth_cov[t][(outcome, outcome)];
        }
    }
    Ok(SmoothedStates { mean, var })
}
