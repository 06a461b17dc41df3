//! Closed-form conditional posterior of the latent states given the
//! non-dynamic parameters and observed outcomes, plus composition sampling
//! of (theta, alpha).
//!
//! The joint distribution of latent states and observed values is Gaussian
//! with zero covariance between the states of one outcome and the
//! observations of another, so conditioning reduces to one solve against the
//! observed-system covariance. States are inferred on the full day grid
//! whether or not a day was observed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Error;
use crate::linalg::{cholesky_with_jitter, sample_mvn, symmetrize};
use crate::marginal::{assemble_marginal, MarginalMoments};
use crate::rng::stream;
use crate::types::{PatientRecord, ThetaParams};

/// Conditional posterior of the stacked latent states (outcome-major,
/// `K*T` entries) given theta and the record's observations.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    outcomes: usize,
    horizon: usize,
    /// Posterior mean of the stacked latent states.
    pub mean: DVector<f64>,
    /// Posterior covariance of the stacked latent states.
    pub cov: DMatrix<f64>,
}

impl LatentPosterior {
    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The full day grid states are inferred on (1-based, every day).
    pub fn day_grid(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.horizon
    }

    pub fn grid_row(&self, outcome: usize, day: usize) -> usize {
        outcome * self.horizon + (day - 1)
    }

    pub fn mean_at(&self, outcome: usize, day: usize) -> f64 {
        self.mean[self.grid_row(outcome, day)]
    }

    pub fn var_at(&self, outcome: usize, day: usize) -> f64 {
        let row = self.grid_row(outcome, day);
        self.cov[(row, row)]
    }
}

/// Cross-covariance between the full latent grid and the observed rows.
/// Entries pairing different outcomes are exactly zero.
fn latent_obs_cross_cov(moments: &MarginalMoments) -> DMatrix<f64> {
    let horizon = moments.horizon();
    let rows = moments.outcomes() * horizon;
    let obs = moments.index_map();
    let mut cross = DMatrix::zeros(rows, obs.len());
    for (b, ob) in obs.iter().enumerate() {
        let offset = ob.outcome * horizon;
        for t in 1..=horizon {
            cross[(offset + t - 1, b)] = moments.latent_cov_entry(ob.outcome, t, ob.day);
        }
    }
    cross
}

/// Conditional posterior of the latent states given theta and the record's
/// observed outcomes. With no observations the prior moments are returned.
pub fn latent_conditional(
    record: &PatientRecord,
    theta: &ThetaParams,
) -> Result<LatentPosterior, Error> {
    let moments = assemble_marginal(record, theta)?;
    let prior_mean = moments.full_latent_mean();
    let prior_cov = moments.full_latent_cov();
    if record.observations.is_empty() {
        return Ok(LatentPosterior {
            outcomes: moments.outcomes(),
            horizon: moments.horizon(),
            mean: prior_mean,
            cov: prior_cov,
        });
    }

    let (obs_mean, obs_cov) = moments.observed_moments();
    let values = moments.observed_values();
    let cross = latent_obs_cross_cov(&moments);

    let chol = cholesky_with_jitter(&obs_cov).map_err(|e| e.for_record(&record.id))?;
    let resid = values - obs_mean;
    let weighted = chol.solve(&resid);
    let solved_cross = chol.solve(&cross.transpose());

    let mean = &prior_mean + &cross * weighted;
    let mut cov = prior_cov - &cross * solved_cross;
    symmetrize(&mut cov);

    Ok(LatentPosterior {
        outcomes: moments.outcomes(),
        horizon: moments.horizon(),
        mean,
        cov,
    })
}

/// One draw of the latent states on the full grid from the conditional
/// posterior. Bit-reproducible for a given rng state; posterior covariances
/// with tiny negative roundoff eigenvalues are clamped to zero during
/// sampling only.
pub fn sample_latent<R: Rng>(
    record: &PatientRecord,
    theta: &ThetaParams,
    rng: &mut R,
) -> Result<DVector<f64>, Error> {
    let posterior = latent_conditional(record, theta)?;
    Ok(sample_posterior(&posterior, rng))
}

/// Draws from an already-computed latent posterior.
pub fn sample_posterior<R: Rng>(posterior: &LatentPosterior, rng: &mut R) -> DVector<f64> {
    sample_mvn(&posterior.mean, &posterior.cov, rng)
}

/// Deterministic rng stream for the latent draw at `(draw, patient)` under a
/// root seed. [`compose_posterior`] consumes these streams; callers doing
/// their own per-patient loops can use them directly for identical draws.
pub fn draw_stream(root_seed: u64, draw: usize, patient: usize) -> impl rand::Rng {
    stream(root_seed, draw as u64, patient as u64)
}

/// Composition sampling: one latent draw per patient for each posterior draw
/// of theta. Marginally over the theta draws, the output approximates the
/// posterior of the latent states. Each `(draw, patient)` pair gets its own
/// deterministic rng stream from the root seed.
pub fn compose_posterior(
    records: &[PatientRecord],
    theta_draws: &[ThetaParams],
    root_seed: u64,
) -> Result<Vec<Vec<DVector<f64>>>, Error> {
    let mut out = Vec::with_capacity(theta_draws.len());
    for (d, theta) in theta_draws.iter().enumerate() {
        let mut per_patient = Vec::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            let mut rng = draw_stream(root_seed, d, i);
            per_patient.push(sample_latent(record, theta, &mut rng)?);
        }
        out.push(per_patient);
    }
    Ok(out)
}
