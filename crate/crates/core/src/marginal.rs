//! Exact marginal moments and log-likelihood of sparsely observed outcomes
//! with the daily latent states integrated out.
//!
//! The latent AR(1) process for each outcome yields closed-form mean,
//! variance, and autocovariance sequences. Stacking outcomes gives a
//! block-diagonal latent covariance (outcomes are independent a priori);
//! sampling error ties outcomes together only at shared measurement events.
//! The observed-data likelihood is the multivariate normal density over the
//! rows picked out by the observation triples, so the full `K*T` system is
//! never materialized on the likelihood path.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::linalg::mvn_logpdf;
use crate::types::{CanonicalObs, CompleteDynamics, PatientRecord, ThetaParams};

/// Latent mean sequence `E_t` for one outcome: `E_1 = 0` and
/// `E_t = rho * E_{t-1} + phi . c_t` for `t >= 2`.
///
/// The day-1 covariate never enters the mean: the initial state is centered
/// at zero regardless of `c_1`.
pub fn latent_mean_sequence(rho: f64, phi_row: &[f64], dynamics: &CompleteDynamics) -> Vec<f64> {
    debug_assert_eq!(phi_row.len(), dynamics.width());
    let horizon = dynamics.horizon();
    let mut means = Vec::with_capacity(horizon);
    means.push(0.0);
    for day in 2..=horizon {
        let drive: f64 = phi_row
            .iter()
            .zip(dynamics.day_row(day))
            .map(|(p, c)| p * c)
            .sum();
        let prev = means[day - 2];
        means.push(rho * prev + drive);
    }
    means
}

/// Latent variance sequence `V_t` for one outcome: `V_1 = sigma_0^2` and
/// `V_t = rho^2 * V_{t-1} + sigma_nu^2` for `t >= 2`.
pub fn latent_variance_sequence(
    rho: f64,
    sigma_nu2: f64,
    sigma_0_2: f64,
    horizon: usize,
) -> Result<Vec<f64>, Error> {
    if horizon < 1 {
        return Err(Error::EmptyHorizon);
    }
    if sigma_nu2 <= 0.0 || sigma_0_2 <= 0.0 {
        return Err(Error::InvalidParameter(
            "variances must be strictly positive".into(),
        ));
    }
    let mut vars = Vec::with_capacity(horizon);
    vars.push(sigma_0_2);
    for t in 1..horizon {
        vars.push(rho * rho * vars[t - 1] + sigma_nu2);
    }
    Ok(vars)
}

/// Full `T x T` latent covariance for one outcome:
/// `Cov(alpha_t, alpha_{t-k}) = rho^k * V_{t-k}`. Symmetric by construction.
pub fn latent_covariance_matrix(variances: &[f64], rho: f64) -> DMatrix<f64> {
    let horizon = variances.len();
    let mut cov = DMatrix::zeros(horizon, horizon);
    for s in 0..horizon {
        cov[(s, s)] = variances[s];
        let mut scale = 1.0;
        for t in (s + 1)..horizon {
            scale *= rho;
            let value = scale * variances[s];
            cov[(t, s)] = value;
            cov[(s, t)] = value;
        }
    }
    cov
}

/// Per-patient marginal moments of the outcome vector given the non-dynamic
/// parameters, held in per-outcome sequence form.
///
/// The full `K*T` mean and block-diagonal covariance are available through
/// [`full_mean`](MarginalMoments::full_mean) and
/// [`full_latent_cov`](MarginalMoments::full_latent_cov); the observed-row
/// subset never materializes the square grid.
#[derive(Debug, Clone)]
pub struct MarginalMoments {
    outcomes: usize,
    horizon: usize,
    /// Per outcome: the constant shift `beta_k . x_i`.
    mean_shift: Vec<f64>,
    /// Per outcome: the latent mean sequence `E_k`.
    latent_mean: Vec<Vec<f64>>,
    /// Per outcome: the latent variance sequence `V_k`.
    latent_var: Vec<Vec<f64>>,
    rho: Vec<f64>,
    sigma_eps: DMatrix<f64>,
    /// Observation triples in canonical order; row `a` of the subsetted
    /// system corresponds to `index_map[a]`.
    index_map: Vec<CanonicalObs>,
}

impl MarginalMoments {
    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn index_map(&self) -> &[CanonicalObs] {
        &self.index_map
    }

    pub fn mean_shift(&self, outcome: usize) -> f64 {
        self.mean_shift[outcome]
    }

    pub fn latent_mean(&self, outcome: usize) -> &[f64] {
        &self.latent_mean[outcome]
    }

    pub fn latent_var(&self, outcome: usize) -> &[f64] {
        &self.latent_var[outcome]
    }

    /// Row of the stacked `K*T` grid for a 1-based day of an outcome.
    pub fn grid_row(&self, outcome: usize, day: usize) -> usize {
        outcome * self.horizon + (day - 1)
    }

    /// Latent autocovariance between two days of the same outcome.
    pub(crate) fn latent_cov_entry(&self, outcome: usize, day_a: usize, day_b: usize) -> f64 {
        let (early, late) = if day_a <= day_b {
            (day_a, day_b)
        } else {
            (day_b, day_a)
        };
        self.rho[outcome].powi((late - early) as i32) * self.latent_var[outcome][early - 1]
    }

    /// Sampling-error covariance between two observation rows.
    pub(crate) fn noise_entry(&self, a: &CanonicalObs, b: &CanonicalObs) -> f64 {
        crate::types::sampling_noise_entry(&self.sigma_eps, a, b)
    }

    /// Full stacked mean `E_i + beta x_i (x) 1_T` (outcome-major).
    pub fn full_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.outcomes * self.horizon);
        for k in 0..self.outcomes {
            for t in 0..self.horizon {
                mean[k * self.horizon + t] = self.latent_mean[k][t] + self.mean_shift[k];
            }
        }
        mean
    }

    /// Full stacked latent mean without the baseline shift.
    pub fn full_latent_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.outcomes * self.horizon);
        for k in 0..self.outcomes {
            for t in 0..self.horizon {
                mean[k * self.horizon + t] = self.latent_mean[k][t];
            }
        }
        mean
    }

    /// Full `K*T x K*T` latent covariance, block diagonal over outcomes with
    /// exactly zero cross-outcome blocks. Materialized only on demand (the
    /// smoother path); the likelihood path works from the sequences.
    pub fn full_latent_cov(&self) -> DMatrix<f64> {
        let n = self.outcomes * self.horizon;
        let mut cov = DMatrix::zeros(n, n);
        for k in 0..self.outcomes {
            let block = latent_covariance_matrix(&self.latent_var[k], self.rho[k]);
            let offset = k * self.horizon;
            for t in 0..self.horizon {
                for s in 0..self.horizon {
                    cov[(offset + t, offset + s)] = block[(t, s)];
                }
            }
        }
        cov
    }

    /// Observed values in canonical row order.
    pub fn observed_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.index_map.len(), self.index_map.iter().map(|o| o.value))
    }

    /// Marginal mean and covariance over the observed rows:
    /// `E_T + beta x 1` and `Sigma_{T x T}` plus the sampling-error structure.
    /// Replicated same-day, same-outcome rows share the full latent variance
    /// off-diagonally and add the sampling variance only on the diagonal.
    pub fn observed_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.index_map.len();
        let mut mean = DVector::zeros(m);
        let mut cov = DMatrix::zeros(m, m);
        for a in 0..m {
            let oa = &self.index_map[a];
            mean[a] = self.latent_mean[oa.outcome][oa.day - 1] + self.mean_shift[oa.outcome];
            for b in 0..=a {
                let ob = &self.index_map[b];
                let latent = if oa.outcome == ob.outcome {
                    self.latent_cov_entry(oa.outcome, oa.day, ob.day)
                } else {
                    0.0
                };
                let entry = latent + self.noise_entry(oa, ob);
                cov[(a, b)] = entry;
                cov[(b, a)] = entry;
            }
        }
        (mean, cov)
    }
}

/// Assembles the per-patient marginal moments from a validated record with
/// complete dynamic covariates.
pub fn assemble_marginal(
    record: &PatientRecord,
    theta: &ThetaParams,
) -> Result<MarginalMoments, Error> {
    let outcomes = theta.outcomes();
    if theta.beta.ncols() != record.baseline.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} columns but record `{}` has {} baseline covariates",
            theta.beta.ncols(),
            record.id,
            record.baseline.len()
        ))
        .for_record(&record.id));
    }
    if theta.phi.ncols() != record.dynamic.width() {
        return Err(Error::DimensionMismatch(format!(
            "phi has {} columns but record `{}` has {} dynamic covariates",
            theta.phi.ncols(),
            record.id,
            record.dynamic.width()
        ))
        .for_record(&record.id));
    }
    let dynamics = record.complete_dynamics()?;
    let x = DVector::from_column_slice(&record.baseline);
    let shift = &theta.beta * &x;

    let mut latent_mean = Vec::with_capacity(outcomes);
    let mut latent_var = Vec::with_capacity(outcomes);
    for k in 0..outcomes {
        let phi_row: Vec<f64> = theta.phi.row(k).iter().cloned().collect();
        latent_mean.push(latent_mean_sequence(theta.rho[k], &phi_row, &dynamics));
        latent_var.push(
            latent_variance_sequence(
                theta.rho[k],
                theta.sigma_nu[k],
                theta.sigma_0[k],
                record.horizon,
            )
            .map_err(|e| e.for_record(&record.id))?,
        );
    }

    Ok(MarginalMoments {
        outcomes,
        horizon: record.horizon,
        mean_shift: shift.iter().cloned().collect(),
        latent_mean,
        latent_var,
        rho: theta.rho.iter().cloned().collect(),
        sigma_eps: theta.sigma_eps.clone(),
        index_map: record.canonical_observations(),
    })
}

/// Subsets the marginal system to the observed triples, returning the mean
/// vector and covariance matrix of the observed outcome values.
pub fn subset_to_observations(moments: &MarginalMoments) -> (DVector<f64>, DMatrix<f64>) {
    moments.observed_moments()
}

/// Log marginal likelihood of one patient's observed outcomes given theta.
pub fn log_marginal_likelihood(record: &PatientRecord, theta: &ThetaParams) -> Result<f64, Error> {
    if record.observations.is_empty() {
        return Err(Error::NoObservations {
            id: record.id.clone(),
        });
    }
    let moments = assemble_marginal(record, theta)?;
    let (mean, cov) = moments.observed_moments();
    let values = moments.observed_values();
    mvn_logpdf(&values, &mean, &cov).map_err(|e| e.for_record(&record.id))
}

/// Cohort log-likelihood: the sum of per-record log marginal likelihoods,
/// accumulated in id order so the value is independent of how the cohort is
/// listed.
pub fn cohort_log_likelihood(records: &[PatientRecord], theta: &ThetaParams) -> Result<f64, Error> {
    let prepared = prepare_cohort(records)?;
    prepared.log_likelihood(theta)
}

/// A cohort preprocessed for repeated likelihood evaluation: canonical
/// observations, dense covariates, and summation order are computed once so
/// the per-theta cost in the sampler hot loop is pure arithmetic. Evaluation
/// is bit-identical to calling [`log_marginal_likelihood`] per record and
/// summing in id order.
pub struct PreparedCohort {
    entries: Vec<PreparedRecord>,
    max_horizon: usize,
    baseline_covariates: usize,
    dynamic_covariates: usize,
}

struct PreparedRecord {
    id: String,
    x: DVector<f64>,
    dynamics: CompleteDynamics,
    canon: Vec<CanonicalObs>,
    values: DVector<f64>,
}

/// Validates and preprocesses a cohort for the sampler. Records are ordered
/// by id (ties by position), matching the fixed summation order.
pub fn prepare_cohort(records: &[PatientRecord]) -> Result<PreparedCohort, Error> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    let mut entries = Vec::with_capacity(records.len());
    let mut max_horizon = 1;
    let mut baseline_covariates = 0;
    let mut dynamic_covariates = 0;
    for idx in order {
        let record = &records[idx];
        if record.observations.is_empty() {
            return Err(Error::NoObservations {
                id: record.id.clone(),
            });
        }
        if baseline_covariates == 0 {
            baseline_covariates = record.baseline.len();
            dynamic_covariates = record.dynamic.width();
        } else if record.baseline.len() != baseline_covariates
            || record.dynamic.width() != dynamic_covariates
        {
            return Err(Error::DimensionMismatch(format!(
                "record `{}` has inconsistent covariate dimensions",
                record.id
            )));
        }
        let canon = record.canonical_observations();
        let values = DVector::from_iterator(canon.len(), canon.iter().map(|o| o.value));
        max_horizon = max_horizon.max(record.horizon);
        entries.push(PreparedRecord {
            id: record.id.clone(),
            x: DVector::from_column_slice(&record.baseline),
            dynamics: record.complete_dynamics()?,
            canon,
            values,
        });
    }
    Ok(PreparedCohort {
        entries,
        max_horizon,
        baseline_covariates,
        dynamic_covariates,
    })
}

impl PreparedCohort {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cohort log marginal likelihood at `theta`.
    pub fn log_likelihood(&self, theta: &ThetaParams) -> Result<f64, Error> {
        let outcomes = theta.outcomes();
        if !self.entries.is_empty()
            && (theta.beta.ncols() != self.baseline_covariates
                || theta.phi.ncols() != self.dynamic_covariates)
        {
            return Err(Error::DimensionMismatch(format!(
                "theta expects p={}, r={} but cohort has p={}, r={}",
                theta.beta.ncols(),
                theta.phi.ncols(),
                self.baseline_covariates,
                self.dynamic_covariates
            )));
        }
        // variance recursions depend only on theta and the horizon, so one
        // max-length sequence per outcome serves every record as a prefix
        let mut var_cache = Vec::with_capacity(outcomes);
        for k in 0..outcomes {
            var_cache.push(latent_variance_sequence(
                theta.rho[k],
                theta.sigma_nu[k],
                theta.sigma_0[k],
                self.max_horizon,
            )?);
        }
        let phi_rows: Vec<Vec<f64>> = (0..outcomes)
            .map(|k| theta.phi.row(k).iter().cloned().collect())
            .collect();

        let mut total = 0.0;
        let mut latent_mean: Vec<Vec<f64>> = Vec::new();
        for entry in &self.entries {
            let shift = &theta.beta * &entry.x;
            latent_mean.clear();
            for k in 0..outcomes {
                latent_mean.push(latent_mean_sequence(
                    theta.rho[k],
                    &phi_rows[k],
                    &entry.dynamics,
                ));
            }
            let m = entry.canon.len();
            let mut mean = DVector::zeros(m);
            let mut cov = DMatrix::zeros(m, m);
            for a in 0..m {
                let oa = &entry.canon[a];
                mean[a] = latent_mean[oa.outcome][oa.day - 1] + shift[oa.outcome];
                for b in 0..=a {
                    let ob = &entry.canon[b];
                    let latent = if oa.outcome == ob.outcome {
                        let (early, late) = if oa.day <= ob.day {
                            (oa.day, ob.day)
                        } else {
                            (ob.day, oa.day)
                        };
                        theta.rho[oa.outcome].powi((late - early) as i32)
                            * var_cache[oa.outcome][early - 1]
                    } else {
                        0.0
                    };
                    let entry_value =
                        latent + crate::types::sampling_noise_entry(&theta.sigma_eps, oa, ob);
                    cov[(a, b)] = entry_value;
                    cov[(b, a)] = entry_value;
                }
            }
            total += mvn_logpdf(&entry.values, &mean, &cov)
                .map_err(|e| e.for_record(&entry.id))?;
        }
        Ok(total)
    }
}

/// Long-run shift in mean outcome per unit of sustained covariate:
/// `(I - rho)^{-1} phi`, as a `K x r` matrix.
pub fn asymptotic_effect(theta: &ThetaParams) -> DMatrix<f64> {
    let mut out = theta.phi.clone();
    for k in 0..theta.outcomes() {
        let scale = 1.0 / (1.0 - theta.rho[k]);
        for j in 0..out.ncols() {
            out[(k, j)] *= scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DynamicCovariates, ModelDims, Observation};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn scalar_theta(rho: f64, phi: f64, s_eps2: f64, s_nu2: f64, s_02: f64, beta: f64) -> ThetaParams {
        ThetaParams {
            beta: DMatrix::from_vec(1, 1, vec![beta]),
            rho: DVector::from_vec(vec![rho]),
            phi: DMatrix::from_vec(1, 1, vec![phi]),
            sigma_eps: DMatrix::from_vec(1, 1, vec![s_eps2]),
            sigma_nu: DVector::from_vec(vec![s_nu2]),
            sigma_0: DVector::from_vec(vec![s_02]),
        }
    }

    fn col(values: &[f64]) -> CompleteDynamics {
        CompleteDynamics::from_column(values)
    }

    #[test]
    fn mean_sequence_with_zero_rho() {
        let e = latent_mean_sequence(0.0, &[1.0], &col(&[1.0, 1.0, 1.0]));
        assert_eq!(e, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn mean_sequence_hand_recursion() {
        let e = latent_mean_sequence(0.5, &[2.0], &col(&[1.0, -1.0, 1.0]));
        assert_eq!(e, vec![0.0, -2.0, 1.0]);
    }

    #[test]
    fn mean_sequence_zero_phi_is_zero() {
        let e = latent_mean_sequence(0.9, &[0.0], &col(&[1.0, -1.0, 1.0, -1.0]));
        assert!(e.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn day_one_covariate_never_enters_the_mean() {
        // the state is initialized at zero mean, so c_1 has no effect
        let with_plus = latent_mean_sequence(0.7, &[1.5], &col(&[1.0, -1.0, 1.0]));
        let with_minus = latent_mean_sequence(0.7, &[1.5], &col(&[-1.0, -1.0, 1.0]));
        assert_eq!(with_plus, with_minus);
        assert_eq!(with_plus[0], 0.0);
    }

    #[test]
    fn variance_sequence_zero_rho() {
        let v = latent_variance_sequence(0.0, 1.0, 4.0, 3).unwrap();
        assert_eq!(v, vec![4.0, 1.0, 1.0]);
    }

    #[test]
    fn variance_sequence_hand_recursion() {
        let v = latent_variance_sequence(0.5, 1.0, 4.0, 3).unwrap();
        assert_eq!(v, vec![4.0, 2.0, 1.5]);
    }

    #[test]
    fn variance_sequence_single_day() {
        let v = latent_variance_sequence(0.7, 1.0, 9.0, 1).unwrap();
        assert_eq!(v, vec![9.0]);
    }

    #[test]
    fn variance_sequence_rejects_zero_horizon() {
        assert!(latent_variance_sequence(0.5, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn covariance_matrix_zero_rho_is_diagonal() {
        let cov = latent_covariance_matrix(&[4.0, 1.0, 1.0], 0.0);
        assert_eq!(cov, DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 1.0])));
    }

    #[test]
    fn covariance_matrix_hand_case() {
        let cov = latent_covariance_matrix(&[4.0, 2.0], 0.5);
        let want = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        assert_eq!(cov, want);
    }

    #[test]
    fn covariance_matrix_exactly_symmetric() {
        let v = latent_variance_sequence(0.83, 0.7, 2.3, 17).unwrap();
        let cov = latent_covariance_matrix(&v, 0.83);
        assert_eq!(cov, cov.transpose());
    }

    fn record_with_obs(horizon: usize, adherence: &[f64], obs: Vec<Observation>) -> PatientRecord {
        PatientRecord::new(
            "t1",
            DynamicCovariates::complete_column(&adherence[..horizon]),
            vec![1.0],
            obs,
        )
    }

    #[test]
    fn multivariate_blocks_match_scalar_construction() {
        let c = vec![1.0, -1.0, 1.0, 1.0, -1.0];
        let theta2 = ThetaParams {
            beta: DMatrix::from_vec(2, 1, vec![10.0, 10.0]),
            rho: DVector::from_vec(vec![0.6, 0.6]),
            phi: DMatrix::from_vec(2, 1, vec![-0.5, -0.5]),
            sigma_eps: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]),
            sigma_nu: DVector::from_vec(vec![0.8, 0.8]),
            sigma_0: DVector::from_vec(vec![1.5, 1.5]),
        };
        let rec = PatientRecord::new(
            "m",
            DynamicCovariates::complete_column(&c),
            vec![1.0],
            vec![Observation {
                day: 3,
                outcome: 0,
                value: 9.0,
            }],
        );
        let mm = assemble_marginal(&rec, &theta2).unwrap();
        let full = mm.full_latent_cov();
        let t = rec.horizon;
        // identical per-outcome parameters and covariates give equal blocks
        for a in 0..t {
            for b in 0..t {
                assert_eq!(full[(a, b)], full[(t + a, t + b)]);
                if a != b {
                    // cross-outcome blocks are exactly zero
                    assert_eq!(full[(a, t + b)], 0.0);
                }
                assert_eq!(full[(a, t + a)], 0.0);
            }
        }
        // scalar construction equals outcome-0 block
        let v = latent_variance_sequence(0.6, 0.8, 1.5, t).unwrap();
        let scalar_cov = latent_covariance_matrix(&v, 0.6);
        for a in 0..t {
            for b in 0..t {
                assert_eq!(full[(a, b)], scalar_cov[(a, b)]);
            }
        }
    }

    #[test]
    fn subset_picks_requested_rows() {
        let theta = scalar_theta(0.7, -0.4, 1.3, 0.9, 2.0, 0.0);
        let adherence: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let obs = vec![
            Observation { day: 1, outcome: 0, value: 0.1 },
            Observation { day: 7, outcome: 0, value: -0.2 },
            Observation { day: 9, outcome: 0, value: 0.5 },
        ];
        let rec = record_with_obs(10, &adherence, obs);
        let mm = assemble_marginal(&rec, &theta).unwrap();
        let (mean, cov) = subset_to_observations(&mm);
        let full = mm.full_latent_cov();
        let e = mm.latent_mean(0);
        for (row, day) in [1usize, 7, 9].iter().enumerate() {
            assert_eq!(mean[row], e[day - 1]);
            for (col_idx, day_b) in [1usize, 7, 9].iter().enumerate() {
                let noise = if day == day_b { 1.3 } else { 0.0 };
                assert_relative_eq!(
                    cov[(row, col_idx)],
                    full[(day - 1, day_b - 1)] + noise,
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn same_day_replicates_share_latent_state_only() {
        let theta = scalar_theta(0.5, 0.3, 1.7, 1.0, 4.0, 0.0);
        let obs = vec![
            Observation { day: 2, outcome: 0, value: 1.0 },
            Observation { day: 2, outcome: 0, value: 2.0 },
        ];
        let rec = record_with_obs(3, &[1.0, 1.0, 1.0], obs);
        let mm = assemble_marginal(&rec, &theta).unwrap();
        let (_, cov) = subset_to_observations(&mm);
        let v2 = mm.latent_var(0)[1];
        let want = DMatrix::from_row_slice(2, 2, &[v2 + 1.7, v2, v2, v2 + 1.7]);
        assert_relative_eq!((cov - want).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn all_days_observed_is_identity_subset() {
        let theta = scalar_theta(0.4, 0.2, 0.8, 0.6, 1.1, 0.0);
        let obs = (1..=4)
            .map(|day| Observation { day, outcome: 0, value: day as f64 })
            .collect();
        let rec = record_with_obs(4, &[1.0, -1.0, 1.0, -1.0], obs);
        let mm = assemble_marginal(&rec, &theta).unwrap();
        let (mean, cov) = subset_to_observations(&mm);
        let full_mean = mm.full_mean();
        let full_cov = mm.full_latent_cov() + DMatrix::<f64>::identity(4, 4) * 0.8;
        assert_relative_eq!((mean - full_mean).amax(), 0.0, epsilon = 1e-14);
        assert_relative_eq!((cov - full_cov).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn single_day_closed_form() {
        let theta = scalar_theta(0.3, 0.7, 1.5, 1.0, 2.5, 4.0);
        let rec = record_with_obs(
            1,
            &[1.0],
            vec![Observation { day: 1, outcome: 0, value: 5.0 }],
        );
        let got = log_marginal_likelihood(&rec, &theta).unwrap();
        let want = crate::linalg::normal_logpdf(5.0, 4.0, 2.5 + 1.5);
        assert_relative_eq!(got, want, max_relative = 1e-13);
    }

    #[test]
    fn cohort_sum_and_duplication() {
        let theta = scalar_theta(0.5, -0.2, 1.0, 0.5, 1.0, 2.0);
        let rec = record_with_obs(
            5,
            &[1.0, 1.0, -1.0, 1.0, -1.0],
            vec![Observation { day: 4, outcome: 0, value: 1.9 }],
        );
        let single = log_marginal_likelihood(&rec, &theta).unwrap();
        let one = cohort_log_likelihood(std::slice::from_ref(&rec), &theta).unwrap();
        assert_eq!(single, one);
        let two = cohort_log_likelihood(&[rec.clone(), rec.clone()], &theta).unwrap();
        assert_eq!(two, 2.0 * single);
    }

    #[test]
    fn cohort_order_invariance_bitwise() {
        let theta = scalar_theta(0.5, -0.2, 1.0, 0.5, 1.0, 2.0);
        let mk = |id: &str, val: f64| {
            let mut r = record_with_obs(
                6,
                &[1.0, -1.0, 1.0, 1.0, -1.0, 1.0],
                vec![Observation { day: 5, outcome: 0, value: val }],
            );
            r.id = id.to_string();
            r
        };
        let a = mk("a", 0.3);
        let b = mk("b", -1.2);
        let c = mk("c", 2.2);
        let fwd = cohort_log_likelihood(&[a.clone(), b.clone(), c.clone()], &theta).unwrap();
        let rev = cohort_log_likelihood(&[c, a, b], &theta).unwrap();
        assert_eq!(fwd.to_bits(), rev.to_bits());
    }

    #[test]
    fn triple_order_invariance_bitwise() {
        let theta = scalar_theta(0.6, 0.4, 1.2, 0.7, 1.4, 1.0);
        let obs = vec![
            Observation { day: 2, outcome: 0, value: 1.0 },
            Observation { day: 5, outcome: 0, value: -0.5 },
            Observation { day: 2, outcome: 0, value: 1.4 },
        ];
        let mut permuted = obs.clone();
        permuted.swap(0, 2);
        permuted.swap(1, 2);
        let rec_a = record_with_obs(6, &[1.0; 6], obs);
        let mut rec_b = record_with_obs(6, &[1.0; 6], permuted);
        rec_b.id = rec_a.id.clone();
        let la = log_marginal_likelihood(&rec_a, &theta).unwrap();
        let lb = log_marginal_likelihood(&rec_b, &theta).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn asymptotic_effect_no_persistence() {
        let theta = scalar_theta(0.0, -0.5, 1.0, 1.0, 1.0, 0.0);
        let eff = asymptotic_effect(&theta);
        assert_eq!(eff[(0, 0)], -0.5);
    }

    #[test]
    fn asymptotic_effect_consistency_with_reported_pair() {
        // phi = -0.48 with asymptotic effect -3.87 back-solves to
        // rho = 1 - 0.48/3.87; the forward map must reproduce -3.87.
        let rho = 1.0 - 0.48 / 3.87;
        let theta = scalar_theta(rho, -0.48, 1.0, 1.0, 1.0, 0.0);
        let eff = asymptotic_effect(&theta);
        assert!((eff[(0, 0)] - (-3.87)).abs() < 5e-4);
    }

    #[test]
    fn mean_recursion_limit_matches_asymptote() {
        let horizon = 250;
        let c = vec![1.0; horizon];
        let e = latent_mean_sequence(0.9, &[1.0], &col(&c));
        assert!((e[199] - 10.0).abs() < 1e-6);
        assert!((e[horizon - 1] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn centered_mean_recursion_holds() {
        let theta = scalar_theta(0.77, -0.31, 1.0, 0.4, 2.2, 117.0);
        let adherence: Vec<f64> = (0..40).map(|i| if i % 4 == 0 { -1.0 } else { 1.0 }).collect();
        let rec = record_with_obs(
            40,
            &adherence,
            vec![Observation { day: 1, outcome: 0, value: 0.0 }],
        );
        let mm = assemble_marginal(&rec, &theta).unwrap();
        let mean = mm.full_mean();
        let shift = mm.mean_shift(0);
        let dyn_c = rec.complete_dynamics().unwrap();
        for t in 1..40 {
            let lhs = (mean[t] - shift) - 0.77 * (mean[t - 1] - shift) - (-0.31) * dyn_c.day_row(t + 1)[0];
            assert!(lhs.abs() < 1e-10, "recursion violated at t={t}: {lhs}");
        }
    }

    #[test]
    fn missing_covariate_rejected() {
        let mut rec = record_with_obs(
            3,
            &[1.0, 1.0, 1.0],
            vec![Observation { day: 2, outcome: 0, value: 0.3 }],
        );
        rec.dynamic.set(2, 0, None);
        let theta = scalar_theta(0.5, 0.2, 1.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            log_marginal_likelihood(&rec, &theta),
            Err(Error::Record { .. })
        ));
    }

    #[test]
    fn validate_cohort_and_theta_yield_finite_loglik() {
        let dims = ModelDims::new(1, 1, 1);
        let theta = scalar_theta(0.9, -0.5, 4.0, 1.0, 9.0, 120.0);
        theta.validate(&dims).unwrap();
        let rec = record_with_obs(
            20,
            &[1.0; 20],
            vec![
                Observation { day: 3, outcome: 0, value: 121.0 },
                Observation { day: 17, outcome: 0, value: 116.0 },
            ],
        );
        let ll = log_marginal_likelihood(&rec, &theta).unwrap();
        assert!(ll.is_finite());
    }
}
