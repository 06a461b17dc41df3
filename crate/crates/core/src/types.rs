//! Domain types shared by every other module: patient records, model
//! parameters, dimension bookkeeping, and cohort validation.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;

/// Cohort-wide dimensions: `outcomes` (K), `baseline_covariates` (p, including
/// the intercept), `dynamic_covariates` (r).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub outcomes: usize,
    pub baseline_covariates: usize,
    pub dynamic_covariates: usize,
}

impl ModelDims {
    pub fn new(outcomes: usize, baseline_covariates: usize, dynamic_covariates: usize) -> Self {
        Self {
            outcomes,
            baseline_covariates,
            dynamic_covariates,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.outcomes < 1 || self.baseline_covariates < 1 || self.dynamic_covariates < 1 {
            return Err(Error::DimensionMismatch(
                "all dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One outcome measurement: `day` is 1-based within the patient's horizon,
/// `outcome` is a 0-based outcome index, `value` is in outcome units.
/// Multiple triples for the same `(day, outcome)` are replicate measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub day: usize,
    pub outcome: usize,
    pub value: f64,
}

/// A daily time-varying covariate matrix with missing entries flagged.
///
/// Stored row-major: day-major, `width` covariates per day. Adherence is
/// conventionally column 0 and coded +1 (adherent) / -1 (non-adherent).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicCovariates {
    horizon: usize,
    width: usize,
    values: Vec<Option<f64>>,
}

impl DynamicCovariates {
    pub fn new(horizon: usize, width: usize, values: Vec<Option<f64>>) -> Result<Self, Error> {
        if values.len() != horizon * width {
            return Err(Error::DimensionMismatch(format!(
                "dynamic covariates: expected {} entries, got {}",
                horizon * width,
                values.len()
            )));
        }
        Ok(Self {
            horizon,
            width,
            values,
        })
    }

    /// Fully observed single-column covariates (the common adherence case).
    pub fn complete_column(values: &[f64]) -> Self {
        Self {
            horizon: values.len(),
            width: 1,
            values: values.iter().map(|v| Some(*v)).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Entry for 1-based `day` and 0-based covariate `col`.
    pub fn get(&self, day: usize, col: usize) -> Option<f64> {
        self.values[(day - 1) * self.width + col]
    }

    pub fn set(&mut self, day: usize, col: usize, value: Option<f64>) {
        self.values[(day - 1) * self.width + col] = value;
    }

    pub fn entries(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Resolves to a dense matrix, failing on any missing or non-finite entry.
    pub fn require_complete(&self) -> Result<CompleteDynamics, Error> {
        let mut dense = Vec::with_capacity(self.values.len());
        for (idx, v) in self.values.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => dense.push(*x),
                Some(_) => {
                    return Err(Error::InvalidCovariate(format!(
                        "non-finite covariate on day {}",
                        idx / self.width + 1
                    )))
                }
                None => {
                    return Err(Error::InvalidCovariate(format!(
                        "missing covariate on day {} (impute first)",
                        idx / self.width + 1
                    )))
                }
            }
        }
        Ok(CompleteDynamics {
            horizon: self.horizon,
            width: self.width,
            values: dense,
        })
    }
}

/// Dense, fully observed time-varying covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteDynamics {
    horizon: usize,
    width: usize,
    values: Vec<f64>,
}

impl CompleteDynamics {
    pub fn new(horizon: usize, width: usize, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != horizon * width {
            return Err(Error::DimensionMismatch(format!(
                "dynamic covariates: expected {} entries, got {}",
                horizon * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariate(format!(
                "non-finite covariate on day {}",
                bad / width + 1
            )));
        }
        Ok(Self {
            horizon,
            width,
            values,
        })
    }

    pub fn from_column(values: &[f64]) -> Self {
        Self {
            horizon: values.len(),
            width: 1,
            values: values.to_vec(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Covariate row for a 1-based day.
    pub fn day_row(&self, day: usize) -> &[f64] {
        let start = (day - 1) * self.width;
        &self.values[start..start + self.width]
    }
}

/// One patient's daily covariate series, sparse outcome observations, and
/// baseline covariates. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub horizon: usize,
    pub dynamic: DynamicCovariates,
    /// Baseline covariate vector x_i; the first entry is the intercept and
    /// must equal 1.
    pub baseline: Vec<f64>,
    pub observations: Vec<Observation>,
}

/// An observation triple in canonical order, mapped to its position in the
/// subsetted Gaussian system.
///
/// `replicate` numbers repeated `(day, outcome)` measurements; same-replicate
/// triples on the same day form one measurement event and share the sampling
/// error draw across outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalObs {
    pub day: usize,
    pub outcome: usize,
    pub replicate: usize,
    pub value: f64,
}

/// Sampling-error covariance between two observation rows. Rows form one
/// measurement event exactly when they share day and replicate index; only
/// event mates carry sampling-error covariance. Same-outcome replicates on a
/// day therefore share the latent state but not the error draw.
pub(crate) fn sampling_noise_entry(
    sigma_eps: &DMatrix<f64>,
    a: &CanonicalObs,
    b: &CanonicalObs,
) -> f64 {
    if a.day == b.day && a.replicate == b.replicate {
        sigma_eps[(a.outcome, b.outcome)]
    } else {
        0.0
    }
}

impl PatientRecord {
    pub fn new(
        id: impl Into<String>,
        dynamic: DynamicCovariates,
        baseline: Vec<f64>,
        observations: Vec<Observation>,
    ) -> Self {
        Self {
            id: id.into(),
            horizon: dynamic.horizon(),
            dynamic,
            baseline,
            observations,
        }
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    /// Observation triples sorted into a canonical order that is independent
    /// of how the input list was arranged: by day, then outcome, then value.
    /// Replicate indices are assigned within each `(day, outcome)` group after
    /// sorting, so the assembled likelihood is bit-identical under any
    /// permutation of the input triples.
    pub fn canonical_observations(&self) -> Vec<CanonicalObs> {
        let mut sorted: Vec<&Observation> = self.observations.iter().collect();
        sorted.sort_by(|a, b| {
            (a.day, a.outcome)
                .cmp(&(b.day, b.outcome))
                .then(a.value.total_cmp(&b.value))
        });
        let mut out = Vec::with_capacity(sorted.len());
        let mut prev: Option<(usize, usize)> = None;
        let mut replicate = 0usize;
        for obs in sorted {
            replicate = match prev {
                Some(key) if key == (obs.day, obs.outcome) => replicate + 1,
                _ => 0,
            };
            prev = Some((obs.day, obs.outcome));
            out.push(CanonicalObs {
                day: obs.day,
                outcome: obs.outcome,
                replicate,
                value: obs.value,
            });
        }
        out
    }

    /// Dense dynamic covariates, erroring if any entry is missing.
    pub fn complete_dynamics(&self) -> Result<CompleteDynamics, Error> {
        self.dynamic
            .require_complete()
            .map_err(|e| e.for_record(&self.id))
    }

    pub fn has_missing_covariates(&self) -> bool {
        self.dynamic.n_missing() > 0
    }
}

/// All non-dynamic model parameters.
///
/// `sigma_nu` and `sigma_0` hold variances (the diagonals of the innovation
/// and initial-state covariances); `sigma_eps` is the full sampling covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    /// K x p baseline-covariate effects.
    pub beta: DMatrix<f64>,
    /// Length-K AR(1) coefficients, each in (-1, 1).
    pub rho: DVector<f64>,
    /// K x r time-varying covariate effects.
    pub phi: DMatrix<f64>,
    /// K x K positive-definite sampling covariance.
    pub sigma_eps: DMatrix<f64>,
    /// Length-K innovation variances.
    pub sigma_nu: DVector<f64>,
    /// Length-K initial-state variances.
    pub sigma_0: DVector<f64>,
}

impl ThetaParams {
    pub fn outcomes(&self) -> usize {
        self.rho.len()
    }

    /// Builds the sampling covariance from per-outcome standard deviations and
    /// a common pairwise correlation structure. For K=1 `correlations` is
    /// empty; for K=2 it holds the single correlation; for K>2 it lists the
    /// upper triangle row by row.
    pub fn sigma_eps_from_sd_corr(sds: &[f64], correlations: &[f64]) -> Result<DMatrix<f64>, Error> {
        let k = sds.len();
        let expected = k * (k - 1) / 2;
        if correlations.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} correlations for {k} outcomes, got {}",
                correlations.len()
            )));
        }
        let mut m = DMatrix::zeros(k, k);
        let mut idx = 0;
        for i in 0..k {
            m[(i, i)] = sds[i] * sds[i];
            for j in (i + 1)..k {
                let cov = correlations[idx] * sds[i] * sds[j];
                m[(i, j)] = cov;
                m[(j, i)] = cov;
                idx += 1;
            }
        }
        Ok(m)
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<(), Error> {
        let k = dims.outcomes;
        if self.beta.nrows() != k || self.beta.ncols() != dims.baseline_covariates {
            return Err(Error::DimensionMismatch(format!(
                "beta is {}x{}, expected {}x{}",
                self.beta.nrows(),
                self.beta.ncols(),
                k,
                dims.baseline_covariates
            )));
        }
        if self.phi.nrows() != k || self.phi.ncols() != dims.dynamic_covariates {
            return Err(Error::DimensionMismatch(format!(
                "phi is {}x{}, expected {}x{}",
                self.phi.nrows(),
                self.phi.ncols(),
                k,
                dims.dynamic_covariates
            )));
        }
        if self.rho.len() != k || self.sigma_nu.len() != k || self.sigma_0.len() != k {
            return Err(Error::DimensionMismatch(
                "rho/sigma_nu/sigma_0 must have one entry per outcome".into(),
            ));
        }
        if self.sigma_eps.nrows() != k || self.sigma_eps.ncols() != k {
            return Err(Error::DimensionMismatch("sigma_eps must be K x K".into()));
        }
        for rho in self.rho.iter() {
            if !rho.is_finite() || rho.abs() >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "rho = {rho} outside (-1, 1)"
                )));
            }
        }
        for (name, v) in [("sigma_nu", &self.sigma_nu), ("sigma_0", &self.sigma_0)] {
            for x in v.iter() {
                if !x.is_finite() || *x <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "{name} entry {x} must be a positive variance"
                    )));
                }
            }
        }
        if (self.sigma_eps.clone() - self.sigma_eps.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("sigma_eps not symmetric".into()));
        }
        if self.sigma_eps.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter(
                "sigma_eps not positive definite".into(),
            ));
        }
        for b in self.beta.iter().chain(self.phi.iter()) {
            if !b.is_finite() {
                return Err(Error::InvalidParameter("non-finite coefficient".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of validating one record.
#[derive(Debug, Clone)]
pub struct RecordValidation {
    pub id: String,
    pub failures: Vec<String>,
}

impl RecordValidation {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per-record pass/fail report for a cohort.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub records: Vec<RecordValidation>,
}

impl ValidationReport {
    pub fn all_valid(&self) -> bool {
        self.records.iter().all(RecordValidation::is_valid)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RecordValidation> {
        self.records.iter().filter(|r| !r.is_valid())
    }
}

/// Failure string reported for records with no observation triples. Such
/// records cannot enter a likelihood but are still usable for smoothing and
/// imputation.
pub const NO_OBSERVATIONS_FAILURE: &str = "no observation triples (record unusable for likelihood)";

/// Checks every record against the cohort invariants and dimension spec.
/// Side-effect free; failures are reported, never panicked on.
pub fn validate_cohort(records: &[PatientRecord], dims: &ModelDims) -> ValidationReport {
    let entries = records
        .iter()
        .map(|rec| {
            let mut failures = Vec::new();
            if rec.horizon < 1 {
                failures.push("horizon must be at least 1".to_string());
            }
            if rec.dynamic.horizon() != rec.horizon {
                failures.push(format!(
                    "dynamic covariate horizon {} does not match record horizon {}",
                    rec.dynamic.horizon(),
                    rec.horizon
                ));
            }
            if rec.dynamic.width() != dims.dynamic_covariates {
                failures.push(format!(
                    "dynamic covariate width {} does not match r = {}",
                    rec.dynamic.width(),
                    dims.dynamic_covariates
                ));
            }
            if rec.baseline.len() != dims.baseline_covariates {
                failures.push(format!(
                    "baseline covariate length {} does not match p = {}",
                    rec.baseline.len(),
                    dims.baseline_covariates
                ));
            }
            match rec.baseline.first() {
                Some(x) if *x == 1.0 => {}
                _ => failures.push("first baseline covariate must be the intercept 1".to_string()),
            }
            if rec.baseline.iter().any(|x| !x.is_finite()) {
                failures.push("non-finite baseline covariate".to_string());
            }
            for (idx, v) in rec.dynamic.entries().iter().enumerate() {
                if let Some(x) = v {
                    if *x != 1.0 && *x != -1.0 {
                        failures.push(format!(
                            "adherence not in {{-1,+1}} on day {}",
                            idx / rec.dynamic.width() + 1
                        ));
                        break;
                    }
                }
            }
            for obs in &rec.observations {
                if obs.day < 1 || obs.day > rec.horizon {
                    failures.push(format!(
                        "observation outside horizon: day {} not in [1, {}]",
                        obs.day, rec.horizon
                    ));
                    break;
                }
            }
            if rec
                .observations
                .iter()
                .any(|obs| obs.outcome >= dims.outcomes)
            {
                failures.push(format!(
                    "observation outcome index outside [0, {})",
                    dims.outcomes
                ));
            }
            if rec.observations.iter().any(|obs| !obs.value.is_finite()) {
                failures.push("non-finite observation value".to_string());
            }
            if rec.observations.is_empty() {
                failures.push(NO_OBSERVATIONS_FAILURE.to_string());
            }
            RecordValidation {
                id: rec.id.clone(),
                failures,
            }
        })
        .collect();
    ValidationReport { records: entries }
}
