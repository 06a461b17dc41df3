//! Shared dense-Gaussian numerics: Cholesky log-densities with a bounded
//! jitter policy, and covariance sampling with an eigenvalue-clamp fallback
//! for semi-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;

const LN_2PI: f64 = 1.8378770664093453;

/// Cholesky factorization with the jitter policy: on failure, add
/// `1e-10 * max(diag)` to the diagonal once and retry; a second failure is an
/// error.
pub(crate) fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, Error> {
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol);
    }
    let max_diag = cov.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let jitter = 1e-10 * max_diag.max(1.0);
    let mut bumped = cov.clone();
    for i in 0..bumped.nrows() {
        bumped[(i, i)] += jitter;
    }
    bumped.cholesky().ok_or(Error::NumericallySingular)
}

/// Log-density of `N(mean, cov)` at `x`, computed through a triangular
/// factorization with an accumulated log-determinant (no explicit inverse).
pub(crate) fn mvn_logpdf(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64, Error> {
    let n = x.len();
    debug_assert_eq!(mean.len(), n);
    debug_assert_eq!(cov.nrows(), n);
    let chol = cholesky_with_jitter(cov)?;
    let resid = x - mean;
    let half_solve = chol.l().solve_lower_triangular(&resid).ok_or(Error::NumericallySingular)?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + half_solve.norm_squared()))
}

/// Draws from `N(mean, cov)`. Tries a Cholesky factor first; when `cov` is
/// only positive semi-definite (or has tiny negative eigenvalues from
/// roundoff), falls back to a symmetric eigendecomposition with negative
/// eigenvalues clamped to zero. The clamp affects sampling only.
pub(crate) fn sample_mvn<R: Rng>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    if let Some(chol) = cov.clone().cholesky() {
        return mean + chol.l() * z;
    }
    let eig = cov.clone().symmetric_eigen();
    let scales = eig.eigenvalues.map(|l| if l > 0.0 { l.sqrt() } else { 0.0 });
    let mut scaled = z;
    for i in 0..n {
        scaled[i] *= scales[i];
    }
    mean + eig.eigenvectors * scaled
}

/// Forces exact symmetry on a numerically near-symmetric matrix.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Log-density of a univariate normal.
pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}
