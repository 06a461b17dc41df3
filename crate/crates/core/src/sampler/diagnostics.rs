//! Convergence diagnostics and posterior summaries.

/// Classic split potential-scale-reduction: each chain is halved, and the
/// between/within variance ratio of the split halves is square-rooted.
/// Returns `+inf` when the within-chain variance is zero.
///
/// Requires at least 2 chains with at least 10 draws each; chains are
/// trimmed from the back to the shortest length.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    assert!(chains.len() >= 2, "gelman_rubin needs at least 2 chains");
    let shortest = chains.iter().map(Vec::len).min().unwrap_or(0);
    assert!(shortest >= 10, "gelman_rubin needs at least 10 draws per chain");

    let half = shortest / 2;
    let mut splits: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        // drop the middle draw when the trimmed length is odd
        splits.push(&chain[..half]);
        splits.push(&chain[shortest - half..shortest]);
    }

    let n = half as f64;
    let m = splits.len() as f64;
    let means: Vec<f64> = splits
        .iter()
        .map(|s| s.iter().sum::<f64>() / n)
        .collect();
    let vars: Vec<f64> = splits
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .collect();

    let within = vars.iter().sum::<f64>() / m;
    if within <= 0.0 {
        return f64::INFINITY;
    }
    let grand = means.iter().sum::<f64>() / m;
    let between = n / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Equal-tailed sample quantile with linear interpolation on the sorted
/// draws (the common "type 7" estimator).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: f64,
    /// Central interval excludes zero (the starred-effect convention).
    pub excludes_zero: bool,
    /// R-hat below the 1.1 gate (pinned parameters pass vacuously).
    pub converged: bool,
}

pub(crate) const RHAT_GATE: f64 = 1.1;

pub(crate) fn summarize_param(name: &str, pooled_sorted: &[f64], rhat: f64) -> ParamSummary {
    let n = pooled_sorted.len() as f64;
    let mean = pooled_sorted.iter().sum::<f64>() / n;
    ParamSummary {
        name: name.to_string(),
        mean,
        lower: f64::NAN,
        upper: f64::NAN,
        rhat,
        excludes_zero: false,
        converged: rhat.is_nan() || rhat < RHAT_GATE,
    }
}
