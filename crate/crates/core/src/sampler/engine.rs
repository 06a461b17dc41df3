//! Blocked adaptive random-walk Metropolis in unconstrained space.
//!
//! Shared by the dynamic model and the non-dynamic baseline models: a target
//! is a parameter layout (names, transforms, priors, block assignment) plus a
//! log-likelihood closure over constrained values. Proposal scales adapt per
//! block during warm-up toward a 0.23-0.4 acceptance window and are frozen
//! afterwards. Everything is deterministic given the root seed.

use rand::{Rng, RngExt};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Error;
use crate::rng::stream;

/// Bijection between a constrained parameter and the sampling space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Transform {
    /// Constrained = z (coefficients).
    Identity,
    /// Constrained = exp(z) (standard deviations).
    LogScale,
    /// Constrained = tanh(z) (correlations and AR coefficients).
    Tanh,
}

impl Transform {
    pub(crate) fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::LogScale => x.ln(),
            Transform::Tanh => x.atanh(),
        }
    }

    pub(crate) fn to_constrained(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::LogScale => z.exp(),
            Transform::Tanh => z.tanh(),
        }
    }

    /// log |d constrained / d z|.
    pub(crate) fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::LogScale => z,
            Transform::Tanh => {
                let t = z.tanh();
                (1.0 - t * t).max(f64::MIN_POSITIVE).ln()
            }
        }
    }
}

/// Prior density over the constrained value of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PriorDensity {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl PriorDensity {
    pub(crate) fn log_density(&self, x: f64) -> f64 {
        match self {
            PriorDensity::Normal { mean, var } => crate::linalg::normal_logpdf(x, *mean, *var),
            PriorDensity::Uniform { lo, hi } => {
                if x > *lo && x < *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            PriorDensity::Normal { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            PriorDensity::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// How a chain starts one scalar parameter.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    PriorDraw,
    At(f64),
}

/// One scalar parameter of the sampling target.
#[derive(Debug, Clone)]
pub(crate) struct ParamDef {
    pub name: String,
    pub transform: Transform,
    pub prior: PriorDensity,
    pub block: usize,
    pub init: Init,
    /// Pinned constrained value; pinned parameters are reported but never
    /// proposed, and contribute no prior or Jacobian term.
    pub fixed: Option<f64>,
}

/// Full parameter layout: scalar definitions plus block names. Joint blocks
/// re-propose several base blocks together so the chain can move along
/// posterior ridges that couple them.
#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    pub defs: Vec<ParamDef>,
    pub block_names: Vec<String>,
    /// (name, base-block ids updated jointly)
    pub joint_blocks: Vec<(String, Vec<usize>)>,
}

impl ParamLayout {
    pub(crate) fn len(&self) -> usize {
        self.defs.len()
    }

    pub(crate) fn names(&self) -> Vec<String> {
        self.defs.iter().map(|d| d.name.clone()).collect()
    }

    pub(crate) fn fixed_mask(&self) -> Vec<bool> {
        self.defs.iter().map(|d| d.fixed.is_some()).collect()
    }

    /// Applies `fixed` name/value pins, erroring on unknown names.
    pub(crate) fn with_fixed(mut self, fixed: &[(String, f64)]) -> Result<Self, Error> {
        for (name, value) in fixed {
            let def = self
                .defs
                .iter_mut()
                .find(|d| &d.name == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown fixed parameter `{name}`")))?;
            def.fixed = Some(*value);
        }
        Ok(self)
    }

    pub(crate) fn constrained(&self, z: &[f64]) -> Vec<f64> {
        self.defs
            .iter()
            .zip(z)
            .map(|(d, zi)| match d.fixed {
                Some(v) => v,
                None => d.transform.to_constrained(*zi),
            })
            .collect()
    }

    /// Sum of prior log-densities (constrained scale) and transform
    /// Jacobians over the free parameters.
    pub(crate) fn log_prior_with_jacobian(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for (d, zi) in self.defs.iter().zip(z) {
            if d.fixed.is_some() {
                continue;
            }
            let x = d.transform.to_constrained(*zi);
            total += d.prior.log_density(x) + d.transform.log_jacobian(*zi);
            if total == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
        }
        total
    }

    fn initial_z<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.defs
            .iter()
            .map(|d| {
                let x = match (d.fixed, d.init) {
                    (Some(v), _) => v,
                    (None, Init::At(v)) => v,
                    (None, Init::PriorDraw) => d.prior.sample(rng),
                };
                d.transform.to_unconstrained(x)
            })
            .collect()
    }

    /// Base blocks (by definition) followed by joint blocks; pinned
    /// parameters are excluded everywhere.
    fn blocks(&self) -> (Vec<Vec<usize>>, Vec<String>) {
        let mut blocks = vec![Vec::new(); self.block_names.len()];
        for (idx, d) in self.defs.iter().enumerate() {
            if d.fixed.is_none() {
                blocks[d.block].push(idx);
            }
        }
        let mut names = self.block_names.clone();
        for (name, members) in &self.joint_blocks {
            let mut joint = Vec::new();
            for (idx, d) in self.defs.iter().enumerate() {
                if d.fixed.is_none() && members.contains(&d.block) {
                    joint.push(idx);
                }
            }
            if joint.len() > 1 {
                blocks.push(joint);
                names.push(name.clone());
            }
        }
        (blocks, names)
    }
}

/// Per-block acceptance rate over the kept draws.
#[derive(Debug, Clone)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
}

/// Draws and sampling metadata for one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    /// Constrained draws, parameter-major: `draws[param][iteration]`.
    pub draws: Vec<Vec<f64>>,
    pub accept: Vec<BlockAcceptance>,
    /// Frozen per-block proposal scale multipliers after warm-up.
    pub proposal_scales: Vec<f64>,
    /// Which imputed dataset this chain was fit on, when pooled.
    pub imputation_index: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EngineConfig {
    pub n_chains: usize,
    pub warmup: usize,
    pub draws: usize,
    /// Keep every `thin`-th post-warmup iteration.
    pub thin: usize,
    pub seed: u64,
}

const INIT_ATTEMPTS: usize = 100;
const ADAPT_BATCH: usize = 50;
const ACCEPT_LO: f64 = 0.23;
const ACCEPT_HI: f64 = 0.40;

/// Running mean and covariance of one block's unconstrained coordinates,
/// used to shape the proposal. Weakly identified scale parameters ride long
/// correlated ridges (total variance is pinned while its split is not), so a
/// full-covariance proposal is needed for the chains to traverse them.
struct BlockCov {
    count: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    /// Frozen or periodically refreshed proposal factor (lower triangular).
    factor: Option<DMatrix<f64>>,
}

use nalgebra::{DMatrix, DVector};

impl BlockCov {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            factor: None,
        }
    }

    fn update(&mut self, z: &DVector<f64>) {
        self.count += 1;
        let n = self.count as f64;
        let delta = z - &self.mean;
        self.mean += &delta / n;
        let delta2 = z - &self.mean;
        self.m2 += delta * delta2.transpose();
    }

    /// Refreshes the proposal factor from the accumulated covariance (plus a
    /// small ridge); keeps the previous factor until enough history exists.
    fn refresh(&mut self) {
        let d = self.mean.len();
        if self.count < (10 * d).max(200) {
            return;
        }
        let mut cov = &self.m2 / (self.count - 1) as f64;
        let ridge = 1e-8 * (cov.diagonal().amax().max(1e-12));
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        if let Some(chol) = cov.cholesky() {
            self.factor = Some(chol.l());
        }
    }

    /// Drops the accumulated history (keeping the current factor), so early
    /// warm-up transients stop contaminating the proposal shape.
    fn reset_history(&mut self) {
        self.count = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

fn run_one_chain<L>(
    layout: &ParamLayout,
    log_likelihood: &L,
    config: &EngineConfig,
    chain_index: usize,
) -> Result<Chain, Error>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng: ChaCha8Rng = stream(config.seed, 0xC4A1, chain_index as u64);
    let dim = layout.len();
    let (blocks, block_names) = layout.blocks();

    let target = |z: &[f64]| -> f64 {
        let prior = layout.log_prior_with_jacobian(z);
        if prior == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        prior + log_likelihood(&layout.constrained(z))
    };

    let mut z = Vec::new();
    let mut current_lp = f64::NEG_INFINITY;
    for attempt in 0..INIT_ATTEMPTS {
        z = layout.initial_z(&mut rng);
        current_lp = target(&z);
        if current_lp.is_finite() {
            break;
        }
        if attempt == INIT_ATTEMPTS - 1 {
            return Err(Error::CannotInitialize {
                attempts: INIT_ATTEMPTS,
            });
        }
    }

    let n_blocks = blocks.len();
    let mut log_scales: Vec<f64> = blocks
        .iter()
        .map(|b| {
            let d = b.len().max(1) as f64;
            (2.38 / d.sqrt()).ln()
        })
        .collect();
    let mut batch_accepts = vec![0usize; n_blocks];
    let mut batch_totals = vec![0usize; n_blocks];
    let mut kept_accepts = vec![0usize; n_blocks];
    let mut kept_totals = vec![0usize; n_blocks];
    let mut block_cov: Vec<BlockCov> = blocks.iter().map(|b| BlockCov::new(b.len())).collect();
    let mut adapt_round = 0usize;

    let mut draws = vec![Vec::with_capacity(config.draws); dim];
    let mut proposal = vec![0.0; dim];
    let mut block_z: Vec<DVector<f64>> = blocks.iter().map(|b| DVector::zeros(b.len())).collect();

    let kept_iters = config.draws * config.thin;
    for iter in 0..config.warmup + kept_iters {
        let adapting = iter < config.warmup;
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                continue;
            }
            proposal.copy_from_slice(&z);
            let scale = log_scales[b].exp();
            let step = DVector::from_iterator(
                block.len(),
                (0..block.len()).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng) * scale),
            );
            match &block_cov[b].factor {
                Some(factor) => {
                    let shaped = factor * step;
                    for (j, &i) in block.iter().enumerate() {
                        proposal[i] = z[i] + shaped[j];
                    }
                }
                None => {
                    for (j, &i) in block.iter().enumerate() {
                        proposal[i] = z[i] + step[j];
                    }
                }
            }
            let prop_lp = target(&proposal);
            let log_u = rng.random::<f64>().ln();
            let accepted = log_u < prop_lp - current_lp;
            if accepted {
                z.copy_from_slice(&proposal);
                current_lp = prop_lp;
            }
            if adapting {
                batch_totals[b] += 1;
                batch_accepts[b] += accepted as usize;
            } else {
                kept_totals[b] += 1;
                kept_accepts[b] += accepted as usize;
            }
        }

        if adapting {
            for (b, block) in blocks.iter().enumerate() {
                for (j, &i) in block.iter().enumerate() {
                    block_z[b][j] = z[i];
                }
                block_cov[b].update(&block_z[b]);
            }
            // early transients would otherwise dominate the shape estimate
            if iter + 1 == config.warmup / 4 || iter + 1 == config.warmup / 2 {
                for cov in &mut block_cov {
                    cov.refresh();
                    cov.reset_history();
                }
            }
            if (iter + 1) % ADAPT_BATCH == 0 {
                adapt_round += 1;
                let step = 0.4 / (adapt_round as f64).sqrt();
                for b in 0..n_blocks {
                    if batch_totals[b] == 0 {
                        continue;
                    }
                    let rate = batch_accepts[b] as f64 / batch_totals[b] as f64;
                    if rate > ACCEPT_HI {
                        log_scales[b] += step;
                    } else if rate < ACCEPT_LO {
                        log_scales[b] -= step;
                    }
                    batch_accepts[b] = 0;
                    batch_totals[b] = 0;
                    block_cov[b].refresh();
                }
            }
        } else if (iter - config.warmup + 1) % config.thin == 0 {
            let constrained = layout.constrained(&z);
            for (i, value) in constrained.iter().enumerate() {
                draws[i].push(*value);
            }
        }
    }

    let accept = block_names
        .iter()
        .enumerate()
        .map(|(b, name)| BlockAcceptance {
            block: name.clone(),
            rate: if kept_totals[b] > 0 {
                kept_accepts[b] as f64 / kept_totals[b] as f64
            } else {
                f64::NAN
            },
        })
        .collect();

    Ok(Chain {
        draws,
        accept,
        proposal_scales: log_scales.iter().map(|s| s.exp()).collect(),
        imputation_index: None,
    })
}

/// Runs all chains (in parallel) and collects them in chain order.
pub(crate) fn run_blocked_rwm<L>(
    layout: &ParamLayout,
    log_likelihood: &L,
    config: &EngineConfig,
) -> Result<Vec<Chain>, Error>
where
    L: Fn(&[f64]) -> f64 + Sync,
{
    if config.n_chains == 0 || config.draws == 0 || config.thin == 0 {
        return Err(Error::InvalidConfig(
            "need at least one chain, one draw, and a positive thinning interval".into(),
        ));
    }
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_one_chain(layout, log_likelihood, config, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_layout() -> ParamLayout {
        ParamLayout {
            defs: vec![ParamDef {
                name: "mu".into(),
                transform: Transform::Identity,
                prior: PriorDensity::Normal { mean: 0.0, var: 100.0 },
                block: 0,
                init: Init::PriorDraw,
                fixed: None,
            }],
            block_names: vec!["loc".into()],
            joint_blocks: vec![],
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let layout = gaussian_layout();
        let target = |x: &[f64]| -0.5 * (x[0] - 3.0) * (x[0] - 3.0) * 4.0;
        let config = EngineConfig {
            n_chains: 2,
            warmup: 500,
            draws: 500,
            thin: 1,
            seed: 42,
        };
        let a = run_blocked_rwm(&layout, &target, &config).unwrap();
        let b = run_blocked_rwm(&layout, &target, &config).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.draws, cb.draws);
        }
    }

    #[test]
    fn recovers_simple_gaussian_moments() {
        // Likelihood N(3, 0.25) overwhelms the vague prior.
        let layout = gaussian_layout();
        let target = |x: &[f64]| -0.5 * (x[0] - 3.0) * (x[0] - 3.0) / 0.25;
        let config = EngineConfig {
            n_chains: 2,
            warmup: 2000,
            draws: 20_000,
            thin: 1,
            seed: 7,
        };
        let chains = run_blocked_rwm(&layout, &target, &config).unwrap();
        let all: Vec<f64> = chains.iter().flat_map(|c| c.draws[0].clone()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // posterior is N(3 * (400/400.25), ...) ~ N(2.998, 0.2498)
        assert!((mean - 3.0).abs() < 0.05, "mean {mean}");
        assert!((var - 0.25).abs() < 0.05, "var {var}");
    }

    #[test]
    fn acceptance_rate_lands_in_window() {
        let layout = gaussian_layout();
        let target = |x: &[f64]| -0.5 * x[0] * x[0];
        let config = EngineConfig {
            n_chains: 1,
            warmup: 3000,
            draws: 5000,
            thin: 1,
            seed: 11,
        };
        let chains = run_blocked_rwm(&layout, &target, &config).unwrap();
        let rate = chains[0].accept[0].rate;
        assert!(rate > 0.15 && rate < 0.6, "acceptance {rate}");
    }

    #[test]
    fn fixed_parameters_never_move() {
        let layout = ParamLayout {
            defs: vec![
                ParamDef {
                    name: "a".into(),
                    transform: Transform::Identity,
                    prior: PriorDensity::Normal { mean: 0.0, var: 1.0 },
                    block: 0,
                    init: Init::PriorDraw,
                    fixed: None,
                },
                ParamDef {
                    name: "b".into(),
                    transform: Transform::LogScale,
                    prior: PriorDensity::Uniform { lo: 0.0, hi: 10.0 },
                    block: 0,
                    init: Init::At(5.0),
                    fixed: None,
                },
            ],
            block_names: vec!["all".into()],
            joint_blocks: vec![],
        }
        .with_fixed(&[("b".into(), 2.5)])
        .unwrap();
        let target = |_: &[f64]| 0.0;
        let config = EngineConfig {
            n_chains: 1,
            warmup: 200,
            draws: 300,
            thin: 1,
            seed: 3,
        };
        let chains = run_blocked_rwm(&layout, &target, &config).unwrap();
        assert!(chains[0].draws[1].iter().all(|v| *v == 2.5));
    }

    #[test]
    fn impossible_target_fails_initialization() {
        let layout = gaussian_layout();
        let target = |_: &[f64]| f64::NEG_INFINITY;
        let config = EngineConfig {
            n_chains: 1,
            warmup: 10,
            draws: 10,
            thin: 1,
            seed: 1,
        };
        assert!(matches!(
            run_blocked_rwm(&layout, &target, &config),
            Err(Error::CannotInitialize { .. })
        ));
    }

    #[test]
    fn transform_round_trips() {
        for (t, x) in [
            (Transform::Identity, -3.2),
            (Transform::LogScale, 4.7),
            (Transform::Tanh, 0.83),
        ] {
            let z = t.to_unconstrained(x);
            assert!((t.to_constrained(z) - x).abs() < 1e-12);
        }
    }
}
