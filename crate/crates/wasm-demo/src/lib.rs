//! Interactive browser demo for the scalar-outcome dynamic model: simulate a
//! patient trajectory, reconstruct the daily mean process from sparse visits
//! with credible bands, and explore the long-run effect of sustained
//! adherence. Each exported function takes plain numbers and returns JSON for
//! the canvas plots in `www/`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mdlm::marginal::{asymptotic_effect, latent_mean_sequence};
use mdlm::simkit::{simulate_cohort, HorizonSpec, ObsTimes, SimConfig};
use mdlm::smoother::latent_conditional;
use mdlm::types::CompleteDynamics;
use mdlm::{ModelDims, PatientRecord, ThetaParams};
use nalgebra::{DMatrix, DVector};

fn scalar_theta(
    baseline_mean: f64,
    rho: f64,
    phi: f64,
    sigma_nu_sd: f64,
    sigma_0_sd: f64,
    sigma_eps_sd: f64,
) -> Result<ThetaParams, String> {
    if !(-1.0..=1.0).contains(&rho) || rho.abs() >= 1.0 {
        return Err("rho must lie strictly inside (-1, 1)".into());
    }
    for (name, sd) in [
        ("sigma_nu", sigma_nu_sd),
        ("sigma_0", sigma_0_sd),
        ("sigma_eps", sigma_eps_sd),
    ] {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(format!("{name} must be a positive standard deviation"));
        }
    }
    Ok(ThetaParams {
        beta: DMatrix::from_vec(1, 1, vec![baseline_mean]),
        rho: DVector::from_vec(vec![rho]),
        phi: DMatrix::from_vec(1, 1, vec![phi]),
        sigma_eps: DMatrix::from_vec(1, 1, vec![sigma_eps_sd * sigma_eps_sd]),
        sigma_nu: DVector::from_vec(vec![sigma_nu_sd * sigma_nu_sd]),
        sigma_0: DVector::from_vec(vec![sigma_0_sd * sigma_0_sd]),
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    seed: u64,
    horizon: usize,
    adherence_prob: f64,
    visit_rate: f64,
    theta: &ThetaParams,
) -> Result<(PatientRecord, Vec<f64>), String> {
    let config = SimConfig {
        dims: ModelDims::new(1, 1, 1),
        theta: theta.clone(),
        n_patients: 1,
        horizon: HorizonSpec::Fixed(horizon),
        adherence_prob,
        observation_times: ObsTimes::FirstPlusRate(visit_rate),
        seed,
    };
    let (mut records, truth) = simulate_cohort(&config).map_err(|e| e.to_string())?;
    let record = records.pop().ok_or("empty cohort")?;
    let states: Vec<f64> = (0..horizon).map(|t| truth[0].states[(0, t)]).collect();
    Ok((record, states))
}

#[derive(Serialize)]
struct Trajectory {
    days: Vec<usize>,
    adherence: Vec<f64>,
    /// True daily mean process beta*x + alpha_t.
    mean: Vec<f64>,
    observed_days: Vec<usize>,
    observed_values: Vec<f64>,
    baseline_mean: f64,
}

/// Simulates one patient forward: daily adherence, the latent mean process,
/// and sparse noisy observations at visit days.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_trajectory(
    seed: u32,
    horizon: u32,
    adherence_prob: f64,
    visit_rate: f64,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
    sigma_nu_sd: f64,
    sigma_0_sd: f64,
    sigma_eps_sd: f64,
) -> Result<String, JsError> {
    simulate_trajectory_json(
        seed, horizon, adherence_prob, visit_rate, baseline_mean, rho, phi, sigma_nu_sd,
        sigma_0_sd, sigma_eps_sd,
    )
    .map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
fn simulate_trajectory_json(
    seed: u32,
    horizon: u32,
    adherence_prob: f64,
    visit_rate: f64,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
    sigma_nu_sd: f64,
    sigma_0_sd: f64,
    sigma_eps_sd: f64,
) -> Result<String, String> {
    let run = || -> Result<String, String> {
        if horizon < 1 || horizon > 2000 {
            return Err("horizon must lie in [1, 2000]".into());
        }
        let theta = scalar_theta(baseline_mean, rho, phi, sigma_nu_sd, sigma_0_sd, sigma_eps_sd)?;
        let (record, states) =
            simulate_one(seed as u64, horizon as usize, adherence_prob, visit_rate, &theta)?;
        let dynamics = record.complete_dynamics().map_err(|e| e.to_string())?;
        let out = Trajectory {
            days: (1..=record.horizon).collect(),
            adherence: (1..=record.horizon)
                .map(|d| dynamics.day_row(d)[0])
                .collect(),
            mean: states.iter().map(|a| baseline_mean + a).collect(),
            observed_days: record.observations.iter().map(|o| o.day).collect(),
            observed_values: record.observations.iter().map(|o| o.value).collect(),
            baseline_mean,
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    };
    run()
}

#[derive(Serialize)]
struct SmoothedTrajectory {
    days: Vec<usize>,
    adherence: Vec<f64>,
    true_mean: Vec<f64>,
    post_mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    observed_days: Vec<usize>,
    observed_values: Vec<f64>,
    baseline_mean: f64,
}

/// Simulates a patient, then reconstructs the daily mean process from the
/// sparse observations alone: posterior mean and 90% bands of
/// `baseline + alpha_t` given the visits, with the simulated truth overlaid.
/// Bands pinch at visit days and widen between them.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn smooth_trajectory(
    seed: u32,
    horizon: u32,
    adherence_prob: f64,
    visit_rate: f64,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
    sigma_nu_sd: f64,
    sigma_0_sd: f64,
    sigma_eps_sd: f64,
) -> Result<String, JsError> {
    smooth_trajectory_json(
        seed, horizon, adherence_prob, visit_rate, baseline_mean, rho, phi, sigma_nu_sd,
        sigma_0_sd, sigma_eps_sd,
    )
    .map_err(|e| JsError::new(&e))
}

#[allow(clippy::too_many_arguments)]
fn smooth_trajectory_json(
    seed: u32,
    horizon: u32,
    adherence_prob: f64,
    visit_rate: f64,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
    sigma_nu_sd: f64,
    sigma_0_sd: f64,
    sigma_eps_sd: f64,
) -> Result<String, String> {
    let run = || -> Result<String, String> {
        if horizon < 1 || horizon > 2000 {
            return Err("horizon must lie in [1, 2000]".into());
        }
        let theta = scalar_theta(baseline_mean, rho, phi, sigma_nu_sd, sigma_0_sd, sigma_eps_sd)?;
        let (record, states) =
            simulate_one(seed as u64, horizon as usize, adherence_prob, visit_rate, &theta)?;
        let posterior = latent_conditional(&record, &theta).map_err(|e| e.to_string())?;
        let z90 = 1.6448536269514722;
        let mut post_mean = Vec::with_capacity(record.horizon);
        let mut lower = Vec::with_capacity(record.horizon);
        let mut upper = Vec::with_capacity(record.horizon);
        for day in 1..=record.horizon {
            let mean = baseline_mean + posterior.mean_at(0, day);
            let sd = posterior.var_at(0, day).max(0.0).sqrt();
            post_mean.push(mean);
            lower.push(mean - z90 * sd);
            upper.push(mean + z90 * sd);
        }
        let dynamics = record.complete_dynamics().map_err(|e| e.to_string())?;
        let out = SmoothedTrajectory {
            days: (1..=record.horizon).collect(),
            adherence: (1..=record.horizon)
                .map(|d| dynamics.day_row(d)[0])
                .collect(),
            true_mean: states.iter().map(|a| baseline_mean + a).collect(),
            post_mean,
            lower,
            upper,
            observed_days: record.observations.iter().map(|o| o.day).collect(),
            observed_values: record.observations.iter().map(|o| o.value).collect(),
            baseline_mean,
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    };
    run()
}

#[derive(Serialize)]
struct AsymptoteCurve {
    days: Vec<usize>,
    adherent_mean: Vec<f64>,
    nonadherent_mean: Vec<f64>,
    adherent_limit: f64,
    nonadherent_limit: f64,
    baseline_mean: f64,
}

/// Long-run means under sustained adherence and sustained non-adherence:
/// the day-by-day mean recursion and its limits `baseline ± phi/(1-rho)`.
#[wasm_bindgen]
pub fn asymptotic_curve(
    horizon: u32,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
) -> Result<String, JsError> {
    asymptotic_curve_json(horizon, baseline_mean, rho, phi).map_err(|e| JsError::new(&e))
}

fn asymptotic_curve_json(
    horizon: u32,
    baseline_mean: f64,
    rho: f64,
    phi: f64,
) -> Result<String, String> {
    let run = || -> Result<String, String> {
        if horizon < 1 || horizon > 2000 {
            return Err("horizon must lie in [1, 2000]".into());
        }
        if rho.abs() >= 1.0 {
            return Err("rho must lie strictly inside (-1, 1)".into());
        }
        let horizon = horizon as usize;
        let theta = scalar_theta(baseline_mean, rho, phi, 1.0, 1.0, 1.0)?;
        let effect = asymptotic_effect(&theta)[(0, 0)];
        let adherent = latent_mean_sequence(
            rho,
            &[phi],
            &CompleteDynamics::from_column(&vec![1.0; horizon]),
        );
        let nonadherent = latent_mean_sequence(
            rho,
            &[phi],
            &CompleteDynamics::from_column(&vec![-1.0; horizon]),
        );
        let out = AsymptoteCurve {
            days: (1..=horizon).collect(),
            adherent_mean: adherent.iter().map(|e| baseline_mean + e).collect(),
            nonadherent_mean: nonadherent.iter().map(|e| baseline_mean + e).collect(),
            adherent_limit: baseline_mean + effect,
            nonadherent_limit: baseline_mean - effect,
            baseline_mean,
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    };
    run()
}
