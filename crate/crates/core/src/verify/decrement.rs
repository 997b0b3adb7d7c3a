use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::trajectory::{state_on_sphere, Simulator};
use super::VerifyError;
use crate::config::Scenario;
use crate::lyapunov::{lyapunov_value, LyapunovConstants};
use crate::par::{self, Execution};
use crate::stats::MeanEstimate;
use crate::tuner::{hot_step, TunerState};

/// Probes with `V ≥ STRICT_MARGIN · K` must show a negative mean increment.
const STRICT_MARGIN: f64 = 1.05;

pub const MIN_RESAMPLES: usize = 100;

/// A frozen `(θ_k, ϑ_k, φ_k)` to resample the next noise value at.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    pub label: String,
    pub state: TunerState,
    pub phi: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub label: String,
    pub v: f64,
    /// Empirical `E[V_{k+1} | F_k]`.
    pub next: MeanEstimate,
    pub bound: f64,
    pub pass: bool,
    /// Empirical `E[V_{k+1} − V_k | F_k]`.
    pub increment: MeanEstimate,
    /// Set for probes at or above `1.05·K`, where the increment must be negative.
    pub strict_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecrementSettings {
    pub resamples: usize,
    pub z: f64,
    pub per_sphere: usize,
    pub harvested: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecrementReport {
    pub noise: String,
    pub resamples: usize,
    pub z: f64,
    pub k: Option<f64>,
    pub t: Option<f64>,
    pub probes: Vec<ProbeResult>,
    pub bound_pass: bool,
    pub strict_pass: bool,
    pub pass: bool,
}

/// Draws `resamples` values of `η_{k+1}` at the frozen probe, takes one tuner
/// step for each, and compares the mean of `V_{k+1}` with
/// `V_k − c₁V_k + c₂√V_k + ĉ`.
pub fn conditional_decrement_probe<R: Rng + ?Sized>(
    probe: &ProbeState,
    scenario: &Scenario,
    consts: &LyapunovConstants,
    resamples: usize,
    z: f64,
    rng: &mut R,
) -> Result<ProbeResult, VerifyError> {
    if resamples < MIN_RESAMPLES {
        return Err(VerifyError::TooFewResamples {
            min: MIN_RESAMPLES,
            actual: resamples,
        });
    }
    let theta_star = scenario.theta_star();
    let gamma = scenario.gains.gamma();
    let clean = probe.phi.dot(theta_star);
    let v = lyapunov_value(&probe.state, theta_star, gamma);
    let mut next_values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let eta = scenario.noise.sample(&probe.state, rng);
        let next = hot_step(&probe.state, &probe.phi, clean + eta, &scenario.gains)?;
        next_values.push(lyapunov_value(&next, theta_star, gamma));
    }
    let increments: Vec<f64> = next_values.iter().map(|x| x - v).collect();
    let next = MeanEstimate::from_samples(&next_values);
    let increment = MeanEstimate::from_samples(&increments);
    let bound = consts.next_value_bound(v);
    let strict_pass = consts
        .k
        .filter(|&k| v >= STRICT_MARGIN * k && v > 0.0)
        .map(|_| increment.mean < z * increment.stderr);
    Ok(ProbeResult {
        label: probe.label.clone(),
        v,
        next,
        bound,
        pass: next.within(bound, z),
        increment,
        strict_pass,
    })
}

/// The minimum `θ = ϑ = θ*`, states on the spheres `V ∈ {0.1K, K, T, 10T}`,
/// and `harvested` states spread evenly along a simulated trajectory.
///
/// Sphere probes are skipped when K or T is undefined or zero.
pub fn probe_states(
    scenario: &Scenario,
    consts: &LyapunovConstants,
    per_sphere: usize,
    harvested: usize,
    seed: u64,
) -> Result<Vec<ProbeState>, VerifyError> {
    let theta_star = scenario.theta_star();
    let gamma = scenario.gains.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = vec![ProbeState {
        label: "minimum".into(),
        state: TunerState::new(theta_star.clone(), theta_star.clone()),
        phi: scenario.regressor.generate(0, seed),
    }];

    if let (Some(k), Some(t)) = (consts.k, consts.t) {
        if k > 0.0 && t > 0.0 {
            let spheres = [("0.1K", 0.1 * k), ("K", k), ("T", t), ("10T", 10.0 * t)];
            for (name, target) in spheres {
                for j in 0..per_sphere {
                    let step = rng.random_range(0..scenario.horizon.max(1));
                    probes.push(ProbeState {
                        label: format!("sphere {name} #{j}"),
                        state: state_on_sphere(theta_star, gamma, target, &mut rng),
                        phi: scenario.regressor.generate(step, seed),
                    });
                }
            }
        }
    }

    if harvested > 0 {
        let stride = (scenario.horizon / harvested as u64).max(1);
        let mut sim = Simulator::new(scenario, seed);
        while probes.len() < 1 + 4 * per_sphere + harvested {
            let Some(record) = sim.next() else { break };
            let record = record?;
            if record.k % stride != 0 {
                continue;
            }
            probes.push(ProbeState {
                label: format!("trajectory k={}", record.k),
                state: TunerState {
                    theta: record.theta,
                    vartheta: record.vartheta,
                    step: record.k,
                },
                phi: scenario.regressor.generate(record.k, seed),
            });
        }
    }
    Ok(probes)
}

/// Runs the conditional decrement probe at every state from [`probe_states`].
pub fn decrement_check(
    scenario: &Scenario,
    consts: &LyapunovConstants,
    settings: &DecrementSettings,
    exec: Execution,
) -> Result<DecrementReport, VerifyError> {
    let probes = probe_states(scenario, consts, settings.per_sphere, settings.harvested, settings.seed)?;
    let results = par::try_map_indexed(probes.len(), exec, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::trial_seed(settings.seed, i));
        rng.set_stream(1);
        conditional_decrement_probe(&probes[i], scenario, consts, settings.resamples, settings.z, &mut rng)
    })?;
    let bound_pass = results.iter().all(|r| r.pass);
    let strict_pass = results.iter().all(|r| r.strict_pass != Some(false));
    Ok(DecrementReport {
        noise: scenario.noise.kind().name().to_string(),
        resamples: settings.resamples,
        z: settings.z,
        k: consts.k,
        t: consts.t,
        probes: results,
        bound_pass,
        strict_pass,
        pass: bound_pass && strict_pass,
    })
}
