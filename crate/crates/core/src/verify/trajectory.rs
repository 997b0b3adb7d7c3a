use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::VerifyError;
use crate::config::Scenario;
use crate::lyapunov::{clipped_v, lyapunov_value};
use crate::model::emit_observation;
use crate::par::{self, Execution};
use crate::tuner::{hot_step, TunerState};

/// State and observation at step k.
///
/// `e_y`, `eta` and `phi_norm` describe the observation `(φ_k, y_{k+1})`
/// consumed by the step from k to k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub theta: DVector<f64>,
    pub vartheta: DVector<f64>,
    pub v: f64,
    pub v_hat: f64,
    /// `θ_kᵀφ_k − y_{k+1}`
    pub e_y: f64,
    pub eta: f64,
    pub phi_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTrace {
    pub seed: u64,
    /// Radius used for the `v_hat` column (the decrement-bound root K, or 0 when degenerate).
    pub clip_radius: f64,
    pub records: Vec<TraceRecord>,
}

impl TrajectoryTrace {
    pub fn lyapunov_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v).collect()
    }
}

/// Steps a scenario forward one observation at a time, yielding records for
/// k = 0..=horizon.
///
/// The run with seed `s` draws noise from a ChaCha8 stream seeded with `s`
/// and regressors from the pure stream identified by `s`.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    seed: u64,
    rng: ChaCha8Rng,
    clip_radius: f64,
    state: Option<TunerState>,
    pending: Option<VerifyError>,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Self {
        Self::with_clip_radius(scenario, seed, scenario.constants().k.unwrap_or(0.0))
    }

    pub fn with_clip_radius(scenario: &'a Scenario, seed: u64, clip_radius: f64) -> Self {
        Self {
            scenario,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clip_radius,
            state: Some(scenario.initial.clone()),
            pending: None,
        }
    }

    pub fn clip_radius(&self) -> f64 {
        self.clip_radius
    }
}

impl Iterator for Simulator<'_> {
    type Item = Result<TraceRecord, VerifyError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(err) = self.pending.take() {
            return Some(Err(err));
        }
        let state = self.state.take()?;
        let sc = self.scenario;
        let k = state.step;
        let obs = match emit_observation(&sc.model, &sc.regressor, &sc.noise, k, &state, self.seed, &mut self.rng) {
            Ok(obs) => obs,
            Err(e) => return Some(Err(e.into())),
        };
        if k < sc.horizon {
            match hot_step(&state, &obs.phi, obs.y, &sc.gains) {
                Ok(next) => self.state = Some(next),
                Err(e) => self.pending = Some(e.into()),
            }
        }
        let v = lyapunov_value(&state, sc.theta_star(), sc.gains.gamma());
        let e_y = state.theta.dot(&obs.phi) - obs.y;
        Some(Ok(TraceRecord {
            k,
            theta: state.theta,
            vartheta: state.vartheta,
            v,
            v_hat: clipped_v(v, self.clip_radius),
            e_y,
            eta: obs.eta,
            phi_norm: obs.phi.norm(),
        }))
    }
}

/// Runs `scenario.horizon` steps and keeps every record.
pub fn run_trajectory(scenario: &Scenario, seed: u64) -> Result<TrajectoryTrace, VerifyError> {
    let sim = Simulator::new(scenario, seed);
    let clip_radius = sim.clip_radius();
    let records = sim.collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryTrace {
        seed,
        clip_radius,
        records,
    })
}

/// Only the Lyapunov values `V_0..=V_horizon` of one run.
pub fn lyapunov_series(scenario: &Scenario, seed: u64) -> Result<Vec<f64>, VerifyError> {
    Simulator::new(scenario, seed).map(|r| r.map(|r| r.v)).collect()
}

/// Applies `f` to a fresh simulator for each trial `i`, seeded with `base_seed ⊕ i`.
pub fn run_ensemble<T, F>(
    scenario: &Scenario,
    base_seed: u64,
    trials: usize,
    exec: Execution,
    f: F,
) -> Result<Vec<T>, VerifyError>
where
    T: Send,
    F: Fn(Simulator<'_>) -> Result<T, VerifyError> + Sync + Send,
{
    par::try_map_indexed(trials, exec, |i| {
        f(Simulator::new(scenario, par::trial_seed(base_seed, i)))
    })
}

/// A state with `V = target` in a uniformly random direction of (ϑ − θ*, θ − ϑ).
pub fn state_on_sphere(theta_star: &DVector<f64>, gamma: f64, target: f64, rng: &mut ChaCha8Rng) -> TunerState {
    let n = theta_star.len();
    let dir: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = (gamma * target).sqrt() / norm;
    let drift = DVector::from_fn(n, |i, _| dir[i] * scale);
    let spread = DVector::from_fn(n, |i, _| dir[n + i] * scale);
    let vartheta = theta_star + drift;
    let theta = &vartheta + spread;
    TunerState::new(theta, vartheta)
}
