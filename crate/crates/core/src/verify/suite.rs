use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::bounds::{boundedness_check, track_extent, BoundednessSummary};
use super::decrement::{decrement_check, DecrementReport, DecrementSettings};
use super::rate::{rate_check, RateReport};
use super::trajectory::{state_on_sphere, Simulator};
use super::VerifyError;
use crate::config::{ConfigError, RunConfig, Scenario};
use crate::lyapunov::theorem4_radius;
use crate::par::{self, Execution};

/// Which checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Decrement,
    Bound,
    Rate,
    All,
}

impl Check {
    fn includes(self, other: Check) -> bool {
        self == Check::All || self == other
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundLeg {
    /// `"configured"` for the configured initial state, `"10T"` for a start on the sphere `V = 10T`.
    pub start: String,
    pub summary: BoundednessSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub check: Check,
    pub base_seed: u64,
    pub decrement: Option<DecrementReport>,
    pub bound: Option<Vec<BoundLeg>>,
    pub rate: Option<RateReport>,
    pub pass: bool,
}

// Trial seeds are `base_seed ⊕ index`; each leg uses its own index range.
fn leg_seed(base: u64, leg: usize, trials: usize, i: usize) -> u64 {
    par::trial_seed(base, leg * trials + i)
}

fn start_on_sphere(scenario: &Scenario, target: f64, base_seed: u64, stream: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    scenario.with_initial(state_on_sphere(
        scenario.theta_star(),
        scenario.gains.gamma(),
        target,
        &mut rng,
    ))
}

fn bound_leg(
    scenario: &Scenario,
    cfg: &RunConfig,
    leg: usize,
    exec: Execution,
) -> Result<BoundednessSummary, VerifyError> {
    let consts = scenario.constants();
    let t = consts.t()?;
    let trials = cfg.ensemble;
    let extents = par::try_map_indexed(trials, exec, |i| {
        let seed = leg_seed(cfg.base_seed, leg, trials, i);
        track_extent(Simulator::new(scenario, seed), seed, t)
    })?;
    boundedness_check(&extents, &consts, cfg.verify.bound_safety)
}

/// Runs the selected checks on a validated configuration.
///
/// * decrement: probes on the V-spheres plus harvested states, `resamples` draws each
/// * bound: `ensemble` trials over `horizon` steps, once from the configured start and once from `V₀ = 10T`
/// * rate: `ensemble` trials over `verify.rate_horizon` steps from `V₀ = rate_start_multiple · K₄`
pub fn run_suite(cfg: &RunConfig, check: Check, exec: Execution) -> Result<SuiteReport, SuiteError> {
    let scenario = cfg.scenario()?;
    let consts = scenario.constants();
    let alpha = if check.includes(Check::Rate) {
        Some(cfg.alpha_for(&consts)?)
    } else {
        None
    };
    let settings = &cfg.verify;

    let decrement = if check.includes(Check::Decrement) {
        let ds = DecrementSettings {
            resamples: cfg.resamples,
            z: settings.z,
            per_sphere: settings.probes_per_sphere,
            harvested: settings.harvested_states,
            seed: cfg.base_seed,
        };
        Some(decrement_check(&scenario, &consts, &ds, exec)?)
    } else {
        None
    };

    let bound = if check.includes(Check::Bound) {
        let t = consts.t().map_err(VerifyError::from)?;
        let outside = start_on_sphere(&scenario, 10.0 * t, cfg.base_seed, 2);
        Some(vec![
            BoundLeg {
                start: "configured".into(),
                summary: bound_leg(&scenario, cfg, 0, exec)?,
            },
            BoundLeg {
                start: "10T".into(),
                summary: bound_leg(&outside, cfg, 1, exec)?,
            },
        ])
    } else {
        None
    };

    let rate = match alpha {
        Some(alpha) => {
            let k4 = theorem4_radius(alpha, &consts).map_err(VerifyError::from)?;
            let start = start_on_sphere(&scenario, settings.rate_start_multiple * k4, cfg.base_seed, 3)
                .with_horizon(settings.rate_horizon);
            let trials = cfg.ensemble;
            let series = par::try_map_indexed(trials, exec, |i| {
                Simulator::new(&start, leg_seed(cfg.base_seed, 2, trials, i))
                    .map(|r| r.map(|r| r.v))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            Some(rate_check(&series, alpha, &consts, settings.z)?)
        }
        None => None,
    };

    let pass = decrement.as_ref().is_none_or(|d| d.pass)
        && bound.as_ref().is_none_or(|b| b.iter().all(|l| l.summary.pass))
        && rate.as_ref().is_none_or(|r| r.pass);
    Ok(SuiteReport {
        check,
        base_seed: cfg.base_seed,
        decrement,
        bound,
        rate,
        pass,
    })
}
