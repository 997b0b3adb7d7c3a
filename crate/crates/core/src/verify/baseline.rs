use serde::Serialize;

use super::trajectory::Simulator;
use super::VerifyError;
use crate::config::Scenario;
use crate::par::{self, Execution};
use crate::tuner::{gd_step, GdVariant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSettings {
    pub gamma: f64,
    pub variant: GdVariant,
    /// Keep every `loss_stride`-th loss value.
    pub loss_stride: u64,
}

/// The tuner and the gradient recursion driven by one observation stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRun {
    pub seed: u64,
    pub hot_terminal_error: f64,
    /// `None` if the gradient recursion diverged.
    pub gd_terminal_error: Option<f64>,
    pub gd_diverged_at: Option<u64>,
    /// `(k, ½(θ_kᵀφ_k − y_{k+1})²)` for the tuner.
    pub hot_loss: Vec<(u64, f64)>,
    pub gd_loss: Vec<(u64, f64)>,
}

/// Runs the tuner on `scenario` for each seed and feeds the same `(φ_k, η_{k+1})`
/// to `θ_{k+1} = θ_k − γ∇L` started from the tuner's initial θ.
///
/// History-dependent noise is drawn along the tuner's trajectory, so the
/// gradient recursion sees exactly the tuner's noise values.
pub fn compare_baseline(
    scenario: &Scenario,
    seeds: &[u64],
    settings: &BaselineSettings,
    exec: Execution,
) -> Result<Vec<BaselineRun>, VerifyError> {
    let stride = settings.loss_stride.max(1);
    let theta_star = scenario.theta_star();
    par::try_map_indexed(seeds.len(), exec, |i| {
        let seed = seeds[i];
        let mut gd = Some(scenario.initial.theta.clone());
        let mut gd_diverged_at = None;
        let mut hot_loss = Vec::new();
        let mut gd_loss = Vec::new();
        let mut hot_terminal_error = f64::NAN;
        for record in Simulator::new(scenario, seed) {
            let record = record?;
            let k = record.k;
            hot_terminal_error = (&record.theta - theta_star).norm();
            let keep = k % stride == 0 || k == scenario.horizon;
            if keep {
                hot_loss.push((k, 0.5 * record.e_y * record.e_y));
            }
            if let Some(theta) = gd.take() {
                let phi = scenario.regressor.generate(k, seed);
                let y = phi.dot(theta_star) + record.eta;
                if keep {
                    let e = theta.dot(&phi) - y;
                    gd_loss.push((k, 0.5 * e * e));
                }
                if k == scenario.horizon {
                    gd = Some(theta);
                } else {
                    match gd_step(&theta, &phi, y, settings.gamma, settings.variant) {
                        Ok(next) => gd = Some(next),
                        Err(_) => gd_diverged_at = Some(k),
                    }
                }
            }
        }
        Ok(BaselineRun {
            seed,
            hot_terminal_error,
            gd_terminal_error: gd.map(|theta| (theta - theta_star).norm()),
            gd_diverged_at,
            hot_loss,
            gd_loss,
        })
    })
}
