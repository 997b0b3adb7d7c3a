use serde::Serialize;

use super::VerifyError;
use crate::lyapunov::{clipped_v, theorem4_radius, LyapunovConstants};
use crate::stats::MeanEstimate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStep {
    pub k: u64,
    pub mean: f64,
    pub stderr: f64,
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub alpha: f64,
    /// Clipping radius `max{c₂²/(α−c₁)², ĉ/α}` used for `V̂`.
    pub k4: f64,
    /// The decrement-bound root, reported for comparison only.
    pub k: Option<f64>,
    pub trials: usize,
    pub z: f64,
    /// Largest `V̂₀` over trials.
    pub v_hat0: f64,
    pub pass: bool,
    pub first_failure: Option<u64>,
    pub steps: Vec<RateStep>,
}

/// Compares the ensemble mean of `V̂_k = max(V_k − K₄, 0)` with
/// `(1−α)^k·V̂₀` at every step. `series[i][k]` is `V_k` of trial `i`.
pub fn rate_check(
    series: &[Vec<f64>],
    alpha: f64,
    consts: &LyapunovConstants,
    z: f64,
) -> Result<RateReport, VerifyError> {
    let k4 = theorem4_radius(alpha, consts)?;
    let len = series.first().ok_or(VerifyError::EmptyEnsemble)?.len();
    if let Some((trial, s)) = series.iter().enumerate().find(|(_, s)| s.len() != len) {
        return Err(VerifyError::RaggedEnsemble {
            trial,
            expected: len,
            actual: s.len(),
        });
    }
    let v_hat0 = series.iter().map(|s| clipped_v(s[0], k4)).fold(0.0, f64::max);
    let mut column = vec![0.0; series.len()];
    let steps: Vec<RateStep> = (0..len)
        .map(|k| {
            for (slot, s) in column.iter_mut().zip(series) {
                *slot = clipped_v(s[k], k4);
            }
            let est = MeanEstimate::from_samples(&column);
            let envelope = (1.0 - alpha).powf(k as f64) * v_hat0;
            RateStep {
                k: k as u64,
                mean: est.mean,
                stderr: est.stderr,
                envelope,
                pass: est.within(envelope, z),
            }
        })
        .collect();
    let first_failure = steps.iter().find(|s| !s.pass).map(|s| s.k);
    Ok(RateReport {
        alpha,
        k4,
        k: consts.k,
        trials: series.len(),
        z,
        v_hat0,
        pass: first_failure.is_none(),
        first_failure,
        steps,
    })
}
