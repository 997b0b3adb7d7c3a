use serde::Serialize;

use super::trajectory::Simulator;
use super::VerifyError;
use crate::lyapunov::LyapunovConstants;

/// How far one trajectory strayed, relative to the level `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialExtent {
    pub seed: u64,
    pub v0: f64,
    pub sup_v: f64,
    pub steps: u64,
    pub steps_above_t: u64,
    /// Maximal runs of consecutive steps with `V > T`, counting one that starts at k = 0.
    pub excursions: u64,
    /// Last step at which the trajectory entered `{V ≤ T}` from outside.
    pub last_entry: Option<u64>,
    pub ends_inside: bool,
    pub all_finite: bool,
}

/// Consumes a simulator and records the extent of its trajectory above `t`.
pub fn track_extent(sim: Simulator<'_>, seed: u64, t: f64) -> Result<TrialExtent, VerifyError> {
    let mut ext = TrialExtent {
        seed,
        v0: f64::NAN,
        sup_v: f64::NEG_INFINITY,
        steps: 0,
        steps_above_t: 0,
        excursions: 0,
        last_entry: None,
        ends_inside: true,
        all_finite: true,
    };
    let mut above = false;
    for record in sim {
        let record = record?;
        let v = record.v;
        if record.k == 0 {
            ext.v0 = v;
        }
        ext.steps += 1;
        ext.all_finite &= v.is_finite();
        ext.sup_v = ext.sup_v.max(v);
        let now_above = v > t || v.is_nan();
        if now_above {
            ext.steps_above_t += 1;
            if !above {
                ext.excursions += 1;
            }
        } else if above {
            ext.last_entry = Some(record.k);
        }
        above = now_above;
    }
    ext.ends_inside = !above;
    Ok(ext)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessSummary {
    pub trials: usize,
    pub t: f64,
    pub safety: f64,
    pub max_sup_v: f64,
    /// Largest `sup V / max(V₀, T)` over trials; passes when at most `safety`.
    pub max_ratio: f64,
    pub fraction_above_t: f64,
    pub latest_entry: Option<u64>,
    pub all_finite: bool,
    pub all_within_limit: bool,
    pub all_reentered: bool,
    pub pass: bool,
    /// Boundedness is an almost-sure statement about infinite trajectories;
    /// this check only sees a finite horizon.
    pub finite_horizon_proxy: bool,
    pub per_trial: Vec<TrialExtent>,
}

/// Every trial must stay finite, keep `sup V ≤ safety · max(V₀, T)`, and be
/// back inside `{V ≤ T}` at the final step.
pub fn boundedness_check(
    extents: &[TrialExtent],
    consts: &LyapunovConstants,
    safety: f64,
) -> Result<BoundednessSummary, VerifyError> {
    if extents.is_empty() {
        return Err(VerifyError::EmptyEnsemble);
    }
    let t = consts.t()?;
    let ratio = |e: &TrialExtent| {
        let scale = e.v0.max(t);
        if scale > 0.0 {
            e.sup_v / scale
        } else if e.sup_v == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let max_ratio = extents.iter().map(ratio).fold(0.0, f64::max);
    let total_steps: u64 = extents.iter().map(|e| e.steps).sum();
    let above: u64 = extents.iter().map(|e| e.steps_above_t).sum();
    let all_finite = extents.iter().all(|e| e.all_finite);
    let all_within_limit = extents.iter().all(|e| ratio(e) <= safety);
    let all_reentered = extents.iter().all(|e| e.ends_inside);
    Ok(BoundednessSummary {
        trials: extents.len(),
        t,
        safety,
        max_sup_v: extents.iter().map(|e| e.sup_v).fold(f64::NEG_INFINITY, f64::max),
        max_ratio,
        fraction_above_t: above as f64 / total_steps.max(1) as f64,
        latest_entry: extents.iter().filter_map(|e| e.last_entry).max(),
        all_finite,
        all_within_limit,
        all_reentered,
        pass: all_finite && all_within_limit && all_reentered,
        finite_horizon_proxy: true,
        per_trial: extents.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{NoiseSpec, RunConfig};
    use crate::verify::state_on_sphere;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_ensemble_is_an_error() {
        let s = RunConfig::reference().scenario().unwrap();
        assert_eq!(
            boundedness_check(&[], &s.constants(), 5.0),
            Err(VerifyError::EmptyEnsemble)
        );
    }

    #[test]
    fn excursion_from_outside_is_counted_and_closed() {
        let s = RunConfig::reference().scenario().unwrap().with_horizon(20_000);
        let consts = s.constants();
        let t = consts.t.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let start = state_on_sphere(s.theta_star(), s.gains.gamma(), 10.0 * t, &mut rng);
        let s = s.with_initial(start);
        let ext = track_extent(Simulator::new(&s, 5), 5, t).unwrap();
        assert_eq!(ext.excursions, 1);
        assert!(ext.ends_inside);
        assert!(ext.last_entry.is_some());
        assert!((ext.sup_v - ext.v0).abs() <= 1e-9 * ext.v0);
        let summary = boundedness_check(&[ext], &consts, 5.0).unwrap();
        assert!(summary.pass);
    }

    #[test]
    fn noise_free_sup_is_initial_value() {
        let mut cfg = RunConfig::reference();
        cfg.noise = NoiseSpec::Zero {
            d_max: None,
            sigma_max: None,
        };
        cfg.model.theta_star = vec![0.0, 0.0];
        cfg.gains.vartheta0 = Some(vec![0.5, 0.5]);
        cfg.horizon = 2000;
        let s = cfg.scenario().unwrap();
        let ext = track_extent(Simulator::new(&s, 1), 1, 0.0).unwrap();
        assert_eq!(ext.sup_v, ext.v0);
    }
}
