//! Ground truth, regressor generators and noise processes.
//!
//! Observations follow `y_{k+1} = φ_kᵀθ* + η_{k+1}` where the noise has a
//! conditional mean bounded by `d_max` and a conditional second moment bounded
//! by `sigma_max²` given everything the estimator has produced so far.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::tuner::TunerState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

fn require_finite(name: &'static str, values: &[f64]) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(name, "entries must be finite"))
    }
}

/// The unknown parameter vector θ*.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    theta_star: DVector<f64>,
}

impl TrueModel {
    pub fn new(theta_star: DVector<f64>) -> Result<Self, ModelError> {
        if theta_star.is_empty() {
            return Err(invalid("theta_star", "dimension must be at least 1"));
        }
        require_finite("theta_star", theta_star.as_slice())?;
        Ok(Self { theta_star })
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn dimension(&self) -> usize {
        self.theta_star.len()
    }
}

/// How regressors are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorKind {
    Constant {
        value: DVector<f64>,
    },
    /// Component `i` is `amplitude/√N · sin(ω(i+1)k + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Componentwise uniform on `[-bound, bound]`, then clipped into the ball of radius `bound`.
    IidBounded {
        bound: f64,
    },
    /// Cycles through `levels`, holding each for `hold` steps.
    PiecewiseConstant {
        levels: Vec<DVector<f64>>,
        hold: u64,
    },
}

/// A regressor generator with a declared norm bound.
///
/// `generate(k, seed)` is a pure function of its arguments, so trajectories
/// and resampling probes can regenerate any φ_k without carrying RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSource {
    kind: RegressorKind,
    dimension: usize,
    phi_bound: f64,
}

impl RegressorSource {
    pub fn new(kind: RegressorKind, dimension: usize) -> Result<Self, ModelError> {
        if dimension == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        let phi_bound = match &kind {
            RegressorKind::Constant { value } => {
                check_dim("regressor.value", dimension, value.len())?;
                require_finite("regressor.value", value.as_slice())?;
                value.norm()
            }
            RegressorKind::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(invalid("regressor.amplitude", "must be finite and nonnegative"));
                }
                require_finite("regressor.omega", &[*omega])?;
                require_finite("regressor.phase", &[*phase])?;
                *amplitude
            }
            RegressorKind::IidBounded { bound } => {
                if !(bound.is_finite() && *bound >= 0.0) {
                    return Err(invalid("regressor.bound", "must be finite and nonnegative"));
                }
                *bound
            }
            RegressorKind::PiecewiseConstant { levels, hold } => {
                if levels.is_empty() {
                    return Err(invalid("regressor.levels", "at least one level is required"));
                }
                if *hold == 0 {
                    return Err(invalid("regressor.hold", "must be at least 1"));
                }
                let mut bound = 0.0_f64;
                for level in levels {
                    check_dim("regressor.levels", dimension, level.len())?;
                    require_finite("regressor.levels", level.as_slice())?;
                    bound = bound.max(level.norm());
                }
                bound
            }
        };
        Ok(Self {
            kind,
            dimension,
            phi_bound,
        })
    }

    pub fn kind(&self) -> &RegressorKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `B` such that `‖φ_k‖ ≤ B` for every generated regressor.
    pub fn phi_bound(&self) -> f64 {
        self.phi_bound
    }

    /// φ_k for the stream identified by `seed`.
    pub fn generate(&self, k: u64, seed: u64) -> DVector<f64> {
        let n = self.dimension;
        match &self.kind {
            RegressorKind::Constant { value } => value.clone(),
            RegressorKind::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                let scale = amplitude / (n as f64).sqrt();
                let t = k as f64;
                let v = DVector::from_fn(n, |i, _| scale * (omega * (i as f64 + 1.0) * t + phase).sin());
                clip_to_norm(v, *amplitude)
            }
            RegressorKind::IidBounded { bound } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k);
                let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0) * bound);
                clip_to_norm(v, *bound)
            }
            RegressorKind::PiecewiseConstant { levels, hold } => {
                let idx = ((k / hold) % levels.len() as u64) as usize;
                levels[idx].clone()
            }
        }
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { what, expected, actual })
    }
}

/// Rescales `v` so that its computed norm never exceeds `bound`, rounding included.
fn clip_to_norm(mut v: DVector<f64>, bound: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm <= bound {
        return v;
    }
    v *= bound / norm;
    while v.norm() > bound {
        v *= 1.0 - 4.0 * f64::EPSILON;
    }
    v
}

/// Noise distributions. Every kind has analytically known conditional moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// `bias + Z`, `Z ~ N(0, sd²)` truncated to `|Z| ≤ truncation·sd`.
    BiasedGaussianTruncated {
        bias: f64,
        sd: f64,
        truncation: f64,
    },
    /// Uniform on `[center - halfwidth, center + halfwidth]`.
    UniformBiased {
        center: f64,
        halfwidth: f64,
    },
    /// `bias_max·tanh(‖θ_k − ϑ_k‖) + U`, `U` uniform on `[-halfwidth, halfwidth]`.
    /// The conditional mean depends on the current estimator state.
    StateDependentBias {
        bias_max: f64,
        halfwidth: f64,
    },
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Zero => "zero",
            NoiseKind::BiasedGaussianTruncated { .. } => "biased_gaussian_truncated",
            NoiseKind::UniformBiased { .. } => "uniform_biased",
            NoiseKind::StateDependentBias { .. } => "state_dependent_bias",
        }
    }

    /// Supremum over histories of `|E(η | F_k)|`.
    pub fn mean_bound(&self) -> f64 {
        match *self {
            NoiseKind::Zero => 0.0,
            NoiseKind::BiasedGaussianTruncated { bias, .. } => bias.abs(),
            NoiseKind::UniformBiased { center, .. } => center.abs(),
            NoiseKind::StateDependentBias { bias_max, .. } => bias_max,
        }
    }

    /// Supremum over histories of `E(η² | F_k)`.
    pub fn second_moment_bound(&self) -> f64 {
        match *self {
            NoiseKind::Zero => 0.0,
            NoiseKind::BiasedGaussianTruncated { bias, sd, truncation } => {
                bias * bias + sd * sd * truncated_normal_variance_factor(truncation)
            }
            NoiseKind::UniformBiased { center, halfwidth } => center * center + halfwidth * halfwidth / 3.0,
            NoiseKind::StateDependentBias { bias_max, halfwidth } => bias_max * bias_max + halfwidth * halfwidth / 3.0,
        }
    }

    /// Conditional mean given the current state.
    pub fn conditional_mean(&self, history: &TunerState) -> f64 {
        match *self {
            NoiseKind::Zero => 0.0,
            NoiseKind::BiasedGaussianTruncated { bias, .. } => bias,
            NoiseKind::UniformBiased { center, .. } => center,
            NoiseKind::StateDependentBias { bias_max, .. } => bias_max * separation(history).tanh(),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            NoiseKind::Zero => Ok(()),
            NoiseKind::BiasedGaussianTruncated { bias, sd, truncation } => {
                require_finite("noise.bias", &[bias])?;
                if !(sd.is_finite() && sd >= 0.0) {
                    return Err(invalid("noise.sd", "must be finite and nonnegative"));
                }
                // Rejection sampling needs a reasonable acceptance rate.
                if !(truncation.is_finite() && truncation >= 0.5) {
                    return Err(invalid("noise.truncation", "must be finite and at least 0.5"));
                }
                Ok(())
            }
            NoiseKind::UniformBiased { center, halfwidth } => {
                require_finite("noise.center", &[center])?;
                if !(halfwidth.is_finite() && halfwidth >= 0.0) {
                    return Err(invalid("noise.halfwidth", "must be finite and nonnegative"));
                }
                Ok(())
            }
            NoiseKind::StateDependentBias { bias_max, halfwidth } => {
                if !(bias_max.is_finite() && bias_max >= 0.0) {
                    return Err(invalid("noise.bias_max", "must be finite and nonnegative"));
                }
                if !(halfwidth.is_finite() && halfwidth >= 0.0) {
                    return Err(invalid("noise.halfwidth", "must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }
}

fn separation(state: &TunerState) -> f64 {
    (&state.theta - &state.vartheta).norm()
}

/// `Var(Z)/sd²` for a standard normal truncated to `[-c, c]`.
pub fn truncated_normal_variance_factor(c: f64) -> f64 {
    let density = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = libm::erf(c / std::f64::consts::SQRT_2);
    1.0 - 2.0 * c * density / mass
}

/// A noise process together with the moment bounds it is certified against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    d_max: f64,
    sigma_max: f64,
}

impl NoiseModel {
    /// Uses the kind's exact moment bounds as `d_max` and `sigma_max`.
    pub fn new(kind: NoiseKind) -> Result<Self, ModelError> {
        Self::with_bounds(kind, None, None)
    }

    /// Declared bounds must dominate the analytic ones; undeclared bounds default to them.
    pub fn with_bounds(kind: NoiseKind, d_max: Option<f64>, sigma_max: Option<f64>) -> Result<Self, ModelError> {
        kind.validate()?;
        let exact_d = kind.mean_bound();
        let exact_sigma = kind.second_moment_bound().sqrt();
        let d_max = match d_max {
            Some(d) => {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(invalid("noise.d_max", "must be finite and nonnegative"));
                }
                if d < exact_d {
                    return Err(invalid(
                        "noise.d_max",
                        format!("declared {d} is below the distribution's mean bound {exact_d}"),
                    ));
                }
                d
            }
            None => exact_d,
        };
        let sigma_max = match sigma_max {
            Some(s) => {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(invalid("noise.sigma_max", "must be finite and nonnegative"));
                }
                if s < exact_sigma {
                    return Err(invalid(
                        "noise.sigma_max",
                        format!("declared {s} is below the distribution's root second moment {exact_sigma}"),
                    ));
                }
                s
            }
            None => exact_sigma,
        };
        Ok(Self { kind, d_max, sigma_max })
    }

    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Zero,
            d_max: 0.0,
            sigma_max: 0.0,
        }
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Draws η_{k+1} conditioned on the estimator state at step k.
    pub fn sample<R: Rng + ?Sized>(&self, history: &TunerState, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::BiasedGaussianTruncated { bias, sd, truncation } => {
                let z = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= truncation {
                        break z;
                    }
                };
                bias + sd * z
            }
            NoiseKind::UniformBiased { center, halfwidth } => center + halfwidth * rng.random_range(-1.0..=1.0),
            NoiseKind::StateDependentBias { bias_max, halfwidth } => {
                bias_max * separation(history).tanh() + halfwidth * rng.random_range(-1.0..=1.0)
            }
        }
    }
}

/// One regressor/output pair, with the noise realization kept for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step: u64,
    pub phi: DVector<f64>,
    pub y: f64,
    pub eta: f64,
}

/// Draws φ_k and η_{k+1} and composes `y_{k+1} = φ_kᵀθ* + η_{k+1}`.
pub fn emit_observation<R: Rng + ?Sized>(
    model: &TrueModel,
    source: &RegressorSource,
    noise: &NoiseModel,
    k: u64,
    history: &TunerState,
    stream_seed: u64,
    rng: &mut R,
) -> Result<Observation, ModelError> {
    check_dim("regressor", model.dimension(), source.dimension())?;
    check_dim("state", model.dimension(), history.theta.len())?;
    let phi = source.generate(k, stream_seed);
    let eta = noise.sample(history, rng);
    let y = phi.dot(model.theta_star()) + eta;
    Ok(Observation { step: k, phi, y, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn state(theta: &[f64], vartheta: &[f64]) -> TunerState {
        TunerState::new(DVector::from_row_slice(theta), DVector::from_row_slice(vartheta))
    }

    #[test]
    fn constant_regressor_ignores_step() {
        let src = RegressorSource::new(
            RegressorKind::Constant {
                value: DVector::from_row_slice(&[1.0, 0.0]),
            },
            2,
        )
        .unwrap();
        assert_eq!(src.generate(7, 0).as_slice(), &[1.0, 0.0]);
        assert_eq!(src.generate(7, 99), src.generate(0, 1));
    }

    #[test]
    fn unit_sine_at_quarter_period() {
        let src = RegressorSource::new(
            RegressorKind::Sinusoid {
                amplitude: 1.0,
                omega: PI / 2.0,
                phase: 0.0,
            },
            1,
        )
        .unwrap();
        assert_eq!(src.generate(1, 0).as_slice(), &[1.0]);
    }

    #[test]
    fn iid_regressor_is_reproducible_and_bounded() {
        let src = RegressorSource::new(RegressorKind::IidBounded { bound: 2.0 }, 3).unwrap();
        let a = src.generate(5, 1234);
        let b = src.generate(5, 1234);
        assert_eq!(a, b);
        assert!(a.norm() <= 2.0);
        assert_ne!(src.generate(6, 1234), a);
        for k in 0..100_000 {
            assert!(src.generate(k, 77).norm() <= src.phi_bound());
        }
    }

    #[test]
    fn piecewise_cycles_levels() {
        let levels = vec![DVector::from_row_slice(&[1.0]), DVector::from_row_slice(&[-3.0])];
        let src = RegressorSource::new(RegressorKind::PiecewiseConstant { levels, hold: 2 }, 1).unwrap();
        let seq: Vec<f64> = (0..6).map(|k| src.generate(k, 0)[0]).collect();
        assert_eq!(seq, vec![1.0, 1.0, -3.0, -3.0, 1.0, 1.0]);
        assert_eq!(src.phi_bound(), 3.0);
    }

    #[test]
    fn rejects_bad_regressor_params() {
        let err = RegressorSource::new(
            RegressorKind::Sinusoid {
                amplitude: -1.0,
                omega: 1.0,
                phase: 0.0,
            },
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ModelError::InvalidParameter {
                name: "regressor.amplitude",
                ..
            }
        ));
        let err = RegressorSource::new(
            RegressorKind::Constant {
                value: DVector::from_row_slice(&[1.0]),
            },
            2,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn zero_noise_is_exactly_zero() {
        let noise = NoiseModel::zero();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = state(&[1.0], &[2.0]);
        assert!((0..1000).all(|_| noise.sample(&s, &mut rng) == 0.0));
    }

    #[test]
    fn truncated_gaussian_moments() {
        let kind = NoiseKind::BiasedGaussianTruncated {
            bias: 0.1,
            sd: 0.5,
            truncation: 3.0,
        };
        let noise = NoiseModel::new(kind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = state(&[0.0], &[0.0]);
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n).map(|_| noise.sample(&s, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let stderr = (var / n as f64).sqrt();
        let m2 = samples.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((mean - 0.1).abs() <= 5.0 * stderr, "mean {mean}");
        assert!(m2 <= (0.1f64.powi(2) + 0.25) * 1.01, "second moment {m2}");
        assert!(samples.iter().all(|x| (x - 0.1).abs() <= 1.5 + 1e-12));
        assert!((noise.sigma_max().powi(2) - kind.second_moment_bound()).abs() < 1e-15);
    }

    #[test]
    fn truncated_variance_factor_limits() {
        // Large truncation recovers the untruncated variance.
        assert!((truncated_normal_variance_factor(12.0) - 1.0).abs() < 1e-12);
        let f3 = truncated_normal_variance_factor(3.0);
        assert!((f3 - 0.973_336_924_662_541_5).abs() < 1e-12, "{f3}");
    }

    #[test]
    fn uniform_biased_support_and_mean() {
        let noise = NoiseModel::new(NoiseKind::UniformBiased {
            center: -0.2,
            halfwidth: 0.3,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = state(&[0.0], &[0.0]);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| noise.sample(&s, &mut rng)).collect();
        assert!(samples.iter().all(|&x| (-0.5..=0.1).contains(&x)));
        let mean = samples.iter().sum::<f64>() / n as f64;
        assert!((mean + 0.2).abs() < 4.0 * 0.3 / (3.0 * n as f64).sqrt());
        assert_eq!(noise.d_max(), 0.2);
    }

    #[test]
    fn state_dependent_bias_tracks_separation() {
        let kind = NoiseKind::StateDependentBias {
            bias_max: 0.1,
            halfwidth: 0.0,
        };
        let noise = NoiseModel::new(kind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(noise.sample(&state(&[1.0], &[1.0]), &mut rng), 0.0);
        let far = noise.sample(&state(&[100.0], &[0.0]), &mut rng);
        assert!((far - 0.1).abs() < 1e-12);
        assert_eq!(kind.conditional_mean(&state(&[1.0], &[0.0])), 0.1 * 1.0f64.tanh());
    }

    #[test]
    fn declared_bounds_must_dominate() {
        let kind = NoiseKind::UniformBiased {
            center: 0.1,
            halfwidth: 0.84,
        };
        let model = NoiseModel::with_bounds(kind, Some(0.1), Some(0.5)).unwrap();
        assert_eq!((model.d_max(), model.sigma_max()), (0.1, 0.5));
        let err = NoiseModel::with_bounds(kind, Some(0.05), None).unwrap_err();
        assert!(matches!(
            err,
            ModelError::InvalidParameter {
                name: "noise.d_max",
                ..
            }
        ));
        let err = NoiseModel::with_bounds(kind, None, Some(0.4)).unwrap_err();
        assert!(matches!(
            err,
            ModelError::InvalidParameter {
                name: "noise.sigma_max",
                ..
            }
        ));
    }

    #[test]
    fn observation_composes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = TrueModel::new(DVector::from_row_slice(&[1.0])).unwrap();
        let src = RegressorSource::new(
            RegressorKind::Constant {
                value: DVector::from_row_slice(&[2.0]),
            },
            1,
        )
        .unwrap();
        let s = state(&[0.0], &[0.0]);
        let obs = emit_observation(&model, &src, &NoiseModel::zero(), 3, &s, 0, &mut rng).unwrap();
        assert_eq!((obs.y, obs.eta, obs.step), (2.0, 0.0, 3));

        let model = TrueModel::new(DVector::from_row_slice(&[1.0, -1.0])).unwrap();
        let src = RegressorSource::new(
            RegressorKind::Constant {
                value: DVector::from_row_slice(&[3.0, 3.0]),
            },
            2,
        )
        .unwrap();
        let noise = NoiseModel::new(NoiseKind::UniformBiased {
            center: 0.5,
            halfwidth: 0.0,
        })
        .unwrap();
        let s2 = state(&[0.0, 0.0], &[0.0, 0.0]);
        let obs = emit_observation(&model, &src, &noise, 0, &s2, 0, &mut rng).unwrap();
        assert_eq!(obs.y, 0.5);
        assert_eq!(obs.y, obs.phi.dot(model.theta_star()) + obs.eta);

        let err = emit_observation(&model, &src, &noise, 0, &s, 0, &mut rng).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn constant_model_output_is_theta_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = TrueModel::new(DVector::from_row_slice(&[0.7])).unwrap();
        let src = RegressorSource::new(
            RegressorKind::Constant {
                value: DVector::from_row_slice(&[1.0]),
            },
            1,
        )
        .unwrap();
        let s = state(&[0.0], &[0.0]);
        for k in [0, 1, 1000] {
            let obs = emit_observation(&model, &src, &NoiseModel::zero(), k, &s, 0, &mut rng).unwrap();
            assert_eq!(obs.y, 0.7);
        }
    }
}
