//! Run configuration: the JSON schema, validation, and the validated [`Scenario`].

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::{self, C2Variant, LyapunovConstants};
use crate::model::{ModelError, NoiseKind, NoiseModel, RegressorKind, RegressorSource, TrueModel};
use crate::tuner::{GainMode, Gains, TunerError, TunerState};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        let field = match &e {
            ModelError::InvalidParameter { name, .. } => name.to_string(),
            ModelError::DimensionMismatch { what, .. } => what.to_string(),
        };
        ConfigError::invalid(field, e.to_string())
    }
}

impl From<TunerError> for ConfigError {
    fn from(e: TunerError) -> Self {
        let field = match &e {
            TunerError::InvalidGain { name, .. } => format!("gains.{name}"),
            TunerError::DimensionMismatch { what, .. } => format!("gains.{what}"),
            TunerError::NonFinite { .. } => "gains".to_string(),
        };
        ConfigError::invalid(field, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub theta_star: Vec<f64>,
    /// Optional consistency check against `theta_star.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSpec {
    Constant {
        value: Vec<f64>,
    },
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    IidBounded {
        bound: f64,
    },
    PiecewiseConstant {
        levels: Vec<Vec<f64>>,
        hold: u64,
    },
}

impl RegressorSpec {
    fn build(&self, dimension: usize) -> Result<RegressorSource, ModelError> {
        let kind = match self {
            RegressorSpec::Constant { value } => RegressorKind::Constant {
                value: DVector::from_column_slice(value),
            },
            RegressorSpec::Sinusoid {
                amplitude,
                omega,
                phase,
            } => RegressorKind::Sinusoid {
                amplitude: *amplitude,
                omega: *omega,
                phase: *phase,
            },
            RegressorSpec::IidBounded { bound } => RegressorKind::IidBounded { bound: *bound },
            RegressorSpec::PiecewiseConstant { levels, hold } => RegressorKind::PiecewiseConstant {
                levels: levels.iter().map(|l| DVector::from_column_slice(l)).collect(),
                hold: *hold,
            },
        };
        RegressorSource::new(kind, dimension)
    }
}

/// Noise kind, its parameters, and optionally declared bounds `d_max` and
/// `sigma_max` (default: the kind's exact bounds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Zero {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
    },
    BiasedGaussianTruncated {
        bias: f64,
        sd: f64,
        #[serde(default = "default_truncation")]
        truncation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
    },
    UniformBiased {
        center: f64,
        halfwidth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
    },
    StateDependentBias {
        bias_max: f64,
        halfwidth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_max: Option<f64>,
    },
}

fn default_truncation() -> f64 {
    3.0
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseModel, ModelError> {
        let (kind, d_max, sigma_max) = match *self {
            NoiseSpec::Zero { d_max, sigma_max } => (NoiseKind::Zero, d_max, sigma_max),
            NoiseSpec::BiasedGaussianTruncated {
                bias,
                sd,
                truncation,
                d_max,
                sigma_max,
            } => (
                NoiseKind::BiasedGaussianTruncated { bias, sd, truncation },
                d_max,
                sigma_max,
            ),
            NoiseSpec::UniformBiased {
                center,
                halfwidth,
                d_max,
                sigma_max,
            } => (NoiseKind::UniformBiased { center, halfwidth }, d_max, sigma_max),
            NoiseSpec::StateDependentBias {
                bias_max,
                halfwidth,
                d_max,
                sigma_max,
            } => (NoiseKind::StateDependentBias { bias_max, halfwidth }, d_max, sigma_max),
        };
        NoiseModel::with_bounds(kind, d_max, sigma_max)
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::Zero { .. } => "zero",
            NoiseSpec::BiasedGaussianTruncated { .. } => "biased_gaussian_truncated",
            NoiseSpec::UniformBiased { .. } => "uniform_biased",
            NoiseSpec::StateDependentBias { .. } => "state_dependent_bias",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    /// Regularization center; also the default initial θ and ϑ.
    pub theta0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_theta: Option<Vec<f64>>,
}

/// Statistical settings for the verification checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Standard errors of slack allowed in every one-sided comparison.
    pub z: f64,
    /// Random directions per V-sphere in the decrement probe.
    pub probes_per_sphere: usize,
    /// States taken from a simulated trajectory for the decrement probe.
    pub harvested_states: usize,
    /// Steps checked by the rate check.
    pub rate_horizon: u64,
    /// Rate-check trials start at `V₀ = rate_start_multiple · K₄`.
    pub rate_start_multiple: f64,
    /// Boundedness passes when `sup V ≤ bound_safety · max(V₀, T)`.
    pub bound_safety: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            z: 4.0,
            probes_per_sphere: 8,
            harvested_states: 50,
            rate_horizon: 5000,
            rate_start_multiple: 10.0,
            bound_safety: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub regressor: RegressorSpec,
    pub noise: NoiseSpec,
    pub gains: GainsSpec,
    pub horizon: u64,
    pub ensemble: usize,
    pub resamples: usize,
    /// Rate for the exponential-convergence check; defaults to `c1 / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub base_seed: u64,
    #[serde(default)]
    pub mode: GainMode,
    #[serde(default)]
    pub c2_variant: C2Variant,
    #[serde(default)]
    pub verify: VerifySettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Two-dimensional reference setup: β = 0.5, μ = 0.1, γ = 0.04, a
    /// sinusoidal regressor of norm at most 2, and noise certified against
    /// `d_max = 0.1`, `sigma_max = 0.5`.
    pub fn reference() -> Self {
        Self {
            model: ModelSpec {
                theta_star: vec![1.0, -0.5],
                dimension: Some(2),
            },
            regressor: RegressorSpec::Sinusoid {
                amplitude: 2.0,
                omega: 0.1,
                phase: 0.0,
            },
            noise: NoiseSpec::BiasedGaussianTruncated {
                bias: 0.095,
                sd: 0.48,
                truncation: 3.0,
                d_max: Some(0.1),
                sigma_max: Some(0.5),
            },
            gains: GainsSpec {
                gamma: 0.04,
                beta: 0.5,
                mu: 0.1,
                theta0: vec![0.0, 0.0],
                vartheta0: None,
                initial_theta: None,
            },
            horizon: 50_000,
            ensemble: 200,
            resamples: 10_000,
            alpha: None,
            base_seed: 20_240_601,
            mode: GainMode::Certified,
            c2_variant: C2Variant::Theorem,
            verify: VerifySettings::default(),
        }
    }

    /// The four noise processes of the reference setup, all within
    /// `d_max = 0.1` and `sigma_max = 0.5`.
    pub fn reference_noise_kinds() -> Vec<NoiseSpec> {
        let (d_max, sigma_max) = (Some(0.1), Some(0.5));
        vec![
            NoiseSpec::Zero { d_max, sigma_max },
            NoiseSpec::BiasedGaussianTruncated {
                bias: 0.095,
                sd: 0.48,
                truncation: 3.0,
                d_max,
                sigma_max,
            },
            NoiseSpec::UniformBiased {
                center: -0.095,
                halfwidth: 0.84,
                d_max,
                sigma_max,
            },
            NoiseSpec::StateDependentBias {
                bias_max: 0.095,
                halfwidth: 0.84,
                d_max,
                sigma_max,
            },
        ]
    }

    /// Validates everything and builds the runtime objects.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        if self.horizon < 1 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if self.ensemble < 1 {
            return Err(ConfigError::invalid("ensemble", "must be at least 1"));
        }
        if self.resamples < 100 {
            return Err(ConfigError::invalid("resamples", "must be at least 100"));
        }
        let v = &self.verify;
        if !(v.z.is_finite() && v.z >= 0.0) {
            return Err(ConfigError::invalid("verify.z", "must be finite and nonnegative"));
        }
        if !(v.rate_start_multiple.is_finite() && v.rate_start_multiple > 0.0) {
            return Err(ConfigError::invalid("verify.rate_start_multiple", "must be positive"));
        }
        if !(v.bound_safety.is_finite() && v.bound_safety >= 1.0) {
            return Err(ConfigError::invalid("verify.bound_safety", "must be at least 1"));
        }
        if v.rate_horizon < 1 {
            return Err(ConfigError::invalid("verify.rate_horizon", "must be at least 1"));
        }

        let n = self.model.theta_star.len();
        if let Some(d) = self.model.dimension {
            if d != n {
                return Err(ConfigError::invalid(
                    "model.dimension",
                    format!("{d} disagrees with theta_star of length {n}"),
                ));
            }
        }
        let model = TrueModel::new(DVector::from_column_slice(&self.model.theta_star))?;
        let regressor = self.regressor.build(n)?;
        let noise = self.noise.build()?;

        let g = &self.gains;
        check_len("gains.theta0", &g.theta0, n)?;
        let gains = Gains::with_mode(self.mode, g.gamma, g.beta, g.mu, DVector::from_column_slice(&g.theta0))?;
        let theta = match &g.initial_theta {
            Some(t) => {
                check_len("gains.initial_theta", t, n)?;
                DVector::from_column_slice(t)
            }
            None => gains.theta0().clone(),
        };
        let vartheta = match &g.vartheta0 {
            Some(t) => {
                check_len("gains.vartheta0", t, n)?;
                DVector::from_column_slice(t)
            }
            None => gains.theta0().clone(),
        };
        let initial = TunerState::new(theta, vartheta);
        if !initial.is_finite() {
            return Err(ConfigError::invalid(
                "gains.initial_theta",
                "initial state must be finite",
            ));
        }

        let scenario = Scenario {
            model,
            regressor,
            noise,
            gains,
            initial,
            horizon: self.horizon,
            c2_variant: self.c2_variant,
        };
        if let Some(alpha) = self.alpha {
            let c1 = scenario.constants().c1;
            if !(alpha > 0.0 && alpha < c1) {
                return Err(ConfigError::invalid(
                    "alpha",
                    format!("{alpha} must lie in (0, c1) with c1 = {c1}"),
                ));
            }
        }
        Ok(scenario)
    }

    /// The configured rate, or `c1 / 2`.
    pub fn alpha_for(&self, consts: &LyapunovConstants) -> Result<f64, ConfigError> {
        let alpha = self.alpha.unwrap_or(consts.c1 / 2.0);
        if alpha > 0.0 && alpha < consts.c1 {
            Ok(alpha)
        } else {
            Err(ConfigError::invalid(
                "alpha",
                format!("{alpha} must lie in (0, c1) with c1 = {}", consts.c1),
            ))
        }
    }
}

fn check_len(field: &str, v: &[f64], n: usize) -> Result<(), ConfigError> {
    if v.len() != n {
        return Err(ConfigError::invalid(
            field,
            format!("expected {n} entries, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::invalid(field, "entries must be finite"));
    }
    Ok(())
}

/// A validated configuration ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: TrueModel,
    pub regressor: RegressorSource,
    pub noise: NoiseModel,
    pub gains: Gains,
    pub initial: TunerState,
    pub horizon: u64,
    pub c2_variant: C2Variant,
}

impl Scenario {
    pub fn constants(&self) -> LyapunovConstants {
        lyapunov::constants(
            &self.gains,
            self.noise.d_max(),
            self.noise.sigma_max(),
            self.model.theta_star(),
            self.c2_variant,
        )
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        self.model.theta_star()
    }

    pub fn initial_value(&self) -> f64 {
        lyapunov::lyapunov_value(&self.initial, self.theta_star(), self.gains.gamma())
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        Self { noise, ..self.clone() }
    }

    pub fn with_initial(&self, initial: TunerState) -> Self {
        Self {
            initial,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: u64) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }
}
