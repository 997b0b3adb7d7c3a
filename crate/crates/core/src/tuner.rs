//! The high-order tuner and the plain gradient recursion it is compared against.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::gamma_max;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("invalid gain `{name}`: {reason}")]
    InvalidGain { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite estimate after step {step}; the step size is likely too large")]
    NonFinite { step: u64 },
}

/// Whether the gains were checked against the stability bound on γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    Certified,
    Unrestricted,
}

/// Step size γ, mixing β, regularization weight μ and regularization center θ₀.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    gamma: f64,
    beta: f64,
    mu: f64,
    theta0: DVector<f64>,
    mode: GainMode,
}

impl Gains {
    /// Requires `0 < β < 1`, `0 < μ < 1` and `0 < γ ≤ gamma_max(β, μ)`.
    pub fn certified(gamma: f64, beta: f64, mu: f64, theta0: DVector<f64>) -> Result<Self, TunerError> {
        check_open_unit("beta", beta)?;
        check_open_unit("mu", mu)?;
        check_gamma(gamma)?;
        let bound = gamma_max(beta, mu);
        if gamma > bound {
            return Err(TunerError::InvalidGain {
                name: "gamma",
                reason: format!("{gamma} exceeds the certified bound {bound} for beta={beta}, mu={mu}"),
            });
        }
        check_theta0(&theta0)?;
        Ok(Self {
            gamma,
            beta,
            mu,
            theta0,
            mode: GainMode::Certified,
        })
    }

    /// Any `γ > 0`, `0 < β < 1`, `0 ≤ μ < 1`. Stability guarantees do not apply.
    pub fn unrestricted(gamma: f64, beta: f64, mu: f64, theta0: DVector<f64>) -> Result<Self, TunerError> {
        check_open_unit("beta", beta)?;
        if !(mu.is_finite() && (0.0..1.0).contains(&mu)) {
            return Err(TunerError::InvalidGain {
                name: "mu",
                reason: format!("{mu} must lie in [0, 1)"),
            });
        }
        check_gamma(gamma)?;
        check_theta0(&theta0)?;
        Ok(Self {
            gamma,
            beta,
            mu,
            theta0,
            mode: GainMode::Unrestricted,
        })
    }

    pub fn with_mode(mode: GainMode, gamma: f64, beta: f64, mu: f64, theta0: DVector<f64>) -> Result<Self, TunerError> {
        match mode {
            GainMode::Certified => Self::certified(gamma, beta, mu, theta0),
            GainMode::Unrestricted => Self::unrestricted(gamma, beta, mu, theta0),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    pub fn mode(&self) -> GainMode {
        self.mode
    }

    pub fn is_certified(&self) -> bool {
        self.mode == GainMode::Certified
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), TunerError> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(TunerError::InvalidGain {
            name,
            reason: format!("{value} must lie in (0, 1)"),
        })
    }
}

fn check_gamma(gamma: f64) -> Result<(), TunerError> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(TunerError::InvalidGain {
            name: "gamma",
            reason: format!("{gamma} must be positive and finite"),
        })
    }
}

fn check_theta0(theta0: &DVector<f64>) -> Result<(), TunerError> {
    if theta0.is_empty() || theta0.iter().any(|v| !v.is_finite()) {
        return Err(TunerError::InvalidGain {
            name: "theta0",
            reason: "must be a nonempty finite vector".into(),
        });
    }
    Ok(())
}

/// The pair (θ_k, ϑ_k) and the step index k.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub theta: DVector<f64>,
    pub vartheta: DVector<f64>,
    pub step: u64,
}

impl TunerState {
    pub fn new(theta: DVector<f64>, vartheta: DVector<f64>) -> Self {
        Self {
            theta,
            vartheta,
            step: 0,
        }
    }

    /// θ = ϑ = θ₀, the default starting point.
    pub fn at_center(gains: &Gains) -> Self {
        Self::new(gains.theta0.clone(), gains.theta0.clone())
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.vartheta.iter()).all(|v| v.is_finite())
    }
}

/// `N_k = 1 + ‖φ_k‖²`.
pub fn normalization(phi: &DVector<f64>) -> f64 {
    1.0 + phi.norm_squared()
}

/// `φ(θᵀφ − y)`.
pub fn loss_gradient(theta: &DVector<f64>, phi: &DVector<f64>, y: f64) -> DVector<f64> {
    phi * (theta.dot(phi) - y)
}

/// `∇L/N_k + μ(θ − θ₀)`.
pub fn regularized_gradient(theta: &DVector<f64>, phi: &DVector<f64>, y: f64, gains: &Gains) -> DVector<f64> {
    let n = normalization(phi);
    let mut g = loss_gradient(theta, phi, y) / n;
    g.axpy(gains.mu, theta, 1.0);
    g.axpy(-gains.mu, &gains.theta0, 1.0);
    g
}

fn check_dims(state: &TunerState, phi: &DVector<f64>, gains: &Gains) -> Result<(), TunerError> {
    let n = state.theta.len();
    for (what, actual) in [
        ("vartheta", state.vartheta.len()),
        ("phi", phi.len()),
        ("theta0", gains.theta0.len()),
    ] {
        if actual != n {
            return Err(TunerError::DimensionMismatch {
                what,
                expected: n,
                actual,
            });
        }
    }
    Ok(())
}

/// Intermediate quantities of one tuner step, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDetail {
    /// ∇f(θ_k)
    pub grad_at_theta: DVector<f64>,
    /// θ̄_k
    pub theta_bar: DVector<f64>,
    /// ∇f(θ_{k+1})
    pub grad_at_next: DVector<f64>,
}

/// One iteration of the high-order tuner on the observation `(φ_k, y_{k+1})`.
///
/// Order matters: the second gradient is taken at the new θ_{k+1}, with the
/// same observation as the first.
pub fn hot_step(state: &TunerState, phi: &DVector<f64>, y: f64, gains: &Gains) -> Result<TunerState, TunerError> {
    hot_step_detailed(state, phi, y, gains).map(|(next, _)| next)
}

/// [`hot_step`] that also returns θ̄_k and both gradients.
pub fn hot_step_detailed(
    state: &TunerState,
    phi: &DVector<f64>,
    y: f64,
    gains: &Gains,
) -> Result<(TunerState, StepDetail), TunerError> {
    check_dims(state, phi, gains)?;
    let grad_at_theta = regularized_gradient(&state.theta, phi, y, gains);
    let theta_bar = &state.theta - &grad_at_theta * (gains.gamma * gains.beta);
    let theta_next = &theta_bar - (&theta_bar - &state.vartheta) * gains.beta;
    let grad_at_next = regularized_gradient(&theta_next, phi, y, gains);
    let vartheta_next = &state.vartheta - &grad_at_next * gains.gamma;
    let next = TunerState {
        theta: theta_next,
        vartheta: vartheta_next,
        step: state.step + 1,
    };
    if !next.is_finite() {
        return Err(TunerError::NonFinite { step: state.step });
    }
    Ok((
        next,
        StepDetail {
            grad_at_theta,
            theta_bar,
            grad_at_next,
        },
    ))
}

/// Whether the baseline gradient step divides by `N_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdVariant {
    #[default]
    Plain,
    Normalized,
}

/// `θ − γ∇L` (or `θ − γ∇L/N_k` when normalized).
pub fn gd_step(
    theta: &DVector<f64>,
    phi: &DVector<f64>,
    y: f64,
    gamma: f64,
    variant: GdVariant,
) -> Result<DVector<f64>, TunerError> {
    if phi.len() != theta.len() {
        return Err(TunerError::DimensionMismatch {
            what: "phi",
            expected: theta.len(),
            actual: phi.len(),
        });
    }
    let scale = match variant {
        GdVariant::Plain => gamma,
        GdVariant::Normalized => gamma / normalization(phi),
    };
    let next = theta - loss_gradient(theta, phi, y) * scale;
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(TunerError::NonFinite { step: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalization(&v(&[0.0, 0.0])), 1.0);
        assert_eq!(normalization(&v(&[1.0, 2.0])), 6.0);
        assert_eq!(normalization(&v(&[3.0])), 10.0);
    }

    #[test]
    fn loss_gradient_examples() {
        assert_eq!(loss_gradient(&v(&[0.0]), &v(&[1.0]), 1.0), v(&[-1.0]));
        let theta_star = v(&[0.3, -1.2]);
        let phi = v(&[2.0, 0.5]);
        let y = theta_star.dot(&phi);
        assert_eq!(loss_gradient(&theta_star, &phi, y), v(&[0.0, 0.0]));
        assert_eq!(loss_gradient(&v(&[1.0, 1.0]), &v(&[2.0, 0.0]), 1.0), v(&[2.0, 0.0]));
    }

    #[test]
    fn regularized_gradient_examples() {
        let g = Gains::unrestricted(0.1, 0.5, 0.1, v(&[0.4, -0.2])).unwrap();
        assert_eq!(
            regularized_gradient(&v(&[0.4, -0.2]), &v(&[0.0, 0.0]), 3.0, &g),
            v(&[0.0, 0.0])
        );

        let g = Gains::unrestricted(0.1, 0.5, 0.1, v(&[0.0])).unwrap();
        assert_eq!(regularized_gradient(&v(&[0.0]), &v(&[1.0]), 1.0, &g), v(&[-0.5]));
        let r = regularized_gradient(&v(&[1.0]), &v(&[0.0]), 0.0, &g);
        assert!((r[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_at_center() {
        let g = Gains::certified(0.04, 0.5, 0.1, v(&[0.3, 0.7])).unwrap();
        let s = TunerState::at_center(&g);
        let next = hot_step(&s, &v(&[0.0, 0.0]), 5.0, &g).unwrap();
        assert_eq!(next.theta, s.theta);
        assert_eq!(next.vartheta, s.vartheta);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn scalar_step_without_regularization() {
        let g = Gains::unrestricted(0.04, 0.5, 0.0, v(&[0.0])).unwrap();
        let s = TunerState::at_center(&g);
        let (next, detail) = hot_step_detailed(&s, &v(&[1.0]), 1.0, &g).unwrap();
        // θ̄ = 0.01, θ₁ = 0.005, ϑ₁ = 0.04·0.4975.
        assert!((detail.theta_bar[0] - 0.01).abs() < 1e-12);
        assert!((detail.grad_at_next[0] + 0.4975).abs() < 1e-12);
        assert!((next.theta[0] - 0.005).abs() < 1e-12);
        assert!((next.vartheta[0] - 0.0199).abs() < 1e-12);
    }

    #[test]
    fn scalar_step_with_regularization() {
        let g = Gains::certified(0.04, 0.5, 0.1, v(&[0.0])).unwrap();
        let s = TunerState::at_center(&g);
        let next = hot_step(&s, &v(&[1.0]), 1.0, &g).unwrap();
        assert!((next.theta[0] - 0.005).abs() < 1e-12);
        assert!((next.vartheta[0] - 0.01988).abs() < 1e-12);
    }

    #[test]
    fn certified_gains_reject_large_gamma() {
        let err = Gains::certified(0.05, 0.5, 0.1, v(&[0.0])).unwrap_err();
        assert!(matches!(err, TunerError::InvalidGain { name: "gamma", .. }));
        assert!(Gains::certified(0.04, 0.5, 0.0, v(&[0.0])).is_err());
        assert!(Gains::certified(0.04, 1.0, 0.1, v(&[0.0])).is_err());
        assert!(Gains::unrestricted(0.04, 0.5, 0.0, v(&[0.0])).is_ok());
        assert!(Gains::unrestricted(5.0, 0.5, 0.0, v(&[0.0])).is_ok());
        assert!(Gains::unrestricted(-1.0, 0.5, 0.0, v(&[0.0])).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let g = Gains::unrestricted(1e300, 0.5, 0.0, v(&[0.0])).unwrap();
        let s = TunerState::new(v(&[1e300]), v(&[0.0]));
        let err = hot_step(&s, &v(&[1e10]), 0.0, &g).unwrap_err();
        assert_eq!(err, TunerError::NonFinite { step: 0 });
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = Gains::certified(0.04, 0.5, 0.1, v(&[0.0, 0.0])).unwrap();
        let s = TunerState::at_center(&g);
        assert!(matches!(
            hot_step(&s, &v(&[1.0]), 0.0, &g),
            Err(TunerError::DimensionMismatch { what: "phi", .. })
        ));
    }

    #[test]
    fn gd_step_examples() {
        let theta_star = v(&[1.5]);
        let phi = v(&[2.0]);
        let same = gd_step(&theta_star, &phi, theta_star.dot(&phi), 0.5, GdVariant::Plain).unwrap();
        assert_eq!(same, theta_star);
        assert_eq!(
            gd_step(&v(&[0.0]), &v(&[1.0]), 1.0, 0.5, GdVariant::Plain).unwrap(),
            v(&[0.5])
        );
        let n = gd_step(&v(&[0.0]), &v(&[2.0]), 2.0, 0.5, GdVariant::Normalized).unwrap();
        assert!((n[0] - 0.4).abs() < 1e-15);
    }
}
