//! Lyapunov function of the tuner and the constants of its expected-decrement bound
//!
//! `E(V_{k+1} | F_k) − V_k ≤ −c₁V_k + c₂√V_k + ĉ`, with `ĉ = c₃ + c₄ + c₅`.
//!
//! `K` is the greatest root of `−c₁x + c₂√x + ĉ = 0`, the boundary of the
//! attracting set `{V ≤ K}`. `T ≥ K` is the largest root of
//! `c₁x − c₂√x − ĉ − K = 0`, beyond which `ψ` is positive.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tuner::{Gains, TunerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("degenerate constants: c1 = {c1} must be positive for K and T to exist")]
    Degenerate { c1: f64 },
    #[error("invalid alpha {alpha}: must lie in (0, c1) with c1 = {c1}")]
    InvalidAlpha { alpha: f64, c1: f64 },
}

/// `V = (‖ϑ − θ*‖² + ‖θ − ϑ‖²)/γ`.
pub fn lyapunov_value(state: &TunerState, theta_star: &DVector<f64>, gamma: f64) -> f64 {
    let drift = (&state.vartheta - theta_star).norm_squared();
    let spread = (&state.theta - &state.vartheta).norm_squared();
    (drift + spread) / gamma
}

/// Largest step size for which the boundedness and rate guarantees hold.
///
/// `β(2−β) / (16 + β² + μ(57β+1)/(16β))`
pub fn gamma_max(beta: f64, mu: f64) -> f64 {
    beta * (2.0 - beta) / (16.0 + beta * beta + mu * (57.0 * beta + 1.0) / (16.0 * beta))
}

/// Which form of the `√V` coefficient to use.
///
/// `Theorem` is `(19609/6144)·d_max`. `Appendix` keeps the step-size factor of
/// the expansion, `(19609/1536)·d_max·√γ`; the two agree at `γ = 1/16` and the
/// theorem form is the smaller one above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C2Variant {
    #[default]
    Theorem,
    Appendix,
}

/// The decrement-bound constants plus the inputs they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c_hat: f64,
    /// `None` when `c1 = 0`.
    pub k: Option<f64>,
    /// `None` when `c1 = 0`.
    pub t: Option<f64>,
    pub c2_variant: C2Variant,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    pub d_max: f64,
    pub sigma_max: f64,
    pub theta_star: Vec<f64>,
    pub theta0: Vec<f64>,
}

impl LyapunovConstants {
    pub fn is_degenerate(&self) -> bool {
        self.k.is_none()
    }

    pub fn k(&self) -> Result<f64, LyapunovError> {
        self.k.ok_or(LyapunovError::Degenerate { c1: self.c1 })
    }

    pub fn t(&self) -> Result<f64, LyapunovError> {
        self.t.ok_or(LyapunovError::Degenerate { c1: self.c1 })
    }

    /// Right-hand side of the expected-decrement bound expressed for `E(V_{k+1} | F_k)`.
    pub fn next_value_bound(&self, v: f64) -> f64 {
        v - self.c1 * v + self.c2 * v.sqrt() + self.c_hat
    }
}

/// Evaluates c₁…c₅, ĉ and the thresholds for the given gains and noise bounds.
pub fn constants(
    gains: &Gains,
    d_max: f64,
    sigma_max: f64,
    theta_star: &DVector<f64>,
    variant: C2Variant,
) -> LyapunovConstants {
    let (gamma, beta, mu) = (gains.gamma(), gains.beta(), gains.mu());
    let theta0 = gains.theta0();
    let offset = (theta_star - theta0).norm();

    let c1 = 10.0 / 16.0 * mu * gamma * beta;
    let c2 = match variant {
        C2Variant::Theorem => {
            if gamma > 1.0 / 16.0 {
                log::warn!(
                    "gamma = {gamma} > 1/16: the theorem form of c2 is smaller than the appendix form; \
                     consider c2_variant = appendix"
                );
            }
            19609.0 / 6144.0 * d_max
        }
        C2Variant::Appendix => 19609.0 / 1536.0 * d_max * gamma.sqrt(),
    };
    let c3 = mu * ((3570.0 * beta + 896.0) / (224.0 * beta)) * offset * offset;
    let c4 = 67.0 / 256.0 * d_max * theta0.norm()
        + 1.0 / 8.0 * d_max * offset
        + 15001.0 / 1536.0 * d_max * theta_star.norm();
    let s2 = sigma_max * sigma_max;
    let c5 =
        4.0 * gamma * beta * s2 * (1.0 - 1.5 * beta).abs() + 2.0 * (1.0 - beta) * gamma * beta * s2 + 2.0 * gamma * s2;
    let c_hat = c3 + c4 + c5;

    let (k, t) = match threshold_k(c1, c2, c_hat) {
        Ok(k) => (Some(k), threshold_t(c1, c2, c_hat, k).ok()),
        Err(_) => (None, None),
    };

    LyapunovConstants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c_hat,
        k,
        t,
        c2_variant: variant,
        gamma,
        beta,
        mu,
        d_max,
        sigma_max,
        theta_star: theta_star.iter().copied().collect(),
        theta0: theta0.iter().copied().collect(),
    }
}

/// Greatest root of `c·x − c₂√x − r = 0` for `r ≥ 0`, via the quadratic in `√x`.
fn sqrt_quadratic_root(c1: f64, c2: f64, r: f64) -> Result<f64, LyapunovError> {
    if c1.is_nan() || c1 <= 0.0 {
        return Err(LyapunovError::Degenerate { c1 });
    }
    let c2sq = c2 * c2;
    // Rounding can push the discriminant slightly negative when r = 0.
    let disc = (c2sq * c2sq + 4.0 * c1 * c2sq * r).max(0.0);
    Ok((c2sq + 2.0 * c1 * r + disc.sqrt()) / (2.0 * c1 * c1))
}

/// `K = (c₂² + 2c₁ĉ + √(c₂⁴ + 4c₁c₂²ĉ)) / (2c₁²)`.
pub fn threshold_k(c1: f64, c2: f64, c_hat: f64) -> Result<f64, LyapunovError> {
    sqrt_quadratic_root(c1, c2, c_hat)
}

/// `T = (c₂² + 2c₁(ĉ+K) + √(c₂⁴ + 4c₁c₂²(ĉ+K))) / (2c₁²)`.
pub fn threshold_t(c1: f64, c2: f64, c_hat: f64, k: f64) -> Result<f64, LyapunovError> {
    sqrt_quadratic_root(c1, c2, c_hat + k)
}

/// `V̂ = max(V − K, 0)`.
pub fn clipped_v(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else {
        0.0
    }
}

/// `ψ(V) = c₁V − c₂√V − ĉ − K` above `T`, zero otherwise.
pub fn psi(v: f64, consts: &LyapunovConstants) -> Result<f64, LyapunovError> {
    let k = consts.k()?;
    let t = consts.t()?;
    if v > t {
        Ok(consts.c1 * v - consts.c2 * v.sqrt() - consts.c_hat - k)
    } else {
        Ok(0.0)
    }
}

/// Radius of the set reached at rate `1 − α`: `max{c₂²/(α−c₁)², ĉ/α}`.
pub fn theorem4_radius(alpha: f64, consts: &LyapunovConstants) -> Result<f64, LyapunovError> {
    let c1 = consts.c1;
    if !(alpha > 0.0 && alpha < c1) {
        return Err(LyapunovError::InvalidAlpha { alpha, c1 });
    }
    let gap = alpha - c1;
    Ok((consts.c2 * consts.c2 / (gap * gap)).max(consts.c_hat / alpha))
}
