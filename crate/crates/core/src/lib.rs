//! High-order tuner for linear regression with noisy gradients.
//!
//! [`tuner`] implements the estimator, [`model`] the data-generating process,
//! [`lyapunov`] the stability certificate and its constants, and [`verify`]
//! the Monte Carlo checks of the certificate's predictions.

pub mod config;
pub mod lyapunov;
pub mod model;
pub mod par;
pub mod stats;
pub mod tuner;
pub mod verify;

pub use config::{ConfigError, RunConfig, Scenario};
pub use lyapunov::{C2Variant, LyapunovConstants, LyapunovError};
pub use model::{ModelError, NoiseKind, NoiseModel, Observation, RegressorKind, RegressorSource, TrueModel};
pub use par::Execution;
pub use tuner::{GainMode, Gains, TunerError, TunerState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
