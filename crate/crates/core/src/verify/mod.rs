//! Monte Carlo checks of the Lyapunov certificate.
//!
//! Each check compares simulated or resampled Lyapunov values against the
//! bounds computed in [`crate::lyapunov`], with a one-sided allowance of
//! `z` standard errors.

use thiserror::Error;

use crate::lyapunov::LyapunovError;
use crate::model::ModelError;
use crate::tuner::TunerError;

mod baseline;
mod bounds;
mod decrement;
mod rate;
mod suite;
mod trajectory;

pub use baseline::{compare_baseline, BaselineRun, BaselineSettings};
pub use bounds::{boundedness_check, track_extent, BoundednessSummary, TrialExtent};
pub use decrement::{
    conditional_decrement_probe, decrement_check, probe_states, DecrementReport, DecrementSettings, ProbeResult,
    ProbeState,
};
pub use rate::{rate_check, RateReport, RateStep};
pub use suite::{run_suite, BoundLeg, Check, SuiteError, SuiteReport};
pub use trajectory::{
    lyapunov_series, run_ensemble, run_trajectory, state_on_sphere, Simulator, TraceRecord, TrajectoryTrace,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("trial {trial} has {actual} values, expected {expected}")]
    RaggedEnsemble {
        trial: usize,
        expected: usize,
        actual: usize,
    },
    #[error("at least {min} resamples required, got {actual}")]
    TooFewResamples { min: usize, actual: usize },
}

impl VerifyError {
    /// Step index of a numerical divergence, if that is what happened.
    pub fn divergence_step(&self) -> Option<u64> {
        match self {
            VerifyError::Tuner(TunerError::NonFinite { step }) => Some(*step),
            _ => None,
        }
    }
}
