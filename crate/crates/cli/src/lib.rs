//! Commands behind the `hot-tuner` binary.
//!
//! Every command returns a [`CliError`] whose [`CliError::exit_code`] follows
//! the binary's contract: 1 for a failed verification, 2 for usage or
//! configuration problems, 3 for numerical divergence.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hot_tuner::lyapunov::{gamma_max, theorem4_radius, LyapunovConstants};
use hot_tuner::par::{self, Execution};
use hot_tuner::verify::{Check, Simulator, SuiteError, SuiteReport, VerifyError};
use hot_tuner::{ConfigError, RunConfig, Scenario};
use serde::Serialize;
use thiserror::Error;

pub mod trace;

/// Target number of rows in plot data files.
const PLOT_ROWS: u64 = 1000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("estimate diverged at step {step}{trial}; reduce gamma (currently {gamma}, gamma_max = {gamma_max})")]
    Divergence {
        step: u64,
        trial: String,
        gamma: f64,
        gamma_max: f64,
    },
    #[error("{0}")]
    Verify(VerifyError),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Output { .. } | CliError::Usage(_) | CliError::Verify(_) => 2,
            CliError::Divergence { .. } => 3,
        }
    }

    fn from_verify(err: VerifyError, scenario: &Scenario, trial: Option<usize>) -> Self {
        match err.divergence_step() {
            Some(step) => CliError::Divergence {
                step,
                trial: trial.map(|t| format!(" in trial {t}")).unwrap_or_default(),
                gamma: scenario.gains.gamma(),
                gamma_max: gamma_max(scenario.gains.beta(), scenario.gains.mu()),
            },
            None => CliError::Verify(err),
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(output_err(path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(output_err(dir))
}

/// Values printed by `hot-tuner constants`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub version: &'static str,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c_hat: f64,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub gamma_max: f64,
    pub alpha: Option<f64>,
    /// `max{c₂²/(α−c₁)², ĉ/α}` at `alpha`.
    pub theorem4_radius: Option<f64>,
    pub constants: LyapunovConstants,
}

pub fn constants_report(cfg: &RunConfig) -> Result<ConstantsReport, CliError> {
    let scenario = cfg.scenario()?;
    let consts = scenario.constants();
    // An unusable alpha only matters to the rate check; report it as absent here.
    let alpha = cfg.alpha_for(&consts).ok();
    let radius = alpha.and_then(|a| theorem4_radius(a, &consts).ok());
    Ok(ConstantsReport {
        version: hot_tuner::VERSION,
        c1: consts.c1,
        c2: consts.c2,
        c3: consts.c3,
        c4: consts.c4,
        c5: consts.c5,
        c_hat: consts.c_hat,
        k: consts.k,
        t: consts.t,
        gamma_max: gamma_max(cfg.gains.beta, cfg.gains.mu),
        alpha,
        theorem4_radius: radius,
        constants: consts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub sup_v: f64,
    pub final_v: f64,
    /// `‖θ_H − θ*‖` at the last step.
    pub terminal_theta_error: f64,
    /// `‖ϑ_H − θ*‖` at the last step.
    pub terminal_vartheta_error: f64,
    /// `|θ_Hᵀφ_H − y_{H+1}|` at the last step.
    pub terminal_output_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub version: &'static str,
    pub config: RunConfig,
    pub base_seed: u64,
    pub trials: usize,
    pub gamma_max: f64,
    pub constants: LyapunovConstants,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub sup_v: f64,
    pub per_trial: Vec<TrialSummary>,
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub out: PathBuf,
    pub trials: usize,
    pub seed: Option<u64>,
    pub emit_plot_data: bool,
    pub exec: Execution,
}

struct TrialOutput {
    summary: TrialSummary,
    /// `(k, V_k)` at the plot stride.
    plot_points: Vec<(u64, f64)>,
}

fn plot_stride(len: u64) -> u64 {
    len.div_ceil(PLOT_ROWS).max(1)
}

/// Runs `trials` trajectories, writing `trace_<trial>.csv` for each and a
/// `summary.json` for the run.
pub fn simulate(cfg: &RunConfig, opts: &SimulateOptions) -> Result<SimulateSummary, CliError> {
    if opts.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.base_seed = seed;
    }
    let scenario = cfg.scenario()?;
    let consts = scenario.constants();
    let plot_alpha = if opts.emit_plot_data {
        Some(cfg.alpha_for(&consts)?)
    } else {
        None
    };
    create_dir(&opts.out)?;
    let stride = plot_stride(scenario.horizon + 1);

    let outputs = par::map_indexed(opts.trials, opts.exec, |i| {
        let seed = par::trial_seed(cfg.base_seed, i);
        let path = opts.out.join(format!("trace_{i}.csv"));
        let file = fs::File::create(&path).map_err(output_err(&path))?;
        let mut writer =
            trace::TraceWriter::new(io::BufWriter::new(file), scenario.model.dimension()).map_err(output_err(&path))?;
        let mut summary = TrialSummary {
            trial: i,
            seed,
            sup_v: f64::NEG_INFINITY,
            final_v: f64::NAN,
            terminal_theta_error: f64::NAN,
            terminal_vartheta_error: f64::NAN,
            terminal_output_error: f64::NAN,
        };
        let mut plot_points = Vec::new();
        for record in Simulator::new(&scenario, seed) {
            let record = record.map_err(|e| CliError::from_verify(e, &scenario, Some(i)))?;
            writer.write(&record).map_err(output_err(&path))?;
            summary.sup_v = summary.sup_v.max(record.v);
            if record.k % stride == 0 || record.k == scenario.horizon {
                plot_points.push((record.k, record.v));
            }
            if record.k == scenario.horizon {
                summary.final_v = record.v;
                summary.terminal_theta_error = (&record.theta - scenario.theta_star()).norm();
                summary.terminal_vartheta_error = (&record.vartheta - scenario.theta_star()).norm();
                summary.terminal_output_error = record.e_y.abs();
            }
        }
        writer.finish().map_err(output_err(&path))?;
        Ok(TrialOutput { summary, plot_points })
    })
    .into_iter()
    .collect::<Result<Vec<_>, CliError>>()?;

    if let Some(alpha) = plot_alpha {
        let k4 = theorem4_radius(alpha, &consts).map_err(|e| CliError::Verify(e.into()))?;
        let series: Vec<Vec<(u64, f64)>> = outputs.iter().map(|o| o.plot_points.clone()).collect();
        let path = opts.out.join("plot_simulate.csv");
        trace::write_plot_data(&path, &series, k4, alpha).map_err(output_err(&path))?;
    }

    let per_trial: Vec<TrialSummary> = outputs.into_iter().map(|o| o.summary).collect();
    let summary = SimulateSummary {
        version: hot_tuner::VERSION,
        base_seed: cfg.base_seed,
        trials: opts.trials,
        gamma_max: gamma_max(cfg.gains.beta, cfg.gains.mu),
        k: consts.k,
        t: consts.t,
        constants: consts,
        sup_v: per_trial.iter().map(|t| t.sup_v).fold(f64::NEG_INFINITY, f64::max),
        per_trial,
        config: cfg,
    };
    write_json(&opts.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyFile<'a> {
    pub version: &'static str,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub timestamp: u64,
    pub config: &'a RunConfig,
    pub report: &'a SuiteReport,
}

pub fn check_name(check: Check) -> &'static str {
    match check {
        Check::Decrement => "decrement",
        Check::Bound => "bound",
        Check::Rate => "rate",
        Check::All => "all",
    }
}

/// Runs the selected checks and writes `verify_<check>.json`.
///
/// Returns the report when every selected check passes and
/// [`CliError::Failed`] (after writing the file) otherwise.
pub fn verify(
    cfg: &RunConfig,
    check: Check,
    out: &Path,
    emit_plot_data: bool,
    exec: Execution,
) -> Result<SuiteReport, CliError> {
    let report = match hot_tuner::verify::run_suite(cfg, check, exec) {
        Ok(report) => report,
        Err(SuiteError::Config(e)) => return Err(e.into()),
        Err(SuiteError::Verify(e)) => {
            let scenario = cfg.scenario()?;
            return Err(CliError::from_verify(e, &scenario, None));
        }
    };
    create_dir(out)?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &out.join(format!("verify_{}.json", check_name(check))),
        &VerifyFile {
            version: hot_tuner::VERSION,
            timestamp,
            config: cfg,
            report: &report,
        },
    )?;
    if emit_plot_data {
        if let Some(rate) = &report.rate {
            let path = out.join("plot_rate.csv");
            trace::write_rate_plot(&path, rate).map_err(output_err(&path))?;
        }
    }
    if report.pass {
        Ok(report)
    } else {
        Err(CliError::Failed(failure_summary(&report)))
    }
}

/// One line per selected check, e.g. `decrement: PASS (83 probes)`.
pub fn report_lines(report: &SuiteReport) -> Vec<String> {
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    let mut lines = Vec::new();
    if let Some(d) = &report.decrement {
        lines.push(format!(
            "decrement: {} ({} probes, {} resamples, noise {})",
            verdict(d.pass),
            d.probes.len(),
            d.resamples,
            d.noise
        ));
    }
    if let Some(legs) = &report.bound {
        for leg in legs {
            let s = &leg.summary;
            lines.push(format!(
                "bound[{}]: {} ({} trials, max sup V / max(V0, T) = {:.4})",
                leg.start,
                verdict(s.pass),
                s.trials,
                s.max_ratio
            ));
        }
    }
    if let Some(r) = &report.rate {
        lines.push(format!(
            "rate: {} (alpha = {:e}, K4 = {:e}, {} steps)",
            verdict(r.pass),
            r.alpha,
            r.k4,
            r.steps.len()
        ));
    }
    lines
}

fn failure_summary(report: &SuiteReport) -> String {
    report_lines(report)
        .into_iter()
        .filter(|l| l.contains("FAIL"))
        .collect::<Vec<_>>()
        .join("; ")
}
