use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hot_tuner::verify::Check;
use hot_tuner::{Execution, RunConfig};
use hot_tuner_cli::{constants_report, report_lines, simulate, verify, write_json, CliError, SimulateOptions};

/// Simulate the high-order tuner and check its Lyapunov certificate.
///
/// Exit codes: 0 success, 1 verification failure, 2 usage or configuration
/// error, 3 numerical divergence. `HOT_TUNER_THREADS` caps the number of
/// worker threads.
#[derive(Debug, Parser)]
#[command(name = "hot-tuner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run trajectories and write per-trial CSV traces plus summary.json.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Overrides `base_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write plot_simulate.csv with downsampled mean V, mean V̂ and the rate envelope.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Run verification checks and write verify_<check>.json.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        check: CheckArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write plot_rate.csv when the rate check runs.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Print c1..c5, ĉ, K, T, gamma_max and the rate radius as JSON.
    Constants {
        config: PathBuf,
        /// Also write constants.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckArg {
    Decrement,
    Bound,
    Rate,
    All,
}

impl From<CheckArg> for Check {
    fn from(c: CheckArg) -> Self {
        match c {
            CheckArg::Decrement => Check::Decrement,
            CheckArg::Bound => Check::Bound,
            CheckArg::Rate => Check::Rate,
            CheckArg::All => Check::All,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("HOT_TUNER_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("HOT_TUNER_THREADS must be a positive integer, got `{value}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("HOT_TUNER_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::debug!("built without parallelism; ignoring HOT_TUNER_THREADS = {threads}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let exec = Execution::default();
    match cli.command {
        Command::Simulate {
            config,
            out,
            trials,
            seed,
            emit_plot_data,
        } => {
            let cfg = RunConfig::load(&config)?;
            let summary = simulate(
                &cfg,
                &SimulateOptions {
                    out: out.clone(),
                    trials,
                    seed,
                    emit_plot_data,
                    exec,
                },
            )?;
            println!(
                "wrote {} trace(s) and summary.json to {}; sup V = {:e}",
                summary.trials,
                out.display(),
                summary.sup_v
            );
        }
        Command::Verify {
            config,
            check,
            out,
            emit_plot_data,
        } => {
            let cfg = RunConfig::load(&config)?;
            let report = verify(&cfg, check.into(), &out, emit_plot_data, exec)?;
            for line in report_lines(&report) {
                println!("{line}");
            }
        }
        Command::Constants { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let report = constants_report(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("constants serialize")
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
                    path: dir.clone(),
                    source,
                })?;
                write_json(&dir.join("constants.json"), &report)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
