//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs with the default statistical settings (z = 4, 10⁴ resamples per probe,
//! 200 trials over 5·10⁴ steps); expect around a minute in an optimized build.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hot_tuner::config::NoiseSpec;
use hot_tuner::lyapunov::{threshold_k, threshold_t};
use hot_tuner::stats::MeanEstimate;
use hot_tuner::tuner::hot_step_detailed;
use hot_tuner::verify::{decrement_check, run_suite, Check, DecrementReport, DecrementSettings};
use hot_tuner::{Execution, Gains, RunConfig, TunerState};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn decrement_reports(cfg: &RunConfig) -> Vec<DecrementReport> {
    RunConfig::reference_noise_kinds()
        .into_iter()
        .map(|noise| {
            let mut c = cfg.clone();
            c.noise = noise;
            let s = c.scenario().unwrap();
            let settings = DecrementSettings {
                resamples: c.resamples,
                z: c.verify.z,
                per_sphere: c.verify.probes_per_sphere,
                harvested: c.verify.harvested_states,
                seed: c.base_seed,
            };
            decrement_check(&s, &s.constants(), &settings, Execution::default()).unwrap()
        })
        .collect()
}

fn decrement_bound(reports: &[DecrementReport]) -> Outcome {
    let probes: usize = reports.iter().map(|r| r.probes.len()).sum();
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.probes
                .iter()
                .filter(|p| !p.pass)
                .map(move |p| format!("{}/{}", r.noise, p.label))
        })
        .collect();
    let worst = reports
        .iter()
        .flat_map(|r| &r.probes)
        .filter(|p| p.next.stderr > 0.0)
        .map(|p| (p.next.mean - p.bound) / p.next.stderr)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        failed.is_empty(),
        format!("{probes} probes over 4 noise kinds, worst (mean - bound)/stderr = {worst:.1}, failures {failed:?}"),
    )
}

fn strict_decrease(reports: &[DecrementReport]) -> Outcome {
    let checked: Vec<_> = reports
        .iter()
        .flat_map(|r| &r.probes)
        .filter(|p| p.strict_pass.is_some())
        .collect();
    let failed = checked.iter().filter(|p| p.strict_pass == Some(false)).count();
    outcome(
        failed == 0 && !checked.is_empty(),
        format!(
            "{} probes with V >= 1.05 K, {failed} without a negative mean increment",
            checked.len()
        ),
    )
}

fn boundedness(cfg: &RunConfig) -> Outcome {
    let report = run_suite(cfg, Check::Bound, Execution::default()).unwrap();
    let legs = report.bound.unwrap();
    let detail = legs
        .iter()
        .map(|l| {
            let s = &l.summary;
            format!(
                "{}: {} trials, finite {}, max sup V/max(V0,T) = {:.3}, re-entered {}",
                l.start, s.trials, s.all_finite, s.max_ratio, s.all_reentered
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(legs.iter().all(|l| l.summary.pass), detail)
}

fn rate(cfg: &RunConfig) -> Outcome {
    let report = run_suite(cfg, Check::Rate, Execution::default()).unwrap();
    let r = report.rate.unwrap();
    let worst = r
        .steps
        .iter()
        .map(|s| s.mean - s.envelope - cfg.verify.z * s.stderr)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        r.pass,
        format!(
            "alpha = {:e}, K4 = {:.6e}, V̂0 = {:.6e}, {} trials, {} steps, max(mean - envelope - 4 stderr) = {worst:.3e}",
            r.alpha,
            r.k4,
            r.v_hat0,
            r.trials,
            r.steps.len() - 1
        ),
    )
}

fn bisect(c1: f64, c2: f64, r: f64) -> f64 {
    let f = |x: f64| c1 * x - c2 * x.sqrt() - r;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid
        } else {
            lo = mid
        }
    }
    0.5 * (lo + hi)
}

fn closed_form_roots() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_err = 0.0f64;
    let mut worst_residual = 0.0f64;
    for _ in 0..1000 {
        let [c1, c2, c_hat] = [(); 3].map(|_| 10f64.powf(rng.random_range(-4.0..1.0)));
        let k = threshold_k(c1, c2, c_hat).unwrap();
        let t = threshold_t(c1, c2, c_hat, k).unwrap();
        for (x, r) in [(k, c_hat), (t, c_hat + k)] {
            let oracle = bisect(c1, c2, r);
            worst_err = worst_err.max((x - oracle).abs() / oracle);
            let scale = (c1 * x).max(c2 * x.sqrt()).max(r);
            worst_residual = worst_residual.max((c1 * x - c2 * x.sqrt() - r).abs() / scale);
        }
    }
    outcome(
        worst_err <= 1e-9 && worst_residual <= 1e-9,
        format!(
            "1000 triples, max relative error vs bisection {worst_err:.2e}, max relative residual {worst_residual:.2e}"
        ),
    )
}

fn algorithm_fidelity() -> Outcome {
    let scalar = |x: f64| DVector::from_element(1, x);
    let state = TunerState::new(scalar(0.0), scalar(0.0));
    let step = |mu: f64| {
        let gains = Gains::unrestricted(0.04, 0.5, mu, scalar(0.0)).unwrap();
        hot_step_detailed(&state, &scalar(1.0), 1.0, &gains).unwrap()
    };
    let (plain, detail) = step(0.0);
    let (regularized, _) = step(0.1);
    let errors = [
        (detail.theta_bar[0] - 0.01).abs(),
        (plain.theta[0] - 0.005).abs(),
        (plain.vartheta[0] - 0.0199).abs(),
        (regularized.vartheta[0] - 0.01988).abs(),
    ];
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!(
            "theta_bar = {:?}, theta_1 = {:?}, vartheta_1 = {:?} (mu = 0), {:?} (mu = 0.1); max error {worst:.1e}",
            detail.theta_bar[0], plain.theta[0], plain.vartheta[0], regularized.vartheta[0]
        ),
    )
}

fn noise_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut worst_mean = f64::NEG_INFINITY;
    let mut worst_second = f64::NEG_INFINITY;
    for spec in RunConfig::reference_noise_kinds() {
        let noise = spec.build().unwrap();
        let (d, s2) = (noise.d_max(), noise.sigma_max().powi(2));
        for h in 0..100 {
            let random = |rng: &mut ChaCha8Rng| DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let history = TunerState::new(random(&mut rng), random(&mut rng));
            let draws: Vec<f64> = (0..100_000).map(|_| noise.sample(&history, &mut rng)).collect();
            let squares: Vec<f64> = draws.iter().map(|x| x * x).collect();
            let mean = MeanEstimate::from_samples(&draws);
            let second = MeanEstimate::from_samples(&squares);
            let mean_ok = mean.mean.abs() <= d + 4.0 * mean.stderr;
            let second_ok = second.within(s2, 4.0);
            if mean.stderr > 0.0 {
                worst_mean = worst_mean.max((mean.mean.abs() - d) / mean.stderr);
                worst_second = worst_second.max((second.mean - s2) / second.stderr);
            }
            if !(mean_ok && second_ok) {
                failures.push(format!("{} history {h}", spec.name()));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "4 kinds x 100 histories x 1e5 samples, worst (|mean| - d_max)/stderr = {worst_mean:.1}, \
             worst (E[eta^2] - sigma_max^2)/stderr = {worst_second:.1}, failures {failures:?}"
        ),
    )
}

fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.json");
    let dir = tempfile::TempDir::new().unwrap();
    let mut reports = Vec::new();
    for run in ["first", "second"] {
        let out_dir = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_hot-tuner"))
            .args([
                "verify",
                config.to_str().unwrap(),
                "--check",
                "all",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        if status.status.code() != Some(0) {
            return outcome(false, format!("verify all exited with {:?}", status.status.code()));
        }
        let path = out_dir.join("verify_all.json");
        let bytes = serde_json::to_vec(&without_timestamp(&path)).unwrap();
        reports.push(bytes);
    }
    outcome(
        reports[0] == reports[1],
        format!(
            "two `verify all` runs on the reference config, {} bytes each without the timestamp",
            reports[0].len()
        ),
    )
}

fn main() -> ExitCode {
    let cfg = RunConfig::reference();
    assert!(matches!(cfg.noise, NoiseSpec::BiasedGaussianTruncated { .. }));
    let started = Instant::now();
    let reports = decrement_reports(&cfg);
    type Criterion<'a> = Box<dyn FnOnce() -> Outcome + 'a>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 decrement bound", Box::new(|| decrement_bound(&reports))),
        ("2 strict decrease outside D", Box::new(|| strict_decrease(&reports))),
        ("3 boundedness", Box::new(|| boundedness(&cfg))),
        ("4 exponential rate", Box::new(|| rate(&cfg))),
        ("5 closed-form roots", Box::new(closed_form_roots)),
        ("6 algorithm fidelity", Box::new(algorithm_fidelity)),
        ("7 noise conformance", Box::new(noise_conformance)),
        ("8 determinism", Box::new(determinism)),
    ];
    let mut all = true;
    for (name, check) in criteria {
        let t = Instant::now();
        let o = check();
        all &= o.pass;
        println!(
            "[{}] {name} ({:.1} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {} in {:.1} s",
        if all { "all criteria pass" } else { "FAILED" },
        started.elapsed().as_secs_f64()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
