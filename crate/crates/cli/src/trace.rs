//! CSV output: per-trial traces and downsampled plot data.
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a field
//! back gives the identical `f64`.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use hot_tuner::lyapunov::clipped_v;
use hot_tuner::stats::MeanEstimate;
use hot_tuner::verify::{RateReport, TraceRecord};

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn trace_header(dimension: usize) -> Vec<String> {
    let mut header = vec!["k".to_string()];
    header.extend((0..dimension).map(|i| format!("theta_{i}")));
    header.extend((0..dimension).map(|i| format!("vartheta_{i}")));
    header.extend(["V", "Vhat", "e_y", "eta", "phi_norm"].map(String::from));
    header
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W, dimension: usize) -> io::Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(trace_header(dimension)).map_err(csv_err)?;
        Ok(Self { inner, row: Vec::new() })
    }

    pub fn write(&mut self, r: &TraceRecord) -> io::Result<()> {
        self.row.clear();
        self.row.push(r.k.to_string());
        self.row.extend(r.theta.iter().map(|&x| num(x)));
        self.row.extend(r.vartheta.iter().map(|&x| num(x)));
        self.row.extend([r.v, r.v_hat, r.e_y, r.eta, r.phi_norm].map(num));
        self.inner.write_record(&self.row).map_err(csv_err)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// All values of the named column of a CSV file with a header row.
pub fn read_column(path: &Path, name: &str) -> io::Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let idx = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("no column `{name}`")))?;
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            rec[idx]
                .parse::<f64>()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

/// Writes `k, mean_V, mean_Vhat, envelope` from per-trial `(k, V_k)` samples
/// taken at common steps. `V̂` is clipped at `k4` and the envelope is
/// `(1−α)^k` times the largest `V̂₀`.
pub fn write_plot_data(path: &Path, series: &[Vec<(u64, f64)>], k4: f64, alpha: f64) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["k", "mean_V", "mean_Vhat", "envelope"])
        .map_err(csv_err)?;
    let Some(first) = series.first() else {
        return w.flush();
    };
    let v_hat0 = series.iter().map(|s| clipped_v(s[0].1, k4)).fold(0.0, f64::max);
    for (j, &(k, _)) in first.iter().enumerate() {
        let v: Vec<f64> = series.iter().map(|s| s[j].1).collect();
        let v_hat: Vec<f64> = v.iter().map(|&x| clipped_v(x, k4)).collect();
        let envelope = (1.0 - alpha).powf(k as f64) * v_hat0;
        w.write_record([
            k.to_string(),
            num(MeanEstimate::from_samples(&v).mean),
            num(MeanEstimate::from_samples(&v_hat).mean),
            num(envelope),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

/// Writes `k, mean_Vhat, stderr, envelope` for about a thousand evenly spaced steps.
pub fn write_rate_plot(path: &Path, rate: &RateReport) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["k", "mean_Vhat", "stderr", "envelope"])
        .map_err(csv_err)?;
    let n = rate.steps.len();
    let stride = n.div_ceil(1000).max(1);
    for (i, s) in rate.steps.iter().enumerate() {
        if i % stride == 0 || i + 1 == n {
            w.write_record([s.k.to_string(), num(s.mean), num(s.stderr), num(s.envelope)])
                .map_err(csv_err)?;
        }
    }
    w.flush()
}
