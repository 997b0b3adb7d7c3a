//! Order-deterministic summary statistics.
//!
//! Sums use pairwise reduction over slices in index order, so results depend
//! only on the data, never on how the work producing it was scheduled.

use serde::Serialize;

const PAIRWISE_BLOCK: usize = 32;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let (lo, hi) = xs.split_at(xs.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    /// Two-pass estimate; `stderr` is zero for fewer than two samples.
    ///
    /// Identical samples give their common value and a zero stderr exactly.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        if xs.iter().all(|x| x.to_bits() == xs[0].to_bits()) {
            return Self {
                n,
                mean: xs[0],
                stderr: 0.0,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, stderr }
    }

    /// `mean ≤ bound + z·stderr`.
    pub fn within(&self, bound: f64, z: f64) -> bool {
        self.mean <= bound + z * self.stderr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_sum_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_estimate_basic() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let c = MeanEstimate::from_samples(&[7.0; 10]);
        assert_eq!((c.mean, c.stderr), (7.0, 0.0));
        assert!(c.within(7.0, 4.0));
        assert!(!c.within(6.999, 4.0));
        let odd = MeanEstimate::from_samples(&[0.1; 3]);
        assert_eq!((odd.mean, odd.stderr), (0.1, 0.0));
    }
}
