use serde::{Deserialize, Serialize};

/// A Monte Carlo value with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Estimate {
    /// Sample mean and `sqrt(s^2 / n)` with the unbiased variance `s^2`.
    /// Both sums are pairwise, over the samples in the given order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        if n == 0 {
            return Estimate { value: f64::NAN, stderr: f64::NAN, n_samples: 0, seed };
        }
        let mean = pairwise_sum(samples) / n as f64;
        let stderr = if n > 1 {
            let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { value: mean, stderr, n_samples: n, seed }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n_samples: 0, seed: 0 }
    }

    /// `|value - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    /// `|a - b| <= k * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * combined_stderr(self, other)
    }
}

pub fn combined_stderr(a: &Estimate, b: &Estimate) -> f64 {
    a.stderr.hypot(b.stderr)
}

/// Pairwise (cascade) summation with a 32-element sequential base case.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0);
        assert_eq!(e.value, 2.5);
        // unbiased variance 5/3
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_exact_integers() {
        let xs: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 50_005_000.0);
    }

    #[test]
    fn empty_is_nan() {
        assert!(Estimate::from_samples(&[], 1).value.is_nan());
    }
}
