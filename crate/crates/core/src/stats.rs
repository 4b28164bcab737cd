//! Small statistics helpers shared by the ensemble experiments.

use nalgebra::DMatrix;

use crate::C64;

/// Running sum and sum of squares of a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// `½ Σ |p_i - q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have equal support");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Large-sample expectation of the empirical-vs-exact total variation
/// distance, `½ Σ √(2 p_i (1-p_i) / (π n))`: each frequency is approximately
/// normal and `E|X| = σ √(2/π)`.
pub fn expected_total_variation(p: &[f64], n_samples: u64) -> f64 {
    let n = n_samples as f64;
    0.5 * p
        .iter()
        .map(|&pi| (2.0 * pi * (1.0 - pi).max(0.0) / (std::f64::consts::PI * n)).sqrt())
        .sum::<f64>()
}

/// Plug-in Shannon entropy (nats) of a histogram.
pub fn shannon_entropy<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Von Neumann entropy (nats) of a Hermitian positive semidefinite matrix;
/// eigenvalues below `cutoff` are dropped.
pub fn von_neumann_entropy(rho: &DMatrix<C64>, cutoff: f64) -> f64 {
    if rho.nrows() == 0 {
        return 0.0;
    }
    let eig = rho.clone().symmetric_eigenvalues();
    eig.iter()
        .filter(|&&p| p >= cutoff)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}
