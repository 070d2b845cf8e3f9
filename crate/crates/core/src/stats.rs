//! Compensated accumulators for ensemble statistics.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if math::abs(self.sum) >= math::abs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Count, sum and sum of squares of a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let mean = self.mean();
        ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        math::sqrt(self.variance() / self.count as f64)
    }
}

/// Sample covariance of a vector-valued quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    dim: usize,
    count: u64,
    sum: Vec<CompensatedSum>,
    cross: Vec<CompensatedSum>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            sum: vec![CompensatedSum::default(); dim],
            cross: vec![CompensatedSum::default(); dim * dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        for i in 0..self.dim {
            self.sum[i].add(x[i]);
            for j in 0..self.dim {
                self.cross[i * self.dim + j].add(x[i] * x[j]);
            }
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.merge(b);
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|s| s.value() / n).collect()
    }

    /// Unbiased covariance, row-major `dim × dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.count as f64;
        let mean = self.mean();
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let raw = self.cross[i * self.dim + j].value();
                out[i * self.dim + j] = (raw - n * mean[i] * mean[j]) / (n - 1.0);
            }
        }
        out
    }

    /// Standard error of each covariance entry under a Gaussian model,
    /// `√((σ_ii σ_jj + σ_ij²) / n)`.
    pub fn covariance_std_error(&self) -> Vec<f64> {
        let n = self.count as f64;
        let c = self.covariance();
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let cij = c[i * d + j];
                out[i * d + j] = math::sqrt((c[i * d + i] * c[j * d + j] + cij * cij) / n);
            }
        }
        out
    }
}

/// Median of a slice of finite values (NaN-free input assumed).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        s.add(1e100);
        s.add(1.0);
        s.add(-1e100);
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..40].iter().for_each(|&x| a.push(x));
        xs[40..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), 100);
        assert!((a.mean() - all.mean()).abs() < 1e-15);
        assert!((a.variance() - all.variance()).abs() < 1e-14);
    }

    #[test]
    fn covariance_of_known_sample() {
        let mut c = CovarianceAccumulator::new(2);
        for x in [[1.0, 2.0], [-1.0, -2.0], [1.0, -2.0], [-1.0, 2.0]] {
            c.push(&x);
        }
        let cov = c.covariance();
        assert!((cov[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov[3] - 16.0 / 3.0).abs() < 1e-15);
        assert!(cov[1].abs() < 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
