//! Monte-Carlo summaries and the two-sample statistics used by the verifiers.

use serde::{Deserialize, Serialize};

/// Mean and standard error of a batch of replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_replicates: usize,
    pub imag_residue: f64,
    pub seed: u64,
}

impl MCEstimate {
    /// Panics if fewer than two samples are supplied.
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let (mean, var) = mean_var(xs);
        Self { mean, stderr: (var / xs.len() as f64).sqrt(), n_replicates: xs.len(), imag_residue: 0.0, seed }
    }

    /// Estimate from complex samples: statistics of the real part, residue is
    /// the magnitude of the imaginary mean.
    pub fn from_complex(re: &[f64], im: &[f64], seed: u64) -> Self {
        let mut e = Self::from_samples(re, seed);
        e.imag_residue = (im.iter().sum::<f64>() / im.len() as f64).abs();
        e
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.mean *= c;
        self.stderr *= c.abs();
        self.imag_residue *= c.abs();
        self
    }

    /// |mean − target| / stderr; infinite if stderr is zero and the values differ.
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.stderr)
    }

    /// Standardized difference of two independent estimates.
    pub fn z_between(&self, other: &Self) -> f64 {
        z_score(self.mean - other.mean, self.stderr.hypot(other.stderr))
    }
}

pub fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// diff / se keeping the sign; ±∞ when se is zero and diff is not.
pub fn signed_z(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Sample mean and unbiased variance. Two-pass for accuracy.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    assert!(xs.len() >= 2, "need at least two replicates");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sample Kolmogorov–Smirnov distance sup |F_a − F_b|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_sorted(&a, &b)
}

pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS distance against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs())
    })
}

/// Per-coordinate KS distances between two batches of vectors.
pub fn ks_per_coordinate(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let dim = a.first().map_or(0, Vec::len);
    (0..dim)
        .map(|k| {
            let xa: Vec<f64> = a.iter().map(|v| v[k]).collect();
            let xb: Vec<f64> = b.iter().map(|v| v[k]).collect();
            ks_two_sample(&xa, &xb)
        })
        .collect()
}

/// Proportion estimate of an indicator with binomial stderr.
pub fn proportion(hits: usize, n: usize, seed: u64) -> MCEstimate {
    let p = hits as f64 / n as f64;
    MCEstimate { mean: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), n_replicates: n, imag_residue: 0.0, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_is_zero() {
        let a = [0.3, 0.1, 0.2];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn ks_disjoint_is_one() {
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn ks_handles_ties() {
        let d = ks_two_sample(&[1.0, 1.0, 2.0, 2.0], &[1.0, 2.0]);
        assert_eq!(d, 0.0);
        // brute force over all evaluation points
        let a = [0.5, 1.5, 1.5, 3.0];
        let b = [1.0, 1.5, 2.0];
        let mut brute = 0.0f64;
        for x in a.iter().chain(b.iter()) {
            let fa = a.iter().filter(|&&y| y <= *x).count() as f64 / 4.0;
            let fb = b.iter().filter(|&&y| y <= *x).count() as f64 / 3.0;
            brute = brute.max((fa - fb).abs());
        }
        assert!((ks_two_sample(&a, &b) - brute).abs() < 1e-15);
    }

    #[test]
    fn estimate_from_samples() {
        let e = MCEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.z_against(2.5), 0.0);
    }
}
