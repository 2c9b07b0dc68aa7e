use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};

use super::{PermanentalSampler, Provenance};
use crate::error::{Error, Result};
use crate::kernel::spectral_radius;
use crate::markov::{killed_laplacian, KillingRates, MarkovModel};
use crate::matrix::SquareMatrix;

const TAIL_TARGET: f64 = 1e-12;
const MAX_LOOP_LENGTH: usize = 200_000;

/// Occupation field of a Poisson loop soup at intensity 1.
///
/// Built from a sub-Markovian generator L: exit rates q_x = −L_xx and the
/// killed jump matrix P̃ = offdiag(L)/q_x. The law is 1-permanental with kernel (−L)⁻¹.
#[derive(Debug, Clone)]
pub struct LoopSoupSampler {
    n: usize,
    q: Vec<f64>,
    p: SquareMatrix,
    /// powers[k] = P̃ᵏ for k = 0..=k_max
    powers: Vec<SquareMatrix>,
    /// cumulative loop-length masses for k = 2..=k_max
    length_cdf: Vec<f64>,
    pub mass: f64,
    pub rho: f64,
    pub k_max: usize,
}

impl LoopSoupSampler {
    pub fn new(model: &MarkovModel, h: &KillingRates) -> Result<Self> {
        if h.0.len() != model.n() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: h.0.len() });
        }
        let l = killed_laplacian(&model.q, h)?;
        Self::from_generator(&l)
    }

    /// Kernel G with G⁻¹ an M-matrix: uses L = −G⁻¹.
    pub fn from_kernel(g: &SquareMatrix) -> Result<Self> {
        let l = g.inverse()?.scale(-1.0);
        Self::from_generator(&l)
    }

    pub fn from_generator(l: &SquareMatrix) -> Result<Self> {
        let n = l.n();
        let scale = l.max_norm().max(1.0);
        let mut q = vec![0.0; n];
        for x in 0..n {
            q[x] = -l[(x, x)];
            if !(q[x] > 0.0) {
                return Err(Error::InvalidRate(format!("exit rate at state {x} is not positive")));
            }
        }
        let mut p = SquareMatrix::zeros(n);
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let v = l[(x, y)];
                    if v < -1e-12 * scale {
                        return Err(Error::InvalidRate(format!("negative jump rate at ({x},{y})")));
                    }
                    p[(x, y)] = v.max(0.0) / q[x];
                }
            }
        }
        let rho = spectral_radius(&p)?;
        if rho >= 1.0 - 1e-12 {
            return Err(Error::InvalidKilledChain(rho));
        }
        let k_max = choose_k_max(n, rho)?;
        let mut powers = Vec::with_capacity(k_max + 1);
        powers.push(SquareMatrix::identity(n));
        for k in 1..=k_max {
            let next = powers[k - 1].mul(&p);
            powers.push(next);
        }
        let mut length_cdf = Vec::with_capacity(k_max.saturating_sub(1));
        let mut acc = 0.0;
        for (k, pk) in powers.iter().enumerate().skip(2) {
            let tr: f64 = (0..n).map(|i| pk[(i, i)]).sum();
            acc += tr.max(0.0) / k as f64;
            length_cdf.push(acc);
        }
        Ok(Self { n, q, p, powers, length_cdf, mass: acc, rho, k_max })
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.q
    }

    fn sample_length(&self, rng: &mut ChaCha8Rng) -> usize {
        let u = rng.random::<f64>() * self.mass;
        let idx = self.length_cdf.partition_point(|&c| c <= u);
        idx.min(self.length_cdf.len() - 1) + 2
    }

    fn pick(weights: impl Iterator<Item = f64> + Clone, rng: &mut ChaCha8Rng) -> usize {
        let total: f64 = weights.clone().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            if w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    /// Visit counts of one loop of length k.
    fn sample_loop(&self, k: usize, rng: &mut ChaCha8Rng, visits: &mut [u64]) {
        let pk = &self.powers[k];
        let x1 = Self::pick((0..self.n).map(|x| pk[(x, x)]), rng);
        visits[x1] += 1;
        let mut x = x1;
        // x_{i+1} is k − i steps from closing the loop at x1
        for i in 1..k {
            let rest = &self.powers[k - i];
            let y = Self::pick((0..self.n).map(|y| self.p[(x, y)] * rest[(y, x1)]), rng);
            visits[y] += 1;
            x = y;
        }
    }

    pub fn sample_visits(&self, rng: &mut ChaCha8Rng, visits: &mut [u64]) {
        visits.iter_mut().for_each(|v| *v = 0);
        if self.mass <= 0.0 {
            return;
        }
        let count = Poisson::new(self.mass).map(|d| d.sample(rng) as u64).unwrap_or(0);
        for _ in 0..count {
            let k = self.sample_length(rng);
            self.sample_loop(k, rng, visits);
        }
    }
}

fn choose_k_max(n: usize, rho: f64) -> Result<usize> {
    if rho <= 0.0 {
        return Ok(2);
    }
    let nf = n as f64;
    let mut k = 2usize;
    let mut rk = rho.powi(3);
    while nf * rk / ((k + 1) as f64 * (1.0 - rho)) >= TAIL_TARGET {
        k += 1;
        rk *= rho;
        if k > MAX_LOOP_LENGTH {
            return Err(Error::InvalidKilledChain(rho));
        }
    }
    Ok(k)
}

impl PermanentalSampler for LoopSoupSampler {
    fn dim(&self) -> usize {
        self.n
    }

    fn provenance(&self) -> Provenance {
        Provenance::LoopSoup
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let mut visits = vec![0u64; self.n];
        self.sample_visits(rng, &mut visits);
        for x in 0..self.n {
            // one trivial-loop Exp(q_x) plus one Exp(q_x) holding per visit
            let shape = 1 + visits[x];
            out[x] = if shape == 1 {
                let e: f64 = rng.sample(Exp1);
                e / self.q[x]
            } else {
                Gamma::new(shape as f64, 1.0 / self.q[x]).expect("valid gamma").sample(rng)
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::full_killing_kernel;
    use crate::samplers::{sample_batch, PsdSampler};
    use crate::stats::ks_per_coordinate;

    #[test]
    fn mass_matches_log_det() {
        let m = MarkovModel::cycle(3, 0.7).unwrap();
        let h = KillingRates::new(vec![0.3, 0.1, 0.2]).unwrap();
        let s = LoopSoupSampler::new(&m, &h).unwrap();
        let want = -(SquareMatrix::identity(3).sub(&s.p)).det().ln();
        assert!((s.mass - want).abs() < 1e-10, "{} vs {want}", s.mass);
    }

    #[test]
    fn rejects_unkilled() {
        let m = MarkovModel::cycle(3, 0.7).unwrap();
        let h = KillingRates(vec![0.0; 3]);
        assert!(matches!(LoopSoupSampler::new(&m, &h), Err(Error::SingularKilling(_))));
        let mut l = m.q.clone();
        l[(0, 0)] -= 1e-16;
        assert!(matches!(LoopSoupSampler::from_generator(&l), Err(Error::InvalidKilledChain(_))));
    }

    #[test]
    fn agrees_with_gaussian_squares_on_reversible_chain() {
        let m = MarkovModel::two_flip();
        let h = KillingRates::new(vec![0.4, 0.2]).unwrap();
        let g = full_killing_kernel(&m.q, &h).unwrap().g;
        let soup = LoopSoupSampler::new(&m, &h).unwrap();
        let psd = PsdSampler::new(&g).unwrap();
        let a = sample_batch(&soup, 20000, 1, "soup");
        let b = sample_batch(&psd, 20000, 1, "psd");
        for d in ks_per_coordinate(&a, &b) {
            assert!(d < 0.025, "ks {d}");
        }
    }

    #[test]
    fn non_reversible_laplace_transform() {
        use crate::density::laplace_transform_exact;
        use crate::stats::MCEstimate;
        let m = MarkovModel::cycle(3, 0.85).unwrap();
        let h = KillingRates::new(vec![0.25, 0.05, 0.15]).unwrap();
        let g = full_killing_kernel(&m.q, &h).unwrap().g;
        let soup = LoopSoupSampler::new(&m, &h).unwrap();
        let xs = sample_batch(&soup, 40000, 3, "lt");
        for lam in [[0.1, 0.2, 0.3], [0.5, 0.0, 1.0], [1.0, 1.0, 1.0]] {
            let f: Vec<f64> = xs.iter().map(|l| (-(0..3).map(|i| lam[i] * l[i]).sum::<f64>()).exp()).collect();
            let est = MCEstimate::from_samples(&f, 3);
            let want = laplace_transform_exact(&g, &lam, 1.0).unwrap();
            assert!(est.z_against(want).abs() < 3.5, "{lam:?}: {est:?} vs {want}");
        }
    }
}
