use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PermanentalSampler, Provenance};
use crate::density::chi2_conditional_params;
use crate::error::{Error, Result};
use crate::kernel::{symmetric_part, DEFAULT_TOL};
use crate::matrix::SquareMatrix;

fn correlated(chol: &SquareMatrix, rng: &mut ChaCha8Rng, z: &mut [f64], out: &mut [f64]) {
    let n = chol.n();
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    for i in 0..n {
        out[i] = (0..=i).map(|j| chol[(i, j)] * z[j]).sum();
    }
}

/// ℓ = U² + V² with U, V i.i.d. N(0, G/2).
#[derive(Debug, Clone)]
pub struct PsdSampler {
    chol: SquareMatrix,
}

impl PsdSampler {
    pub fn new(g: &SquareMatrix) -> Result<Self> {
        if !g.is_symmetric(DEFAULT_TOL) {
            return Err(Error::Domain("squared-Gaussian sampler needs a symmetric kernel".into()));
        }
        let chol = symmetric_part(g).scale(0.5).cholesky()?;
        Ok(Self { chol })
    }
}

impl PermanentalSampler for PsdSampler {
    fn dim(&self) -> usize {
        self.chol.n()
    }

    fn provenance(&self) -> Provenance {
        Provenance::GaussianPsd
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.dim();
        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        correlated(&self.chol, rng, &mut z, &mut u);
        correlated(&self.chol, rng, &mut z, &mut v);
        for i in 0..n {
            out[i] = u[i] * u[i] + v[i] * v[i];
        }
    }
}

/// {ℓ_* | ℓ_a = r} for symmetric G: (U' + √r m)² + V'² with
/// U', V' ~ N(0, ½(−Q_**)⁻¹) and m = −Q_**⁻¹Q_{*a}.
#[derive(Debug, Clone)]
pub struct ConditionedChi2Sampler {
    chol: SquareMatrix,
    shift: Vec<f64>,
    pub states: Vec<usize>,
}

impl ConditionedChi2Sampler {
    pub fn new(g: &SquareMatrix, a: usize, r: f64) -> Result<Self> {
        let (shift, cov) = chi2_conditional_params(g, a, r)?;
        Ok(Self { chol: cov.scale(0.5).cholesky()?, shift, states: (0..g.n()).filter(|&i| i != a).collect() })
    }
}

impl PermanentalSampler for ConditionedChi2Sampler {
    fn dim(&self) -> usize {
        self.chol.n()
    }

    fn provenance(&self) -> Provenance {
        Provenance::ConditionedChi2
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.dim();
        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        correlated(&self.chol, rng, &mut z, &mut u);
        correlated(&self.chol, rng, &mut z, &mut v);
        for i in 0..n {
            let x = u[i] + self.shift[i];
            out[i] = x * x + v[i] * v[i];
        }
    }
}

/// Sum of k independent draws of a base sampler.
pub struct KPermanental<S> {
    pub base: S,
    pub k: usize,
}

impl<S: PermanentalSampler> PermanentalSampler for KPermanental<S> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn provenance(&self) -> Provenance {
        if self.k == 1 {
            self.base.provenance()
        } else {
            Provenance::KFold
        }
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut tmp = vec![0.0; self.dim()];
        for _ in 0..self.k {
            self.base.sample_into(rng, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
    }
}
