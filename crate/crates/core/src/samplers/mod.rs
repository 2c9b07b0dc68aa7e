//! Samplers for permanental vectors and Markov chain paths.

mod ctmc;
mod gaussian;
mod loop_soup;
mod rejection;

pub use ctmc::{
    cover_and_hitting_functionals, inverse_local_time_field, simulate_ctmc, CoverFunctionals, Ctmc, StoppingRule,
    Terminal, Trajectory,
};
pub use gaussian::{ConditionedChi2Sampler, KPermanental, PsdSampler};
pub use loop_soup::LoopSoupSampler;
pub use rejection::{default_band, AcceptanceStats, RejectionSampler};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::par_replicates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GaussianPsd,
    LoopSoup,
    ConditionedChi2,
    RejectionBand,
    KFold,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::GaussianPsd => "gaussian_psd",
            Provenance::LoopSoup => "loop_soup",
            Provenance::ConditionedChi2 => "conditioned_chi2",
            Provenance::RejectionBand => "rejection_band",
            Provenance::KFold => "k_fold",
        }
    }
}

/// A nonnegative sample with the sampler that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermanentalSample {
    pub l: Vec<f64>,
    pub provenance: Provenance,
    pub seed: u64,
    pub replicate: u64,
}

/// An exact sampler for some permanental law.
pub trait PermanentalSampler: Sync + Send {
    fn dim(&self) -> usize;
    fn provenance(&self) -> Provenance;
    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.sample_into(rng, &mut v);
        v
    }
}

/// `n` independent samples, replicate `i` drawn from stream `(seed, tag, i)`.
pub fn sample_batch(sampler: &dyn PermanentalSampler, n: usize, seed: u64, tag: &str) -> Vec<Vec<f64>> {
    par_replicates(seed, tag, n, |rng, _| sampler.sample(rng))
}

pub fn sample_records(sampler: &dyn PermanentalSampler, n: usize, seed: u64, tag: &str) -> Vec<PermanentalSample> {
    sample_batch(sampler, n, seed, tag)
        .into_iter()
        .enumerate()
        .map(|(i, l)| PermanentalSample { l, provenance: sampler.provenance(), seed, replicate: i as u64 })
        .collect()
}

impl<T: PermanentalSampler + ?Sized> PermanentalSampler for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        (**self).sample_into(rng, out)
    }
}
