use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{LoopSoupSampler, PermanentalSampler};
use crate::error::{Error, Result};
use crate::markov::{ray_knight_kernel, KillingRates, MarkovModel};
use crate::rng::try_par_replicates;

/// Default half-width max(0.02·r, 0.01·G_aa).
pub fn default_band(r: f64, g_aa: f64) -> f64 {
    (0.02 * r).max(0.01 * g_aa)
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceStats {
    pub accepted: usize,
    pub drawn: u64,
    pub rate: f64,
    pub predicted: f64,
    pub stderr: f64,
}

/// {ℓ | |ℓ_a − r| ≤ band} by rejection from the loop soup of G^h, h killing at a only.
#[derive(Debug, Clone)]
pub struct RejectionSampler {
    soup: LoopSoupSampler,
    pub a: usize,
    pub r: f64,
    pub band: f64,
    pub g_aa: f64,
    pub floor: f64,
    pub predicted: f64,
}

impl RejectionSampler {
    pub fn new(model: &MarkovModel, a: usize, h: f64, r: f64, band: Option<f64>, floor: f64) -> Result<Self> {
        let gk = ray_knight_kernel(&model.q, a, h)?;
        let g_aa = gk.g[(a, a)];
        if !(r >= 0.0) {
            return Err(Error::Domain("conditioning level must be nonnegative".into()));
        }
        let band = band.unwrap_or_else(|| default_band(r, g_aa));
        if !(band > 0.0) {
            return Err(Error::Domain("band must be positive".into()));
        }
        let soup = LoopSoupSampler::new(model, &KillingRates::at(model.n(), a, h)?)?;
        let lo = (r - band).max(0.0);
        let hi = r + band;
        let predicted = (-lo / g_aa).exp() - (-hi / g_aa).exp();
        if predicted < floor {
            return Err(Error::BandTooNarrow { rate: predicted, floor });
        }
        Ok(Self { soup, a, r, band, g_aa, floor, predicted })
    }

    fn draw_cap(&self) -> u64 {
        ((200.0 / self.floor.max(1e-9)).ceil() as u64).max(1000)
    }

    /// One accepted sample and the number of proposals it took.
    pub fn sample_counted(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, u64)> {
        let mut v = vec![0.0; self.soup.dim()];
        let cap = self.draw_cap();
        for drawn in 1..=cap {
            self.soup.sample_into(rng, &mut v);
            if (v[self.a] - self.r).abs() <= self.band {
                return Ok((v, drawn));
            }
        }
        Err(Error::BandTooNarrow { rate: 1.0 / cap as f64, floor: self.floor })
    }

    pub fn sample_batch(&self, n: usize, seed: u64, tag: &str) -> Result<(Vec<Vec<f64>>, AcceptanceStats)> {
        let out = try_par_replicates(seed, tag, n, |rng, _| self.sample_counted(rng))?;
        let drawn: u64 = out.iter().map(|(_, d)| d).sum();
        let samples: Vec<Vec<f64>> = out.into_iter().map(|(v, _)| v).collect();
        let rate = n as f64 / drawn.max(1) as f64;
        // number of proposals per acceptance is geometric; delta method on its mean
        let stderr = rate * ((1.0 - rate).max(0.0) / n.max(1) as f64).sqrt();
        if rate < self.floor {
            return Err(Error::BandTooNarrow { rate, floor: self.floor });
        }
        Ok((samples, AcceptanceStats { accepted: n, drawn, rate, predicted: self.predicted, stderr }))
    }
}
