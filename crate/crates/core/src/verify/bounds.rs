use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{Comparison, Report};
use crate::error::{Error, Result};
use crate::kernel::symmetric_part;
use crate::markov::MarkovModel;
use crate::rng::{par_replicates, try_par_replicates};
use crate::samplers::{cover_and_hitting_functionals, inverse_local_time_field};
use crate::stats::{proportion, MCEstimate};

/// Constants attached to pinning state `a`: G̃ = (−Q_**)⁻¹,
/// γ = |2G̃|/|G̃+G̃ᵀ| and σ² = max diag ½(−S_**)⁻¹.
#[derive(Debug, Clone, Serialize)]
pub struct TailParams {
    pub gamma: f64,
    pub sigma2: f64,
    /// Covariance ½(−S_**)⁻¹ of the comparison Gaussian.
    #[serde(skip)]
    pub cov: crate::matrix::SquareMatrix,
}

impl TailParams {
    pub fn new(model: &MarkovModel, a: usize) -> Result<Self> {
        if model.n() < 2 || a >= model.n() {
            return Err(Error::Domain("pinning needs a valid state of a chain with at least two states".into()));
        }
        let q_star = model.q.delete_index(a);
        let g_tilde = q_star.scale(-1.0).inverse()?;
        let gamma = g_tilde.scale(2.0).det() / g_tilde.add(&g_tilde.transpose()).det();
        let cov = symmetric_part(&symmetric_part(&q_star).scale(-1.0).inverse()?.scale(0.5));
        let sigma2 = cov.diagonal().into_iter().fold(0.0, f64::max);
        Ok(Self { gamma, sigma2, cov })
    }

    /// E sup_i η_i for η ~ N(0, cov).
    pub fn expected_sup(&self, n_rep: usize, seed: u64) -> Result<MCEstimate> {
        let chol = self.cov.cholesky()?;
        let m = chol.n();
        let sups = par_replicates(seed, "gaussian-sup", n_rep, |rng, _| {
            let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            (0..m).map(|i| (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
        });
        Ok(MCEstimate::from_samples(&sups, seed))
    }
}

/// P((Σπ_i 𝓛^i_{τ(r)})^{1/2} − √r ≥ √λ σ) against 5γ e^{−λ/8}.
pub fn check_tail_bound(
    model: &MarkovModel,
    a: usize,
    r: f64,
    lambda_grid: &[f64],
    n_rep: usize,
    seed: u64,
) -> Result<Report> {
    if !(r >= 0.0) {
        return Err(Error::Domain("r must be nonnegative".into()));
    }
    let params = TailParams::new(model, a)?;
    let pi = &model.pi;
    let totals = try_par_replicates(seed, "tail", n_rep, |rng, _| -> Result<f64> {
        let lt = inverse_local_time_field(model, a, r, rng)?;
        Ok(lt.iter().zip(pi).map(|(l, p)| l * p).sum())
    })?;
    let sigma = params.sigma2.sqrt();
    let mut report = Report::new("tail");
    report.metric("gamma", params.gamma);
    report.metric("sigma2", params.sigma2);
    let mut tightness: f64 = 0.0;
    for (i, &lam) in lambda_grid.iter().enumerate() {
        let hits = totals.iter().filter(|t| t.sqrt() - r.sqrt() >= lam.sqrt() * sigma).count();
        let p = proportion(hits, n_rep, seed);
        let bound = 5.0 * params.gamma * (-lam / 8.0).exp();
        tightness = tightness.max(p.mean / bound);
        report.push(Comparison::at_most(&format!("lambda[{i}]"), &p, bound));
    }
    report.metric("tightness", tightness);
    Ok(report.finish())
}

/// Cover, cover-and-return and hitting-time estimates from every start, with
/// the sandwich t_cov ≤ E τ_cov⁺ ≤ 2 t_cov and the symmetrization ratio.
pub fn estimate_cover_time(model: &MarkovModel, n_rep: usize, seed: u64) -> Result<Report> {
    let n = model.n();
    let mut cov = Vec::with_capacity(n);
    let mut plus = Vec::with_capacity(n);
    let mut t_hit: f64 = 0.0;
    for s in 0..n {
        let runs = try_par_replicates(seed, &format!("cover-{s}"), n_rep, |rng, _| {
            cover_and_hitting_functionals(model, s, rng)
        })?;
        let c: Vec<f64> = runs.iter().map(|r| r.tau_cov).collect();
        let p: Vec<f64> = runs.iter().map(|r| r.tau_cov_plus).collect();
        for j in 0..n {
            let h: Vec<f64> = runs.iter().map(|r| r.tau_hit[j]).collect();
            t_hit = t_hit.max(MCEstimate::from_samples(&h, seed).mean);
        }
        cov.push(MCEstimate::from_samples(&c, seed));
        plus.push(MCEstimate::from_samples(&p, seed));
    }
    let worst = (0..n).max_by(|&i, &j| cov[i].mean.total_cmp(&cov[j].mean)).unwrap_or(0);
    let t_cov = cov[worst];
    let twice = t_cov.scaled(2.0);

    let mut report = Report::new("cover");
    for (s, p) in plus.iter().enumerate() {
        report.push(Comparison::dominates(&format!("lower[{s}]"), p, &t_cov));
        report.push(Comparison::dominates(&format!("upper[{s}]"), &twice, p));
    }
    report.metric("t_cov", t_cov.mean);
    report.metric("t_cov_stderr", t_cov.stderr);
    report.metric("t_hit", t_hit);
    if n >= 2 {
        let params = TailParams::new(model, 0)?;
        let m = params.expected_sup(n_rep, seed)?.mean;
        let denom = m * m + params.sigma2 * params.gamma.ln() + params.sigma2;
        report.metric("expected_sup", m);
        report.metric("sigma2", params.sigma2);
        report.metric("gamma", params.gamma);
        report.metric("symmetrization_ratio", t_cov.mean / denom);
        let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
        report.metric("matthews_bound", t_hit * harmonic);
        report.metric("matthews_ratio", t_cov.mean / (t_hit * (n as f64).ln()));
    }
    Ok(report.finish())
}
