use num_complex::Complex64;

use super::{kernel_sampler, Comparison, Report};
use crate::density::{box_expectation, laplace_transform_exact, BoxRule, TwistedSampler};
use crate::error::Result;
use crate::matrix::SquareMatrix;
use crate::rng::par_replicates;
use crate::samplers::{sample_batch, KPermanental, PermanentalSampler};
use crate::stats::MCEstimate;
use crate::testfn::TestFunction;

/// Eight λ points scaled to the kernel's diagonal, starting with λ = 0.
pub fn default_lambda_grid(g: &SquareMatrix) -> Vec<Vec<f64>> {
    let n = g.n();
    let mean_diag = g.diagonal().iter().sum::<f64>() / n as f64;
    let s = 1.0 / mean_diag.max(1e-12);
    let flat = |c: f64| vec![c * s; n];
    vec![
        flat(0.0),
        flat(0.25),
        flat(0.5),
        flat(1.0),
        flat(2.0),
        (0..n).map(|i| s * (i + 1) as f64 / n as f64).collect(),
        (0..n).map(|i| s * (n - i) as f64 / n as f64).collect(),
        (0..n).map(|i| if i % 2 == 0 { 1.5 * s } else { 0.2 * s }).collect(),
    ]
}

pub(crate) fn laplace_values(samples: &[Vec<f64>], lambda: &[f64]) -> Vec<f64> {
    samples.iter().map(|l| (-l.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp()).collect()
}

/// Empirical E e^{−⟨λ,ℓ⟩} against an exact oracle at every grid point.
pub fn verify_laplace_samples<F>(
    kind: &str,
    samples: &[Vec<f64>],
    grid: &[Vec<f64>],
    seed: u64,
    oracle: F,
) -> Result<Report>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut report = Report::new(kind);
    for (i, lambda) in grid.iter().enumerate() {
        let est = MCEstimate::from_samples(&laplace_values(samples, lambda), seed);
        report.push(Comparison::against(&format!("lambda[{i}]"), &est, oracle(lambda)?));
    }
    report.metric("n_samples", samples.len() as f64);
    Ok(report.finish())
}

/// Sampler claiming kernel G (α-permanental) against det(I+ΛG)^{−α}.
pub fn verify_laplace(
    g: &SquareMatrix,
    sampler: &dyn PermanentalSampler,
    alpha: f64,
    grid: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<Report> {
    let samples = sample_batch(sampler, n, seed, "laplace");
    verify_laplace_samples("laplace", &samples, grid, seed, |lam| laplace_transform_exact(g, lam, alpha))
}

/// Le Jan: E f(ℓ) three ways (exact sampler, twisted importance sampling, box
/// quadrature for n ≤ 3), for the sum of k independent copies.
pub fn verify_lejan(
    g: &SquareMatrix,
    f: &TestFunction,
    k: usize,
    n_rep: usize,
    seed: u64,
    quadrature: bool,
) -> Result<Report> {
    let n = g.n();
    f.validate(n)?;
    let k = k.max(1);
    let mut report = Report::new("lejan");

    let base = kernel_sampler(g)?;
    let sampler = KPermanental { base, k };
    let direct: Vec<f64> = sample_batch(&sampler, n_rep, seed, "lejan-direct").iter().map(|l| f.eval(l)).collect();
    let direct = MCEstimate::from_samples(&direct, seed);

    let twisted = TwistedSampler::from_kernel(g)?;
    let scale = twisted.det_ratio.powi(k as i32);
    let vals = par_replicates(seed, "lejan-twisted", n_rep, |rng, _| {
        let mut l = vec![0.0; n];
        let mut w = Complex64::new(1.0, 0.0);
        for _ in 0..k {
            let (phi, wi) = twisted.sample(rng);
            for (li, p) in l.iter_mut().zip(&phi) {
                *li += p.norm_sqr();
            }
            w *= wi;
        }
        w * f.eval(&l) * scale
    });
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    let tw = MCEstimate::from_complex(&re, &im, seed);
    report.metric("twisted_imag_residue", tw.imag_residue);
    report.push(Comparison::two_sided("sampler_vs_twisted", &direct, &tw));

    if quadrature && k == 1 && n <= 3 {
        let q = box_expectation(g, |l| f.eval(l), BoxRule::default())?;
        report.metric("quadrature", q);
        report.push(Comparison::against("sampler_vs_quadrature", &direct, q));
        report.push(Comparison::against("twisted_vs_quadrature", &tw, q));
    }
    Ok(report.finish())
}
