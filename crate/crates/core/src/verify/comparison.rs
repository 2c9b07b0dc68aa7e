use serde::{Deserialize, Serialize};

use super::laplace::{default_lambda_grid, verify_laplace_samples};
use super::{kernel_sampler, Comparison, ComparisonReport, Report, Z_THRESHOLD};
use crate::density::laplace_transform_exact;
use crate::error::{Error, Result};
use crate::kernel::{is_certified_kernel, DEFAULT_TOL};
use crate::matrix::SquareMatrix;
use crate::samplers::{sample_batch, KPermanental, LoopSoupSampler, PermanentalSampler};
use crate::stats::{mean_var, proportion, MCEstimate};
use crate::testfn::{SignClass, TestFunction};

/// An interpolation α ↦ G_α between two kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelPath {
    /// G_α = (sI − P_α)⁻¹ with P_α = αP₁ + (1−α)P₀, P₀ ≤ P₁ sub-stochastic, s > 1.
    SubStochastic { p0: SquareMatrix, p1: SquareMatrix, s: f64 },
    /// G_α = (1−α)G₀ + αG₁.
    Linear { g0: SquareMatrix, g1: SquareMatrix },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KahaneDirection {
    Nondecreasing,
    Nonincreasing,
    Constant,
}

impl KernelPath {
    pub fn n(&self) -> usize {
        match self {
            KernelPath::SubStochastic { p0, .. } => p0.n(),
            KernelPath::Linear { g0, .. } => g0.n(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            KernelPath::SubStochastic { p0, p1, s } => {
                let n = p0.n();
                if p1.n() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: p1.n() });
                }
                if !(*s > 1.0) {
                    return Err(Error::InvalidFamily("s must exceed 1".into()));
                }
                for i in 0..n {
                    for p in [p0, p1] {
                        if (0..n).map(|j| p[(i, j)]).sum::<f64>() > 1.0 + 1e-12 {
                            return Err(Error::InvalidFamily(format!("row {i} is not sub-stochastic")));
                        }
                    }
                    for j in 0..n {
                        if p0[(i, j)] < 0.0 || p0[(i, j)] > p1[(i, j)] {
                            return Err(Error::InvalidFamily(format!("need 0 <= P0 <= P1 at ({i},{j})")));
                        }
                    }
                }
                Ok(())
            }
            KernelPath::Linear { g0, g1 } => {
                if g0.n() != g1.n() {
                    return Err(Error::DimensionMismatch { expected: g0.n(), got: g1.n() });
                }
                Ok(())
            }
        }
    }

    fn p_alpha(p0: &SquareMatrix, p1: &SquareMatrix, alpha: f64) -> SquareMatrix {
        p1.scale(alpha).add(&p0.scale(1.0 - alpha))
    }

    pub fn kernel(&self, alpha: f64) -> Result<SquareMatrix> {
        match self {
            KernelPath::SubStochastic { p0, p1, s } => {
                SquareMatrix::identity(p0.n()).scale(*s).sub(&Self::p_alpha(p0, p1, alpha)).inverse()
            }
            KernelPath::Linear { g0, g1 } => Ok(g1.scale(alpha).add(&g0.scale(1.0 - alpha))),
        }
    }

    pub fn derivative(&self, alpha: f64) -> Result<SquareMatrix> {
        match self {
            KernelPath::SubStochastic { p0, p1, .. } => {
                let g = self.kernel(alpha)?;
                Ok(g.mul(&p1.sub(p0)).mul(&g))
            }
            KernelPath::Linear { g0, g1 } => Ok(g1.sub(g0)),
        }
    }

    fn sampler(&self, alpha: f64) -> Result<Box<dyn PermanentalSampler>> {
        match self {
            KernelPath::SubStochastic { p0, p1, s } => {
                let l = Self::p_alpha(p0, p1, alpha).sub(&SquareMatrix::identity(p0.n()).scale(*s));
                Ok(Box::new(LoopSoupSampler::from_generator(&l)?))
            }
            KernelPath::Linear { .. } => kernel_sampler(&self.kernel(alpha)?),
        }
    }
}

fn sign_of(values: &[f64], tol: f64) -> Result<SignClass> {
    let pos = values.iter().any(|v| *v > tol);
    let neg = values.iter().any(|v| *v < -tol);
    match (pos, neg) {
        (false, false) => Ok(SignClass::Zero),
        (true, false) => Ok(SignClass::NonNeg),
        (false, true) => Ok(SignClass::NonPos),
        (true, true) => Err(Error::InvalidFamily("dG/dalpha changes sign along the path".into())),
    }
}

/// Whether the lemma's sign conditions hold for f (or −f when `negated`).
fn compatible(f: &TestFunction, signs: &[Vec<SignClass>], k: u32, negated: bool) -> bool {
    let n = signs.len();
    let adj = |s: SignClass| if negated { s.negate() } else { s };
    (0..n).all(|i| {
        signs[i][i].product_nonneg(adj(f.diagonal_sign(i, k)))
            && (0..n).filter(|&j| j != i).all(|j| signs[i][j].product_nonneg(adj(f.mixed_sign(i, j))))
    })
}

/// Kahane-type monotonicity of α ↦ E f(ℓ_α) along a path, for the sum of k copies.
pub fn check_kahane(
    path: &KernelPath,
    f: &TestFunction,
    k: usize,
    alpha_grid: &[f64],
    n_rep: usize,
    seed: u64,
) -> Result<Report> {
    path.validate()?;
    let n = path.n();
    f.validate(n)?;
    let k = k.max(1);
    if alpha_grid.len() < 2 || alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("alpha grid must be increasing with at least two points".into()));
    }
    let scale = path.kernel(alpha_grid[0])?.max_norm().max(1.0);
    let mut derivs = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let g = path.kernel(alpha)?;
        if !is_certified_kernel(&g, DEFAULT_TOL) {
            return Err(Error::InvalidFamily(format!("G_alpha at alpha = {alpha} is not a certified kernel")));
        }
        derivs.push(path.derivative(alpha)?);
    }
    let mut signs = vec![vec![SignClass::Zero; n]; n];
    for i in 0..n {
        for j in 0..n {
            let v: Vec<f64> = derivs.iter().map(|d| d[(i, j)]).collect();
            signs[i][j] = sign_of(&v, 1e-12 * scale * scale)?;
        }
    }
    let up = compatible(f, &signs, k as u32, false);
    let down = compatible(f, &signs, k as u32, true);
    let direction = match (up, down) {
        (true, true) => KahaneDirection::Constant,
        (true, false) => KahaneDirection::Nondecreasing,
        (false, true) => KahaneDirection::Nonincreasing,
        (false, false) => {
            return Err(Error::InvalidFamily("test function does not satisfy the sign conditions for this path".into()))
        }
    };

    // common random numbers: replicate i uses the same stream at every α
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let sampler = KPermanental { base: path.sampler(alpha)?, k };
        values.push(sample_batch(&sampler, n_rep, seed, "kahane").iter().map(|l| f.eval(l)).collect());
    }
    let estimates: Vec<MCEstimate> = values.iter().map(|v| MCEstimate::from_samples(v, seed)).collect();
    let sign = match direction {
        KahaneDirection::Nonincreasing => -1.0,
        _ => 1.0,
    };
    let mut report = Report::new("kahane");
    let mut max_violation: f64 = 0.0;
    let mut crn_ratio: f64 = 0.0;
    for w in 0..alpha_grid.len() - 1 {
        let d: Vec<f64> = values[w + 1].iter().zip(&values[w]).map(|(b, a)| sign * (b - a)).collect();
        let de = MCEstimate::from_samples(&d, seed);
        let z = crate::stats::signed_z(-de.mean, de.stderr);
        let viol = if direction == KahaneDirection::Constant { z.abs() } else { z.max(0.0) };
        max_violation = max_violation.max(viol);
        let (_, vd) = mean_var(&d);
        let (_, v0) = mean_var(&values[w]);
        let (_, v1) = mean_var(&values[w + 1]);
        if v0 + v1 > 0.0 {
            crn_ratio = crn_ratio.max(vd / (v0 + v1));
        }
    }
    let last = estimates.len() - 1;
    let (lo, hi) = if sign > 0.0 { (0, last) } else { (last, 0) };
    if direction == KahaneDirection::Constant {
        report.push(Comparison::two_sided("endpoints", &estimates[last], &estimates[0]));
    } else {
        report.push(Comparison::dominates("endpoints", &estimates[hi], &estimates[lo]));
    }
    report.metric("crn_variance_ratio", crn_ratio);
    report.metric("k", k as f64);
    report.profile = Some(ComparisonReport {
        alpha_grid: alpha_grid.to_vec(),
        estimates,
        direction,
        monotone_ok: max_violation <= Z_THRESHOLD,
        max_violation,
    });
    Ok(report.finish())
}

/// Slepian-type dominance sup ℓ₀ ⪰ sup ℓ₁ and the orthant form P(ℓ₁ ≤ s) ≥ P(ℓ₀ ≤ s).
pub fn check_slepian(
    g0: &SquareMatrix,
    g1: &SquareMatrix,
    n_rep: usize,
    x_grid: Option<Vec<f64>>,
    seed: u64,
) -> Result<Report> {
    let n = g0.n();
    if g1.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g1.n() });
    }
    for (name, g) in [("G0", g0), ("G1", g1)] {
        if !is_certified_kernel(g, DEFAULT_TOL) {
            return Err(Error::InvalidPair(format!("{name} is not a certified kernel")));
        }
    }
    let tol = DEFAULT_TOL * g0.max_norm().max(g1.max_norm()).max(1.0);
    let mut weak = true;
    for i in 0..n {
        if g1[(i, i)] > g0[(i, i)] + tol {
            return Err(Error::InvalidPair(format!("G1 diagonal exceeds G0 at {i}")));
        }
        weak &= (g1[(i, i)] - g0[(i, i)]).abs() <= tol;
        for j in 0..n {
            if i != j && g1[(i, j)] < g0[(i, j)] - tol {
                return Err(Error::InvalidPair(format!("G1 off-diagonal below G0 at ({i},{j})")));
            }
        }
    }
    let s0 = kernel_sampler(g0)?;
    let s1 = kernel_sampler(g1)?;
    let l0 = sample_batch(&s0, n_rep, seed, "slepian-0");
    let l1 = sample_batch(&s1, n_rep, seed, "slepian-1");
    let mean_diag = g0.diagonal().iter().sum::<f64>() / n as f64;
    let xs = x_grid.unwrap_or_else(|| [0.25, 0.5, 1.0, 2.0, 3.0, 4.0].iter().map(|c| c * mean_diag).collect());

    let mut report = Report::new("slepian");
    report.metric("weak_form", weak as u8 as f64);
    let sup = |l: &Vec<f64>| l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (i, &x) in xs.iter().enumerate() {
        let p0 = proportion(l0.iter().filter(|l| sup(l) >= x).count(), n_rep, seed);
        let p1 = proportion(l1.iter().filter(|l| sup(l) >= x).count(), n_rep, seed);
        report.push(Comparison::dominates(&format!("sup_tail[{i}]"), &p0, &p1));
    }
    let d0 = g0.diagonal();
    for (i, c) in [0.5, 1.0, 2.0, 3.0].iter().enumerate() {
        let s: Vec<f64> = d0.iter().map(|d| c * d).collect();
        let below = |l: &Vec<f64>| l.iter().zip(&s).all(|(a, b)| a <= b);
        let p0 = proportion(l0.iter().filter(|l| below(l)).count(), n_rep, seed);
        let p1 = proportion(l1.iter().filter(|l| below(l)).count(), n_rep, seed);
        report.push(Comparison::dominates(&format!("orthant[{i}]"), &p1, &p0));
    }

    // c ⊙ ℓ₀ is permanental with kernel C G₀
    let c: Vec<f64> = (0..n).map(|i| if g0[(i, i)] == 0.0 { 1.0 } else { g1[(i, i)] / g0[(i, i)] }).collect();
    let cg = SquareMatrix::from_fn(n, |i, j| c[i] * g0[(i, j)]);
    let scaled: Vec<Vec<f64>> = l0.iter().map(|l| l.iter().zip(&c).map(|(a, b)| a * b).collect()).collect();
    let lt = verify_laplace_samples("scaled", &scaled, &default_lambda_grid(&cg), seed, |lam| {
        laplace_transform_exact(&cg, lam, 1.0)
    })?;
    for mut cmp in lt.comparisons {
        cmp.label = format!("scaled_{}", cmp.label);
        report.push(cmp);
    }
    Ok(report.finish())
}
