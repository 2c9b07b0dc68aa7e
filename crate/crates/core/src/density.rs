//! Densities, Laplace transforms and twisted Gaussian integrals of
//! 1-permanental vectors.
//!
//! For a kernel G with positive definite symmetric part and Q = −G⁻¹,
//!
//! ```text
//! ρ(l) = 1/((2π)ⁿ|G|) ∫ exp(Σ_ij Q_ij √(l_i l_j) e^{i(θ_i − θ_j)}) dθ
//! ```
//!
//! over the torus. The integrand is smooth and periodic, so the uniform
//! trapezoid rule converges spectrally.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{has_pd_symmetric_part, is_certified_kernel, is_m_matrix, symmetric_part, DEFAULT_TOL};
use crate::matrix::SquareMatrix;
use crate::quad::gauss_legendre_on;
use crate::rng::par_replicates;
use crate::stats::MCEstimate;

/// Largest torus grid evaluated before refusing with [`Error::CostGuard`].
pub const GRID_POINT_LIMIT: u128 = 1 << 25;
/// Largest series enumeration accepted.
pub const SERIES_TERM_LIMIT: u128 = 20_000_000;
pub const DEFAULT_K: usize = 64;
pub const DEFAULT_DEGREE: usize = 24;

const RESIDUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub k: usize,
    pub reduced: bool,
}

impl AngularGrid {
    pub fn new(k: usize, reduced: bool) -> Result<Self> {
        if k < 4 {
            return Err(Error::Domain(format!("angular grid needs K >= 4, got {k}")));
        }
        Ok(Self { k, reduced })
    }
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self { k: DEFAULT_K, reduced: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    Quadrature,
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEvaluation {
    pub value: f64,
    pub imag_residue: f64,
    pub method: DensityMethod,
    /// K for quadrature, maximal total degree for the series.
    pub grid_or_degree: usize,
    /// Series only: bound on the neglected mass.
    pub tail_bound: Option<f64>,
    /// Residue above tolerance.
    pub flagged: bool,
    /// Kernel lies in a known 1-permanental family.
    pub certified: bool,
}

impl DensityEvaluation {
    fn quadrature(value: Complex64, k: usize, certified: bool) -> Self {
        let residue = value.im.abs();
        Self {
            value: value.re,
            imag_residue: residue,
            method: DensityMethod::Quadrature,
            grid_or_degree: k,
            tail_bound: None,
            flagged: residue > RESIDUE_TOL * value.re.abs().max(1.0),
            certified,
        }
    }
}

fn check_vector(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("{name} must be finite and nonnegative")));
    }
    Ok(())
}

/// Q = −G⁻¹ after checking the PD-sym-part hypothesis.
fn generator_of(g: &SquareMatrix) -> Result<SquareMatrix> {
    let (pd, lam) = has_pd_symmetric_part(g, DEFAULT_TOL)?;
    if !pd {
        return Err(Error::InvalidKernel(format!("symmetric part is not positive definite (lambda_min = {lam:.3e})")));
    }
    if !(g.det() > 0.0) {
        return Err(Error::InvalidKernel("kernel determinant is not positive".into()));
    }
    g.inverse().map(|a| a.scale(-1.0)).map_err(|_| Error::InvalidKernel("kernel is singular".into()))
}

pub fn grid_cost(dims: usize, k: usize) -> u128 {
    (k as u128).saturating_pow(dims as u32)
}

fn guard(dims: usize, k: usize) -> Result<()> {
    let points = grid_cost(dims, k);
    if points > GRID_POINT_LIMIT {
        return Err(Error::CostGuard { points, limit: GRID_POINT_LIMIT });
    }
    Ok(())
}

/// Mean of `f(e^{iθ})` over the uniform K^dims grid on the torus. The first
/// angle splits the work across threads; partial sums are combined in index
/// order so the result does not depend on the thread count.
fn torus_mean<F>(dims: usize, k: usize, f: F) -> Complex64
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    if dims == 0 {
        return f(&[]);
    }
    let roots: Vec<Complex64> =
        (0..k).map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / k as f64)).collect();
    let partial: Vec<Complex64> = (0..k)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; dims];
            idx[0] = first;
            let mut units: Vec<Complex64> = idx.iter().map(|&m| roots[m]).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            loop {
                acc += f(&units);
                // odometer over the remaining angles
                let mut d = dims - 1;
                loop {
                    if d == 0 {
                        return acc;
                    }
                    idx[d] += 1;
                    if idx[d] < k {
                        units[d] = roots[idx[d]];
                        break;
                    }
                    idx[d] = 0;
                    units[d] = roots[0];
                    d -= 1;
                }
            }
        })
        .collect();
    let total: Complex64 = partial.iter().sum();
    total / grid_cost(dims, k) as f64
}

/// ⟨z, M z̄⟩ = Σ_ij z_i M_ij conj(z_j) for a real matrix stored row-major.
#[inline]
fn bilinear(m: &[f64], n: usize, z: &[Complex64]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += m[i * n + j] * z[j].conj();
        }
        s += z[i] * row;
    }
    s
}

fn row_major(m: &SquareMatrix) -> Vec<f64> {
    m.to_rows().concat()
}

/// Torus integral of the density given Q = −G⁻¹ and det G.
fn torus_density(q: &SquareMatrix, det_g: f64, l: &[f64], grid: AngularGrid) -> Result<Complex64> {
    let n = q.n();
    let dims = if grid.reduced { n - 1 } else { n };
    guard(dims, grid.k)?;
    let qm = row_major(q);
    let sq: Vec<f64> = l.iter().map(|x| x.sqrt()).collect();
    let mean = torus_mean(dims, grid.k, |units| {
        let z: Vec<Complex64> = if grid.reduced {
            std::iter::once(Complex64::new(sq[0], 0.0)).chain(units.iter().zip(&sq[1..]).map(|(u, s)| u * *s)).collect()
        } else {
            units.iter().zip(&sq).map(|(u, s)| u * *s).collect()
        };
        bilinear(&qm, n, &z).exp()
    });
    Ok(mean / det_g)
}

/// ρ(l) by the tensor trapezoid rule.
pub fn density_quadrature(g: &SquareMatrix, l: &[f64], grid: AngularGrid) -> Result<DensityEvaluation> {
    check_vector("l", l, g.n())?;
    let q = generator_of(g)?;
    let v = torus_density(&q, g.det(), l, grid)?;
    Ok(DensityEvaluation::quadrature(v, grid.k, is_certified_kernel(g, DEFAULT_TOL)))
}

/// Doubles K from `k0` until successive values agree to `tol` (relative to
/// max(1, |ρ|)) or K would exceed `k_max`.
pub fn density_quadrature_converged(
    g: &SquareMatrix,
    l: &[f64],
    k0: usize,
    k_max: usize,
    tol: f64,
) -> Result<(DensityEvaluation, f64)> {
    let mut k = k0.max(4);
    let mut prev = density_quadrature(g, l, AngularGrid::new(k, true)?)?;
    while 2 * k <= k_max {
        k *= 2;
        let next = density_quadrature(g, l, AngularGrid::new(k, true)?)?;
        let diff = (next.value - prev.value).abs();
        prev = next;
        if diff <= tol * prev.value.abs().max(1.0) {
            return Ok((prev, diff));
        }
    }
    Err(Error::NoConvergence(format!("trapezoid rule did not settle by K = {k}")))
}

/// Flow-conserving multi-indices on the complete digraph, enumerated once
/// per (n, degree).
#[derive(Debug, Clone)]
pub struct SeriesPlan {
    pub n: usize,
    pub degree: usize,
    edges: Vec<(usize, usize)>,
    terms: Vec<u8>,
}

impl SeriesPlan {
    pub fn new(n: usize, degree: usize) -> Result<Self> {
        if degree > u8::MAX as usize {
            return Err(Error::Domain("series degree must be at most 255".into()));
        }
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        let mut last_touch = vec![None; n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            last_touch[i] = Some(e);
            last_touch[j] = Some(e);
        }
        let mut plan = Self { n, degree, edges, terms: Vec::new() };
        let mut k = vec![0u8; plan.edges.len()];
        let mut balance = vec![0i64; n];
        let mut count = 0u128;
        plan.enumerate(0, degree, &mut k, &mut balance, &last_touch, &mut count)?;
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        if self.edges.is_empty() {
            1
        } else {
            self.terms.len() / self.edges.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn enumerate(
        &mut self,
        e: usize,
        budget: usize,
        k: &mut Vec<u8>,
        balance: &mut Vec<i64>,
        last_touch: &[Option<usize>],
        count: &mut u128,
    ) -> Result<()> {
        if e == self.edges.len() {
            if balance.iter().all(|&b| b == 0) {
                *count += 1;
                if *count > SERIES_TERM_LIMIT {
                    return Err(Error::CostGuard { points: *count, limit: SERIES_TERM_LIMIT });
                }
                self.terms.extend_from_slice(k);
            }
            return Ok(());
        }
        let (i, j) = self.edges[e];
        for v in 0..=budget {
            balance[i] += v as i64;
            balance[j] -= v as i64;
            k[e] = v as u8;
            let left = budget - v;
            let imbalance: i64 = balance.iter().map(|b| b.abs()).sum();
            let closed = [i, j].iter().all(|&x| last_touch[x] != Some(e) || balance[x] == 0);
            if closed && imbalance as usize <= 2 * left {
                self.enumerate(e + 1, left, k, balance, last_touch, count)?;
            }
            balance[i] -= v as i64;
            balance[j] += v as i64;
        }
        k[e] = 0;
        Ok(())
    }

    /// Series value of ρ(l) for A = G⁻¹ (M-matrix with PD symmetric part).
    pub fn evaluate(&self, g: &SquareMatrix, l: &[f64]) -> Result<DensityEvaluation> {
        if g.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: g.n() });
        }
        check_vector("l", l, self.n)?;
        let q = generator_of(g)?;
        let a = q.scale(-1.0);
        if !is_m_matrix(&a, DEFAULT_TOL) {
            return Err(Error::InvalidKernel("inverse kernel is not an M-matrix".into()));
        }
        let prefactor = a.det() * (-(0..self.n).map(|i| a[(i, i)] * l[i]).sum::<f64>()).exp();
        let w: Vec<f64> = self.edges.iter().map(|&(i, j)| (-a[(i, j)]).max(0.0) * (l[i] * l[j]).sqrt()).collect();
        let logw: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let lnfact: Vec<f64> = ln_factorials(self.degree);
        let m = self.edges.len();
        let mut vals: Vec<f64> = if m == 0 {
            vec![1.0]
        } else {
            self.terms
                .chunks_exact(m)
                .filter_map(|ks| {
                    let mut s = 0.0;
                    for (e, &kv) in ks.iter().enumerate() {
                        if kv > 0 {
                            if w[e] == 0.0 {
                                return None;
                            }
                            s += kv as f64 * logw[e] - lnfact[kv as usize];
                        }
                    }
                    Some(s.exp())
                })
                .collect()
        };
        vals.sort_by(|x, y| y.total_cmp(x));
        let sum: f64 = vals.iter().sum();
        let x: f64 = w.iter().sum();
        Ok(DensityEvaluation {
            value: prefactor * sum,
            imag_residue: 0.0,
            method: DensityMethod::Series,
            grid_or_degree: self.degree,
            tail_bound: Some(prefactor * exp_tail(x, self.degree)),
            flagged: false,
            certified: true,
        })
    }
}

fn ln_factorials(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d + 1];
    for k in 1..=d {
        v[k] = v[k - 1] + (k as f64).ln();
    }
    v
}

/// Σ_{k>d} x^k/k!, summed directly to avoid cancellation.
fn exp_tail(x: f64, d: usize) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = (((d + 1) as f64) * x.ln() - ln_factorials(d + 1)[d + 1]).exp();
    let mut sum = 0.0;
    let mut k = d + 1;
    while term > 1e-300 && (term > 1e-17 * sum || k < d + 4) {
        sum += term;
        k += 1;
        term *= x / k as f64;
        if k > d + 10_000 {
            break;
        }
    }
    sum
}

/// ρ(l) by the positive flow-conserving series.
pub fn density_series(g: &SquareMatrix, l: &[f64], degree: usize) -> Result<DensityEvaluation> {
    SeriesPlan::new(g.n(), degree)?.evaluate(g, l)
}

/// Pieces of the conditioned density at state `a`: Q_**, x = Q_**^{−T}Q_{a*},
/// y = Q_**^{−1}Q_{*a} and the ordering of the remaining states.
pub struct Conditioning {
    pub q_star: SquareMatrix,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub states: Vec<usize>,
    pub g_aa: f64,
}

pub fn conditioning(g: &SquareMatrix, a: usize) -> Result<Conditioning> {
    let n = g.n();
    if n < 2 || a >= n {
        return Err(Error::Domain(format!("cannot condition state {a} of a {n}-state kernel")));
    }
    let q = generator_of(g)?;
    let q_star = q.delete_index(a);
    let x = q_star.transpose().solve(&q.row_without(a, a))?;
    let y = q_star.solve(&q.column_without(a, a))?;
    Ok(Conditioning { q_star, x, y, states: (0..n).filter(|&i| i != a).collect(), g_aa: g[(a, a)] })
}

/// Density of ℓ_* given ℓ_a = r.
pub fn conditioned_density(
    g: &SquareMatrix,
    a: usize,
    r: f64,
    l_star: &[f64],
    grid: AngularGrid,
) -> Result<DensityEvaluation> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain("r must be nonnegative".into()));
    }
    let c = conditioning(g, a)?;
    let m = c.q_star.n();
    check_vector("l_star", l_star, m)?;
    guard(m, grid.k)?;
    let det = c.q_star.scale(-1.0).det();
    let qm = row_major(&c.q_star);
    let sr = r.sqrt();
    let sq: Vec<f64> = l_star.iter().map(|x| x.sqrt()).collect();
    let mean = torus_mean(m, grid.k, |units| {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let wi = units[i] * sq[i] + sr * c.x[i];
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..m {
                row += qm[i * m + j] * (units[j].conj() * sq[j] + sr * c.y[j]);
            }
            s += wi * row;
        }
        s.exp()
    });
    Ok(DensityEvaluation::quadrature(mean * det, grid.k, is_certified_kernel(g, DEFAULT_TOL)))
}

/// det(I + ΛG)^{−α}.
pub fn laplace_transform_exact(g: &SquareMatrix, lambda: &[f64], alpha: f64) -> Result<f64> {
    check_vector("lambda", lambda, g.n())?;
    if !(alpha > 0.0) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    let d = lt_det(g, lambda);
    if d > 0.0 {
        Ok(d.powf(-alpha))
    } else if alpha.fract() == 0.0 && d != 0.0 {
        Ok(d.powi(-(alpha as i32)))
    } else {
        Err(Error::Domain(format!("det(I + Lambda G) = {d:.3e} is not positive")))
    }
}

fn lt_det(g: &SquareMatrix, lambda: &[f64]) -> f64 {
    let n = g.n();
    SquareMatrix::from_fn(n, |i, j| (i == j) as u8 as f64 + lambda[i] * g[(i, j)]).det()
}

/// det(I + ΛG) = c0 + λ_a c1 as a function of λ_a.
fn affine_in(g: &SquareMatrix, a: usize, lambda_star: &[f64]) -> Result<(f64, f64)> {
    let n = g.n();
    if lambda_star.len() + 1 != n || a >= n {
        return Err(Error::DimensionMismatch { expected: n - 1, got: lambda_star.len() });
    }
    let mut lam = Vec::with_capacity(n);
    let mut it = lambda_star.iter();
    for i in 0..n {
        lam.push(if i == a { 0.0 } else { *it.next().unwrap() });
    }
    let c0 = lt_det(g, &lam);
    lam[a] = 1.0;
    let c1 = lt_det(g, &lam) - c0;
    Ok((c0, c1))
}

/// E[e^{−⟨λ*, ℓ*⟩} | ℓ_a = s] exactly. `lambda_star` skips state `a`.
pub fn conditional_laplace_exact(g: &SquareMatrix, a: usize, s: f64, lambda_star: &[f64]) -> Result<f64> {
    let (c0, c1) = affine_in(g, a, lambda_star)?;
    let gaa = g[(a, a)];
    Ok(gaa / c1 * (-s * (c0 / c1 - 1.0 / gaa)).exp())
}

/// E[e^{−⟨λ*, ℓ*⟩} | lo ≤ ℓ_a ≤ hi].
pub fn conditional_laplace_band(g: &SquareMatrix, a: usize, lo: f64, hi: f64, lambda_star: &[f64]) -> Result<f64> {
    let lo = lo.max(0.0);
    if !(hi > lo) {
        return Err(Error::Domain("empty conditioning band".into()));
    }
    let (c0, c1) = affine_in(g, a, lambda_star)?;
    let gaa = g[(a, a)];
    let band = |rate: f64| -(-lo * rate).exp() * (-(hi - lo) * rate).exp_m1();
    Ok(band(c0 / c1) / c0 / band(1.0 / gaa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationCheck {
    pub rho: f64,
    pub gamma_rho_bar: f64,
    pub ok: bool,
}

/// ρ(l) ≤ γ ρ̄(l), with ρ̄ the density of kernel (−S)⁻¹, S = sym(−G⁻¹).
pub fn symmetrization_bound_check(
    g: &SquareMatrix,
    l: &[f64],
    grid: AngularGrid,
    tol: f64,
) -> Result<SymmetrizationCheck> {
    let q = generator_of(g)?;
    let g_bar = symmetric_part(&q).scale(-1.0).inverse()?;
    let gamma = crate::kernel::gamma_symmetrization(g)?;
    let rho = density_quadrature(g, l, grid)?.value;
    let bar = gamma * density_quadrature(&g_bar, l, grid)?.value;
    Ok(SymmetrizationCheck { rho, gamma_rho_bar: bar, ok: rho <= bar + tol })
}

/// k·|G|⁻¹ λ^{−n} e^{−λ‖t‖₁/k} with λ = λ_min(−S).
pub fn tail_envelope(g: &SquareMatrix, t: &[f64], k: usize) -> Result<f64> {
    check_vector("t", t, g.n())?;
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    let q = generator_of(g)?;
    let lam = symmetric_part(&q).scale(-1.0).symmetric_eigenvalues()?[0];
    let norm: f64 = t.iter().sum();
    let n = g.n() as i32;
    Ok(k as f64 / g.det() * lam.powi(-n) * (-lam * norm / k as f64).exp())
}

/// Importance sampler for the twisted Gaussian measure with density
/// ∝ e^{⟨φ, Q φ̄⟩}: proposals are complex Gaussians e^{⟨φ, S φ̄⟩}, S = sym(Q),
/// and the unit-modulus weight is e^{⟨φ, (Q − S) φ̄⟩}.
#[derive(Debug, Clone)]
pub struct TwistedSampler {
    n: usize,
    chol: SquareMatrix,
    anti: Vec<f64>,
    symmetric: bool,
    /// det(−Q)/det(−S).
    pub det_ratio: f64,
}

impl TwistedSampler {
    pub fn new(qmat: &SquareMatrix) -> Result<Self> {
        let neg = qmat.scale(-1.0);
        let (pd, lam) = has_pd_symmetric_part(&neg, DEFAULT_TOL)?;
        if !pd {
            return Err(Error::InvalidKernel(format!("−Q must have a PD symmetric part (lambda_min = {lam:.3e})")));
        }
        let s = symmetric_part(qmat);
        let neg_s = s.scale(-1.0);
        let cov = neg_s.inverse()?.scale(0.5);
        let cov = symmetric_part(&cov);
        let anti = qmat.sub(&s);
        Ok(Self {
            n: qmat.n(),
            chol: cov.cholesky()?,
            symmetric: anti.max_norm() == 0.0,
            anti: row_major(&anti),
            det_ratio: neg.det() / neg_s.det(),
        })
    }

    pub fn from_kernel(g: &SquareMatrix) -> Result<Self> {
        Self::new(&g.inverse()?.scale(-1.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One proposal φ and its phase weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Complex64>, Complex64) {
        let n = self.n;
        let zu: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let zv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let phi: Vec<Complex64> = (0..n)
            .map(|i| {
                let (mut u, mut v) = (0.0, 0.0);
                for j in 0..=i {
                    u += self.chol[(i, j)] * zu[j];
                    v += self.chol[(i, j)] * zv[j];
                }
                Complex64::new(u, v)
            })
            .collect();
        let w = if self.symmetric {
            Complex64::new(1.0, 0.0)
        } else {
            // purely imaginary exponent; drop rounding in the real part
            Complex64::from_polar(1.0, bilinear(&self.anti, n, &phi).im)
        };
        (phi, w)
    }
}

/// [F]_μ for the normalized twisted measure of `qmat`, by importance sampling.
pub fn twisted_expectation<F>(qmat: &SquareMatrix, f: F, n_rep: usize, seed: u64) -> Result<MCEstimate>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let sampler = TwistedSampler::new(qmat)?;
    Ok(twisted_estimate(&sampler, f, n_rep, seed, "twisted"))
}

pub fn twisted_estimate<F>(sampler: &TwistedSampler, f: F, n_rep: usize, seed: u64, tag: &str) -> MCEstimate
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let vals = par_replicates(seed, tag, n_rep, |rng, _| {
        let (phi, w) = sampler.sample(rng);
        f(&phi) * w * sampler.det_ratio
    });
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    MCEstimate::from_complex(&re, &im, seed)
}

/// Mean −√r Q_**⁻¹Q_{*a} and covariance (−Q_**)⁻¹ of the conditioned field.
pub fn chi2_conditional_params(g: &SquareMatrix, a: usize, r: f64) -> Result<(Vec<f64>, SquareMatrix)> {
    if !g.is_symmetric(DEFAULT_TOL) {
        return Err(Error::Domain("conditioned chi-squared law needs a symmetric kernel".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain("r must be nonnegative".into()));
    }
    let c = conditioning(&symmetric_part(g), a)?;
    let cov = symmetric_part(&c.q_star.scale(-1.0).inverse()?);
    let sr = r.sqrt();
    Ok((c.y.iter().map(|v| -sr * v).collect(), cov))
}

/// Options for integrating against ρ over a truncated box.
#[derive(Debug, Clone, Copy)]
pub struct BoxRule {
    /// Box side in units of G_ii.
    pub extent: f64,
    /// Gauss–Legendre nodes per coordinate.
    pub nodes: usize,
    pub grid: AngularGrid,
}

impl Default for BoxRule {
    fn default() -> Self {
        Self { extent: 14.0, nodes: 24, grid: AngularGrid::default() }
    }
}

/// ∫ f ρ over [0, extent·G_11] × … by tensor Gauss–Legendre, n ≤ 3.
pub fn box_expectation<F>(g: &SquareMatrix, f: F, rule: BoxRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = g.n();
    if n > 3 {
        return Err(Error::CostGuard { points: grid_cost(n, rule.nodes), limit: grid_cost(3, rule.nodes) });
    }
    let q = generator_of(g)?;
    let det = g.det();
    guard(n - 1, rule.grid.k)?;
    let rules: Vec<(Vec<f64>, Vec<f64>)> =
        (0..n).map(|i| gauss_legendre_on(rule.nodes, 0.0, rule.extent * g[(i, i)])).collect();
    let total = grid_cost(n, rule.nodes) as usize;
    let q = &q;
    let parts: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .with_min_len(8)
        .map(|flat| {
            let mut rem = flat;
            let mut l = vec![0.0; n];
            let mut w = 1.0;
            for i in (0..n).rev() {
                let m = rem % rule.nodes;
                rem /= rule.nodes;
                l[i] = rules[i].0[m];
                w *= rules[i].1[m];
            }
            let rho = torus_density_serial(q, det, &l, rule.grid.k);
            Ok(w * f(&l) * rho.re)
        })
        .collect();
    let mut s = 0.0;
    for p in parts {
        s += p?;
    }
    Ok(s)
}

/// Reduced-torus density without the inner parallel split.
fn torus_density_serial(q: &SquareMatrix, det_g: f64, l: &[f64], k: usize) -> Complex64 {
    let n = q.n();
    let qm = row_major(q);
    let sq: Vec<f64> = l.iter().map(|x| x.sqrt()).collect();
    let roots: Vec<Complex64> =
        (0..k).map(|m| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / k as f64)).collect();
    let dims = n - 1;
    let mut idx = vec![0usize; dims];
    let mut z: Vec<Complex64> = sq.iter().map(|s| Complex64::new(*s, 0.0)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    loop {
        acc += bilinear(&qm, n, &z).exp();
        let mut d = dims;
        loop {
            if d == 0 {
                return acc / grid_cost(dims, k) as f64 / det_g;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < k {
                z[d + 1] = roots[idx[d]] * sq[d + 1];
                break;
            }
            idx[d] = 0;
            z[d + 1] = Complex64::new(sq[d + 1], 0.0);
        }
    }
}
