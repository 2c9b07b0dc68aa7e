//! Classification of candidate permanental kernels.
//!
//! All sign and definiteness tests take a tolerance that is scaled by the
//! max-norm of the matrix under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

pub const DEFAULT_TOL: f64 = 1e-9;

fn scaled(tol: f64, m: &SquareMatrix) -> f64 {
    tol * m.max_norm().max(f64::MIN_POSITIVE)
}

/// (M + Mᵀ)/2, exactly symmetric.
pub fn symmetric_part(m: &SquareMatrix) -> SquareMatrix {
    let n = m.n();
    let mut s = SquareMatrix::zeros(n);
    for i in 0..n {
        s[(i, i)] = m[(i, i)];
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Whether λ_min(sym(M)) exceeds `tol`·‖M‖_max, together with λ_min.
pub fn has_pd_symmetric_part(m: &SquareMatrix, tol: f64) -> Result<(bool, f64)> {
    let lam = symmetric_part(m).symmetric_eigenvalues()?[0];
    Ok((lam > scaled(tol, m), lam))
}

/// Non-positive off-diagonal entries and an entrywise nonnegative inverse.
pub fn is_m_matrix(a: &SquareMatrix, tol: f64) -> bool {
    let n = a.n();
    let t = scaled(tol, a);
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] > t {
                return false;
            }
        }
    }
    match a.inverse() {
        Ok(inv) => {
            let ti = scaled(tol, &inv);
            inv.as_dmatrix().iter().all(|&x| x >= -ti)
        }
        Err(_) => false,
    }
}

pub fn is_inverse_m_matrix(g: &SquareMatrix, tol: f64) -> bool {
    match g.inverse() {
        Ok(inv) => is_m_matrix(&inv, tol),
        Err(_) => false,
    }
}

pub fn spectral_radius(a: &SquareMatrix) -> Result<f64> {
    Ok(a.eigenvalues()?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    None,
    Weak,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub rows: Dominance,
    pub columns: Dominance,
}

impl DominanceReport {
    pub fn strict_both(&self) -> bool {
        self.rows == Dominance::Strict && self.columns == Dominance::Strict
    }
}

fn classify_lines(diag: &[f64], off: &[f64]) -> Dominance {
    let mut strict = true;
    for (d, o) in diag.iter().zip(off) {
        let slack = d.abs() - o;
        let eps = 1e-12 * d.abs().max(*o);
        if slack < -eps {
            return Dominance::None;
        }
        if slack <= eps {
            strict = false;
        }
    }
    if strict {
        Dominance::Strict
    } else {
        Dominance::Weak
    }
}

pub fn diagonal_dominance(a: &SquareMatrix) -> DominanceReport {
    let n = a.n();
    let diag = a.diagonal();
    let row_off: Vec<f64> = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum()).collect();
    let col_off: Vec<f64> = (0..n).map(|j| (0..n).filter(|&i| i != j).map(|i| a[(i, j)].abs()).sum()).collect();
    DominanceReport { rows: classify_lines(&diag, &row_off), columns: classify_lines(&diag, &col_off) }
}

/// γ = det(2G)/det(G + Gᵀ).
pub fn gamma_symmetrization(g: &SquareMatrix) -> Result<f64> {
    let (pd, lam) = has_pd_symmetric_part(g, DEFAULT_TOL)?;
    if !pd {
        return Err(Error::InvalidKernel(format!("symmetric part is not positive definite (lambda_min = {lam:.3e})")));
    }
    Ok(g.scale(2.0).det() / g.add(&g.transpose()).det())
}

/// Diagonal of D in D⁻¹AD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalScaling {
    pub d: Vec<f64>,
}

impl DiagonalScaling {
    /// D⁻¹AD, i.e. entries A_ij d_j / d_i.
    pub fn apply(&self, a: &SquareMatrix) -> SquareMatrix {
        SquareMatrix::from_fn(a.n(), |i, j| a[(i, j)] * self.d[j] / self.d[i])
    }
}

fn certify(a: &SquareMatrix, d: &[f64], tol: f64) -> Option<DiagonalScaling> {
    if d.len() != a.n() || !d.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return None;
    }
    let s = DiagonalScaling { d: d.to_vec() };
    match has_pd_symmetric_part(&s.apply(a), tol) {
        Ok((true, _)) => Some(s),
        _ => None,
    }
}

/// Searches for D > 0 with sym(D⁻¹AD) positive definite. A returned scaling
/// has always passed [`has_pd_symmetric_part`].
pub fn find_pd_equivalent_scaling(a: &SquareMatrix, max_iter: usize, tol: f64, seed: u64) -> Option<DiagonalScaling> {
    let n = a.n();
    if let Some(s) = certify(a, &vec![1.0; n], tol) {
        return Some(s);
    }
    let ones = vec![1.0; n];
    let x = a.solve(&ones).ok();
    if let Some(x) = &x {
        if let Some(s) = certify(a, x, tol) {
            return Some(s);
        }
    }
    // With x = A⁻¹𝟙 and y = A⁻ᵀ𝟙, diag(y)·A·diag(x) is diagonally dominant
    // in rows and columns; D = (x/y)^{1/2} is congruent to it.
    if let (Some(x), Ok(y)) = (&x, a.transpose().solve(&ones)) {
        let d: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| (xi / yi).sqrt()).collect();
        if let Some(s) = certify(a, &d, tol) {
            return Some(s);
        }
    }
    gradient_search(a, max_iter, tol, seed)
}

/// Projected gradient ascent of λ_min(sym(D⁻¹AD)) over t = log d, with
/// random restarts. ∂λ/∂t_k = v_k[(Bᵀv)_k − (Bv)_k] for the bottom
/// eigenvector v of sym(B), B = D⁻¹AD.
fn gradient_search(a: &SquareMatrix, max_iter: usize, tol: f64, seed: u64) -> Option<DiagonalScaling> {
    let n = a.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = 8;
    let per = (max_iter / restarts).max(1);
    for restart in 0..restarts {
        let mut t: Vec<f64> =
            if restart == 0 { vec![0.0; n] } else { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let mut step = 0.5;
        let eval = |t: &[f64]| {
            let d: Vec<f64> = t.iter().map(|x| x.exp()).collect();
            let b = DiagonalScaling { d }.apply(a);
            symmetric_part(&b).symmetric_min_eigenpair().ok().map(|(l, v)| (l, v, b))
        };
        let Some(mut cur) = eval(&t) else { continue };
        for _ in 0..per {
            let (lam, v, b) = &cur;
            let d: Vec<f64> = t.iter().map(|x| x.exp()).collect();
            if let Some(s) = certify(a, &d, tol) {
                return Some(s);
            }
            let bv = b.mul_vec(v);
            let btv = b.transpose().mul_vec(v);
            let grad: Vec<f64> = (0..n).map(|k| v[k] * (btv[k] - bv[k])).collect();
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-14 {
                break;
            }
            let mut accepted = false;
            while step > 1e-10 {
                // projection: fix the mean of t (D and cD give the same B), clamp range
                let mut cand: Vec<f64> = t.iter().zip(&grad).map(|(ti, gi)| ti + step * gi / gnorm).collect();
                let mean = cand.iter().sum::<f64>() / n as f64;
                cand.iter_mut().for_each(|c| *c = (*c - mean).clamp(-30.0, 30.0));
                if let Some(next) = eval(&cand) {
                    if next.0 > *lam {
                        t = cand;
                        cur = next;
                        step *= 1.5;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let d: Vec<f64> = t.iter().map(|x| x.exp()).collect();
        if let Some(s) = certify(a, &d, tol) {
            return Some(s);
        }
    }
    None
}

/// For G with PD symmetric part, checks that G⁻¹ also has one.
pub fn check_inverse_pd_sym(g: &SquareMatrix) -> Result<bool> {
    let (pd, lam) = has_pd_symmetric_part(g, DEFAULT_TOL)?;
    if !pd {
        return Err(Error::InvalidKernel(format!("symmetric part is not positive definite (lambda_min = {lam:.3e})")));
    }
    match g.inverse() {
        Ok(inv) => Ok(has_pd_symmetric_part(&inv, DEFAULT_TOL)?.0),
        Err(_) => Ok(false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub n: usize,
    pub has_pd_sym_part: bool,
    pub is_m_matrix: bool,
    pub is_inverse_m_matrix: bool,
    pub gamma: Option<f64>,
    pub spectral_radius: f64,
    pub diag_dominance: DominanceReport,
    pub min_sym_eigenvalue: f64,
}

pub fn classify(g: &SquareMatrix, tol: f64) -> Result<KernelReport> {
    let (pd, lam) = has_pd_symmetric_part(g, tol)?;
    let gamma = if pd { Some(gamma_symmetrization(g)?) } else { None };
    Ok(KernelReport {
        n: g.n(),
        has_pd_sym_part: pd,
        is_m_matrix: is_m_matrix(g, tol),
        is_inverse_m_matrix: is_inverse_m_matrix(g, tol),
        gamma,
        spectral_radius: spectral_radius(g)?,
        diag_dominance: diagonal_dominance(g),
        min_sym_eigenvalue: lam,
    })
}

/// Whether a kernel lies in one of the two families known to be
/// 1-permanental: symmetric positive definite, or inverse M-matrix with
/// PD symmetric part.
pub fn is_certified_kernel(g: &SquareMatrix, tol: f64) -> bool {
    let Ok((pd, _)) = has_pd_symmetric_part(g, tol) else { return false };
    pd && (g.is_symmetric(tol) || is_inverse_m_matrix(g, tol))
}
