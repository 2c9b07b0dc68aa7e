//! Finite Markov chains, their Laplacians and the Green kernels built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{has_pd_symmetric_part, is_m_matrix, DEFAULT_TOL};
use crate::matrix::SquareMatrix;

const ROW_SUM_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-10;

/// An irreducible chain with its stationary law and Laplacian Q = Π(P − I).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    pub p: SquareMatrix,
    pub pi: Vec<f64>,
    pub q: SquareMatrix,
    pub labels: Vec<String>,
}

impl MarkovModel {
    pub fn new(p: SquareMatrix) -> Result<Self> {
        let labels = (0..p.n()).map(|i| i.to_string()).collect();
        Self::with_labels(p, labels)
    }

    pub fn with_labels(p: SquareMatrix, labels: Vec<String>) -> Result<Self> {
        check_stochastic(&p)?;
        if labels.len() != p.n() {
            return Err(Error::DimensionMismatch { expected: p.n(), got: labels.len() });
        }
        let pi = stationary_distribution(&p)?;
        let q = laplacian(&p, &pi);
        Ok(Self { p, pi, q, labels })
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    /// Nearest-neighbour walk on the n-cycle: i → i+1 w.p. `forward`, i → i−1 otherwise.
    pub fn cycle(n: usize, forward: f64) -> Result<Self> {
        if n < 2 || !(0.0..=1.0).contains(&forward) {
            return Err(Error::Domain("cycle needs n >= 2 and forward in [0, 1]".into()));
        }
        let mut p = SquareMatrix::zeros(n);
        for i in 0..n {
            p[(i, (i + 1) % n)] += forward;
            p[(i, (i + n - 1) % n)] += 1.0 - forward;
        }
        Self::new(p)
    }

    /// The chain that always switches between two states.
    pub fn two_flip() -> Self {
        Self::cycle(2, 1.0).expect("valid chain")
    }

    pub fn time_reversal(&self) -> SquareMatrix {
        time_reversal(&self.p, &self.pi)
    }

    /// The reversed chain as a model (same π).
    pub fn reversed(&self) -> Result<Self> {
        Self::with_labels(self.time_reversal(), self.labels.clone())
    }

    pub fn is_reversible(&self, tol: f64) -> bool {
        self.q.is_symmetric(tol)
    }
}

/// JSON form: `{"P": [[...]], "pi": [...]?, "labels": [...]?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovModelJson {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl MarkovModelJson {
    pub fn into_model(self) -> Result<MarkovModel> {
        let p = SquareMatrix::from_rows(&self.p)?;
        let labels = self.labels.unwrap_or_else(|| (0..p.n()).map(|i| i.to_string()).collect());
        let model = MarkovModel::with_labels(p, labels)?;
        if let Some(pi) = self.pi {
            if pi.len() != model.n() {
                return Err(Error::DimensionMismatch { expected: model.n(), got: pi.len() });
            }
            let off = pi.iter().zip(&model.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if off > BALANCE_TOL {
                return Err(Error::Domain(format!("supplied pi is not stationary for P (max deviation {off:.3e})")));
            }
        }
        Ok(model)
    }
}

impl From<&MarkovModel> for MarkovModelJson {
    fn from(m: &MarkovModel) -> Self {
        Self { p: m.p.to_rows(), pi: Some(m.pi.clone()), labels: Some(m.labels.clone()) }
    }
}

fn check_stochastic(p: &SquareMatrix) -> Result<()> {
    let n = p.n();
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if p[(i, j)] < 0.0 {
                return Err(Error::InvalidMatrix(format!("P[{i}][{j}] = {} is negative", p[(i, j)])));
            }
            s += p[(i, j)];
        }
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidMatrix(format!("row {i} of P sums to {s}, not 1")));
        }
    }
    Ok(())
}

fn reachable(p: &SquareMatrix, start: usize, forward: bool) -> Vec<bool> {
    let n = p.n();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let w = if forward { p[(i, j)] } else { p[(j, i)] };
            if w > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Strong connectivity of the support graph of P.
pub fn is_irreducible(p: &SquareMatrix) -> bool {
    reachable(p, 0, true).iter().all(|&b| b) && reachable(p, 0, false).iter().all(|&b| b)
}

/// Solves πᵀ(P − I) = 0 with one balance equation replaced by Σπ = 1.
pub fn stationary_distribution(p: &SquareMatrix) -> Result<Vec<f64>> {
    if !is_irreducible(p) {
        return Err(Error::IrreducibleViolation("support graph of P is not strongly connected".into()));
    }
    let n = p.n();
    let mut a = SquareMatrix::from_fn(n, |i, j| p[(j, i)] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = a.solve(&b)?;
    if pi.iter().any(|&x| x <= 0.0) {
        return Err(Error::Singular("stationary solve produced a non-positive entry".into()));
    }
    Ok(pi)
}

/// Q = diag(π)(P − I).
pub fn laplacian(p: &SquareMatrix, pi: &[f64]) -> SquareMatrix {
    let n = p.n();
    let mut q = SquareMatrix::from_fn(n, |i, j| pi[i] * (p[(i, j)] - if i == j { 1.0 } else { 0.0 }));
    // exact zero row sums
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -off;
    }
    q
}

/// Nonnegative killing rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KillingRates(pub Vec<f64>);

impl KillingRates {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidRate("killing rates must be finite and nonnegative".into()));
        }
        Ok(Self(h))
    }

    pub fn uniform(n: usize, h: f64) -> Result<Self> {
        Self::new(vec![h; n])
    }

    pub fn at(n: usize, a: usize, h: f64) -> Result<Self> {
        let mut v = vec![0.0; n];
        v[a] = h;
        Self::new(v)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Q_h = Q − diag(h).
pub fn killed_laplacian(q: &SquareMatrix, h: &KillingRates) -> Result<SquareMatrix> {
    if h.0.len() != q.n() {
        return Err(Error::DimensionMismatch { expected: q.n(), got: h.0.len() });
    }
    if !(h.total() > 0.0) {
        return Err(Error::SingularKilling("total killing rate is zero".into()));
    }
    Ok(q.sub(&SquareMatrix::diag(&h.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelProvenance {
    FullKilling { h: Vec<f64> },
    NodeKilling { a: usize, h: f64 },
    HitKilling { a: usize },
    Custom,
}

/// A Markovian kernel with the original state index of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenKernel {
    pub g: SquareMatrix,
    pub provenance: KernelProvenance,
    pub states: Vec<usize>,
}

/// G = (−Q_h)⁻¹, certified nonnegative with PD symmetric part.
pub fn green_kernel(q_h: &SquareMatrix) -> Result<GreenKernel> {
    let g = green_matrix(q_h)?;
    Ok(GreenKernel { g, provenance: KernelProvenance::Custom, states: (0..q_h.n()).collect() })
}

fn green_matrix(q_h: &SquareMatrix) -> Result<SquareMatrix> {
    let neg = q_h.scale(-1.0);
    let g = neg.inverse().map_err(|_| Error::SingularKilling("killed generator is singular".into()))?;
    if !is_m_matrix(&neg, DEFAULT_TOL) {
        return Err(Error::SingularKilling("negated killed generator is not an M-matrix".into()));
    }
    if !has_pd_symmetric_part(&g, DEFAULT_TOL)?.0 {
        return Err(Error::SingularKilling("Green kernel lacks a PD symmetric part".into()));
    }
    Ok(g)
}

pub fn full_killing_kernel(q: &SquareMatrix, h: &KillingRates) -> Result<GreenKernel> {
    let g = green_matrix(&killed_laplacian(q, h)?)?;
    Ok(GreenKernel { g, provenance: KernelProvenance::FullKilling { h: h.0.clone() }, states: (0..q.n()).collect() })
}

/// P* = Π⁻¹PᵀΠ.
pub fn time_reversal(p: &SquareMatrix, pi: &[f64]) -> SquareMatrix {
    let n = p.n();
    let mut ps = SquareMatrix::from_fn(n, |i, j| pi[j] * p[(j, i)] / pi[i]);
    // renormalize rows against rounding in π
    for i in 0..n {
        let s: f64 = (0..n).map(|j| ps[(i, j)]).sum();
        for j in 0..n {
            ps[(i, j)] /= s;
        }
    }
    ps
}

/// (P + P*)/2.
pub fn additive_reversibilization(p: &SquareMatrix, pi: &[f64]) -> SquareMatrix {
    p.add(&time_reversal(p, pi)).scale(0.5)
}

/// G̃ = (−Q_**)⁻¹ on the states other than `a`.
pub fn hit_killing_kernel(q: &SquareMatrix, a: usize) -> Result<GreenKernel> {
    let n = q.n();
    if n < 2 || a >= n {
        return Err(Error::Domain(format!("state {a} invalid for a {n}-state chain")));
    }
    let g =
        green_matrix(&q.delete_index(a)).map_err(|e| Error::InvalidKernel(format!("Q with state {a} removed: {e}")))?;
    Ok(GreenKernel { g, provenance: KernelProvenance::HitKilling { a }, states: (0..n).filter(|&i| i != a).collect() })
}

/// G^h = (h e_a e_aᵀ − Q)⁻¹.
pub fn ray_knight_kernel(q: &SquareMatrix, a: usize, h: f64) -> Result<GreenKernel> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidRate(format!("killing rate {h} must be positive")));
    }
    if a >= q.n() {
        return Err(Error::Domain(format!("state {a} out of range")));
    }
    let rates = KillingRates::at(q.n(), a, h)?;
    let g = green_matrix(&killed_laplacian(q, &rates)?)?;
    Ok(GreenKernel { g, provenance: KernelProvenance::NodeKilling { a, h }, states: (0..q.n()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &SquareMatrix, b: &SquareMatrix, tol: f64) -> bool {
        a.sub(b).max_norm() <= tol
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let p = m(&[&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5]]);
        let pi = stationary_distribution(&p).unwrap();
        assert!(pi.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-14));
        assert!(matches!(stationary_distribution(&SquareMatrix::identity(2)), Err(Error::IrreducibleViolation(_))));
    }

    #[test]
    fn laplacian_examples() {
        let f = MarkovModel::two_flip();
        assert_eq!(f.q, m(&[&[-0.5, 0.5], &[0.5, -0.5]]));
        let c = MarkovModel::cycle(3, 1.0).unwrap();
        for i in 0..3 {
            assert!((c.q[(i, i)] + 1.0 / 3.0).abs() < 1e-15);
            assert!((c.q[(i, (i + 1) % 3)] - 1.0 / 3.0).abs() < 1e-15);
        }
        let z = laplacian(&SquareMatrix::identity(2), &[0.5, 0.5]);
        assert_eq!(z.max_norm(), 0.0);
    }

    #[test]
    fn killed_examples() {
        let one = SquareMatrix::zeros(1);
        let qh = killed_laplacian(&one, &KillingRates::new(vec![2.0]).unwrap()).unwrap();
        assert_eq!(qh, m(&[&[-2.0]]));
        assert_eq!(green_kernel(&qh).unwrap().g, m(&[&[0.5]]));
        let f = MarkovModel::two_flip();
        let qh = killed_laplacian(&f.q, &KillingRates::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(qh, m(&[&[-1.5, 0.5], &[0.5, -0.5]]));
        assert!(matches!(
            killed_laplacian(&f.q, &KillingRates::new(vec![0.0, 0.0]).unwrap()),
            Err(Error::SingularKilling(_))
        ));
    }

    #[test]
    fn green_two_flip() {
        let f = MarkovModel::two_flip();
        let k = full_killing_kernel(&f.q, &KillingRates::uniform(2, 1.0).unwrap()).unwrap();
        // (diag(1,1) − Q) = [[1.5,-0.5],[-0.5,1.5]], inverse = [[1.5,0.5],[0.5,1.5]]/2
        assert!(close(&k.g, &m(&[&[0.75, 0.25], &[0.25, 0.75]]), 1e-15));
    }

    #[test]
    fn reversal_examples() {
        let c = MarkovModel::cycle(3, 1.0).unwrap();
        let ps = c.time_reversal();
        assert!(close(&ps, &MarkovModel::cycle(3, 0.0).unwrap().p, 1e-15));
        let mr = additive_reversibilization(&c.p, &c.pi);
        assert!(close(&mr, &MarkovModel::cycle(3, 0.5).unwrap().p, 1e-15));
        let rev = MarkovModel::cycle(4, 0.5).unwrap();
        assert!(close(&rev.time_reversal(), &rev.p, 1e-15));
    }

    #[test]
    fn kernel_examples() {
        let f = MarkovModel::two_flip();
        let k = hit_killing_kernel(&f.q, 0).unwrap();
        assert_eq!(k.g, m(&[&[2.0]]));
        assert_eq!(k.states, vec![1]);
        let rk = ray_knight_kernel(&f.q, 0, 1.0).unwrap();
        assert!((rk.g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(matches!(ray_knight_kernel(&f.q, 0, 0.0), Err(Error::InvalidRate(_))));
        let one = ray_knight_kernel(&SquareMatrix::zeros(1), 0, 4.0).unwrap();
        assert!((one.g[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn model_json_round_trip() {
        let c = MarkovModel::cycle(3, 0.7).unwrap();
        let j = serde_json::to_string(&MarkovModelJson::from(&c)).unwrap();
        let back: MarkovModelJson = serde_json::from_str(&j).unwrap();
        assert_eq!(back.into_model().unwrap(), c);
        let bad = r#"{"P": [[0.5,0.5],[0.5,0.5]], "pi": [0.9, 0.1]}"#;
        let bad: MarkovModelJson = serde_json::from_str(bad).unwrap();
        assert!(bad.into_model().is_err());
    }
}
