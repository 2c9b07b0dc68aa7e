//! Dense square matrices and the handful of factorizations the rest of the
//! crate needs. Dimensions are small (n <= 64), so everything is dense.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// A dense real n x n matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl SquareMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("matrix must have at least one row".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!("row {} has {} entries, expected {}", i + 1, row.len(), n)));
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidMatrix(format!("entry ({}, {}) is not finite", i + 1, j + 1)));
            }
        }
        Ok(Self(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    /// Panics if `m` is not square; internal constructor for computed results.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SquareMatrix requires a square matrix");
        Self(m)
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(n, n, f))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn diag(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| (0..self.n()).map(|j| self.0[(i, j)]).collect()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|j| self.0[(i, j)] * v[j]).sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n()).map(|i| self.0.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        let scale = self.max_norm().max(f64::MIN_POSITIVE);
        (0..n).all(|i| (0..i).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= tol * scale))
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        self.0.clone().lu().determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = self.0.clone().lu();
        lu.try_inverse()
            .filter(|m| m.iter().all(|x| x.is_finite()))
            .map(Self)
            .ok_or_else(|| Error::Singular("LU factorization found a zero pivot".into()))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = self.0.clone().lu();
        let rhs = DVector::from_column_slice(b);
        lu.solve(&rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .map(|x| x.iter().copied().collect())
            .ok_or_else(|| Error::Singular("linear solve failed".into()))
    }

    /// Eigenvalues of a symmetric matrix in ascending order. Only the lower
    /// triangle is read.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        let eig = nalgebra::SymmetricEigen::try_new(self.0.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NoConvergence("symmetric eigendecomposition".into()))?;
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(v)
    }

    /// Smallest eigenvalue of a symmetric matrix with its unit eigenvector.
    pub fn symmetric_min_eigenpair(&self) -> Result<(f64, Vec<f64>)> {
        let eig = nalgebra::SymmetricEigen::try_new(self.0.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NoConvergence("symmetric eigendecomposition".into()))?;
        let (k, lam) = eig.eigenvalues.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("n >= 1");
        Ok((lam, eig.eigenvectors.column(k).iter().copied().collect()))
    }

    /// All eigenvalues (complex) via the real Schur form.
    pub fn eigenvalues(&self) -> Result<Vec<num_complex::Complex64>> {
        let schur = nalgebra::Schur::try_new(self.0.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NoConvergence("Schur decomposition".into()))?;
        Ok(schur.complex_eigenvalues().iter().map(|z| num_complex::Complex64::new(z.re, z.im)).collect())
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Self> {
        nalgebra::Cholesky::new(self.0.clone())
            .map(|c| Self(c.l()))
            .ok_or_else(|| Error::Domain("matrix is not symmetric positive definite".into()))
    }

    /// Principal submatrix with row and column `k` removed.
    pub fn delete_index(&self, k: usize) -> Self {
        let n = self.n();
        assert!(n >= 2 && k < n);
        let keep: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        Self::from_fn(n - 1, |i, j| self.0[(keep[i], keep[j])])
    }

    /// Column `k` with entry `k` removed.
    pub fn column_without(&self, col: usize, skip: usize) -> Vec<f64> {
        (0..self.n()).filter(|&i| i != skip).map(|i| self.0[(i, col)]).collect()
    }

    /// Row `k` with entry `k` removed.
    pub fn row_without(&self, row: usize, skip: usize) -> Vec<f64> {
        (0..self.n()).filter(|&j| j != skip).map(|j| self.0[(row, j)]).collect()
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson { n: self.n(), rows: self.to_rows() }
    }

    /// Plain CSV: one row per line, comma separated, shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.to_rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { row: r + 1, col: 0, msg: e.to_string() })?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let mut row = Vec::with_capacity(rec.len());
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: r + 1,
                    col: c + 1,
                    msg: format!("cannot parse {field:?} as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { row: r + 1, col: c + 1, msg: "non-finite entry".into() });
                }
                row.push(v);
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::Parse { row: 0, col: 0, msg: "empty matrix".into() });
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse {
                    row: r + 1,
                    col: row.len().min(n) + 1,
                    msg: format!("expected {n} columns for a square matrix, found {}", row.len()),
                });
            }
        }
        Self::from_rows(&rows)
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let mj: MatrixJson = serde_json::from_str(text)?;
        mj.into_matrix()
    }

    /// Loads CSV or JSON, chosen by extension (`.json` means JSON).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::parse_json(&text)
        } else {
            Self::parse_csv(&text)
        }
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut f64 {
        &mut self.0[idx]
    }
}

/// JSON wire form `{"n": int, "rows": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn into_matrix(self) -> Result<SquareMatrix> {
        if self.rows.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: self.rows.len() });
        }
        SquareMatrix::from_rows(&self.rows)
    }
}

impl Serialize for SquareMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SquareMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = SquareMatrix::from_rows(&[
            vec![0.1, 1.0 / 3.0, -2.5e-17],
            vec![std::f64::consts::PI, 7.0, 1e300],
            vec![-0.0, 5e-324, 123456789.12345679],
        ])
        .unwrap();
        let back = SquareMatrix::parse_csv(&m.to_csv()).unwrap();
        assert_eq!(m.to_rows(), back.to_rows());
        let json = serde_json::to_string(&m.to_json()).unwrap();
        assert_eq!(SquareMatrix::parse_json(&json).unwrap(), m);
    }

    #[test]
    fn malformed_csv_reports_position() {
        let err = SquareMatrix::parse_csv("1,2\n3,x\n").unwrap_err();
        match err {
            Error::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(SquareMatrix::parse_csv("1,2\n3\n"), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(SquareMatrix::parse_csv("1,2,3\n4,5,6\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn json_dimension_checked() {
        let err = SquareMatrix::parse_json(r#"{"n": 3, "rows": [[1,0],[0,1]]}"#).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn delete_index_keeps_order() {
        let m = SquareMatrix::from_fn(3, |i, j| (10 * i + j) as f64);
        let d = m.delete_index(1);
        assert_eq!(d.to_rows(), vec![vec![0.0, 2.0], vec![20.0, 22.0]]);
        assert_eq!(m.column_without(1, 1), vec![1.0, 21.0]);
        assert_eq!(m.row_without(1, 1), vec![10.0, 12.0]);
    }
}
