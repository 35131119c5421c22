//! Small dense matrix types used throughout the crate.
//!
//! `GradientMatrix` is an `n x 2` matrix stored row-major: row `j` holds
//! `(x_j1, x_j2)`, the derivatives of the `j`-th component along the two
//! coordinate directions. `PlaneMatrix` is a plain `2 x 2` matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed symplectic matrix `((0, 1), (-1, 0))`.
pub const J: PlaneMatrix = PlaneMatrix([[0.0, 1.0], [-1.0, 0.0]]);

/// Identity of the plane.
pub const ID2: PlaneMatrix = PlaneMatrix([[1.0, 0.0], [0.0, 1.0]]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneMatrix(pub [[f64; 2]; 2]);

impl PlaneMatrix {
    pub const ZERO: PlaneMatrix = PlaneMatrix([[0.0; 2]; 2]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        PlaneMatrix([[a, b], [c, d]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Cofactor with `M cof(M) = det(M) Id`.
    pub fn cof(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        PlaneMatrix([[d, -b], [-c, a]])
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        PlaneMatrix([[a, c], [b, d]])
    }

    pub fn mul(&self, other: &PlaneMatrix) -> Self {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        PlaneMatrix(out)
    }

    pub fn add(&self, other: &PlaneMatrix) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PlaneMatrix) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.0;
        out.iter_mut().flatten().for_each(|v| *v *= s);
        PlaneMatrix(out)
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &PlaneMatrix) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> (f64, f64) {
        let f2 = self.inner(self);
        let d = self.det().abs();
        // s1^2 + s2^2 = |M|^2, s1 s2 = |det M|
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
        let s1 = ((f2 + disc) / 2.0).sqrt();
        let s2 = if s1 > 0.0 { d / s1 } else { 0.0 };
        (s1, s2)
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let a = self.0[0][0];
        let d = self.0[1][1];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    fn zip(&self, other: &PlaneMatrix, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = f(self.0[i][j], other.0[i][j]);
            }
        }
        PlaneMatrix(out)
    }
}

/// An `n x 2` real matrix, the gradient of a map from the plane into `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GradientMatrixRepr", into = "GradientMatrixRepr")]
pub struct GradientMatrix {
    rows: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct GradientMatrixRepr {
    n: usize,
    entries: Vec<[f64; 2]>,
}

impl TryFrom<GradientMatrixRepr> for GradientMatrix {
    type Error = Error;

    fn try_from(repr: GradientMatrixRepr) -> Result<Self> {
        if repr.entries.len() != repr.n {
            return Err(Error::Shape(format!(
                "declared n = {} but {} rows supplied",
                repr.n,
                repr.entries.len()
            )));
        }
        GradientMatrix::from_rows(repr.entries)
    }
}

impl From<GradientMatrix> for GradientMatrixRepr {
    fn from(m: GradientMatrix) -> Self {
        GradientMatrixRepr {
            n: m.rows.len(),
            entries: m.rows,
        }
    }
}

impl GradientMatrix {
    pub fn zeros(n: usize) -> Self {
        GradientMatrix {
            rows: vec![[0.0; 2]; n],
        }
    }

    /// Builds a matrix from rows; rejects empty input and non-finite entries.
    pub fn from_rows(rows: Vec<[f64; 2]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("a gradient matrix needs at least one row".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("gradient matrix entries must be finite".into()));
        }
        Ok(GradientMatrix { rows })
    }

    /// Row-major flat slice `[x11, x12, x21, x22, ...]`.
    pub fn from_flat(n: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), 2 * n, "flat length must be 2n");
        GradientMatrix {
            rows: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }

    pub fn from_plane(m: &PlaneMatrix) -> Self {
        GradientMatrix {
            rows: vec![m.0[0], m.0[1]],
        }
    }

    /// Unit matrix with a single one at `(row, col)`.
    pub fn unit(n: usize, row: usize, col: usize) -> Self {
        let mut m = GradientMatrix::zeros(n);
        m.rows[row][col] = 1.0;
        m
    }

    pub fn outer(a: &[f64], b: [f64; 2]) -> Self {
        GradientMatrix {
            rows: a.iter().map(|&ai| [ai * b[0], ai * b[1]]).collect(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.rows[row][col] = v;
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.rows
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col]).collect()
    }

    pub fn to_plane(&self) -> Option<PlaneMatrix> {
        (self.n() == 2).then(|| PlaneMatrix([self.rows[0], self.rows[1]]))
    }

    /// `X^T X` as a plane matrix: `((|X1|^2, (X1,X2)), ((X1,X2), |X2|^2))`.
    pub fn gram(&self) -> PlaneMatrix {
        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
        for &[a, b] in &self.rows {
            p += a * a;
            q += a * b;
            r += b * b;
        }
        PlaneMatrix([[p, q], [q, r]])
    }

    pub fn norm_sq(&self) -> f64 {
        self.rows.iter().flatten().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inner(&self, other: &GradientMatrix) -> f64 {
        debug_assert_eq!(self.n(), other.n());
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn add(&self, other: &GradientMatrix) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GradientMatrix) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        GradientMatrix {
            rows: self.rows.iter().map(|&[a, b]| [a * s, b * s]).collect(),
        }
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &GradientMatrix) -> Self {
        self.zip(other, |a, b| a + s * b)
    }

    /// Right multiplication by a plane matrix.
    pub fn mul_plane(&self, m: &PlaneMatrix) -> Self {
        let m = &m.0;
        GradientMatrix {
            rows: self
                .rows
                .iter()
                .map(|&[a, b]| [a * m[0][0] + b * m[1][0], a * m[0][1] + b * m[1][1]])
                .collect(),
        }
    }

    /// `self^T other`, a plane matrix.
    pub fn t_mul(&self, other: &GradientMatrix) -> PlaneMatrix {
        let mut out = [[0.0; 2]; 2];
        for (x, y) in self.rows.iter().zip(&other.rows) {
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += x[i] * y[j];
                }
            }
        }
        PlaneMatrix(out)
    }

    /// The `2 x 2` submatrix made of rows `a` and `b`.
    pub fn sub_rows(&self, a: usize, b: usize) -> PlaneMatrix {
        PlaneMatrix([self.rows[a], self.rows[b]])
    }

    /// Singular values in decreasing order. The product `s1 s2` is taken
    /// from the 2x2 subminors, so exact rank-one inputs give `s2` at
    /// rounding level rather than at the square root of it.
    pub fn singular_values(&self) -> (f64, f64) {
        let f2 = self.norm_sq();
        let mut minors_sq = 0.0;
        for a in 0..self.n() {
            for b in a + 1..self.n() {
                minors_sq += self.sub_rows(a, b).det().powi(2);
            }
        }
        let prod = minors_sq.sqrt();
        let disc = (f2 * f2 - 4.0 * minors_sq).max(0.0).sqrt();
        let s1 = ((f2 + disc) / 2.0).sqrt();
        let s2 = if s1 > 0.0 { prod / s1 } else { 0.0 };
        (s1, s2)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    fn zip(&self, other: &GradientMatrix, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n(), other.n(), "row count mismatch");
        GradientMatrix {
            rows: self
                .rows
                .iter()
                .zip(&other.rows)
                .map(|(x, y)| [f(x[0], y[0]), f(x[1], y[1])])
                .collect(),
        }
    }
}

/// A general `m x 2` matrix; the stacked `(2n+2) x 2` lifted gradients are
/// handled through this type when they are not known to lie in the lift.
pub type StackedMatrix = GradientMatrix;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symplectic_identities() {
        let j2 = J.mul(&J);
        assert_eq!(j2, ID2.scale(-1.0));
        assert_eq!(J.transpose(), J.scale(-1.0));
    }

    #[test]
    fn cofactor_gives_determinant() {
        let m = PlaneMatrix::new(1.5, -2.0, 0.25, 3.0);
        let p = m.mul(&m.cof());
        assert!((p.get(0, 0) - m.det()).abs() < 1e-14);
        assert!(p.get(0, 1).abs() < 1e-14);
        assert!((p.get(1, 1) - m.det()).abs() < 1e-14);
    }

    #[test]
    fn json_carries_row_count() {
        let x = GradientMatrix::from_rows(vec![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"n":3,"entries":[[1.0,2.0],[3.0,4.0],[5.0,6.0]]}"#);
        let back: GradientMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<GradientMatrix>(r#"{"n":2,"entries":[[1.0,2.0]]}"#).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(GradientMatrix::from_rows(vec![[f64::NAN, 0.0]]).is_err());
        assert!(GradientMatrix::from_rows(vec![]).is_err());
    }

    #[test]
    fn singular_values_of_rank_one() {
        let x = GradientMatrix::outer(&[0.6, 0.8, 0.0], [0.0, 1.0]);
        let (s1, s2) = x.singular_values();
        assert!((s1 - 1.0).abs() < 1e-14);
        assert!(s2 < 1e-12);
    }
}
