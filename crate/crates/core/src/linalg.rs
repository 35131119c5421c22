//! Dense and banded solvers sized for this crate: tiny dense systems for the
//! Levenberg-Marquardt projections and banded symmetric systems for the
//! grid Newton solver.

use crate::error::{Error, Result};

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `dim x dim`.
pub fn solve_dense(a: &mut [f64], b: &mut [f64]) -> Result<()> {
    let dim = b.len();
    assert_eq!(a.len(), dim * dim);
    for col in 0..dim {
        let (piv, max) = (col..dim)
            .map(|r| (r, a[r * dim + col].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if max <= f64::MIN_POSITIVE {
            return Err(Error::Numerical("singular dense system".into()));
        }
        if piv != col {
            for k in 0..dim {
                a.swap(col * dim + k, piv * dim + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * dim + col];
        for r in col + 1..dim {
            let f = a[r * dim + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..dim {
                a[r * dim + k] -= f * a[col * dim + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..dim).rev() {
        let mut s = b[col];
        for k in col + 1..dim {
            s -= a[col * dim + k] * b[k];
        }
        b[col] = s / a[col * dim + col];
    }
    Ok(())
}

/// Symmetric banded matrix storing the lower band: entry `(i, j)` with
/// `i - bw <= j <= i` lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Clone, Debug)]
pub struct BandedSym {
    dim: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        BandedSym {
            dim,
            bw,
            data: vec![0.0; dim * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)`; only call once per unordered pair.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry outside band");
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        for i in 0..self.dim {
            let k = self.idx(i, i);
            self.data[k] += shift;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let v = self.data[self.idx(i, j)];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `A = L L^T`. Fails on a non-positive
    /// pivot, which the Newton solver uses as its indefiniteness signal.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bw;
        for i in 0..self.dim {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.idx(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "non-positive pivot {s:.3e} at row {i}"
                        )));
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(l.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            let hi = (i + l.bw).min(n - 1);
            for k in i + 1..=hi {
                s -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_matches_known_solution() {
        let mut a = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![
            2.0 * x[0] + x[1],
            x[0] + 3.0 * x[1] + x[2],
            x[1] + 4.0 * x[2],
        ];
        solve_dense(&mut a, &mut b).unwrap();
        for (u, v) in b.iter().zip(x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn banded_cholesky_solves_laplacian() {
        let n = 50;
        let mut a = BandedSym::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x);
        let sol = a.cholesky().unwrap().solve(&b);
        for (u, v) in sol.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = BandedSym::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_err());
    }
}
