//! Potentials of the divergence-free fields of a stationary map, and the
//! convex potential of `w`.
//!
//! Fields are sampled at nodes from the nodal gradient of `u` and integrated
//! with the trapezoid rule along two path families: bottom edge then
//! vertical, and left edge then horizontal. The mismatch between the two is
//! the integrability audit. Potentials vanish at the bottom-left corner.

use serde::{Deserialize, Serialize};

use super::grid::{DiscreteField, Grid};
use crate::area::{dist_to_ca, field_a, field_b};
use crate::error::{Error, Result};
use crate::matrix::GradientMatrix;
use crate::sampling::par_map;

/// Default threshold on the discrete curl of the sampled fields.
pub const DEFAULT_TOL_CURL: f64 = 0.05;

/// A nodal matrix field: `rows` two-vectors per node.
#[derive(Clone, Debug, PartialEq)]
pub struct RowField {
    pub grid: Grid,
    pub rows: usize,
    data: Vec<[f64; 2]>,
}

impl RowField {
    pub fn from_fn(grid: Grid, rows: usize, f: impl Fn(usize, usize) -> Vec<[f64; 2]>) -> Self {
        let mut data = Vec::with_capacity(grid.node_count() * rows);
        for (i, j) in grid.nodes() {
            let v = f(i, j);
            debug_assert_eq!(v.len(), rows);
            data.extend(v);
        }
        RowField { grid, rows, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, r: usize) -> [f64; 2] {
        self.data[self.grid.index(i, j) * self.rows + r]
    }

    /// Largest centered-difference curl `d1 F_r2 - d2 F_r1` over rows and
    /// deep interior nodes.
    pub fn max_curl(&self) -> f64 {
        let g = &self.grid;
        let h2 = 2.0 * g.h;
        let mut worst = 0.0f64;
        for (i, j) in g.deep_interior() {
            for r in 0..self.rows {
                let c = (self.get(i + 1, j, r)[1] - self.get(i - 1, j, r)[1]) / h2
                    - (self.get(i, j + 1, r)[0] - self.get(i, j - 1, r)[0]) / h2;
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Trapezoid path integrals of each row; `bottom_first` selects the path
    /// family.
    pub fn integrate(&self, bottom_first: bool) -> DiscreteField {
        let g = self.grid;
        let half = 0.5 * g.h;
        let mut out = DiscreteField::zeros(g, self.rows);
        for r in 0..self.rows {
            if bottom_first {
                for i in 1..g.width() {
                    let v = out.get(i - 1, 0, r) + half * (self.get(i - 1, 0, r)[0] + self.get(i, 0, r)[0]);
                    out.set(i, 0, r, v);
                }
                for i in 0..g.width() {
                    for j in 1..g.height() {
                        let v = out.get(i, j - 1, r) + half * (self.get(i, j - 1, r)[1] + self.get(i, j, r)[1]);
                        out.set(i, j, r, v);
                    }
                }
            } else {
                for j in 1..g.height() {
                    let v = out.get(0, j - 1, r) + half * (self.get(0, j - 1, r)[1] + self.get(0, j, r)[1]);
                    out.set(0, j, r, v);
                }
                for j in 0..g.height() {
                    for i in 1..g.width() {
                        let v = out.get(i - 1, j, r) + half * (self.get(i - 1, j, r)[0] + self.get(i, j, r)[0]);
                        out.set(i, j, r, v);
                    }
                }
            }
        }
        out
    }
}

/// Nodal gradients of a field.
pub fn nodal_gradients(u: &DiscreteField) -> Vec<GradientMatrix> {
    u.grid.nodes().map(|(i, j)| u.gradient(i, j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    /// `Dv = A(Du)`, `n` components.
    pub v: DiscreteField,
    /// `Dw = B(Du)`, two components.
    pub w: DiscreteField,
    pub curl_a: f64,
    pub curl_b: f64,
    /// Largest difference between the two path families.
    pub path_discrepancy: f64,
    pub tol_curl: f64,
    pub integrable: bool,
}

/// Integrates `A(Du)` and `B(Du)`. Large curls do not stop the
/// construction; they clear the `integrable` flag.
pub fn build_potentials(u: &DiscreteField, tol_curl: f64) -> Potentials {
    let g = u.grid;
    let grads = nodal_gradients(u);
    let at = |i: usize, j: usize| &grads[g.index(i, j)];
    let a = RowField::from_fn(g, u.components, |i, j| field_a(at(i, j)).rows().to_vec());
    let b = RowField::from_fn(g, 2, |i, j| field_b(at(i, j)).0.to_vec());
    let v = a.integrate(true);
    let w = b.integrate(true);
    let path_discrepancy = v
        .max_diff(&a.integrate(false))
        .unwrap_or(f64::INFINITY)
        .max(w.max_diff(&b.integrate(false)).unwrap_or(f64::INFINITY));
    let (curl_a, curl_b) = (a.max_curl(), b.max_curl());
    Potentials {
        v,
        w,
        curl_a,
        curl_b,
        path_discrepancy,
        tol_curl,
        integrable: curl_a <= tol_curl && curl_b <= tol_curl,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeAmpereReport {
    pub max_div_w: f64,
    /// `det(D^2 z) - 1` at interior nodes (ring entries zero).
    pub det_residual: DiscreteField,
    /// Over the deep interior.
    pub max_det_error: f64,
    /// Over the first interior layer, whose second differences see the
    /// one-sided ring gradients and so carry an `O(1)` consistency error.
    pub max_det_error_near_ring: f64,
    pub min_laplacian: f64,
    pub min_eigenvalue: f64,
    pub laplacian_positive: bool,
}

/// Integrates `(w2, -w1)` to `z`, so that `w = (-d2 z, d1 z)`, and measures
/// `det(D^2 z) = 1` and `Delta z > 0` with centered second differences.
pub fn ma_potential(w: &DiscreteField, tol_div: f64) -> Result<(DiscreteField, MongeAmpereReport)> {
    if w.components != 2 {
        return Err(Error::Shape(format!("w needs 2 components, got {}", w.components)));
    }
    let g = w.grid;
    let mut max_div_w = 0.0f64;
    let mut worst = (0, 0);
    for (i, j) in g.deep_interior() {
        let d = w.gradient(i, j);
        let div = (d.get(0, 0) + d.get(1, 1)).abs();
        if div > max_div_w {
            max_div_w = div;
            worst = (i, j);
        }
    }
    if !(max_div_w <= tol_div) {
        return Err(Error::Domain(format!(
            "div w = {max_div_w:.3e} exceeds {tol_div:.1e} at node {worst:?}"
        )));
    }
    let rotated = RowField::from_fn(g, 1, |i, j| vec![[w.get(i, j, 1), -w.get(i, j, 0)]]);
    let z = rotated.integrate(true);
    let h2 = g.h * g.h;
    let mut det_residual = DiscreteField::zeros(g, 1);
    let (mut max_det_error, mut max_det_error_near_ring) = (0.0f64, 0.0f64);
    let (mut min_laplacian, mut min_eigenvalue) = (f64::INFINITY, f64::INFINITY);
    for (i, j) in g.interior() {
        let zc = z.get(i, j, 0);
        let zxx = (z.get(i + 1, j, 0) - 2.0 * zc + z.get(i - 1, j, 0)) / h2;
        let zyy = (z.get(i, j + 1, 0) - 2.0 * zc + z.get(i, j - 1, 0)) / h2;
        let zxy = (z.get(i + 1, j + 1, 0) - z.get(i + 1, j - 1, 0) - z.get(i - 1, j + 1, 0)
            + z.get(i - 1, j - 1, 0))
            / (4.0 * h2);
        let det = zxx * zyy - zxy * zxy;
        det_residual.set(i, j, 0, det - 1.0);
        if g.is_deep(i, j) {
            max_det_error = max_det_error.max((det - 1.0).abs());
        } else {
            max_det_error_near_ring = max_det_error_near_ring.max((det - 1.0).abs());
        }
        let lap = zxx + zyy;
        min_laplacian = min_laplacian.min(lap);
        let disc = (0.25 * (zxx - zyy).powi(2) + zxy * zxy).sqrt();
        min_eigenvalue = min_eigenvalue.min(0.5 * lap - disc);
    }
    Ok((
        z,
        MongeAmpereReport {
            max_div_w,
            det_residual,
            max_det_error,
            max_det_error_near_ring,
            min_laplacian,
            min_eigenvalue,
            laplacian_positive: min_laplacian > 0.0,
        },
    ))
}

/// Nodal distance of the stacked gradient `DU` to `C_A`. `U` stacks
/// `(u, v, w)` with `2n + 2` components.
pub fn inclusion_residual(stacked: &DiscreteField) -> Result<DiscreteField> {
    let m = stacked.components;
    if m < 4 || !m.is_multiple_of(2) {
        return Err(Error::Shape(format!("stacked field needs 2n + 2 components, got {m}")));
    }
    let g = stacked.grid;
    let nodes: Vec<(usize, usize)> = g.nodes().collect();
    let dists = par_map(nodes.len(), |k| {
        let (i, j) = nodes[k];
        dist_to_ca(&stacked.gradient(i, j)).map(|d| d.distance)
    });
    let mut out = DiscreteField::zeros(g, 1);
    out.values = dists.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_map_gives_quadratic_potential() {
        let g = Grid::unit_square(0.125).unwrap();
        let u = DiscreteField::zeros(g, 1);
        let p = build_potentials(&u, DEFAULT_TOL_CURL);
        assert!(p.integrable && p.path_discrepancy <= 1e-12);
        // B(0) = -J, so w = (-y, x)
        for (i, j) in g.nodes() {
            let [x, y] = g.point(i, j);
            assert!((p.w.get(i, j, 0) + y).abs() < 1e-14 && (p.w.get(i, j, 1) - x).abs() < 1e-14);
        }
        let (z, rep) = ma_potential(&p.w, 1e-10).unwrap();
        for (i, j) in g.nodes() {
            let [x, y] = g.point(i, j);
            assert!((z.get(i, j, 0) - 0.5 * (x * x + y * y)).abs() < 1e-14);
        }
        assert!(rep.max_det_error < 1e-12 && (rep.min_laplacian - 2.0).abs() < 1e-12);
    }

    #[test]
    fn affine_map_gives_affine_potentials() {
        let g = Grid::unit_square(0.1).unwrap();
        let x0 = GradientMatrix::from_flat(2, &[0.4, -1.0, 0.3, 0.2]);
        let u = DiscreteField::from_fn(g, 2, |p| {
            x0.rows().iter().map(|r| r[0] * p[0] + r[1] * p[1]).collect()
        });
        let p = build_potentials(&u, DEFAULT_TOL_CURL);
        assert!(p.path_discrepancy <= 1e-12 && p.curl_a < 1e-12 && p.curl_b < 1e-12);
        let (a, b) = (field_a(&x0), field_b(&x0));
        for (i, j) in g.nodes() {
            let dv = p.v.gradient(i, j);
            let dw = p.w.gradient(i, j);
            assert!(dv.sub(&a).norm() < 1e-10);
            assert!(dw.to_plane().unwrap().sub(&b).norm() < 1e-10);
        }
    }

    #[test]
    fn rough_field_is_flagged() {
        let g = Grid::unit_square(1.0 / 16.0).unwrap();
        let mut u = DiscreteField::zeros(g, 2);
        for (k, v) in u.values.iter_mut().enumerate() {
            *v = ((k * 7919) % 13) as f64 / 13.0;
        }
        let p = build_potentials(&u, DEFAULT_TOL_CURL);
        assert!(!p.integrable && p.curl_a > 1.0);
        assert!(matches!(ma_potential(&p.w, 1e-3), Err(Error::Domain(_))));
        let r = inclusion_residual(&DiscreteField::stack(&[&u, &p.v, &p.w]).unwrap()).unwrap();
        assert!(r.interior_max_abs() > 0.1);
    }
}
