//! Bilinear finite elements for the area functional with 2 x 2 Gauss
//! quadrature. Residuals are the nodal weak forms scaled by `1 / h^2`, so
//! affine maps are exact discrete solutions and smooth fields give the
//! pointwise divergence up to `O(h^2)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::boundary::Boundary;
use super::grid::{DiscreteField, Grid};
use crate::area::{area_gradient, area_hessian};
use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, BandedSym};
use crate::matrix::GradientMatrix;

const G0: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt 3) / 2
const GAUSS: [[f64; 2]; 4] = [[G0, G0], [1.0 - G0, G0], [G0, 1.0 - G0], [1.0 - G0, 1.0 - G0]];
/// Cell corners in the order used by the shape functions.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Shape function gradients at a reference point, times `h`.
fn shape_gradients(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [-eta, 1.0 - xi],
        [eta, xi],
    ]
}

/// `Du` at each Gauss point of cell `(i, j)` (lower-left node).
fn cell_gradients(u: &DiscreteField, i: usize, j: usize) -> [GradientMatrix; 4] {
    let m = u.components;
    let h = u.grid.h;
    GAUSS.map(|[xi, eta]| {
        let dn = shape_gradients(xi, eta);
        let mut rows = vec![0.0; 2 * m];
        for (a, &(di, dj)) in CORNERS.iter().enumerate() {
            let node = u.node(i + di, j + dj);
            for c in 0..m {
                rows[2 * c] += node[c] * dn[a][0] / h;
                rows[2 * c + 1] += node[c] * dn[a][1] / h;
            }
        }
        GradientMatrix::from_flat(m, &rows)
    })
}

/// `A(X) - 1`, written to avoid cancellation for small `X`.
fn area_excess(x: &GradientMatrix) -> f64 {
    let g = x.gram();
    let s = g.trace() + g.det().max(0.0);
    s / ((1.0 + s).sqrt() + 1.0)
}

fn energy_excess(u: &DiscreteField) -> f64 {
    let g = &u.grid;
    let w = 0.25 * g.h * g.h;
    let mut total = 0.0;
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            total += cell_gradients(u, i, j).iter().map(area_excess).sum::<f64>() * w;
        }
    }
    total
}

/// `sum over cells of A(Du) h^2`, with `Du` at the four Gauss points of each
/// bilinear cell.
pub fn discrete_energy(u: &DiscreteField) -> f64 {
    u.grid.area() + energy_excess(u)
}

/// Nodal weak divergence of a matrix field evaluated on `Du`: for each node
/// and row `k`, `-(1/h^2) sum_cells int F_k . grad(phi_node)`. Ring entries
/// are zero.
pub fn weak_divergence(
    u: &DiscreteField,
    rows: usize,
    field: impl Fn(&GradientMatrix) -> Vec<[f64; 2]>,
) -> DiscreteField {
    let g = u.grid;
    let mut out = DiscreteField::zeros(g, rows);
    let w = 0.25 * g.h * g.h;
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let grads = cell_gradients(u, i, j);
            for (gp, x) in grads.iter().enumerate() {
                let [xi, eta] = GAUSS[gp];
                let dn = shape_gradients(xi, eta);
                let f = field(x);
                for (a, &(di, dj)) in CORNERS.iter().enumerate() {
                    let (ni, nj) = (i + di, j + dj);
                    if g.is_boundary(ni, nj) {
                        continue;
                    }
                    for (k, fk) in f.iter().enumerate() {
                        let v = w * (fk[0] * dn[a][0] + fk[1] * dn[a][1]) / g.h;
                        let cur = out.get(ni, nj, k);
                        out.set(ni, nj, k, cur - v / (g.h * g.h));
                    }
                }
            }
        }
    }
    out
}

/// A nodal residual and its max norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub field: DiscreteField,
    pub norm: f64,
}

impl Residual {
    fn new(field: DiscreteField) -> Self {
        let norm = field.interior_max_abs();
        Residual { field, norm }
    }
}

/// Discrete `div DA(Du)`, componentwise.
pub fn el_residual(u: &DiscreteField) -> Residual {
    Residual::new(weak_divergence(u, u.components, |x| area_gradient(x).rows().to_vec()))
}

/// Inner stress `(Du)^T DA(Du) - A(Du) Id`.
pub fn inner_stress(x: &GradientMatrix) -> [[f64; 2]; 2] {
    let d = area_gradient(x);
    let t = x.t_mul(&d);
    let a = 1.0 + area_excess(x);
    [[t.get(0, 0) - a, t.get(0, 1)], [t.get(1, 0), t.get(1, 1) - a]]
}

/// Discrete divergence of the inner stress.
pub fn inner_variation_residual(u: &DiscreteField) -> Residual {
    Residual::new(weak_divergence(u, 2, |x| inner_stress(x).to_vec()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Newton on the discrete energy with a Levenberg shift when the
    /// Hessian is indefinite.
    Newton,
    /// Gradient descent preconditioned by the discrete Laplacian.
    Descent,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(Method::Newton),
            "descent" => Ok(Method::Descent),
            _ => Err(Error::Invalid(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            tol: 1e-10,
            max_iter: 100,
            method: Method::Newton,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub iterations: usize,
    pub final_energy: f64,
    pub el_residual_norm: f64,
    pub inner_residual_norm: f64,
    pub tolerance: f64,
    pub converged: bool,
    /// Energy after each accepted step, starting with the initial guess.
    pub energy_history: Vec<f64>,
    pub message: Option<String>,
}

struct Dofs {
    grid: Grid,
    m: usize,
}

impl Dofs {
    fn count(&self) -> usize {
        self.grid.nx * self.grid.ny * self.m
    }

    fn bandwidth(&self) -> usize {
        (self.grid.nx + 2) * self.m
    }

    #[inline]
    fn of(&self, i: usize, j: usize, c: usize) -> Option<usize> {
        if self.grid.is_boundary(i, j) {
            None
        } else {
            Some(((j - 1) * self.grid.nx + (i - 1)) * self.m + c)
        }
    }

    fn gather(&self, r: &DiscreteField) -> Vec<f64> {
        let mut v = vec![0.0; self.count()];
        for (i, j) in self.grid.interior() {
            for c in 0..self.m {
                v[self.of(i, j, c).unwrap()] = r.get(i, j, c);
            }
        }
        v
    }

    fn step(&self, u: &DiscreteField, d: &[f64], alpha: f64) -> DiscreteField {
        let mut out = u.clone();
        for (i, j) in self.grid.interior() {
            for c in 0..self.m {
                let k = self.of(i, j, c).unwrap();
                out.set(i, j, c, u.get(i, j, c) + alpha * d[k]);
            }
        }
        out
    }
}

/// Energy gradient with respect to the interior unknowns.
fn energy_gradient(dofs: &Dofs, u: &DiscreteField) -> Vec<f64> {
    let h2 = u.grid.h * u.grid.h;
    // the residual is minus the gradient over h^2
    let r = el_residual(u).field;
    dofs.gather(&r).into_iter().map(|v| -v * h2).collect()
}

/// Energy Hessian assembled cellwise from the exact second derivatives.
fn energy_hessian(dofs: &Dofs, u: &DiscreteField) -> BandedSym {
    let g = u.grid;
    let m = u.components;
    let mut k = BandedSym::zeros(dofs.count(), dofs.bandwidth());
    let w = 0.25;
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let grads = cell_gradients(u, i, j);
            let mut local = vec![0.0; 16 * m * m];
            let ld = 4 * m;
            for (gp, x) in grads.iter().enumerate() {
                let [xi, eta] = GAUSS[gp];
                let dn = shape_gradients(xi, eta);
                let hess = area_hessian(x);
                for a in 0..4 {
                    for b in 0..4 {
                        for c in 0..m {
                            for d in 0..m {
                                let mut s = 0.0;
                                for p in 0..2 {
                                    for q in 0..2 {
                                        s += hess.get(2 * c + p, 2 * d + q) * dn[a][p] * dn[b][q];
                                    }
                                }
                                // h^2 from the cell and 1/h^2 from the shape gradients cancel
                                local[(a * m + c) * ld + b * m + d] += w * s;
                            }
                        }
                    }
                }
            }
            for (a, &(ai, aj)) in CORNERS.iter().enumerate() {
                for (b, &(bi, bj)) in CORNERS.iter().enumerate() {
                    for c in 0..m {
                        for d in 0..m {
                            let (Some(r), Some(s)) =
                                (dofs.of(i + ai, j + aj, c), dofs.of(i + bi, j + bj, d))
                            else {
                                continue;
                            };
                            if r >= s {
                                k.add(r, s, local[(a * m + c) * ld + b * m + d]);
                            }
                        }
                    }
                }
            }
        }
    }
    k
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factorizes `K + shift I` with the smallest shift from a geometric ladder
/// that makes it positive definite.
fn shifted_cholesky(k: &BandedSym) -> Result<BandedCholesky> {
    if let Ok(f) = k.clone().cholesky() {
        return Ok(f);
    }
    let scale = (0..k.dim()).map(|i| k.get(i, i).abs()).fold(1e-12, f64::max);
    let mut shift = 1e-8 * scale;
    for _ in 0..40 {
        let mut s = k.clone();
        s.add_diagonal(shift);
        if let Ok(f) = s.cholesky() {
            return Ok(f);
        }
        shift *= 10.0;
    }
    Err(Error::Numerical("no positive definite shift found".into()))
}

/// Minimizes the discrete energy with the given Dirichlet data.
///
/// Divergence is reported through `converged = false`, not as an error;
/// errors are reserved for bad input.
pub fn solve_dirichlet(
    grid: &Grid,
    boundary: &Boundary,
    params: &SolveParams,
) -> Result<(DiscreteField, SolveReport)> {
    let u0 = boundary.initial_field(grid)?;
    solve_from(u0, params)
}

/// Same as [`solve_dirichlet`] from a given initial field; the ring of `u0`
/// is kept fixed.
pub fn solve_from(mut u: DiscreteField, params: &SolveParams) -> Result<(DiscreteField, SolveReport)> {
    if !(params.tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance {} must be positive", params.tol)));
    }
    let dofs = Dofs { grid: u.grid, m: u.components };
    let area = u.grid.area();
    let mut excess = energy_excess(&u);
    let mut history = vec![area + excess];
    let precond = match params.method {
        Method::Descent => Some(energy_hessian(&dofs, &DiscreteField::zeros(u.grid, u.components)).cholesky()?),
        Method::Newton => None,
    };
    let mut res = el_residual(&u).norm;
    let mut iterations = 0;
    let mut message = None;
    while res > params.tol && iterations < params.max_iter {
        iterations += 1;
        let grad = energy_gradient(&dofs, &u);
        let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
        let mut dir = match &precond {
            Some(f) => f.solve(&neg),
            None => shifted_cholesky(&energy_hessian(&dofs, &u))?.solve(&neg),
        };
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            dir = neg;
            slope = dot(&grad, &dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = dofs.step(&u, &dir, alpha);
            let e = energy_excess(&trial);
            if e <= excess + 1e-4 * alpha * slope {
                accepted = Some((trial, e, None));
                break;
            }
            // below rounding the energy cannot rank the steps; the residual can
            if e - excess <= 1e-14 * (area + excess) {
                let r = el_residual(&trial).norm;
                if r < res {
                    accepted = Some((trial, e, Some(r)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, e, r)) = accepted else {
            message = Some(format!("line search failed at iteration {iterations}"));
            break;
        };
        u = trial;
        excess = e;
        history.push(area + excess);
        res = r.unwrap_or_else(|| el_residual(&u).norm);
    }
    let converged = res <= params.tol;
    if !converged && message.is_none() {
        message = Some(format!("no convergence in {} iterations", params.max_iter));
    }
    let report = SolveReport {
        method: params.method,
        iterations,
        final_energy: area + excess,
        el_residual_norm: res,
        inner_residual_norm: inner_variation_residual(&u).norm,
        tolerance: params.tol,
        converged,
        energy_history: history,
        message,
    };
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mms::boundary::BoundaryPreset;

    #[test]
    fn energy_of_flat_and_affine_maps() {
        let g = Grid::unit_square(0.1).unwrap();
        assert_eq!(discrete_energy(&DiscreteField::zeros(g, 2)), 1.0);
        let p: BoundaryPreset = "affine".parse().unwrap();
        let u = DiscreteField::from_fn(g, 2, |x| p.eval(x));
        let BoundaryPreset::Affine { matrix, .. } = &p else { unreachable!() };
        let e = 1.0 + area_excess(matrix);
        assert!((discrete_energy(&u) - e).abs() < 1e-13);
        assert!(el_residual(&u).norm < 1e-12);
        assert!(inner_variation_residual(&u).norm < 1e-12);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let g = Grid::new(3, 4, 0.2, [0.0, 0.0]).unwrap();
        let u = DiscreteField::from_fn(g, 2, |p| vec![p[0] * p[1] + p[0].sin(), (p[0] - p[1]).powi(2)]);
        let dofs = Dofs { grid: g, m: 2 };
        let k = energy_hessian(&dofs, &u);
        let n = dofs.count();
        let eps = 1e-6;
        for col in [0, 5, n - 1] {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let gp = energy_gradient(&dofs, &dofs.step(&u, &e, eps));
            let gm = energy_gradient(&dofs, &dofs.step(&u, &e, -eps));
            for row in 0..n {
                let fd = (gp[row] - gm[row]) / (2.0 * eps);
                assert!((fd - k.get(row, col)).abs() < 1e-7, "{row} {col}");
            }
        }
    }

    #[test]
    fn affine_boundary_is_reproduced() {
        let g = Grid::unit_square(1.0 / 16.0).unwrap();
        let p: BoundaryPreset = "affine".parse().unwrap();
        let (u, rep) = solve_dirichlet(&g, &Boundary::Preset(p.clone()), &SolveParams::default()).unwrap();
        assert!(rep.converged && rep.el_residual_norm <= 1e-10);
        let exact = DiscreteField::from_fn(g, 2, |x| p.eval(x));
        assert!(u.max_diff(&exact).unwrap() <= 1e-12);
    }

    #[test]
    fn methods_agree_on_scherk() {
        let g = Grid::unit_square(0.125).unwrap();
        let b = Boundary::Preset(BoundaryPreset::scherk_unit());
        let (un, rn) = solve_dirichlet(&g, &b, &SolveParams::default()).unwrap();
        let params = SolveParams { tol: 1e-9, max_iter: 2000, method: Method::Descent };
        let (ud, rd) = solve_dirichlet(&g, &b, &params).unwrap();
        assert!(rn.converged && rd.converged, "{rn:?} {rd:?}");
        assert!(un.max_diff(&ud).unwrap() < 1e-9);
        for h in [&rn.energy_history, &rd.energy_history] {
            assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-13));
        }
    }
}
