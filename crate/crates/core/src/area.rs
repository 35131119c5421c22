//! Matrix calculus for the area density of two-dimensional graphs in
//! `R^{2+n}`: the density itself, its first and second derivatives, the
//! fields `A(X) = DA(X) J` and `B(X) = X^T DA(X) J - A(X) J`, and the lift of
//! a gradient into the constraint set `C_A` (or `C_f` for a general density).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::matrix::{GradientMatrix, PlaneMatrix, StackedMatrix, J};

/// Determinants of all `2 x 2` row subminors `X^{ab}` with `a < b`.
///
/// Pairs with `a = b` have a zero determinant and are omitted, so an `n = 1`
/// matrix yields an empty list.
pub fn subminor_dets(x: &GradientMatrix) -> Vec<((usize, usize), f64)> {
    let n = x.n();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push(((a, b), x.sub_rows(a, b).det()));
        }
    }
    out
}

/// `sqrt(1 + |X|^2 + sum det(X^{ab})^2)`, evaluated through the Gram matrix
/// (Cauchy-Binet) so the cost is linear in `n`.
pub fn area_density(x: &GradientMatrix) -> f64 {
    let g = x.gram();
    (1.0 + g.trace() + g.det().max(0.0)).sqrt()
}

/// Area density summing the subminors explicitly. Quadratic in `n`; kept
/// as an independent route for tests.
pub fn area_density_by_minors(x: &GradientMatrix) -> f64 {
    let minors: f64 = subminor_dets(x).iter().map(|(_, d)| d * d).sum();
    (1.0 + x.norm_sq() + minors).sqrt()
}

/// Gradient of the area density via the coefficient form
/// `DA_j1 = beta x_j1 - gamma x_j2`, `DA_j2 = alpha x_j2 - gamma x_j1`.
pub fn area_gradient(x: &GradientMatrix) -> GradientMatrix {
    let g = x.gram();
    let (p, q, r) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
    let area = (1.0 + p + r + (p * r - q * q).max(0.0)).sqrt();
    let mut out = x.clone();
    for row in out.rows_mut() {
        let [a, b] = *row;
        *row = [((1.0 + r) * a - q * b) / area, ((1.0 + p) * b - q * a) / area];
    }
    out
}

/// Gradient of the area density via the cofactor sum
/// `(X + sum det(X^{ab}) C_ab(X)) / A(X)`.
pub fn area_gradient_cofactor(x: &GradientMatrix) -> GradientMatrix {
    let n = x.n();
    let mut acc = x.clone();
    for ((a, b), d) in subminor_dets(x) {
        // rows a and b of C_ab are the rows of cof(X^{ab})^T
        let ct = x.sub_rows(a, b).cof().transpose();
        let rows = acc.rows_mut();
        rows[a][0] += d * ct.get(0, 0);
        rows[a][1] += d * ct.get(0, 1);
        rows[b][0] += d * ct.get(1, 0);
        rows[b][1] += d * ct.get(1, 1);
    }
    debug_assert_eq!(acc.n(), n);
    acc.scale(1.0 / area_density(x))
}

/// Second derivative of a density, stored as a symmetric `2n x 2n` matrix
/// over the flattened row-major index `2 j + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hessian {
    pub n: usize,
    pub data: Vec<f64>,
    pub source: HessianSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianSource {
    Analytic,
    FiniteDifference,
}

impl Hessian {
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim() + j]
    }

    /// `D^2 f(X)[E]`, the Hessian applied to a direction.
    pub fn apply(&self, e: &GradientMatrix) -> GradientMatrix {
        let v = e.flat();
        let d = self.dim();
        let out: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| self.data[i * d + j] * v[j]).sum())
            .collect();
        GradientMatrix::from_flat(self.n, &out)
    }

    /// `D^2 f(X)[Y, Z]`.
    pub fn bilinear(&self, y: &GradientMatrix, z: &GradientMatrix) -> f64 {
        self.apply(y).inner(z)
    }
}

/// Exact Hessian of the area density.
///
/// With `N = A DA` (the gradient of `A^2 / 2`), `D^2 A = DN / A - N (x) N / A^3`.
pub fn area_hessian(x: &GradientMatrix) -> Hessian {
    let n = x.n();
    let d = 2 * n;
    let g = x.gram();
    let (p, q, r) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
    let area = (1.0 + p + r + (p * r - q * q).max(0.0)).sqrt();
    let rows = x.rows();
    let nvec: Vec<f64> = rows
        .iter()
        .flat_map(|&[a, b]| [(1.0 + r) * a - q * b, (1.0 + p) * b - q * a])
        .collect();
    let mut data = vec![0.0; d * d];
    for j in 0..n {
        let [xj1, xj2] = rows[j];
        for k in 0..n {
            let [xk1, xk2] = rows[k];
            let delta = if j == k { 1.0 } else { 0.0 };
            let d11 = (1.0 + r) * delta - xj2 * xk2;
            let d12 = 2.0 * xk2 * xj1 - xk1 * xj2 - q * delta;
            let d21 = 2.0 * xk1 * xj2 - xk2 * xj1 - q * delta;
            let d22 = (1.0 + p) * delta - xj1 * xk1;
            let block = [[d11, d12], [d21, d22]];
            for c in 0..2 {
                for e in 0..2 {
                    let i1 = 2 * j + c;
                    let i2 = 2 * k + e;
                    data[i1 * d + i2] =
                        block[c][e] / area - nvec[i1] * nvec[i2] / (area * area * area);
                }
            }
        }
    }
    Hessian {
        n,
        data,
        source: HessianSource::Analytic,
    }
}

/// `A(X) = DA(X) J`.
pub fn field_a(x: &GradientMatrix) -> GradientMatrix {
    area_gradient(x).mul_plane(&J)
}

/// `B(X) = (X^T X J - (1 + |X|^2) J) / A(X)`.
pub fn field_b(x: &GradientMatrix) -> PlaneMatrix {
    let g = x.gram();
    g.mul(&J)
        .sub(&J.scale(1.0 + g.trace()))
        .scale(1.0 / area_density(x))
}

/// `B(X)` from its explicit entries
/// `((-(X1,X2), -1 - |X2|^2), (1 + |X1|^2, (X1,X2))) / A(X)`.
pub fn field_b_explicit(x: &GradientMatrix) -> PlaneMatrix {
    let g = x.gram();
    let (p, q, r) = (g.get(0, 0), g.get(0, 1), g.get(1, 1));
    PlaneMatrix::new(-q, -1.0 - r, 1.0 + p, q).scale(1.0 / area_density(x))
}

/// `(alpha, beta, gamma)` with `B = ((-gamma, -alpha), (beta, gamma))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BCoefficients {
    pub fn from_b(b: &PlaneMatrix) -> Self {
        BCoefficients {
            alpha: -b.get(0, 1),
            beta: b.get(1, 0),
            gamma: -b.get(0, 0),
        }
    }

    pub fn to_b(&self) -> PlaneMatrix {
        PlaneMatrix::new(-self.gamma, -self.alpha, self.beta, self.gamma)
    }

    /// `alpha beta - gamma^2`, which is `det B` and equals one.
    pub fn relation(&self) -> f64 {
        self.alpha * self.beta - self.gamma * self.gamma
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Domain(format!(
                "alpha = {}, beta = {} must be positive",
                self.alpha, self.beta
            )));
        }
        if (self.relation() - 1.0).abs() > tol {
            return Err(Error::Domain(format!(
                "alpha beta - gamma^2 = {} differs from 1",
                self.relation()
            )));
        }
        Ok(())
    }

    /// The symmetric coefficient matrix `((beta, -gamma), (-gamma, alpha))`
    /// of the elliptic equation solved by each component of a critical map.
    pub fn ellipticity_matrix(&self) -> PlaneMatrix {
        PlaneMatrix::new(self.beta, -self.gamma, -self.gamma, self.alpha)
    }
}

pub fn b_coeffs(x: &GradientMatrix) -> BCoefficients {
    BCoefficients::from_b(&field_b(x))
}

/// A scalar density on `n x 2` matrices with first and (optionally)
/// second derivatives.
pub trait EnergyDensity: Sync {
    fn value(&self, x: &GradientMatrix) -> f64;

    fn gradient(&self, x: &GradientMatrix) -> GradientMatrix;

    /// Analytic Hessian when the density provides one.
    fn analytic_hessian(&self, _x: &GradientMatrix) -> Option<Hessian> {
        None
    }

    fn smoothness_order(&self) -> u32 {
        2
    }

    fn label(&self) -> String;

    /// Analytic Hessian, or central differences of the gradient at step
    /// `1e-4` when none is supplied. The source is recorded on the result.
    fn hessian(&self, x: &GradientMatrix) -> Hessian {
        self.analytic_hessian(x)
            .unwrap_or_else(|| fd_hessian(|y| self.gradient(y), x, 1e-4))
    }
}

/// Central-difference Hessian from a gradient oracle, symmetrized.
pub fn fd_hessian(
    grad: impl Fn(&GradientMatrix) -> GradientMatrix,
    x: &GradientMatrix,
    step: f64,
) -> Hessian {
    let n = x.n();
    let d = 2 * n;
    let mut data = vec![0.0; d * d];
    let base = x.flat();
    for k in 0..d {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += step;
        minus[k] -= step;
        let gp = grad(&GradientMatrix::from_flat(n, &plus)).flat();
        let gm = grad(&GradientMatrix::from_flat(n, &minus)).flat();
        for i in 0..d {
            data[i * d + k] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..d {
        for k in 0..i {
            let s = 0.5 * (data[i * d + k] + data[k * d + i]);
            data[i * d + k] = s;
            data[k * d + i] = s;
        }
    }
    Hessian {
        n,
        data,
        source: HessianSource::FiniteDifference,
    }
}

/// The area density as an [`EnergyDensity`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Area;

impl EnergyDensity for Area {
    fn value(&self, x: &GradientMatrix) -> f64 {
        area_density(x)
    }
    fn gradient(&self, x: &GradientMatrix) -> GradientMatrix {
        area_gradient(x)
    }
    fn analytic_hessian(&self, x: &GradientMatrix) -> Option<Hessian> {
        Some(area_hessian(x))
    }
    fn smoothness_order(&self) -> u32 {
        u32::MAX
    }
    fn label(&self) -> String {
        "area".into()
    }
}

/// `A(X) + constant + quadratic |X|^2`, the test family for closeness to the
/// area density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedArea {
    pub constant: f64,
    pub quadratic: f64,
}

impl PerturbedArea {
    pub fn quadratic(eps: f64) -> Self {
        PerturbedArea {
            constant: 0.0,
            quadratic: eps,
        }
    }

    pub fn constant(eps: f64) -> Self {
        PerturbedArea {
            constant: eps,
            quadratic: 0.0,
        }
    }
}

impl EnergyDensity for PerturbedArea {
    fn value(&self, x: &GradientMatrix) -> f64 {
        area_density(x) + self.constant + self.quadratic * x.norm_sq()
    }
    fn gradient(&self, x: &GradientMatrix) -> GradientMatrix {
        area_gradient(x).axpy(2.0 * self.quadratic, x)
    }
    fn analytic_hessian(&self, x: &GradientMatrix) -> Option<Hessian> {
        let mut h = area_hessian(x);
        let d = h.dim();
        for i in 0..d {
            h.data[i * d + i] += 2.0 * self.quadratic;
        }
        Some(h)
    }
    fn smoothness_order(&self) -> u32 {
        u32::MAX
    }
    fn label(&self) -> String {
        format!(
            "area{:+}{:+}*|X|^2",
            self.constant, self.quadratic
        )
    }
}

/// `|X|^2 / 2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HalfNormSquared;

impl EnergyDensity for HalfNormSquared {
    fn value(&self, x: &GradientMatrix) -> f64 {
        0.5 * x.norm_sq()
    }
    fn gradient(&self, x: &GradientMatrix) -> GradientMatrix {
        x.clone()
    }
    fn analytic_hessian(&self, x: &GradientMatrix) -> Option<Hessian> {
        let d = 2 * x.n();
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Some(Hessian {
            n: x.n(),
            data,
            source: HessianSource::Analytic,
        })
    }
    fn smoothness_order(&self) -> u32 {
        u32::MAX
    }
    fn label(&self) -> String {
        "half-norm-squared".into()
    }
}

/// Density given by closures; the Hessian is synthesized by differences.
pub struct FnDensity<V, G> {
    pub value: V,
    pub gradient: G,
    pub label: String,
}

impl<V, G> EnergyDensity for FnDensity<V, G>
where
    V: Fn(&GradientMatrix) -> f64 + Sync,
    G: Fn(&GradientMatrix) -> GradientMatrix + Sync,
{
    fn value(&self, x: &GradientMatrix) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &GradientMatrix) -> GradientMatrix {
        (self.gradient)(x)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// A point of `C_f`: the stack `(X; A_f(X); B_f(X))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedGradient {
    pub x_block: GradientMatrix,
    pub a_block: GradientMatrix,
    pub b_block: PlaneMatrix,
}

impl LiftedGradient {
    pub fn n(&self) -> usize {
        self.x_block.n()
    }

    /// Rows of the `(2n + 2) x 2` stacked matrix.
    pub fn to_stacked(&self) -> StackedMatrix {
        let mut rows = Vec::with_capacity(2 * self.n() + 2);
        rows.extend_from_slice(self.x_block.rows());
        rows.extend_from_slice(self.a_block.rows());
        rows.push(self.b_block.0[0]);
        rows.push(self.b_block.0[1]);
        StackedMatrix::from_flat(rows.len(), &rows.concat())
    }

    /// Splits a `(2n + 2) x 2` matrix into its three blocks.
    pub fn from_stacked(m: &StackedMatrix) -> Result<Self> {
        let rows = m.rows();
        if rows.len() < 4 || !rows.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "stacked matrix needs 2n + 2 rows with n >= 1, got {}",
                rows.len()
            )));
        }
        let n = (rows.len() - 2) / 2;
        Ok(LiftedGradient {
            x_block: GradientMatrix::from_flat(n, &rows[..n].concat()),
            a_block: GradientMatrix::from_flat(n, &rows[n..2 * n].concat()),
            b_block: PlaneMatrix([rows[2 * n], rows[2 * n + 1]]),
        })
    }

    pub fn distance_sq(&self, other: &LiftedGradient) -> f64 {
        self.x_block.sub(&other.x_block).norm_sq()
            + self.a_block.sub(&other.a_block).norm_sq()
            + self.b_block.sub(&other.b_block).inner(&self.b_block.sub(&other.b_block))
    }
}

pub fn lift(x: &GradientMatrix) -> LiftedGradient {
    LiftedGradient {
        x_block: x.clone(),
        a_block: field_a(x),
        b_block: field_b(x),
    }
}

/// `(X; Df(X) J; X^T Df(X) J - f(X) J)`.
pub fn lift_f(x: &GradientMatrix, f: &dyn EnergyDensity) -> LiftedGradient {
    let df = f.gradient(x);
    LiftedGradient {
        x_block: x.clone(),
        a_block: df.mul_plane(&J),
        b_block: x.t_mul(&df).mul(&J).sub(&J.scale(f.value(x))),
    }
}

/// Derivative of the lift along `E` at `X`.
pub fn lift_derivative(x: &GradientMatrix, hess: &Hessian, e: &GradientMatrix) -> LiftedGradient {
    let da = area_gradient(x);
    let dda = hess.apply(e);
    let b = e
        .t_mul(&da)
        .add(&x.t_mul(&dda))
        .mul(&J)
        .sub(&J.scale(da.inner(e)));
    LiftedGradient {
        x_block: e.clone(),
        a_block: dda.mul_plane(&J),
        b_block: b,
    }
}

/// Result of projecting a stacked matrix onto `C_A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// Distance to the best lift found; always an upper bound of the true
    /// distance since it is attained by a feasible point.
    pub distance: f64,
    pub minimizer: GradientMatrix,
    /// At least one start met the stationarity test.
    pub converged: bool,
    pub starts: usize,
}

const DIST_STARTS: usize = 5;
const DIST_SEED: u64 = 0x00C0_FFEE;

/// Distance from a `(2n + 2) x 2` matrix to `C_A`, by Levenberg-Marquardt
/// from the x-block and four random perturbations of it.
pub fn dist_to_ca(l: &StackedMatrix) -> Result<DistanceEstimate> {
    let target = LiftedGradient::from_stacked(l)?;
    let n = target.n();
    let seed_x = target.x_block.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(DIST_SEED);
    let scale = 0.5 * (1.0 + seed_x.norm());
    let mut best: Option<(f64, GradientMatrix, bool)> = None;
    let mut any_converged = false;
    for start in 0..DIST_STARTS {
        let x0 = if start == 0 {
            seed_x.clone()
        } else {
            let noise: Vec<f64> = (0..2 * n)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            seed_x.add(&GradientMatrix::from_flat(n, &noise))
        };
        let (x, dist, ok) = levenberg_marquardt(&target, x0);
        any_converged |= ok;
        let better = match &best {
            None => true,
            Some((d, _, _)) => dist < *d,
        };
        if better {
            best = Some((dist, x, ok));
        }
        if start == 0 && ok && dist < 1e-13 {
            break;
        }
    }
    let (distance, minimizer, _) = best.expect("at least one start");
    Ok(DistanceEstimate {
        distance,
        minimizer,
        converged: any_converged,
        starts: DIST_STARTS,
    })
}

fn residual(target: &LiftedGradient, x: &GradientMatrix) -> (LiftedGradient, Vec<f64>) {
    let lifted = lift(x);
    let r: Vec<f64> = lifted
        .to_stacked()
        .flat()
        .iter()
        .zip(target.to_stacked().flat())
        .map(|(a, b)| a - b)
        .collect();
    (lifted, r)
}

fn levenberg_marquardt(target: &LiftedGradient, mut x: GradientMatrix) -> (GradientMatrix, f64, bool) {
    let n = x.n();
    let d = 2 * n;
    let (_, mut r) = residual(target, &x);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let hess = area_hessian(&x);
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let e = GradientMatrix::from_flat(n, &unit_vec(d, k));
                lift_derivative(&x, &hess, &e).to_stacked().flat()
            })
            .collect();
        let grad: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().zip(&r).map(|(a, b)| a * b).sum())
            .collect();
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= 1e-12 * (1.0 + cost.sqrt()) || cost < 1e-28 {
            return (x, cost.sqrt(), true);
        }
        let mut jtj = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                jtj[i * d + k] = cols[i].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
            }
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..d {
                a[i * d + i] += lambda * (1.0 + jtj[i * d + i]);
            }
            let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
            if solve_dense(&mut a, &mut step).is_err() {
                lambda *= 10.0;
                continue;
            }
            let trial = x.add(&GradientMatrix::from_flat(n, &step));
            let (_, rt) = residual(target, &trial);
            let ct: f64 = rt.iter().map(|v| v * v).sum();
            if ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-15 {
                    return (x, cost.sqrt(), true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent at any damping: a stationary point up to rounding
            let ok = gnorm <= 1e-7 * (1.0 + cost.sqrt());
            return (x, cost.sqrt(), ok);
        }
    }
    (x, cost.sqrt(), false)
}

fn unit_vec(d: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ID2;
    use approx::assert_relative_eq;
    use std::f64::consts::SQRT_2;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> GradientMatrix {
        let v: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = GradientMatrix::from_flat(n, &v);
        m.scale(radius * rng.random::<f64>() / m.norm().max(1e-12))
    }

    fn central_diff_gradient(x: &GradientMatrix, step: f64) -> GradientMatrix {
        let n = x.n();
        let base = x.flat();
        let g: Vec<f64> = (0..2 * n)
            .map(|k| {
                let mut p = base.clone();
                let mut m = base.clone();
                p[k] += step;
                m[k] -= step;
                (area_density(&GradientMatrix::from_flat(n, &p))
                    - area_density(&GradientMatrix::from_flat(n, &m)))
                    / (2.0 * step)
            })
            .collect();
        GradientMatrix::from_flat(n, &g)
    }

    #[test]
    fn subminors_small_cases() {
        assert!(subminor_dets(&GradientMatrix::zeros(2)).iter().all(|(_, d)| *d == 0.0));
        let single = GradientMatrix::from_rows(vec![[0.3, -1.2]]).unwrap();
        assert!(subminor_dets(&single).is_empty());
        assert!(single.gram().det().abs() < 1e-15);
        let id = GradientMatrix::from_plane(&ID2);
        assert_eq!(subminor_dets(&id), vec![((0, 1), 1.0)]);
        assert_eq!(id.gram().det(), 1.0);
    }

    #[test]
    fn density_values() {
        assert_eq!(area_density(&GradientMatrix::zeros(3)), 1.0);
        assert_relative_eq!(area_density(&GradientMatrix::unit(2, 0, 0)), SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(area_density(&GradientMatrix::from_plane(&ID2)), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_at_unit_entry() {
        // beta(e11) = sqrt(2), gamma = 0, so DA(e11) = e11 / sqrt(2)
        let x = GradientMatrix::unit(2, 0, 0);
        let g = area_gradient(&x);
        let fd = central_diff_gradient(&x, 1e-5);
        assert_relative_eq!(g.get(0, 0), 1.0 / SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(fd.get(0, 0), 1.0 / SQRT_2, epsilon = 1e-9);
        assert_eq!(area_gradient(&GradientMatrix::zeros(2)), GradientMatrix::zeros(2));
    }

    #[test]
    fn gradient_routes_agree_and_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=5 {
            for _ in 0..200 {
                let x = random_matrix(&mut rng, n, 10.0);
                let a = area_gradient(&x);
                let b = area_gradient_cofactor(&x);
                assert!(a.sub(&b).norm() <= 1e-12 * (1.0 + a.norm()));
                let fd = central_diff_gradient(&x, 1e-4);
                assert!(a.sub(&fd).norm() <= 1e-6 * a.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn hessian_matches_differences_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            for _ in 0..50 {
                let x = random_matrix(&mut rng, n, 4.0);
                let h = area_hessian(&x);
                let fd = fd_hessian(area_gradient, &x, 1e-5);
                for (a, b) in h.data.iter().zip(&fd.data) {
                    assert!((a - b).abs() < 1e-7, "{a} vs {b}");
                }
                for i in 0..h.dim() {
                    for k in 0..h.dim() {
                        assert!((h.get(i, k) - h.get(k, i)).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn field_b_examples() {
        assert_eq!(field_b(&GradientMatrix::zeros(2)), J.scale(-1.0));
        let b = field_b(&GradientMatrix::unit(2, 0, 0));
        let expect = PlaneMatrix::new(0.0, -1.0 / SQRT_2, SQRT_2, 0.0);
        assert!(b.sub(&expect).norm() < 1e-15);
        assert!((b.det() - 1.0).abs() < 1e-15);
        let h1 = GradientMatrix::from_plane(&PlaneMatrix::new(1.0, 0.0, 0.0, -1.0));
        assert!(field_b(&h1).sub(&J.scale(-1.0)).norm() < 1e-15);
    }

    #[test]
    fn field_a_on_h1() {
        let x = GradientMatrix::from_plane(&PlaneMatrix::new(1.0, 0.0, 0.0, -1.0));
        let a = field_a(&x);
        let expect = GradientMatrix::from_plane(&PlaneMatrix::new(0.0, 1.0, 1.0, 0.0));
        assert!(a.sub(&expect).norm() < 1e-15);
    }

    #[test]
    fn b_routes_and_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=5 {
            for _ in 0..200 {
                let x = random_matrix(&mut rng, n, 10.0);
                let b = field_b(&x);
                assert!(b.sub(&field_b_explicit(&x)).norm() < 1e-12 * (1.0 + b.norm()));
                let c = b_coeffs(&x);
                c.check(1e-10).unwrap();
                assert!(c.to_b().sub(&b).norm() < 1e-12);
            }
        }
        let c = b_coeffs(&GradientMatrix::unit(2, 0, 0));
        assert_relative_eq!(c.alpha, 1.0 / SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(c.beta, SQRT_2, epsilon = 1e-15);
        assert_eq!(c.gamma, 0.0);
        assert_eq!(
            b_coeffs(&GradientMatrix::zeros(1)),
            BCoefficients { alpha: 1.0, beta: 1.0, gamma: 0.0 }
        );
    }

    #[test]
    fn lift_f_of_area_is_lift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let n = rng.random_range(1..=4);
            let x = random_matrix(&mut rng, n, 5.0);
            let a = lift(&x);
            let b = lift_f(&x, &Area);
            assert!(a.distance_sq(&b).sqrt() < 1e-12 * (1.0 + x.norm_sq()));
        }
        let z = lift(&GradientMatrix::zeros(2));
        assert_eq!(z.b_block, J.scale(-1.0));
        assert_eq!(z.a_block, GradientMatrix::zeros(2));
    }

    #[test]
    fn perturbed_lift_breaks_unit_determinant() {
        // recorded only: det B_f = 1 is special to the area density
        let x = GradientMatrix::from_rows(vec![[0.7, -0.2], [0.4, 1.1]]).unwrap();
        let det = lift_f(&x, &PerturbedArea::quadratic(0.01)).b_block.det();
        assert!(det.is_finite());
        assert!((det - 1.0).abs() > 1e-6);
    }

    #[test]
    fn lift_derivative_matches_differences() {
        let x = GradientMatrix::from_rows(vec![[0.3, -0.8], [1.2, 0.5], [-0.4, 0.9]]).unwrap();
        let e = GradientMatrix::from_rows(vec![[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]]).unwrap();
        let t = 1e-6;
        let fd = lift(&x.axpy(t, &e))
            .to_stacked()
            .sub(&lift(&x.axpy(-t, &e)).to_stacked())
            .scale(0.5 / t);
        let an = lift_derivative(&x, &area_hessian(&x), &e).to_stacked();
        assert!(fd.sub(&an).norm() < 1e-8);
    }

    #[test]
    fn distance_of_members_and_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            for _ in 0..20 {
                let x = random_matrix(&mut rng, n, 3.0);
                let l = lift(&x).to_stacked();
                let d = dist_to_ca(&l).unwrap();
                assert!(d.distance < 1e-8);
                let noise: Vec<f64> = (0..l.n() * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let noise = GradientMatrix::from_flat(l.n(), &noise);
                let noise = noise.scale(1e-3 / noise.norm());
                let d = dist_to_ca(&l.add(&noise)).unwrap();
                assert!(d.distance <= 1e-3 + 1e-12);
                assert!(d.converged);
            }
        }
    }

    #[test]
    fn distance_rejects_bad_shapes() {
        assert!(dist_to_ca(&GradientMatrix::zeros(3)).is_err());
        assert!(dist_to_ca(&GradientMatrix::zeros(2)).is_err());
    }
}
