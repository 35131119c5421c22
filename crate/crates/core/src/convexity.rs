//! Second variations along rank-one directions: the Legendre-Hadamard gap of
//! the area density, its perturbations, uniform convexity along rank-one
//! lines, and the `C^2` distance between densities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::area::{area_density, area_gradient, area_hessian, subminor_dets, EnergyDensity};
use crate::error::{Error, Result};
use crate::matrix::GradientMatrix;
use crate::sampling::{ball_matrix, par_max, par_min, rng_for, unit_vector};

/// A unit rank-one matrix `a (x) b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneDirection {
    pub a: Vec<f64>,
    pub b: [f64; 2],
    pub matrix: GradientMatrix,
}

impl RankOneDirection {
    /// Normalizes `a` and `b`; fails if either vanishes.
    pub fn new(a: &[f64], b: [f64; 2]) -> Result<Self> {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b[0].hypot(b[1]);
        if !(na > 0.0 && nb > 0.0 && na.is_finite() && nb.is_finite()) {
            return Err(Error::Invalid("rank-one factors must be nonzero".into()));
        }
        let a: Vec<f64> = a.iter().map(|x| x / na).collect();
        let b = [b[0] / nb, b[1] / nb];
        Ok(RankOneDirection {
            matrix: GradientMatrix::outer(&a, b),
            a,
            b,
        })
    }

    pub fn sample(rng: &mut impl Rng, n: usize) -> Self {
        let a = unit_vector(rng, n);
        let b = unit_vector(rng, 2);
        Self::new(&a, [b[0], b[1]]).expect("unit factors")
    }

    /// Factorizes a unit-norm rank-one matrix.
    pub fn from_matrix(m: &GradientMatrix) -> Result<Self> {
        if (m.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("direction has norm {}", m.norm())));
        }
        let (_, s2) = m.singular_values();
        if s2 > 1e-12 {
            return Err(Error::Invalid(format!(
                "direction is not rank one (second singular value {s2:.3e})"
            )));
        }
        // the largest row carries the b factor
        let (i, _) = m
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r[0].hypot(r[1])))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let b = m.rows()[i];
        let nb = b[0].hypot(b[1]);
        let a: Vec<f64> = m
            .rows()
            .iter()
            .map(|r| (r[0] * b[0] + r[1] * b[1]) / nb)
            .collect();
        let mut dir = Self::new(&a, b)?;
        dir.matrix = m.clone();
        Ok(dir)
    }
}

/// `D^2 f(X)[Y, Y]`: the analytic Hessian when `f` has one, otherwise the
/// second difference of `t -> f(X + tY)` at steps `1e-3` and `1e-4`, which
/// must agree to `1e-4` relative.
pub fn second_variation(f: &dyn EnergyDensity, x: &GradientMatrix, y: &GradientMatrix) -> Result<f64> {
    if x.n() != y.n() {
        return Err(Error::Shape(format!("{} rows vs {} rows", x.n(), y.n())));
    }
    if let Some(h) = f.analytic_hessian(x) {
        return Ok(h.bilinear(y, y));
    }
    let phi0 = f.value(x);
    let second = |t: f64| (f.value(&x.axpy(t, y)) - 2.0 * phi0 + f.value(&x.axpy(-t, y))) / (t * t);
    let (coarse, fine) = (second(1e-3), second(1e-4));
    let scale = coarse.abs().max(fine.abs()).max(1e-3 * y.norm_sq());
    if (coarse - fine).abs() > 1e-4 * scale {
        return Err(Error::Numerical(format!(
            "second differences disagree: {coarse} at 1e-3, {fine} at 1e-4"
        )));
    }
    // Richardson extrapolation of the O(t^2) error
    Ok(fine + (fine - coarse) / 99.0)
}

/// Terms of `s'(0) g(0)^2 - s(0)^2` for `g(t) = A(X + tY)` along a unit
/// rank-one `Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhGap {
    /// `sum <X^{ab}, cof(Y^{ab})^T>^2`.
    pub a: f64,
    /// `sum det(X^{ab}) <X^{ab}, cof(Y^{ab})^T>`.
    pub b: f64,
    /// `|X|^2 - <X,Y>^2`, `A det(X^T X) - B^2` and
    /// `det(X^T X) + A |X|^2 - 2 <X,Y> B`.
    pub brackets: [f64; 3],
    /// `s'(0) g(0)^2 - s(0)^2`.
    pub numerator: f64,
    /// `numerator - 1`.
    pub gap: f64,
}

impl LhGap {
    /// `g''(0) = numerator / g(0)^3`.
    pub fn second_derivative(&self, x: &GradientMatrix) -> f64 {
        self.numerator / area_density(x).powi(3)
    }
}

/// Closed form of the Legendre-Hadamard numerator for the area density.
pub fn lh_gap_area(x: &GradientMatrix, dir: &RankOneDirection) -> Result<LhGap> {
    let y = &dir.matrix;
    if x.n() != y.n() {
        return Err(Error::Shape(format!("{} rows vs {} rows", x.n(), y.n())));
    }
    let mut a = 0.0;
    let mut b = 0.0;
    let mut dsq = 0.0;
    for ((i, j), d) in subminor_dets(x) {
        let c = x.sub_rows(i, j).inner(&y.sub_rows(i, j).cof().transpose());
        a += c * c;
        b += d * c;
        dsq += d * d;
    }
    let xx = x.norm_sq();
    let xy = x.inner(y);
    let yy = y.norm_sq();
    let brackets = [
        xx * yy - xy * xy,
        a * dsq - b * b,
        dsq + a * xx - 2.0 * xy * b,
    ];
    let numerator = (yy + a) * (1.0 + xx + dsq) - (xy + b).powi(2);
    Ok(LhGap {
        a,
        b,
        brackets,
        numerator,
        gap: numerator - 1.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhReport {
    pub label: String,
    pub region_radius: f64,
    pub tau: f64,
    pub worst_x: GradientMatrix,
    pub worst_dir: RankOneDirection,
    pub samples: u64,
    pub positive: bool,
}

fn lh_campaign(
    f: &dyn EnergyDensity,
    r: f64,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<LhReport> {
    let outer = 1.5 * r;
    let best = par_min(samples, |i| {
        let mut rng = rng_for(seed, i);
        let x = ball_matrix(&mut rng, i, n, outer);
        let dir = RankOneDirection::sample(&mut rng, n);
        let v = second_variation(f, &x, &dir.matrix).unwrap_or(f64::NAN);
        Some((v, (x, dir)))
    })
    .ok_or_else(|| Error::Invalid("no samples requested".into()))?;
    if best.0.is_nan() {
        let (x, dir) = &best.2;
        return Err(second_variation(f, x, &dir.matrix).err().unwrap_or_else(|| {
            Error::Numerical("second variation is NaN".into())
        }));
    }
    let (worst_x, worst_dir) = best.2;
    Ok(LhReport {
        label: f.label(),
        region_radius: r,
        tau: best.0,
        worst_x,
        worst_dir,
        samples,
        positive: best.0 > 0.0,
    })
}

/// Sampled Legendre-Hadamard constant of the area density on the ball of
/// radius `3R/2`.
pub fn tau_estimate(r: f64, n: usize, samples: u64, seed: u64) -> Result<LhReport> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius {r} must be positive")));
    }
    let report = lh_campaign(&crate::area::Area, r, n, samples, seed)?;
    if !report.positive {
        return Err(Error::Numerical(format!("tau({r}) = {} is not positive", report.tau)));
    }
    Ok(report)
}

/// Sampled Legendre-Hadamard constant of a general density; a nonpositive
/// value is reported through `positive`, not as an error.
pub fn perturbed_lh_check(
    f: &dyn EnergyDensity,
    r: f64,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<LhReport> {
    lh_campaign(f, r, n, samples, seed)
}

/// Checks `phi(t a + (1-t) b) <= t phi(a) + (1-t) phi(b) - t (1-t) mu |a-b|^2`
/// for `phi(s) = f(X + s Y)` on every ordered triple of grid points.
pub fn mu_rank_one_test(
    f: &dyn EnergyDensity,
    x: &GradientMatrix,
    dir: &RankOneDirection,
    mu: f64,
    grid: &[f64],
) -> Result<bool> {
    if grid.len() < 3 || grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::Invalid("t-grid needs at least 3 finite points".into()));
    }
    let mut pts = grid.to_vec();
    pts.sort_by(f64::total_cmp);
    let phi: Vec<f64> = pts.iter().map(|&s| f.value(&x.axpy(s, &dir.matrix))).collect();
    for i in 0..pts.len() {
        for j in i + 2..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            for k in i + 1..j {
                let t = (b - pts[k]) / (b - a);
                let rhs = t * phi[i] + (1.0 - t) * phi[j] - t * (1.0 - t) * mu * (a - b).powi(2);
                if phi[k] > rhs + 1e-10 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Spectral norm of a symmetric matrix by power iteration from 20 random
/// unit starts.
fn sym_operator_norm(data: &[f64], dim: usize, seed: u64) -> f64 {
    let mut rng = rng_for(seed, 0);
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|i| (0..dim).map(|j| data[i * dim + j] * v[j]).sum())
            .collect()
    };
    let mut best = 0.0f64;
    for _ in 0..20 {
        let mut v = unit_vector(&mut rng, dim);
        let mut est = 0.0;
        for _ in 0..40 {
            let w = apply(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            est = norm;
            if norm == 0.0 {
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        best = best.max(est);
    }
    best
}

/// Grid estimate of `sup |f - A| + sup |Df - DA| + sup |D^2 f - D^2 A|` over
/// the ball of radius `2R` in `R^{n x 2}`, on the cubic lattice of the given
/// step. A grid maximum is a lower bound of the supremum.
pub fn c2_distance(f: &dyn EnergyDensity, r: f64, n: usize, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0) {
        return Err(Error::Invalid(format!("grid step {grid_step} must be positive")));
    }
    let outer = 2.0 * r;
    let m = (outer / grid_step).floor() as i64;
    let per_axis = (2 * m + 1) as u64;
    let dim = 2 * n;
    let total = per_axis
        .checked_pow(dim as u32)
        .filter(|t| *t <= 50_000_000)
        .ok_or_else(|| Error::Invalid("grid too fine for this dimension".into()))?;
    let point = |mut idx: u64| -> Option<GradientMatrix> {
        let mut v = vec![0.0; dim];
        for c in v.iter_mut() {
            *c = ((idx % per_axis) as i64 - m) as f64 * grid_step;
            idx /= per_axis;
        }
        let x = GradientMatrix::from_flat(n, &v);
        (x.norm() <= outer * (1.0 + 1e-12)).then_some(x)
    };
    let sup = |g: &(dyn Fn(&GradientMatrix) -> f64 + Sync)| {
        par_max(total, |i| point(i).map(|x| (g(&x), ())))
            .map(|b| b.0)
            .unwrap_or(0.0)
    };
    let d0 = sup(&|x| (f.value(x) - area_density(x)).abs());
    let d1 = sup(&|x| f.gradient(x).sub(&area_gradient(x)).norm());
    let d2 = sup(&|x| {
        let hf = f.hessian(x);
        let ha = area_hessian(x);
        let diff: Vec<f64> = hf.data.iter().zip(&ha.data).map(|(a, b)| a - b).collect();
        sym_operator_norm(&diff, dim, 17)
    });
    Ok(d0 + d1 + d2)
}
