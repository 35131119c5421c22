//! Simple laminates: a sawtooth oscillating between two rank-one connected
//! gradients, cut off to the barycentric affine map near the boundary.

use serde::{Deserialize, Serialize};

use super::h1h2::{in_h1, in_h2, rank_one_connection, RankOneConnection};
use super::map::{
    gradient_stats, null_lagrangian_check, weak_divergence_pairing, AffineMap, AffinePiece,
    PiecewiseAffineMap, TilingAudit,
};
use super::polygon::{HalfPlane, Point, Polygon};
use crate::area::{area_density, area_gradient, field_b};
use crate::error::{Error, Result};
use crate::matrix::{GradientMatrix, PlaneMatrix, J};

/// Upper bound on emitted pieces.
pub const MAX_PIECES: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateSpec {
    pub b: GradientMatrix,
    pub c: GradientMatrix,
    pub t: f64,
    pub epsilon: f64,
}

impl LaminateSpec {
    pub fn new(b: GradientMatrix, c: GradientMatrix, t: f64, epsilon: f64) -> Result<Self> {
        let spec = LaminateSpec { b, c, t, epsilon };
        spec.connection()?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Invalid(format!("weight t = {t} outside [0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Invalid(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(spec)
    }

    /// The barycenter `t B + (1 - t) C`.
    pub fn a(&self) -> GradientMatrix {
        self.b.scale(self.t).add(&self.c.scale(1.0 - self.t))
    }

    pub fn connection(&self) -> Result<RankOneConnection> {
        rank_one_connection(&self.b, &self.c)
            .ok_or_else(|| Error::Invalid("B - C does not have rank one".into()))
    }
}

/// The four guarantees of a laminate and the supporting measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateAudit {
    /// Largest `|f(x) - A x|` on the domain boundary.
    pub boundary_error: f64,
    /// Largest `|f(x) - A x|` on the domain.
    pub sup_error: f64,
    /// Largest distance of a piece gradient from the segment `[B, C]`.
    pub max_segment_distance: f64,
    pub fraction_b: f64,
    pub fraction_c: f64,
    pub null_lagrangian: f64,
    pub tiling: TilingAudit,
    pub boundary_ok: bool,
    pub sup_ok: bool,
    pub segment_ok: bool,
    pub fractions_ok: bool,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Laminate {
    pub spec: LaminateSpec,
    pub map: PiecewiseAffineMap,
    pub period: f64,
    pub periods: usize,
    pub collar_slope: f64,
    pub audit: LaminateAudit,
}

/// Affine scalar `w . x + c0`.
#[derive(Clone, Copy, Debug)]
struct Affine1 {
    w: [f64; 2],
    c0: f64,
}

impl Affine1 {
    fn eval(&self, p: Point) -> f64 {
        self.w[0] * p[0] + self.w[1] * p[1] + self.c0
    }

    /// `{self <= other}`.
    fn below(&self, other: &Affine1) -> HalfPlane {
        HalfPlane {
            normal: [self.w[0] - other.w[0], self.w[1] - other.w[1]],
            offset: other.c0 - self.c0,
        }
    }
}

fn segment_distance(g: &GradientMatrix, b: &GradientMatrix, c: &GradientMatrix) -> f64 {
    let d = b.sub(c);
    let s = (g.sub(c).inner(&d) / d.norm_sq()).clamp(0.0, 1.0);
    g.sub(&c.axpy(s, &d)).norm()
}

struct Layout {
    xi_min: f64,
    length: f64,
    collars: Vec<Affine1>,
    kappa: f64,
}

fn layout(spec: &LaminateSpec, conn: &RankOneConnection, domain: &Polygon, collars: bool) -> Layout {
    let b = conn.b;
    let xi: Vec<f64> = domain
        .vertices()
        .iter()
        .map(|v| b[0] * v[0] + b[1] * v[1])
        .collect();
    let xi_min = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let xi_max = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // slope of the cut-off, kept a little under eps / |B - C|
    let kappa = 0.95 * spec.epsilon / conn.scale;
    let collars = if collars {
        domain
            .inward_edges()
            .into_iter()
            .filter(|(nrm, _)| (nrm[0] * b[1] - nrm[1] * b[0]).abs() > 1e-12)
            .map(|(nrm, off)| Affine1 {
                w: [kappa * nrm[0], kappa * nrm[1]],
                c0: -kappa * off,
            })
            .collect()
    } else {
        Vec::new()
    };
    Layout {
        xi_min,
        length: xi_max - xi_min,
        collars,
        kappa,
    }
}

fn emit_pieces(
    spec: &LaminateSpec,
    conn: &RankOneConnection,
    domain: &Polygon,
    lay: &Layout,
    periods: usize,
) -> Vec<AffinePiece> {
    let (t, b) = (spec.t, conn.b);
    let a_mat = spec.a();
    let sa: Vec<f64> = conn.a.iter().map(|x| conn.scale * x).collect();
    let piece_map = |phi: &Affine1, exact: Option<&GradientMatrix>| AffineMap {
        matrix: exact
            .cloned()
            .unwrap_or_else(|| a_mat.add(&GradientMatrix::outer(&sa, phi.w))),
        offset: sa.iter().map(|x| x * phi.c0).collect(),
    };
    let mut pieces = Vec::new();
    for k in 0..periods {
        let xs = lay.xi_min + lay.length * k as f64 / periods as f64;
        let xe = lay.xi_min + lay.length * (k + 1) as f64 / periods as f64;
        let xm = xs + t * (xe - xs);
        let layers = [
            // rising part with gradient B
            (xs, xm, Affine1 { w: [(1.0 - t) * b[0], (1.0 - t) * b[1]], c0: -(1.0 - t) * xs }, &spec.b),
            // falling part with gradient C
            (xm, xe, Affine1 { w: [-t * b[0], -t * b[1]], c0: t * xe }, &spec.c),
        ];
        for (lo, hi, saw, exact) in layers {
            if hi <= lo {
                continue;
            }
            let strip = domain.clip_all(&[
                HalfPlane { normal: [-b[0], -b[1]], offset: -lo },
                HalfPlane { normal: b, offset: hi },
            ]);
            let Some(strip) = strip else { continue };
            let verts = strip.vertices();
            let saw_max = verts.iter().map(|v| saw.eval(*v)).fold(f64::NEG_INFINITY, f64::max);
            let active: Vec<&Affine1> = lay
                .collars
                .iter()
                .filter(|g| verts.iter().map(|v| g.eval(*v)).fold(f64::INFINITY, f64::min) < saw_max)
                .collect();
            let cut: Vec<HalfPlane> = active.iter().map(|g| saw.below(g)).collect();
            if let Some(cell) = strip.clip_all(&cut) {
                pieces.push(AffinePiece { cell, map: piece_map(&saw, Some(exact)) });
            }
            for (i, g) in active.iter().enumerate() {
                let mut hps = vec![g.below(&saw)];
                hps.extend(
                    active
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, o)| g.below(o)),
                );
                if let Some(cell) = strip.clip_all(&hps) {
                    pieces.push(AffinePiece { cell, map: piece_map(g, None) });
                }
            }
        }
    }
    pieces
}

/// Audits a laminate map against its spec.
pub fn audit_laminate(spec: &LaminateSpec, map: &PiecewiseAffineMap) -> Result<LaminateAudit> {
    let eps = spec.epsilon;
    let a = AffineMap::linear(spec.a());
    let scale = 1.0 + map.domain.diameter() * (1.0 + spec.a().norm());
    let boundary_error = map.boundary_trace_error(&a);
    let sup_error = map.sup_distance(&a);
    let max_segment_distance = map
        .pieces
        .iter()
        .map(|p| segment_distance(&p.map.matrix, &spec.b, &spec.c))
        .fold(0.0, f64::max);
    let tol = 1e-12 * (1.0 + spec.b.norm().max(spec.c.norm()));
    let stats = gradient_stats(map, &[spec.b.clone(), spec.c.clone()], tol);
    let (fraction_b, fraction_c) = if spec.b.sub(&spec.c).norm() <= tol {
        (stats.fractions[0], stats.fractions[0])
    } else {
        (stats.fractions[0], stats.fractions[1])
    };
    let tiling = map.audit_tiling(1e-10);
    let null_lagrangian = null_lagrangian_check(map)?;
    let boundary_ok = boundary_error <= 1e-12 * scale;
    let sup_ok = sup_error <= eps;
    let segment_ok = max_segment_distance <= eps;
    let slack = 1e-12;
    let fractions_ok = fraction_b >= (1.0 - eps) * spec.t - slack
        && fraction_c >= (1.0 - eps) * (1.0 - spec.t) - slack;
    Ok(LaminateAudit {
        passes: boundary_ok && sup_ok && segment_ok && fractions_ok && tiling.ok,
        boundary_error,
        sup_error,
        max_segment_distance,
        fraction_b,
        fraction_c,
        null_lagrangian,
        tiling,
        boundary_ok,
        sup_ok,
        segment_ok,
        fractions_ok,
    })
}

/// Builds `f(x) = A x + s a min(h(b . x), kappa dist(x, edges))` where
/// `B - C = s a (x) b`, `h` is a sawtooth with slopes `1 - t` and `-t`, and
/// the collar slope `kappa` keeps gradients within `eps` of `[B, C]`.
///
/// The period starts from the area budget of the collar (it scales like
/// `eps^2`), is aligned so that layer-parallel edges need no collar, and is
/// halved until the audit passes.
pub fn build_laminate(spec: &LaminateSpec, domain: &Polygon) -> Result<Laminate> {
    let conn = spec.connection()?;
    let t = spec.t;
    let eps = spec.epsilon;
    let lay = layout(spec, &conn, domain, true);
    let finish = |map: PiecewiseAffineMap, period: f64, periods: usize| -> Result<Laminate> {
        let audit = audit_laminate(spec, &map)?;
        Ok(Laminate {
            spec: spec.clone(),
            map,
            period,
            periods,
            collar_slope: lay.kappa,
            audit,
        })
    };
    if t == 0.0 || t == 1.0 {
        let m = if t == 1.0 { spec.b.clone() } else { spec.c.clone() };
        return finish(
            PiecewiseAffineMap::single(domain.clone(), AffineMap::linear(m)),
            lay.length,
            1,
        );
    }
    let spread = t * (1.0 - t);
    let sup_period = eps / (conn.scale * spread);
    let collar_length: f64 = domain
        .edges()
        .zip(domain.inward_edges())
        .filter(|(_, (nrm, _))| (nrm[0] * conn.b[1] - nrm[1] * conn.b[0]).abs() > 1e-12)
        .map(|((p, q), _)| (q[0] - p[0]).hypot(q[1] - p[1]))
        .sum();
    // collar area per unit edge length is spread * P / (2 kappa); each
    // phase loses its own share, so both fractions stay within eps when
    // perimeter * spread * P / (2 kappa) <= eps |domain|
    let area_period = if collar_length > 0.0 {
        2.0 * lay.kappa * eps * domain.area() / (spread * collar_length)
    } else {
        f64::INFINITY
    };
    let period = 0.5 * sup_period.min(area_period);
    let mut periods = ((lay.length / period).ceil() as usize).max(1);
    let pieces_per_strip = 1 + lay.collars.len();
    loop {
        let estimate = 2 * periods * pieces_per_strip;
        if estimate > MAX_PIECES {
            return Err(Error::Infeasible {
                message: format!(
                    "{periods} periods would need about {estimate} pieces (cap {MAX_PIECES})"
                ),
                min_epsilon: eps * (estimate as f64 / MAX_PIECES as f64).sqrt(),
            });
        }
        let pieces = emit_pieces(spec, &conn, domain, &lay, periods);
        let map = PiecewiseAffineMap {
            domain: domain.clone(),
            pieces,
        };
        let lam = finish(map, lay.length / periods as f64, periods)?;
        if lam.audit.passes {
            return Ok(lam);
        }
        if !(lam.audit.tiling.ok && lam.audit.boundary_ok && lam.audit.segment_ok) {
            return Err(Error::Numerical(format!(
                "laminate audit failed structurally: {:?}",
                lam.audit
            )));
        }
        periods *= 2;
    }
}

/// Audit of the H1/H2 laminate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalMapAudit {
    pub gradients_in_h1_h2: bool,
    pub max_b_error: f64,
    pub distinct_gradients: usize,
    pub fractions: Vec<f64>,
    /// Weak curl of `B(D psi)` against each test function, per row.
    pub weak_curl_b: Vec<[f64; 2]>,
    /// Weak divergence of `(D psi)^T DA(D psi) - A(D psi) Id`.
    pub weak_inner: Vec<[f64; 2]>,
    /// Weak divergence of `DA(D psi)`; not small since `DA` jumps.
    pub weak_outer: Vec<[f64; 2]>,
    pub not_affine: bool,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalMap {
    pub map: PiecewiseAffineMap,
    pub period: f64,
    pub audit: CriticalMapAudit,
}

/// The five smooth test functions, each vanishing on the domain boundary.
pub fn test_functions(domain: &Polygon) -> Vec<Box<dyn Fn(Point) -> f64 + Send + Sync>> {
    let edges = domain.inward_edges();
    let c = domain.centroid();
    let raw = move |p: Point| -> f64 {
        edges
            .iter()
            .map(|(nrm, off)| (nrm[0] * p[0] + nrm[1] * p[1] - off).powi(2))
            .product::<f64>()
    };
    // unit height at the centroid
    let peak = raw(c);
    let bump = move |p: Point| raw(p) / peak;
    let shapes: [fn(f64, f64) -> f64; 5] = [
        |_, _| 1.0,
        |x, _| x,
        |_, y| 1.0 + y * y,
        |x, y| (3.0 * x).sin() * (2.0 * y).cos(),
        |x, y| (x - y).exp(),
    ];
    shapes
        .into_iter()
        .map(|q| {
            let bump = bump.clone();
            Box::new(move |p: Point| bump(p) * q(p[0] - c[0], p[1] - c[1]))
                as Box<dyn Fn(Point) -> f64 + Send + Sync>
        })
        .collect()
}

/// Pure sawtooth between `((1,0),(0,-1))` in `H1` and `-Id` in `H2` with
/// weights one half, staying within `eps` of the barycentric affine map.
/// Every gradient lies in `H1 u H2`, so `B(D psi) = -J` throughout.
pub fn h1h2_critical_map(domain: &Polygon, eps: f64) -> Result<CriticalMap> {
    let b0 = GradientMatrix::from_plane(&PlaneMatrix::new(1.0, 0.0, 0.0, -1.0));
    let c0 = GradientMatrix::from_plane(&PlaneMatrix::new(-1.0, 0.0, 0.0, -1.0));
    let spec = LaminateSpec::new(b0.clone(), c0.clone(), 0.5, eps)?;
    let conn = spec.connection()?;
    let lay = layout(&spec, &conn, domain, false);
    let period = eps / (conn.scale * 0.25);
    let periods = ((lay.length / period).ceil() as usize).max(1);
    if 2 * periods > MAX_PIECES {
        return Err(Error::Infeasible {
            message: format!("{periods} periods exceed the piece cap"),
            min_epsilon: eps * (2 * periods) as f64 / MAX_PIECES as f64,
        });
    }
    let map = PiecewiseAffineMap {
        domain: domain.clone(),
        pieces: emit_pieces(&spec, &conn, domain, &lay, periods),
    };
    let audit = audit_critical_map(&map, &b0, &c0);
    Ok(CriticalMap {
        map,
        period: lay.length / periods as f64,
        audit,
    })
}

pub fn audit_critical_map(map: &PiecewiseAffineMap, b0: &GradientMatrix, c0: &GradientMatrix) -> CriticalMapAudit {
    let planes: Vec<PlaneMatrix> = map
        .pieces
        .iter()
        .filter_map(|p| p.map.matrix.to_plane())
        .collect();
    let gradients_in_h1_h2 =
        planes.len() == map.pieces.len() && planes.iter().all(|m| in_h1(m) || in_h2(m));
    let minus_j = J.scale(-1.0);
    let max_b_error = map
        .pieces
        .iter()
        .map(|p| field_b(&p.map.matrix).sub(&minus_j).norm())
        .fold(0.0, f64::max);
    let mut distinct: Vec<&GradientMatrix> = Vec::new();
    for p in &map.pieces {
        if !distinct.iter().any(|g| g.sub(&p.map.matrix).norm() <= 1e-12) {
            distinct.push(&p.map.matrix);
        }
    }
    let stats = gradient_stats(map, &[b0.clone(), c0.clone()], 1e-12);
    let cells_with = |field: &dyn Fn(&GradientMatrix) -> [[f64; 2]; 2]| -> Vec<(Polygon, [[f64; 2]; 2])> {
        map.pieces
            .iter()
            .map(|p| (p.cell.clone(), field(&p.map.matrix)))
            .collect()
    };
    // rows of B J^T pair with D phi to give the weak curl of the rows of B
    let curl_cells = cells_with(&|x| field_b(x).mul(&J.transpose()).0);
    let inner_cells = cells_with(&|x| {
        x.t_mul(&area_gradient(x))
            .sub(&crate::matrix::ID2.scale(area_density(x)))
            .0
    });
    let outer_cells = cells_with(&|x| {
        let d = area_gradient(x);
        [d.rows()[0], d.rows()[1]]
    });
    let tests = test_functions(&map.domain);
    let run = |cells: &[(Polygon, [[f64; 2]; 2])]| -> Vec<[f64; 2]> {
        tests.iter().map(|phi| weak_divergence_pairing(cells, phi.as_ref())).collect()
    };
    let weak_curl_b = run(&curl_cells);
    let weak_inner = run(&inner_cells);
    let weak_outer = run(&outer_cells);
    let small = |v: &[[f64; 2]]| v.iter().flatten().all(|x| x.abs() <= 1e-8);
    let with_area = stats.fractions.iter().filter(|f| **f > 0.0).count();
    let not_affine = distinct.len() >= 2 && with_area >= 2;
    CriticalMapAudit {
        passes: gradients_in_h1_h2
            && max_b_error <= 1e-10
            && small(&weak_curl_b)
            && small(&weak_inner)
            && not_affine,
        gradients_in_h1_h2,
        max_b_error,
        distinct_gradients: distinct.len(),
        fractions: stats.fractions,
        weak_curl_b,
        weak_inner,
        weak_outer,
        not_affine,
    }
}
