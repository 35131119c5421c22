use serde::{Deserialize, Serialize};

use super::h1h2::{in_h1, in_h2};
use super::polygon::{Point, Polygon};
use crate::error::{Error, Result};
use crate::matrix::GradientMatrix;
use crate::sampling::par_map;

/// `x -> matrix x + offset` from the plane into `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: GradientMatrix,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn linear(matrix: GradientMatrix) -> Self {
        let n = matrix.n();
        AffineMap {
            matrix,
            offset: vec![0.0; n],
        }
    }

    pub fn eval(&self, p: Point) -> Vec<f64> {
        self.matrix
            .rows()
            .iter()
            .zip(&self.offset)
            .map(|(r, o)| r[0] * p[0] + r[1] * p[1] + o)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub cell: Polygon,
    pub map: AffineMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineMap {
    pub domain: Polygon,
    pub pieces: Vec<AffinePiece>,
}

/// Result of the tiling and continuity audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingAudit {
    pub pieces: usize,
    /// `|sum of piece areas - domain area|`.
    pub area_error: f64,
    /// Largest pairwise overlap area.
    pub max_overlap: f64,
    /// Largest distance of a piece vertex outside the domain.
    pub max_outside: f64,
    /// Largest disagreement between pieces at shared vertices and edge
    /// midpoints.
    pub max_jump: f64,
    pub ok: bool,
}

/// Class of a piece gradient used for coloring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientClass {
    H1,
    H2,
    Other,
}

pub fn gradient_class(m: &GradientMatrix) -> GradientClass {
    match m.to_plane() {
        Some(p) if in_h1(&p) => GradientClass::H1,
        Some(p) if in_h2(&p) => GradientClass::H2,
        _ => GradientClass::Other,
    }
}

/// Uniform bucket grid over the domain bounding box for point location.
struct Buckets {
    lo: Point,
    size: [f64; 2],
    dims: [usize; 2],
    cells: Vec<Vec<u32>>,
}

impl Buckets {
    fn new(map: &PiecewiseAffineMap) -> Self {
        let (lo, hi) = map.domain.bbox();
        let m = map.pieces.len().max(1);
        let mut widths: Vec<f64> = Vec::with_capacity(m);
        let mut heights: Vec<f64> = Vec::with_capacity(m);
        for p in &map.pieces {
            let (a, b) = p.cell.bbox();
            widths.push(b[0] - a[0]);
            heights.push(b[1] - a[1]);
        }
        let median = |v: &mut Vec<f64>, span: f64| {
            if v.is_empty() {
                return span;
            }
            v.sort_by(f64::total_cmp);
            v[v.len() / 2].max(span * 1e-6)
        };
        let span = [hi[0] - lo[0], hi[1] - lo[1]];
        let mw = median(&mut widths, span[0]);
        let mh = median(&mut heights, span[1]);
        let cap = 4 * m;
        let mut dims = [
            ((span[0] / mw).ceil() as usize).clamp(1, cap),
            ((span[1] / mh).ceil() as usize).clamp(1, cap),
        ];
        while dims[0] * dims[1] > cap {
            if dims[0] >= dims[1] {
                dims[0] = (dims[0] / 2).max(1);
            } else {
                dims[1] = (dims[1] / 2).max(1);
            }
        }
        let size = [span[0] / dims[0] as f64, span[1] / dims[1] as f64];
        let mut b = Buckets {
            lo,
            size,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1]],
        };
        for (i, p) in map.pieces.iter().enumerate() {
            let (a, c) = p.cell.bbox();
            let (i0, j0) = b.index(a);
            let (i1, j1) = b.index(c);
            for ix in i0..=i1 {
                for jy in j0..=j1 {
                    b.cells[jy * dims[0] + ix].push(i as u32);
                }
            }
        }
        b
    }

    fn index(&self, p: Point) -> (usize, usize) {
        let f = |k: usize| {
            let t = ((p[k] - self.lo[k]) / self.size[k]).floor();
            (t.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (f(0), f(1))
    }

    fn near(&self, p: Point) -> &[u32] {
        let (i, j) = self.index(p);
        &self.cells[j * self.dims[0] + i]
    }
}

impl PiecewiseAffineMap {
    pub fn single(domain: Polygon, map: AffineMap) -> Self {
        PiecewiseAffineMap {
            pieces: vec![AffinePiece {
                cell: domain.clone(),
                map,
            }],
            domain,
        }
    }

    pub fn n(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.map.matrix.n())
    }

    /// Value at a point; the first piece containing it wins.
    pub fn eval(&self, p: Point) -> Option<Vec<f64>> {
        self.pieces
            .iter()
            .find(|q| q.cell.contains(p, 1e-12))
            .map(|q| q.map.eval(p))
    }

    /// Evaluator with a bucket index, for many queries.
    pub fn locator(&self) -> Locator<'_> {
        Locator {
            map: self,
            buckets: Buckets::new(self),
        }
    }

    pub fn audit_tiling(&self, tol: f64) -> TilingAudit {
        let dom_area = self.domain.area();
        let total: f64 = self.pieces.iter().map(|p| p.cell.area()).sum();
        let scale = self.domain.diameter().max(1e-300);
        let domain_edges = self.domain.inward_edges();
        let max_outside = self
            .pieces
            .iter()
            .flat_map(|p| p.cell.vertices().iter().copied())
            .flat_map(|v| {
                domain_edges
                    .iter()
                    .map(move |(nrm, off)| -(nrm[0] * v[0] + nrm[1] * v[1] - off))
            })
            .fold(0.0f64, f64::max);
        let buckets = Buckets::new(self);
        let per_piece: Vec<(f64, f64)> = par_map(self.pieces.len(), |i| {
            let p = &self.pieces[i];
            let mut overlap = 0.0f64;
            let mut jump = 0.0f64;
            let verts = p.cell.vertices();
            let m = verts.len();
            let mut probes: Vec<Point> = verts.to_vec();
            for k in 0..m {
                let (a, b) = (verts[k], verts[(k + 1) % m]);
                probes.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
            }
            let mut seen: Vec<u32> = Vec::new();
            for q in &probes {
                let own = p.map.eval(*q);
                for &j in buckets.near(*q) {
                    let other = &self.pieces[j as usize];
                    if j as usize == i || !other.cell.contains(*q, 1e-12 * scale) {
                        continue;
                    }
                    let val = other.map.eval(*q);
                    let d = own
                        .iter()
                        .zip(&val)
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    jump = jump.max(d);
                    if j as usize > i && !seen.contains(&j) {
                        seen.push(j);
                        overlap = overlap.max(p.cell.overlap_area(&other.cell));
                    }
                }
            }
            (overlap, jump)
        });
        let max_overlap = per_piece.iter().map(|x| x.0).fold(0.0, f64::max);
        let max_jump = per_piece.iter().map(|x| x.1).fold(0.0, f64::max);
        let area_error = (total - dom_area).abs();
        TilingAudit {
            pieces: self.pieces.len(),
            ok: area_error <= tol * dom_area.max(1.0)
                && max_overlap <= tol * dom_area.max(1.0)
                && max_outside <= tol * scale
                && max_jump <= tol * (1.0 + scale),
            area_error,
            max_overlap,
            max_outside,
            max_jump,
        }
    }

    /// Affine map through the domain vertices, verified on every piece
    /// vertex and edge midpoint lying on the domain boundary.
    pub fn boundary_affine(&self, tol: f64) -> Result<AffineMap> {
        let dv = self.domain.vertices();
        let n = self.n();
        let value = |p: Point| {
            self.eval(p)
                .ok_or_else(|| Error::Invalid(format!("domain vertex {p:?} is not covered")))
        };
        let (p0, p1) = (dv[0], dv[1]);
        let p2 = *dv[2..]
            .iter()
            .max_by(|a, b| {
                let area = |q: &Point| {
                    ((p1[0] - p0[0]) * (q[1] - p0[1]) - (p1[1] - p0[1]) * (q[0] - p0[0])).abs()
                };
                area(a).total_cmp(&area(b))
            })
            .expect("polygon has three vertices");
        let (f0, f1, f2) = (value(p0)?, value(p1)?, value(p2)?);
        let (e1, e2) = ([p1[0] - p0[0], p1[1] - p0[1]], [p2[0] - p0[0], p2[1] - p0[1]]);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let mut rows = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n);
        for k in 0..n {
            let (d1, d2) = (f1[k] - f0[k], f2[k] - f0[k]);
            let gx = (d1 * e2[1] - d2 * e1[1]) / det;
            let gy = (e1[0] * d2 - e2[0] * d1) / det;
            rows.push([gx, gy]);
            offset.push(f0[k] - gx * p0[0] - gy * p0[1]);
        }
        let aff = AffineMap {
            matrix: GradientMatrix::from_rows(rows)?,
            offset,
        };
        let err = self.boundary_trace_error(&aff);
        let scale = 1.0 + self.domain.diameter() * (1.0 + aff.matrix.norm());
        if err > tol * scale {
            return Err(Error::Invalid(format!(
                "boundary trace is not affine (mismatch {err:.3e})"
            )));
        }
        Ok(aff)
    }

    /// Largest deviation from `aff` over piece vertices and edge midpoints
    /// on the domain boundary.
    pub fn boundary_trace_error(&self, aff: &AffineMap) -> f64 {
        let scale = self.domain.diameter();
        let edges = self.domain.inward_edges();
        let on_boundary =
            |q: Point| edges.iter().any(|(nrm, off)| (nrm[0] * q[0] + nrm[1] * q[1] - off).abs() <= 1e-12 * scale);
        let mut worst = 0.0f64;
        for p in &self.pieces {
            let v = p.cell.vertices();
            let m = v.len();
            for k in 0..m {
                let (a, b) = (v[k], v[(k + 1) % m]);
                let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let mut probes = Vec::with_capacity(2);
                if on_boundary(a) {
                    probes.push(a);
                }
                if on_boundary(a) && on_boundary(b) && on_boundary(mid) {
                    probes.push(mid);
                }
                for q in probes {
                    let d = p
                        .map
                        .eval(q)
                        .iter()
                        .zip(aff.eval(q))
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    /// Largest `|f(x) - aff(x)|` over the domain, attained at piece vertices.
    pub fn sup_distance(&self, aff: &AffineMap) -> f64 {
        self.pieces
            .iter()
            .flat_map(|p| p.cell.vertices().iter().map(move |v| (p, *v)))
            .map(|(p, v)| {
                p.map
                    .eval(v)
                    .iter()
                    .zip(aff.eval(v))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// SVG drawing of the cells colored by gradient class.
    pub fn to_svg(&self, width_px: f64) -> String {
        let (lo, hi) = self.domain.bbox();
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let s = width_px / span;
        let h_px = (hi[1] - lo[1]) * s;
        let w_px = (hi[0] - lo[0]) * s;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w_px:.0}\" height=\"{h_px:.0}\" viewBox=\"0 0 {w_px:.3} {h_px:.3}\">\n"
        );
        for p in &self.pieces {
            let color = match gradient_class(&p.map.matrix) {
                GradientClass::H1 => "#d95f02",
                GradientClass::H2 => "#1b9e77",
                GradientClass::Other => "#7570b3",
            };
            let pts: Vec<String> = p
                .cell
                .vertices()
                .iter()
                .map(|v| format!("{:.4},{:.4}", (v[0] - lo[0]) * s, (hi[1] - v[1]) * s))
                .collect();
            out.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{color}\" stroke=\"none\"/>\n",
                pts.join(" ")
            ));
        }
        let dom: Vec<String> = self
            .domain
            .vertices()
            .iter()
            .map(|v| format!("{:.4},{:.4}", (v[0] - lo[0]) * s, (hi[1] - v[1]) * s))
            .collect();
        out.push_str(&format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n</svg>\n",
            dom.join(" ")
        ));
        out
    }
}

/// Point evaluation backed by a bucket grid.
pub struct Locator<'a> {
    map: &'a PiecewiseAffineMap,
    buckets: Buckets,
}

impl Locator<'_> {
    pub fn piece_at(&self, p: Point) -> Option<&AffinePiece> {
        self.buckets
            .near(p)
            .iter()
            .map(|&j| &self.map.pieces[j as usize])
            .find(|q| q.cell.contains(p, 1e-12))
    }

    pub fn eval(&self, p: Point) -> Option<Vec<f64>> {
        self.piece_at(p).map(|q| q.map.eval(p))
    }
}

/// Area fractions of pieces whose gradient is within `tol` of each target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStats {
    pub fractions: Vec<f64>,
    pub remainder: f64,
}

pub fn gradient_stats(map: &PiecewiseAffineMap, targets: &[GradientMatrix], tol: f64) -> GradientStats {
    let total = map.domain.area();
    let mut fractions = vec![0.0; targets.len()];
    for p in &map.pieces {
        if let Some(k) = targets
            .iter()
            .position(|t| t.n() == p.map.matrix.n() && t.sub(&p.map.matrix).norm() <= tol)
        {
            fractions[k] += p.cell.area() / total;
        }
    }
    let remainder = (1.0 - fractions.iter().sum::<f64>()).max(0.0);
    GradientStats {
        fractions,
        remainder,
    }
}

/// `sum over pieces of det((Df - A)^{ab}) |cell|` for every row pair, where
/// `A` is the gradient of the affine boundary trace. Returns the largest
/// absolute sum; it vanishes when the trace is affine.
pub fn null_lagrangian_check(map: &PiecewiseAffineMap) -> Result<f64> {
    let boundary = map.boundary_affine(1e-9)?;
    let n = map.n();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let s: f64 = map
                .pieces
                .iter()
                .map(|p| p.map.matrix.sub(&boundary.matrix).sub_rows(a, b).det() * p.cell.area())
                .sum();
            worst = worst.max(s.abs());
        }
    }
    Ok(worst)
}

/// Weak integrals `sum over pieces of G_P : (integral of n (x) phi over the
/// cell boundary)`, i.e. `integral of G : D phi` for piecewise constant `G`
/// paired with a scalar test function through the divergence theorem.
/// Edge integrals use 8-point Gauss-Legendre quadrature.
pub fn weak_divergence_pairing(
    cells: &[(Polygon, [[f64; 2]; 2])],
    phi: &dyn Fn(Point) -> f64,
) -> [f64; 2] {
    const NODES: [f64; 8] = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 8] = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    let mut out = [0.0; 2];
    for (cell, g) in cells {
        // integral over the cell of D phi, as the boundary integral of phi n
        let mut grad = [0.0; 2];
        for (a, b) in cell.edges() {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            // outward normal times length
            let nl = [dy, -dx];
            let mut acc = 0.0;
            for (xi, w) in NODES.iter().zip(WEIGHTS) {
                let s = 0.5 * (xi + 1.0);
                acc += w * phi([a[0] + s * dx, a[1] + s * dy]);
            }
            acc *= 0.5;
            grad[0] += acc * nl[0];
            grad[1] += acc * nl[1];
        }
        for r in 0..2 {
            out[r] += g[r][0] * grad[0] + g[r][1] * grad[1];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{PlaneMatrix, ID2};

    fn two_piece(shift: f64) -> PiecewiseAffineMap {
        let left = Polygon::rectangle(0.0, 0.0, 0.5, 1.0).unwrap();
        let right = Polygon::rectangle(0.5, 0.0, 1.0, 1.0).unwrap();
        let m = GradientMatrix::from_plane(&ID2);
        PiecewiseAffineMap {
            domain: Polygon::unit_square(),
            pieces: vec![
                AffinePiece { cell: left, map: AffineMap::linear(m.clone()) },
                AffinePiece {
                    cell: right,
                    map: AffineMap { matrix: m, offset: vec![shift, 0.0] },
                },
            ],
        }
    }

    #[test]
    fn single_piece_audits() {
        let m = GradientMatrix::from_plane(&PlaneMatrix::new(1.0, 2.0, 3.0, 4.0));
        let map = PiecewiseAffineMap::single(Polygon::unit_square(), AffineMap::linear(m.clone()));
        assert!(map.audit_tiling(1e-10).ok);
        assert_eq!(null_lagrangian_check(&map).unwrap(), 0.0);
        let s = gradient_stats(&map, std::slice::from_ref(&m), 1e-12);
        assert_eq!((s.fractions[0], s.remainder), (1.0, 0.0));
        assert_eq!(gradient_stats(&map, &[], 1e-12).remainder, 1.0);
        let aff = map.boundary_affine(1e-12).unwrap();
        assert!(aff.matrix.sub(&m).norm() < 1e-14);
    }

    #[test]
    fn discontinuity_is_detected() {
        assert!(two_piece(0.0).audit_tiling(1e-10).ok);
        let bad = two_piece(0.3);
        let audit = bad.audit_tiling(1e-10);
        assert!(!audit.ok);
        assert!((audit.max_jump - 0.3).abs() < 1e-14);
        assert!(null_lagrangian_check(&bad).is_err());
    }

    #[test]
    fn overlap_is_detected() {
        let mut map = two_piece(0.0);
        map.pieces[1].cell = Polygon::rectangle(0.4, 0.0, 1.0, 1.0).unwrap();
        let audit = map.audit_tiling(1e-10);
        assert!(!audit.ok);
        assert!(audit.max_overlap > 0.09);
    }

    #[test]
    fn weak_pairing_of_constant_field_vanishes() {
        let phi = |p: Point| (p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])).powi(2) * (3.0 * p[0]).exp();
        let map = two_piece(0.0);
        let cells: Vec<_> = map
            .pieces
            .iter()
            .map(|p| (p.cell.clone(), [[1.0, 2.0], [3.0, 4.0]]))
            .collect();
        let r = weak_divergence_pairing(&cells, &phi);
        assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15);
        // a jump of G across x = 1/2 leaves the line integral of phi
        let jumped = vec![
            (cells[0].0.clone(), [[0.0, 0.0], [0.0, 0.0]]),
            (cells[1].0.clone(), [[1.0, 0.0], [0.0, 0.0]]),
        ];
        assert!(weak_divergence_pairing(&jumped, &phi)[0].abs() > 1e-4);
    }

    #[test]
    fn svg_and_json() {
        let map = two_piece(0.0);
        let svg = map.to_svg(200.0);
        assert!(svg.starts_with("<svg") && svg.matches("<polygon").count() == 3);
        let text = serde_json::to_string(&map).unwrap();
        let back: PiecewiseAffineMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, map);
        assert_eq!(map.locator().eval([0.75, 0.5]).unwrap(), vec![0.75, 0.5]);
    }
}
