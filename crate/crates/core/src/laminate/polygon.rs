use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Closed half-plane `{x : normal . x <= offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfPlane {
    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] - self.offset
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = Error;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        Polygon::convex(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

pub fn shoelace(v: &[Point]) -> f64 {
    let m = v.len();
    (0..m)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % m]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

impl Polygon {
    /// Validates a convex polygon with positive area; clockwise input is
    /// reversed.
    pub fn convex(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 || vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Invalid(
                "polygon needs at least 3 finite vertices".into(),
            ));
        }
        let area = shoelace(&vertices);
        if area.abs() <= 1e-300 {
            return Err(Error::Invalid("degenerate polygon".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let m = vertices.len();
        let scale = area.abs();
        for i in 0..m {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross < -1e-12 * scale {
                return Err(Error::Invalid("polygon is not convex".into()));
            }
        }
        Ok(Polygon { vertices })
    }

    /// Polygon without validation, for clipping output.
    pub(crate) fn raw(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::convex(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let m = self.vertices.len();
        (0..m).map(move |i| (self.vertices[i], self.vertices[(i + 1) % m]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .sum()
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d = 0.0f64;
        for a in v {
            for b in v {
                d = d.max((b[0] - a[0]).hypot(b[1] - a[1]));
            }
        }
        d
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let m = v.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..m {
            let (a, b) = (v[i], v[(i + 1) % m]);
            let w = a[0] * b[1] - a[1] * b[0];
            cx += (a[0] + b[0]) * w;
            cy += (a[1] + b[1]) * w;
        }
        let a6 = 6.0 * self.area();
        [cx / a6, cy / a6]
    }

    /// Inward unit normal and offset of each edge: `normal . x - offset` is
    /// the distance to the edge line, positive inside.
    pub fn inward_edges(&self) -> Vec<([f64; 2], f64)> {
        self.edges()
            .map(|(a, b)| {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                let nrm = [-dy / len, dx / len];
                (nrm, nrm[0] * a[0] + nrm[1] * a[1])
            })
            .collect()
    }

    /// Membership up to an absolute slack.
    pub fn contains(&self, p: Point, slack: f64) -> bool {
        self.inward_edges()
            .iter()
            .all(|(nrm, off)| nrm[0] * p[0] + nrm[1] * p[1] - off >= -slack)
    }

    /// Sutherland-Hodgman clip against a half-plane; `None` when nothing of
    /// positive area remains.
    pub fn clip(&self, hp: &HalfPlane) -> Option<Polygon> {
        let v = &self.vertices;
        let m = v.len();
        let vals: Vec<f64> = v.iter().map(|p| hp.eval(*p)).collect();
        if vals.iter().all(|&x| x <= 0.0) {
            return Some(self.clone());
        }
        let mut out = Vec::with_capacity(m + 1);
        for i in 0..m {
            let j = (i + 1) % m;
            let (p, q) = (v[i], v[j]);
            let (fp, fq) = (vals[i], vals[j]);
            if fp <= 0.0 {
                out.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                let s = fp / (fp - fq);
                out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        out.dedup_by(|a, b| a == b);
        while out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        if out.len() < 3 || shoelace(&out) <= 0.0 {
            return None;
        }
        Some(Polygon::raw(out))
    }

    pub fn clip_all(&self, hps: &[HalfPlane]) -> Option<Polygon> {
        let mut cur = self.clone();
        for hp in hps {
            cur = cur.clip(hp)?;
        }
        Some(cur)
    }

    /// Area of the intersection with another convex polygon.
    pub fn overlap_area(&self, other: &Polygon) -> f64 {
        let hps: Vec<HalfPlane> = other
            .inward_edges()
            .into_iter()
            .map(|(nrm, off)| HalfPlane {
                normal: [-nrm[0], -nrm[1]],
                offset: -off,
            })
            .collect();
        self.clip_all(&hps).map_or(0.0, |p| p.area())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_basics() {
        let s = Polygon::unit_square();
        assert_eq!(s.area(), 1.0);
        assert_eq!(s.perimeter(), 4.0);
        assert_eq!(s.diameter(), 2f64.sqrt());
        assert_eq!(s.centroid(), [0.5, 0.5]);
        assert!(s.contains([0.5, 0.5], 0.0));
        assert!(!s.contains([1.5, 0.5], 1e-12));
    }

    #[test]
    fn orientation_and_convexity() {
        let cw = Polygon::convex(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(cw.area(), 1.0);
        assert!(Polygon::convex(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [1.0, 1.0]]).is_err());
        assert!(Polygon::convex(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
    }

    #[test]
    fn clipping() {
        let s = Polygon::unit_square();
        let half = s
            .clip(&HalfPlane { normal: [1.0, 0.0], offset: 0.25 })
            .unwrap();
        assert!((half.area() - 0.25).abs() < 1e-15);
        let tri = s.clip(&HalfPlane { normal: [1.0, 1.0], offset: 1.0 }).unwrap();
        assert!((tri.area() - 0.5).abs() < 1e-15);
        assert!(s.clip(&HalfPlane { normal: [1.0, 0.0], offset: -0.1 }).is_none());
        assert!(s.clip(&HalfPlane { normal: [1.0, 0.0], offset: 0.0 }).is_none());
        let shifted = Polygon::rectangle(0.5, 0.5, 1.5, 1.5).unwrap();
        assert!((s.overlap_area(&shifted) - 0.25).abs() < 1e-15);
        let apart = Polygon::rectangle(1.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(s.overlap_area(&apart), 0.0);
    }

    #[test]
    fn json_round_trip_validates() {
        let s = Polygon::unit_square();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]");
        assert_eq!(serde_json::from_str::<Polygon>(&text).unwrap(), s);
        assert!(serde_json::from_str::<Polygon>("[[0,0],[1,1]]").is_err());
    }
}
