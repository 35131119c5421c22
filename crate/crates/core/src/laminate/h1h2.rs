//! The subspaces `H1 = {((a, b), (b, -a))}` and `H2 = {((a, -b), (b, a))}` of
//! `2 x 2` matrices, on which `A(X) = XJ` and `B(X) = -J`.

use serde::{Deserialize, Serialize};

use crate::area::{area_density, field_a, field_b};
use crate::error::{Error, Result};
use crate::matrix::{GradientMatrix, PlaneMatrix, J};

const MEMBER_TOL: f64 = 1e-10;

pub fn in_h1(x: &PlaneMatrix) -> bool {
    (x.get(0, 1) - x.get(1, 0)).abs() <= MEMBER_TOL && (x.get(0, 0) + x.get(1, 1)).abs() <= MEMBER_TOL
}

pub fn in_h2(x: &PlaneMatrix) -> bool {
    (x.get(0, 1) + x.get(1, 0)).abs() <= MEMBER_TOL && (x.get(0, 0) - x.get(1, 1)).abs() <= MEMBER_TOL
}

/// Orthogonal projection onto `H1`.
pub fn project_h1(x: &PlaneMatrix) -> PlaneMatrix {
    let a = 0.5 * (x.get(0, 0) - x.get(1, 1));
    let b = 0.5 * (x.get(0, 1) + x.get(1, 0));
    PlaneMatrix::new(a, b, b, -a)
}

/// Orthogonal projection onto `H2`.
pub fn project_h2(x: &PlaneMatrix) -> PlaneMatrix {
    let a = 0.5 * (x.get(0, 0) + x.get(1, 1));
    let b = 0.5 * (x.get(1, 0) - x.get(0, 1));
    PlaneMatrix::new(a, -b, b, a)
}

pub fn h1(a: f64, b: f64) -> PlaneMatrix {
    PlaneMatrix::new(a, b, b, -a)
}

pub fn h2(a: f64, b: f64) -> PlaneMatrix {
    PlaneMatrix::new(a, -b, b, a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub a_error: f64,
    pub b_value: PlaneMatrix,
    pub b_error: f64,
    /// `A(X) (1 + |X|^2 / 2) - (1 + |X|^2 / 2)`, the density on `H1 u H2`.
    pub density_error: f64,
    pub a_ok: bool,
    pub b_ok: bool,
}

/// Checks `A(X) = XJ` and `B(X) = -J` for `X` in `H1` or `H2`.
pub fn check_lemma_algebra(x: &PlaneMatrix) -> Result<AlgebraReport> {
    if !(in_h1(x) || in_h2(x)) {
        return Err(Error::Domain(format!("{x:?} lies in neither H1 nor H2")));
    }
    let g = GradientMatrix::from_plane(x);
    let a_error = field_a(&g).sub(&g.mul_plane(&J)).norm();
    let b_value = field_b(&g);
    let b_error = b_value.sub(&J.scale(-1.0)).norm();
    let density_error = (area_density(&g) - (1.0 + 0.5 * x.inner(x))).abs();
    let scale = 1.0 + x.norm();
    Ok(AlgebraReport {
        a_ok: a_error <= 1e-10 * scale,
        b_ok: b_error <= 1e-10,
        a_error,
        b_value,
        b_error,
        density_error,
    })
}

/// Factorization `B - C = scale a (x) b` with unit `a`, `b` and positive
/// `scale`, when the difference has rank one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneConnection {
    pub a: Vec<f64>,
    pub b: [f64; 2],
    pub scale: f64,
}

impl RankOneConnection {
    pub fn matrix(&self) -> GradientMatrix {
        GradientMatrix::outer(&self.a, self.b).scale(self.scale)
    }
}

pub fn rank_one_connection(b: &GradientMatrix, c: &GradientMatrix) -> Option<RankOneConnection> {
    if b.n() != c.n() {
        return None;
    }
    let d = b.sub(c);
    let norm = d.norm();
    if !(norm > 0.0) {
        return None;
    }
    let (_, s2) = d.singular_values();
    if s2 > 1e-12 * norm {
        return None;
    }
    // the largest row fixes b up to sign; orient it to a canonical half-plane
    let row = d
        .rows()
        .iter()
        .copied()
        .fold([0.0f64, 0.0], |acc, r| if r[0].hypot(r[1]) > acc[0].hypot(acc[1]) { r } else { acc });
    let rn = row[0].hypot(row[1]);
    let mut bv = [row[0] / rn, row[1] / rn];
    if bv[0] < 0.0 || (bv[0] == 0.0 && bv[1] < 0.0) {
        bv = [-bv[0], -bv[1]];
    }
    let a: Vec<f64> = d.rows().iter().map(|r| r[0] * bv[0] + r[1] * bv[1]).collect();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    Some(RankOneConnection {
        a: a.iter().map(|x| x / scale).collect(),
        b: bv,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ID2;
    use crate::sampling::rng_for;
    use rand::Rng;

    #[test]
    fn membership_examples() {
        assert!(in_h1(&PlaneMatrix::new(1.0, 0.0, 0.0, -1.0)));
        let minus_j = PlaneMatrix::new(0.0, -1.0, 1.0, 0.0);
        assert!(in_h2(&minus_j));
        assert_eq!(minus_j, J.scale(-1.0));
        assert!(!in_h1(&ID2) && in_h2(&ID2));
        assert_eq!(project_h1(&ID2), PlaneMatrix::ZERO);
        assert_eq!(project_h2(&ID2), ID2);
        let x = PlaneMatrix::new(0.3, 1.2, -0.7, 2.0);
        let sum = project_h1(&x).add(&project_h2(&x));
        assert!(sum.sub(&x).norm() < 1e-15);
        assert!(project_h1(&x).inner(&project_h2(&x)).abs() < 1e-15);
    }

    #[test]
    fn algebra_hand_example() {
        let x = h1(2.0, 1.0);
        let r = check_lemma_algebra(&x).unwrap();
        assert!(r.a_ok && r.b_ok);
        let a = field_a(&GradientMatrix::from_plane(&x)).to_plane().unwrap();
        assert!(a.sub(&PlaneMatrix::new(-1.0, 2.0, 2.0, 1.0)).norm() < 1e-14);
        assert!((area_density(&GradientMatrix::from_plane(&x)) - 6.0).abs() < 1e-14);
        let zero = check_lemma_algebra(&PlaneMatrix::ZERO).unwrap();
        assert_eq!(zero.b_value, J.scale(-1.0));
        assert!(check_lemma_algebra(&PlaneMatrix::new(1.0, 2.0, 3.0, 4.0)).is_err());
    }

    #[test]
    fn no_rank_one_connections_inside_one_subspace() {
        for i in 0..10_000u64 {
            let mut rng = rng_for(4, i);
            let mut pick = || rng.random_range(-10.0..10.0);
            let (a1, b1, a2, b2) = (pick(), pick(), pick(), pick());
            let d1 = h1(a1, b1).sub(&h1(a2, b2)).det();
            let d2 = h2(a1, b1).sub(&h2(a2, b2)).det();
            let s = (a1 - a2).powi(2) + (b1 - b2).powi(2);
            assert!((d1 + s).abs() <= 1e-10 * (1.0 + s) && d1 < 0.0);
            assert!((d2 - s).abs() <= 1e-10 * (1.0 + s) && d2 > 0.0);
            let g = GradientMatrix::from_plane;
            assert!(rank_one_connection(&g(&h1(a1, b1)), &g(&h1(a2, b2))).is_none());
        }
    }

    #[test]
    fn connection_across_subspaces() {
        let b = GradientMatrix::from_plane(&PlaneMatrix::new(1.0, 0.0, 0.0, -1.0));
        let c = GradientMatrix::from_plane(&PlaneMatrix::new(-1.0, 0.0, 0.0, -1.0));
        let r = rank_one_connection(&b, &c).unwrap();
        assert_eq!((r.a.clone(), r.b, r.scale), (vec![1.0, 0.0], [1.0, 0.0], 2.0));
        assert!(r.matrix().sub(&b.sub(&c)).norm() < 1e-15);
        assert!(rank_one_connection(&b, &b).is_none());
        let id = GradientMatrix::from_plane(&ID2);
        assert!(rank_one_connection(&id.add(&c), &c).is_none());
    }
}
