use proptest::prelude::*;

use minsurf::area::{area_density, area_density_by_minors, b_coeffs, field_a, field_b, subminor_dets};
use minsurf::convexity::{lh_gap_area, RankOneDirection};
use minsurf::inequalities::{delta_of_k, det_sum_identity, main_inequality_gap, pair_det_identity, tight_k};
use minsurf::laminate::{
    build_laminate, gradient_stats, h1, h2, null_lagrangian_check, rank_one_connection, LaminateSpec, Polygon,
};
use minsurf::matrix::{GradientMatrix, PlaneMatrix};

/// Matrices with `n` rows in the ball of the given radius.
fn ball(n: std::ops::RangeInclusive<usize>, radius: f64) -> impl Strategy<Value = GradientMatrix> {
    n.prop_flat_map(move |n| {
        (prop::collection::vec(-1.0f64..1.0, 2 * n), 0.0f64..=1.0).prop_map(move |(v, s)| {
            let m = GradientMatrix::from_flat(n, &v);
            let norm = m.norm();
            if norm == 0.0 {
                m
            } else {
                m.scale(radius * s / norm)
            }
        })
    })
}

fn pair(n: std::ops::RangeInclusive<usize>, radius: f64) -> impl Strategy<Value = (GradientMatrix, GradientMatrix)> {
    n.prop_flat_map(move |n| (ball(n..=n, radius), ball(n..=n, radius)))
}

fn plane() -> impl Strategy<Value = PlaneMatrix> {
    prop::array::uniform4(-10.0f64..10.0).prop_map(|[a, b, c, d]| PlaneMatrix::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn cauchy_binet(x in ball(1..=5, 10.0)) {
        let minors: f64 = subminor_dets(&x).iter().map(|(_, d)| d * d).sum();
        prop_assert!((minors - x.gram().det()).abs() <= 1e-10 * (1.0 + x.norm_sq().powi(2)));
        prop_assert!((area_density(&x) - area_density_by_minors(&x)).abs() <= 1e-12 * area_density(&x));
    }

    #[test]
    fn b_is_trace_free_unimodular_with_signed_off_diagonal(x in ball(1..=5, 10.0)) {
        let b = field_b(&x);
        prop_assert!(b.trace().abs() <= 1e-10);
        prop_assert!((b.det() - 1.0).abs() <= 1e-10);
        prop_assert!(b.get(0, 1) < 0.0 && b.get(1, 0) > 0.0);
        prop_assert!((b_coeffs(&x).relation() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn growth_bounds(x in ball(1..=5, 10.0)) {
        let (a, b) = (field_a(&x).norm(), field_b(&x).norm());
        prop_assert!(a <= 2.0 * x.norm() + 1e-12);
        prop_assert!((1.0 + x.norm_sq()) / (2.0 * area_density(&x)) <= b + 1e-12);
        prop_assert!(b <= 2.0 * (1.0 + x.norm()) + 1e-12);
    }

    #[test]
    fn determinant_identities((x, y) in pair(1..=6, 10.0), m1 in plane(), m2 in plane()) {
        prop_assert!(pair_det_identity(&x, &y).unwrap().abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
        prop_assert!(det_sum_identity(&m1, &m2).abs() <= 1e-12 * (1.0 + (m1.norm() + m2.norm()).powi(2)));
    }

    #[test]
    fn delta_keeps_the_quadratic_form_coercive(k in 1.415f64..20.0, t in 0.0f64..1.0, g in -1.0f64..1.0) {
        // (alpha, beta, gamma) on alpha beta - gamma^2 = 1 with alpha + beta <= sqrt(2) k
        let s = (std::f64::consts::SQRT_2 * k).max(2.0);
        let sum = 2.0 + t * (s - 2.0);
        let gmax = ((sum * sum / 4.0) - 1.0).max(0.0).sqrt();
        let gamma = g * gmax;
        let disc = ((sum * sum / 4.0) - 1.0 - gamma * gamma).max(0.0).sqrt();
        let (alpha, beta) = (sum / 2.0 + disc, sum / 2.0 - disc);
        let d = delta_of_k(k).unwrap();
        // min eigenvalue of ((beta - d, -|gamma|), (-|gamma|, alpha - d))
        let m = PlaneMatrix::new(beta - d, -gamma.abs(), -gamma.abs(), alpha - d);
        prop_assert!(m.sym_eigenvalues().0 >= -1e-9 * (1.0 + sum));
    }

    #[test]
    fn main_inequality_at_the_tight_bound((x, y) in pair(1..=3, 5.0)) {
        let gap = main_inequality_gap(&x, &y, tight_k(&x, &y), 4.0).unwrap();
        prop_assert!(gap >= -1e-9, "gap {gap}");
    }

    #[test]
    fn legendre_hadamard_gap(x in ball(1..=4, 5.0), a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::array::uniform2(-1.0f64..1.0)) {
        let a = &a[..x.n()];
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let dir = RankOneDirection::new(a, b).unwrap();
        let lh = lh_gap_area(&x, &dir).unwrap();
        prop_assert!(lh.gap >= -1e-9);
        for v in lh.brackets {
            prop_assert!(v >= -1e-9);
        }
    }

    #[test]
    fn no_rank_one_connections_inside_h1_or_h2(p in prop::array::uniform4(-10.0f64..10.0)) {
        let [a1, b1, a2, b2] = p;
        prop_assume!((a1 - a2).abs() + (b1 - b2).abs() > 1e-6);
        let (x1, y1) = (h1(a1, b1), h1(a2, b2));
        let (x2, y2) = (h2(a1, b1), h2(a2, b2));
        prop_assert!(x1.sub(&y1).det() < 0.0 && x2.sub(&y2).det() > 0.0);
        let g = GradientMatrix::from_plane;
        prop_assert!(rank_one_connection(&g(&x1), &g(&y1)).is_none());
        prop_assert!(rank_one_connection(&g(&x2), &g(&y2)).is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laminates_meet_their_guarantees(
        t in 0.05f64..0.95,
        eps in prop::sample::select(vec![0.1, 0.05, 0.03]),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        // symmetric B and C joined along e1 (x) e1
        let bm = GradientMatrix::from_flat(2, &[a + 1.0, b, b, -1.0]);
        let cm = GradientMatrix::from_flat(2, &[a - 1.0, b, b, -1.0]);
        let spec = LaminateSpec::new(bm.clone(), cm.clone(), t, eps).unwrap();
        let lam = build_laminate(&spec, &Polygon::unit_square()).unwrap();
        let au = &lam.audit;
        prop_assert!(au.passes, "{au:?}");
        prop_assert!(au.fraction_b >= (1.0 - eps) * t && au.fraction_c >= (1.0 - eps) * (1.0 - t));
        prop_assert!(null_lagrangian_check(&lam.map).unwrap().abs() <= 1e-10);
        let stats = gradient_stats(&lam.map, &[bm, cm], 1e-12);
        prop_assert!(stats.fractions.iter().sum::<f64>() <= 1.0 + 1e-12);
    }
}
