//! Sampled certification of the quantitative inequalities satisfied by the
//! fields `A` and `B`, and exact checks of the determinant identities behind
//! them.

use serde::{Deserialize, Serialize};

use crate::area::{b_coeffs, field_a, field_b, lift_f, EnergyDensity};
use crate::error::{Error, Result};
use crate::matrix::{GradientMatrix, PlaneMatrix, StackedMatrix, J};
use crate::sampling::{ball_matrix, ball_pair, cycle_n, par_max, par_min, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Analytic,
    GridSearch,
    RandomSearch,
}

/// Witness of an extremal ratio: one matrix or a pair of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: GradientMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<GradientMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub name: String,
    pub parameter: f64,
    pub value: f64,
    pub method: EstimateMethod,
    pub samples: u64,
    pub worst_witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub domain_description: String,
    pub n_samples: u64,
    pub min_gap: f64,
    pub violated: bool,
    pub tolerance: f64,
    pub witness: Option<Witness>,
}

impl InequalityReport {
    fn from_min(
        name: &str,
        domain: String,
        samples: u64,
        tolerance: f64,
        best: Option<(f64, u64, Witness)>,
    ) -> Self {
        let (min_gap, witness) = match best {
            Some((v, _, w)) => (v, Some(w)),
            None => (f64::INFINITY, None),
        };
        InequalityReport {
            name: name.into(),
            domain_description: domain,
            n_samples: samples,
            min_gap,
            violated: !(min_gap >= -tolerance),
            tolerance,
            witness,
        }
    }
}

/// Coercivity constant of the quadratic form `beta a^2 - 2|gamma| ab + alpha b^2`
/// over all `X` with `|B(X)| <= k`: `0.9 (s - sqrt(s^2 - 4)) / 2` with
/// `s = max(sqrt(2) k, 2)` bounding `alpha + beta`. Values of `k` within
/// `1e-4` below `sqrt(2)` are accepted as rounded inputs of `sqrt(2)`.
pub fn delta_of_k(k: f64) -> Result<f64> {
    if !(k >= std::f64::consts::SQRT_2 - 1e-4) {
        return Err(Error::Domain(format!(
            "k = {k} is below sqrt(2), the smallest possible |B|"
        )));
    }
    let s = (std::f64::consts::SQRT_2 * k).max(2.0);
    Ok(0.9 * (s - (s * s - 4.0).max(0.0).sqrt()) / 2.0)
}

/// Smaller eigenvalue of `((beta - delta, -|gamma|), (-|gamma|, alpha - delta))`.
pub fn poll_form_min_eigenvalue(x: &GradientMatrix, delta: f64) -> f64 {
    let c = b_coeffs(x);
    PlaneMatrix::new(
        c.beta - delta,
        -c.gamma.abs(),
        -c.gamma.abs(),
        c.alpha - delta,
    )
    .sym_eigenvalues()
    .0
}

/// `-<(A(X) - A(Y)) J, X - Y>`, which equals `<DA(X) - DA(Y), X - Y>`.
pub fn monotonicity_term(x: &GradientMatrix, y: &GradientMatrix) -> f64 {
    -field_a(x).sub(&field_a(y)).mul_plane(&J).inner(&x.sub(y))
}

/// `-<(A(X) - A(Y)) J, X - Y> + C |B(X) - B(Y)| min(|X|, |Y|) |X - Y| - delta(k) |X - Y|^2`.
pub fn main_inequality_gap(x: &GradientMatrix, y: &GradientMatrix, k: f64, c: f64) -> Result<f64> {
    let (bx, by) = (field_b(x), field_b(y));
    for (label, b) in [("X", bx), ("Y", by)] {
        if b.norm() > k * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "|B({label})| = {} exceeds k = {k}",
                b.norm()
            )));
        }
    }
    let delta = delta_of_k(k)?;
    let d = x.sub(y).norm();
    Ok(monotonicity_term(x, y) + c * bx.sub(&by).norm() * x.norm().min(y.norm()) * d
        - delta * d * d)
}

/// The smallest admissible `k` for a pair.
pub fn tight_k(x: &GradientMatrix, y: &GradientMatrix) -> f64 {
    field_b(x)
        .norm()
        .max(field_b(y).norm())
        .max(std::f64::consts::SQRT_2)
}

/// Runs the main inequality over sampled pairs in the ball of radius
/// `radius`. With `k = None` each pair is tested at its own tight `k`;
/// otherwise pairs with `|B| > k` are skipped.
pub fn main_inequality_campaign(
    ns: &[usize],
    radius: f64,
    k: Option<f64>,
    c: f64,
    samples: u64,
    seed: u64,
    tolerance: f64,
) -> Result<InequalityReport> {
    if let Some(k) = k {
        delta_of_k(k)?;
    }
    let best = par_min(samples, |i| {
        let (x, y) = ball_pair(seed, i, cycle_n(ns, i), radius);
        let kk = match k {
            Some(k) if tight_k(&x, &y) > k => return None,
            Some(k) => k,
            None => tight_k(&x, &y),
        };
        let gap = main_inequality_gap(&x, &y, kk, c).ok()?;
        Some((gap, Witness { x, y: Some(y) }))
    });
    Ok(InequalityReport::from_min(
        "main",
        format!(
            "pairs in |X|,|Y| <= {radius}, n in {ns:?}, C = {c}, k = {}",
            k.map_or("per-pair".to_string(), |k| k.to_string())
        ),
        samples,
        tolerance,
        best,
    ))
}

/// `-det(B(X) - B(Y)) / |B(X) - B(Y)|^2`, or `None` when the difference
/// vanishes.
pub fn mu_ratio(x: &GradientMatrix, y: &GradientMatrix) -> Option<f64> {
    let db = field_b(x).sub(&field_b(y));
    let nn = db.inner(&db);
    if nn <= 1e-300 {
        return None;
    }
    Some(-db.det() / nn)
}

/// Sampled infimum of [`mu_ratio`] over pairs in the ball of radius `r`.
pub fn mu_estimate(r: f64, n: usize, samples: u64, seed: u64) -> Result<ConstantEstimate> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius {r} must be positive")));
    }
    let best = par_min(samples, |i| {
        let (x, y) = ball_pair(seed, i, n, r);
        mu_ratio(&x, &y).map(|v| (v, Witness { x, y: Some(y) }))
    })
    .ok_or_else(|| Error::Numerical("every sampled pair was degenerate".into()))?;
    let est = ConstantEstimate {
        name: "mu(R)".into(),
        parameter: r,
        value: best.0,
        method: EstimateMethod::RandomSearch,
        samples,
        worst_witness: Some(best.2),
    };
    if !(est.value > 0.0) {
        return Err(Error::Numerical(format!(
            "mu({r}) estimate {} is not positive",
            est.value
        )));
    }
    Ok(est)
}

/// Checks `-det(B(X) - B(Y)) >= mu |B(X) - B(Y)|^2` on independent samples.
pub fn mu_inequality_check(
    r: f64,
    n: usize,
    mu: f64,
    samples: u64,
    seed: u64,
    tolerance: f64,
) -> InequalityReport {
    let best = par_min(samples, |i| {
        let (x, y) = ball_pair(seed, i, n, r);
        let db = field_b(&x).sub(&field_b(&y));
        Some((-db.det() - mu * db.inner(&db), Witness { x, y: Some(y) }))
    });
    InequalityReport::from_min(
        "alg",
        format!("pairs in |X|,|Y| <= {r}, n = {n}, mu = {mu}"),
        samples,
        tolerance,
        best,
    )
}

/// `<X, Y J> + sum_i det(X_i; Y_i)`, which vanishes identically.
pub fn pair_det_identity(x: &GradientMatrix, y: &GradientMatrix) -> Result<f64> {
    if x.n() != y.n() {
        return Err(Error::Shape(format!("{} rows vs {} rows", x.n(), y.n())));
    }
    let dets: f64 = x
        .rows()
        .iter()
        .zip(y.rows())
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .sum();
    Ok(x.inner(&y.mul_plane(&J)) + dets)
}

/// `det(M1 + M2) - det M1 - det M2 - <M1, cof(M2)^T>`, identically zero.
pub fn det_sum_identity(m1: &PlaneMatrix, m2: &PlaneMatrix) -> f64 {
    m1.add(m2).det() - m1.det() - m2.det() - m1.inner(&m2.cof().transpose())
}

/// `sum t_ab det((L - G)^{ab})` with `t = -1` on the pairs joining row `i` of
/// the first block with row `i` of the second block, zero elsewhere. Equals
/// `<(L2 - G2) J, L1 - G1>`.
pub fn tab_pairing(l: &StackedMatrix, g: &StackedMatrix) -> Result<f64> {
    if l.n() != g.n() {
        return Err(Error::Shape(format!("{} rows vs {} rows", l.n(), g.n())));
    }
    let rows = l.n();
    if rows < 4 || !rows.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "stacked matrix needs 2n + 2 rows, got {rows}"
        )));
    }
    let n = (rows - 2) / 2;
    let d = l.sub(g);
    Ok((0..n).map(|i| -d.sub_rows(i, n + i).det()).sum())
}

/// Bound on `|B|` over the ball of radius `r`, from the growth estimate
/// `|B(X)| <= 2 (1 + |X|)`.
pub fn b_bound(r: f64) -> f64 {
    2.0 * (1.0 + r)
}

/// Constants assembled for the regularity inequality on the ball of radius
/// `3R/2`: `c = delta(k)`, Young parameter `tau = 2c / (3 C R)`, the sampled
/// `mu`, `lambda = 3 C R / (4 tau mu)` and the coercivity `c / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegConstants {
    pub r: f64,
    pub k: f64,
    pub big_c: f64,
    pub c: f64,
    pub tau: f64,
    pub mu: ConstantEstimate,
    pub lambda: f64,
    pub delta: f64,
}

impl RegConstants {
    pub fn new(r: f64, n: usize, samples: u64, seed: u64) -> Result<Self> {
        let outer = 1.5 * r;
        let k = b_bound(outer);
        let big_c = 4.0;
        let c = delta_of_k(k)?;
        let tau = 2.0 * c / (3.0 * big_c * r);
        let mu = mu_estimate(outer, n, samples, seed)?;
        let lambda = 3.0 * big_c * r / (4.0 * tau * mu.value);
        Ok(RegConstants {
            r,
            k,
            big_c,
            c,
            tau,
            lambda,
            delta: c / 2.0,
            mu,
        })
    }
}

/// `-<(A_f(X) - A_f(Y)) J, X - Y> - lambda det(B_f(X) - B_f(Y))`.
pub fn reg_lhs(f: &dyn EnergyDensity, x: &GradientMatrix, y: &GradientMatrix, lambda: f64) -> f64 {
    let (lx, ly) = (lift_f(x, f), lift_f(y, f));
    -lx.a_block.sub(&ly.a_block).mul_plane(&J).inner(&x.sub(y))
        - lambda * lx.b_block.sub(&ly.b_block).det()
}

/// Regularity inequality for the area density with the assembled constants.
pub fn reg_inequality_check(
    consts: &RegConstants,
    n: usize,
    samples: u64,
    seed: u64,
    tolerance: f64,
) -> InequalityReport {
    let area = crate::area::Area;
    let outer = 1.5 * consts.r;
    let best = par_min(samples, |i| {
        let (x, y) = ball_pair(seed, i, n, outer);
        let d2 = x.sub(&y).norm_sq();
        let gap = reg_lhs(&area, &x, &y, consts.lambda) - consts.delta * d2;
        Some((gap, Witness { x, y: Some(y) }))
    });
    InequalityReport::from_min(
        "reg",
        format!(
            "pairs in |X|,|Y| <= {outer}, n = {n}, lambda = {}, delta = {}",
            consts.lambda, consts.delta
        ),
        samples,
        tolerance,
        best,
    )
}

/// Coercivity of a general density under the same `lambda`: the sampled
/// minimum of `reg_lhs / |X - Y|^2` over pairs in the ball of radius `3R/2`.
pub fn genf_check(
    f: &dyn EnergyDensity,
    consts: &RegConstants,
    n: usize,
    samples: u64,
    seed: u64,
) -> InequalityReport {
    let outer = 1.5 * consts.r;
    let best = par_min(samples, |i| {
        let (x, y) = ball_pair(seed, i, n, outer);
        let d2 = x.sub(&y).norm_sq();
        if d2 == 0.0 {
            return None;
        }
        Some((reg_lhs(f, &x, &y, consts.lambda) / d2, Witness { x, y: Some(y) }))
    });
    let mut report = InequalityReport::from_min(
        &format!("genf[{}]", f.label()),
        format!("pairs in |X|,|Y| <= {outer}, n = {n}, lambda = {}", consts.lambda),
        samples,
        0.0,
        best,
    );
    // here min_gap is the empirical c and a violation is c <= 0
    report.violated = !(report.min_gap > 0.0);
    report
}

/// Largest `s` in `[0, s_max]`, to bisection accuracy `tol`, for which
/// `A - s |X|^2` keeps a positive coercivity constant under [`genf_check`].
pub fn closeness_threshold(
    consts: &RegConstants,
    n: usize,
    samples: u64,
    seed: u64,
    s_max: f64,
    tol: f64,
) -> f64 {
    let ok = |s: f64| {
        let f = crate::area::PerturbedArea::quadratic(-s);
        !genf_check(&f, consts, n, samples, seed).violated
    };
    if ok(s_max) {
        return s_max;
    }
    let (mut lo, mut hi) = (0.0, s_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Bounds `c1 <= M(X) <= c2` for `M = ((beta, -gamma), (-gamma, alpha))`.
pub fn elliptic_coefficient_bounds(
    samples: &[GradientMatrix],
    r: f64,
) -> Result<(ConstantEstimate, ConstantEstimate)> {
    if samples.is_empty() {
        return Err(Error::Invalid("no gradient samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| x.norm() > r * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "sample with norm {} outside radius {r}",
            x.norm()
        )));
    }
    let eig = |x: &GradientMatrix| b_coeffs(x).ellipticity_matrix().sym_eigenvalues();
    let count = samples.len() as u64;
    let lo = par_min(count, |i| Some((eig(&samples[i as usize]).0, ()))).expect("nonempty");
    let hi = par_max(count, |i| Some((eig(&samples[i as usize]).1, ()))).expect("nonempty");
    let mk = |name: &str, v: f64, i: u64| ConstantEstimate {
        name: name.into(),
        parameter: r,
        value: v,
        method: EstimateMethod::RandomSearch,
        samples: count,
        worst_witness: Some(Witness {
            x: samples[i as usize].clone(),
            y: None,
        }),
    };
    let (c1, c2) = (mk("c1", lo.0, lo.1), mk("c2", hi.0, hi.1));
    if !(c1.value > 0.0) {
        return Err(Error::Numerical(format!("c1 = {} is not positive", c1.value)));
    }
    Ok((c1, c2))
}

/// Sampled matrices in the ball, cycling through the row counts in `ns`.
pub fn ball_samples(ns: &[usize], r: f64, samples: u64, seed: u64) -> Vec<GradientMatrix> {
    crate::sampling::par_map(samples as usize, |i| {
        let i = i as u64;
        ball_matrix(&mut rng_for(seed, i), i, cycle_n(ns, i), r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::area::{area_gradient, lift};
    use crate::matrix::ID2;
    use approx::assert_relative_eq;
    use std::f64::consts::SQRT_2;

    fn row(a: f64, b: f64) -> GradientMatrix {
        GradientMatrix::from_rows(vec![[a, b]]).unwrap()
    }

    #[test]
    fn delta_at_the_smallest_k() {
        // the f64 sqrt(2) squares to slightly above 2, moving the root by ~1e-8
        assert_relative_eq!(delta_of_k(SQRT_2).unwrap(), 0.9, epsilon = 1e-7);
        assert_eq!(delta_of_k(1.0 + 0.4142).unwrap(), 0.9);
        assert!(delta_of_k(1.0).is_err());
        assert!(delta_of_k(1.414).is_err());
        // discriminant -4 - 4 d^2 + 4 d (alpha + beta) at (1, 1, 0)
        let d = 0.9;
        assert!(-4.0 - 4.0 * d * d + 8.0 * d < 0.0);
    }

    #[test]
    fn delta_form_is_psd_on_the_constraint_surface() {
        let k = 5.0;
        let delta = delta_of_k(k).unwrap();
        assert!(delta < 1.0);
        let mut checked = 0;
        for i in 0..10_000u64 {
            let x = ball_matrix(&mut rng_for(2, i), i, 1 + (i % 3) as usize, 5.0);
            if field_b(&x).norm() > k {
                continue;
            }
            checked += 1;
            assert!(poll_form_min_eigenvalue(&x, delta) >= -1e-10);
        }
        assert!(checked > 5000);
    }

    #[test]
    fn main_gap_hand_example() {
        let (x, y) = (row(0.0, 0.0), row(1.0, 0.0));
        assert_relative_eq!(monotonicity_term(&x, &y), 1.0 / SQRT_2, epsilon = 1e-15);
        let k = tight_k(&x, &y);
        assert_relative_eq!(k, (0.5f64 + 2.0).sqrt(), epsilon = 1e-15);
        let gap = main_inequality_gap(&x, &y, k, 4.0).unwrap();
        assert_relative_eq!(gap, 1.0 / SQRT_2 - delta_of_k(k).unwrap(), epsilon = 1e-15);
        assert!(gap >= 0.0);
        assert_eq!(main_inequality_gap(&y, &y, k, 4.0).unwrap(), 0.0);
        assert!(main_inequality_gap(&x, &row(10.0, 0.0), 2.0, 4.0).is_err());
    }

    #[test]
    fn main_campaign_small() {
        let r = main_inequality_campaign(&[1, 2, 3], 5.0, None, 4.0, 5000, 9, 1e-9).unwrap();
        assert!(!r.violated, "{r:?}");
    }

    #[test]
    fn mu_hand_example() {
        let v = mu_ratio(&row(0.0, 0.0), &row(1.0, 0.0)).unwrap();
        // db = ((0, 1/sqrt2 - 1), (1 - sqrt2, 0))
        let p = 1.0 / SQRT_2 - 1.0;
        let q = 1.0 - SQRT_2;
        assert_relative_eq!(v, p * q / (p * p + q * q), epsilon = 1e-14);
        assert!((v - 0.4714).abs() < 1e-4);
        assert!(mu_ratio(&row(1.0, 2.0), &row(1.0, 2.0)).is_none());
    }

    #[test]
    fn mu_is_positive_and_self_consistent() {
        let est = mu_estimate(1.0, 2, 20_000, 4).unwrap();
        assert!(est.value > 0.0);
        let w = est.worst_witness.clone().unwrap();
        assert!((mu_ratio(&w.x, w.y.as_ref().unwrap()).unwrap() - est.value).abs() < 1e-9);
        assert!(!mu_inequality_check(1.0, 2, 0.5 * est.value, 20_000, 5, 1e-12).violated);
    }

    #[test]
    fn identities_on_fixed_cases() {
        let x = GradientMatrix::unit(1, 0, 0);
        let y = GradientMatrix::unit(1, 0, 1);
        assert!(pair_det_identity(&x, &y).unwrap().abs() <= 1e-14);
        assert_eq!(pair_det_identity(&x, &x).unwrap(), 0.0);
        assert!(pair_det_identity(&x, &GradientMatrix::zeros(2)).is_err());
        assert_eq!(det_sum_identity(&ID2, &ID2), 0.0);
        let m = PlaneMatrix::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(det_sum_identity(&m, &PlaneMatrix::ZERO), 0.0);
    }

    #[test]
    fn tab_pairing_matches_monotonicity() {
        let l = lift(&row(0.0, 0.0)).to_stacked();
        let g = lift(&row(1.0, 0.0)).to_stacked();
        assert_relative_eq!(tab_pairing(&l, &g).unwrap(), -1.0 / SQRT_2, epsilon = 1e-15);
        assert_eq!(tab_pairing(&l, &l).unwrap(), 0.0);
        for i in 0..500u64 {
            let (x, y) = ball_pair(3, i, 1 + (i % 3) as usize, 4.0);
            let t = tab_pairing(&lift(&x).to_stacked(), &lift(&y).to_stacked()).unwrap();
            let direct = field_a(&x).sub(&field_a(&y)).mul_plane(&J).inner(&x.sub(&y));
            let da = area_gradient(&x).sub(&area_gradient(&y)).inner(&x.sub(&y));
            assert!((t - direct).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
            assert!((t + da).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
        }
    }

    #[test]
    fn ellipticity_bounds() {
        let (c1, c2) = elliptic_coefficient_bounds(&[GradientMatrix::zeros(2)], 1.0).unwrap();
        assert_eq!((c1.value, c2.value), (1.0, 1.0));
        let e = GradientMatrix::unit(2, 0, 0);
        let (c1, c2) = elliptic_coefficient_bounds(&[e], 1.0).unwrap();
        assert_relative_eq!(c1.value, 1.0 / SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(c2.value, SQRT_2, epsilon = 1e-15);
        assert!(elliptic_coefficient_bounds(&[], 1.0).is_err());
        let s = ball_samples(&[1, 2, 3], 5.0, 2000, 1);
        assert!(elliptic_coefficient_bounds(&s, 5.0).unwrap().0.value > 0.0);
    }

    #[test]
    fn regularity_constants_and_check() {
        let consts = RegConstants::new(1.0, 2, 5000, 1).unwrap();
        assert!(consts.lambda > 0.0);
        assert_relative_eq!(
            consts.c - 0.75 * consts.big_c * consts.r * consts.tau,
            consts.c / 2.0,
            epsilon = 1e-14
        );
        let r = reg_inequality_check(&consts, 2, 5000, 2, 1e-9);
        assert!(!r.violated, "{r:?}");
        let x = row(0.3, 0.4);
        assert_eq!(reg_lhs(&crate::area::Area, &x, &x, consts.lambda), 0.0);
    }
}
