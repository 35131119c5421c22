//! Verification campaigns run by `mintool verify` and by the acceptance
//! tests. Each suite is a list of sampled checks; a check records its worst
//! value, how many samples broke the criterion and the input behind the
//! worst value.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::area::{area_density, area_gradient, b_coeffs, field_a, field_b, subminor_dets, PerturbedArea};
use crate::convexity::{lh_gap_area, RankOneDirection};
use crate::error::{Error, Result};
use crate::inequalities::{
    det_sum_identity, genf_check, main_inequality_campaign, mu_estimate, mu_inequality_check,
    pair_det_identity, reg_inequality_check, tab_pairing, InequalityReport, RegConstants,
};
use crate::laminate::{check_lemma_algebra, h1, h1h2_critical_map, h2, rank_one_connection, Polygon};
use crate::matrix::{GradientMatrix, PlaneMatrix, StackedMatrix, J};
use crate::sampling::{ball_matrix, cycle_n, par_map, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Bounds,
    Bprops,
    Main,
    Reg,
    Lh,
    Algebra,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Identities,
        Suite::Bounds,
        Suite::Bprops,
        Suite::Main,
        Suite::Reg,
        Suite::Lh,
        Suite::Algebra,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Bounds => "bounds",
            Suite::Bprops => "bprops",
            Suite::Main => "main",
            Suite::Reg => "reg",
            Suite::Lh => "lh",
            Suite::Algebra => "algebra",
        }
    }

    fn defaults(&self) -> SuiteConfig {
        let (samples, n, radius) = match self {
            Suite::Identities => (10_000, vec![1, 2, 3, 4, 5], 10.0),
            Suite::Bounds | Suite::Bprops => (100_000, vec![1, 2, 3, 4, 5], 10.0),
            Suite::Main => (100_000, vec![1, 2, 3], 5.0),
            Suite::Reg => (100_000, vec![2], 1.0),
            Suite::Lh => (100_000, vec![1, 2, 3], 2.0),
            Suite::Algebra => (10_000, vec![2], 10.0),
        };
        SuiteConfig {
            seed: 0,
            samples,
            n,
            radius,
            k: None,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown suite {s:?}")))
    }
}

/// Overrides of the suite defaults; `None` keeps the default.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteParams {
    pub seed: u64,
    pub samples: Option<u64>,
    pub n: Option<Vec<usize>>,
    pub radius: Option<f64>,
    pub k: Option<f64>,
}

/// Resolved campaign settings. `radius` is the sampling radius, except for
/// `reg` and `lh` where it is the `R` of the constants (sampling on `3R/2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub samples: u64,
    pub n: Vec<usize>,
    pub radius: f64,
    pub k: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// `value <= tolerance`.
    AtMost,
    /// `value >= -tolerance`.
    AtLeast,
    /// `value > 0`.
    Positive,
    /// `value == 1`: a single yes/no audit.
    Holds,
}

impl Criterion {
    fn holds(&self, v: f64, tol: f64) -> bool {
        match self {
            Criterion::AtMost => v <= tol,
            Criterion::AtLeast => v >= -tol,
            Criterion::Positive => v > 0.0,
            Criterion::Holds => v == 1.0,
        }
    }

    /// Orders values from worst to best, NaN first.
    fn badness(&self, v: f64) -> f64 {
        if v.is_nan() {
            return f64::INFINITY;
        }
        match self {
            Criterion::AtMost => v,
            _ => -v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub criterion: Criterion,
    pub samples: u64,
    pub worst: f64,
    pub tolerance: f64,
    pub violations: u64,
    pub passed: bool,
    pub witness: Option<Value>,
}

impl CheckReport {
    /// One-line summary.
    pub fn line(&self) -> String {
        format!(
            "{:<5} {:<28} worst {:>12.4e}  tol {:.1e}  violations {}/{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.violations,
            self.samples
        )
    }

    fn from_inequality(r: &InequalityReport) -> Self {
        CheckReport {
            name: r.name.clone(),
            criterion: Criterion::AtLeast,
            samples: r.n_samples,
            worst: r.min_gap,
            tolerance: r.tolerance,
            violations: u64::from(r.violated),
            passed: !r.violated,
            witness: r.witness.as_ref().and_then(|w| serde_json::to_value(w).ok()),
        }
    }

    fn single(name: &str, ok: bool, worst: f64, tolerance: f64, witness: Value) -> Self {
        CheckReport {
            name: name.into(),
            criterion: Criterion::Holds,
            samples: 1,
            worst,
            tolerance,
            violations: u64::from(!ok),
            passed: ok,
            witness: Some(witness),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub config: SuiteConfig,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

/// Evaluates `f` on `0..samples`; the witness of the worst sample is
/// recomputed afterwards so only the values are kept in memory.
fn sampled<W, F>(name: &str, samples: u64, criterion: Criterion, tolerance: f64, f: F) -> CheckReport
where
    W: Serialize,
    F: Fn(u64) -> (f64, W) + Sync + Send,
{
    let values = par_map(samples as usize, |i| f(i as u64).0);
    let violations = values.iter().filter(|v| !criterion.holds(**v, tolerance)).count() as u64;
    let worst = values
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, &v)| match acc {
            Some((_, b)) if criterion.badness(b) >= criterion.badness(v) => acc,
            _ => Some((i, v)),
        });
    let (worst, witness) = match worst {
        Some((i, v)) => (v, serde_json::to_value(f(i as u64).1).ok()),
        None => (f64::NAN, None),
    };
    CheckReport {
        name: name.into(),
        criterion,
        samples,
        worst,
        tolerance,
        violations,
        passed: violations == 0 && samples > 0,
        witness,
    }
}

fn sample_matrix(cfg: &SuiteConfig, stream: u64, i: u64, radius: f64) -> GradientMatrix {
    let seed = cfg.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ball_matrix(&mut rng_for(seed, i), i, cycle_n(&cfg.n, i), radius)
}

pub fn run_suite(suite: Suite, params: &SuiteParams) -> Result<SuiteReport> {
    let mut cfg = suite.defaults();
    cfg.seed = params.seed;
    if let Some(s) = params.samples {
        cfg.samples = s;
    }
    if let Some(n) = &params.n {
        if n.is_empty() || n.contains(&0) {
            return Err(Error::Invalid(format!("row counts {n:?} must be positive")));
        }
        cfg.n = n.clone();
    }
    if let Some(r) = params.radius {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("radius {r} must be positive")));
        }
        cfg.radius = r;
    }
    cfg.k = params.k;
    let checks = match suite {
        Suite::Identities => identities(&cfg)?,
        Suite::Bprops => bprops(&cfg),
        Suite::Bounds => bounds(&cfg),
        Suite::Main => vec![CheckReport::from_inequality(&main_inequality_campaign(
            &cfg.n, cfg.radius, cfg.k, 4.0, cfg.samples, cfg.seed, 1e-9,
        )?)],
        Suite::Reg => reg(&cfg)?,
        Suite::Lh => lh(&cfg),
        Suite::Algebra => algebra(&cfg)?,
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        suite,
        config: cfg,
        checks,
        passed,
    })
}

fn identities(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let (s, r, tol) = (cfg.samples, cfg.radius, 1e-12);
    let cauchy_binet = sampled("cauchy-binet", s, Criterion::AtMost, tol, |i| {
        let x = sample_matrix(cfg, 1, i, r);
        let minors: f64 = subminor_dets(&x).iter().map(|(_, d)| d * d).sum();
        let gram = x.gram().det();
        ((minors - gram).abs() / (1.0 + x.norm_sq().powi(2)), x)
    });
    let pair_det = sampled("pair-determinant", s, Criterion::AtMost, tol, |i| {
        let x = sample_matrix(cfg, 2, i, r);
        let y = sample_matrix(cfg, 3, i, r);
        let res = pair_det_identity(&x, &y).map_or(f64::NAN, f64::abs);
        (res / (1.0 + x.norm() * y.norm()), (x, y))
    });
    let det_sum = sampled("determinant-sum", s, Criterion::AtMost, tol, |i| {
        let plane = |stream| {
            let mut rng = rng_for(cfg.seed ^ stream, i);
            PlaneMatrix::new(rng.random(), rng.random(), rng.random(), rng.random())
                .sub(&PlaneMatrix::new(0.5, 0.5, 0.5, 0.5))
                .scale(2.0 * r)
        };
        let (m1, m2) = (plane(4), plane(5));
        let scale = 1.0 + (m1.norm() + m2.norm()).powi(2);
        (det_sum_identity(&m1, &m2).abs() / scale, (m1, m2))
    });
    let tab = sampled("t-ab-pairing", s, Criterion::AtMost, tol, |i| {
        let n = cycle_n(&cfg.n, i);
        let stacked = |stream| -> StackedMatrix {
            
            ball_matrix(&mut rng_for(cfg.seed ^ stream, i), i, 2 * n + 2, r)
        };
        let (l, g) = (stacked(6), stacked(7));
        let d = l.sub(&g);
        let rows = d.rows();
        let d1 = GradientMatrix::from_flat(n, &rows[..n].concat());
        let d2 = GradientMatrix::from_flat(n, &rows[n..2 * n].concat());
        let expected = d2.mul_plane(&J).inner(&d1);
        let res = tab_pairing(&l, &g).map_or(f64::NAN, |t| (t - expected).abs());
        (res / (1.0 + d.norm_sq()), (l, g))
    });
    Ok(vec![cauchy_binet, pair_det, det_sum, tab])
}

fn bprops(cfg: &SuiteConfig) -> Vec<CheckReport> {
    let (s, r, tol) = (cfg.samples, cfg.radius, 1e-10);
    let b_at = |i| {
        let x = sample_matrix(cfg, 0, i, r);
        (field_b(&x), x)
    };
    vec![
        sampled("trace-zero", s, Criterion::AtMost, tol, |i| {
            let (b, x) = b_at(i);
            (b.trace().abs(), x)
        }),
        sampled("determinant-one", s, Criterion::AtMost, tol, |i| {
            let (b, x) = b_at(i);
            ((b.det() - 1.0).abs(), x)
        }),
        sampled("b12-negative", s, Criterion::Positive, 0.0, |i| {
            let (b, x) = b_at(i);
            (-b.get(0, 1), x)
        }),
        sampled("b21-positive", s, Criterion::Positive, 0.0, |i| {
            let (b, x) = b_at(i);
            (b.get(1, 0), x)
        }),
        sampled("coefficient-relation", s, Criterion::AtMost, tol, |i| {
            let x = sample_matrix(cfg, 0, i, r);
            ((b_coeffs(&x).relation() - 1.0).abs(), x)
        }),
    ]
}

fn bounds(cfg: &SuiteConfig) -> Vec<CheckReport> {
    let (s, r, tol) = (cfg.samples, cfg.radius, 1e-10);
    vec![
        sampled("a-growth", s, Criterion::AtLeast, tol, |i| {
            let x = sample_matrix(cfg, 0, i, r);
            (2.0 * x.norm() - field_a(&x).norm(), x)
        }),
        sampled("b-lower", s, Criterion::AtLeast, tol, |i| {
            let x = sample_matrix(cfg, 0, i, r);
            (field_b(&x).norm() - (1.0 + x.norm_sq()) / (2.0 * area_density(&x)), x)
        }),
        sampled("b-upper", s, Criterion::AtLeast, tol, |i| {
            let x = sample_matrix(cfg, 0, i, r);
            (2.0 * (1.0 + x.norm()) - field_b(&x).norm(), x)
        }),
    ]
}

fn reg(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let (s, r) = (cfg.samples, cfg.radius);
    let n = cfg.n[0];
    let mu = mu_estimate(r, n, s, cfg.seed)?;
    let mut checks = vec![CheckReport {
        name: "mu-positive".into(),
        criterion: Criterion::Positive,
        samples: s,
        worst: mu.value,
        tolerance: 0.0,
        violations: u64::from(!(mu.value > 0.0)),
        passed: mu.value > 0.0,
        witness: serde_json::to_value(&mu.worst_witness).ok(),
    }];
    let mut half = mu_inequality_check(r, n, 0.5 * mu.value, s, cfg.seed.wrapping_add(1), 1e-12);
    half.name = "mu-half-inequality".into();
    checks.push(CheckReport::from_inequality(&half));
    let consts = RegConstants::new(r, n, s, cfg.seed)?;
    let mut reg = reg_inequality_check(&consts, n, s, cfg.seed.wrapping_add(2), 1e-9);
    reg.name = "reg-inequality".into();
    checks.push(CheckReport::from_inequality(&reg));
    let near = genf_check(&PerturbedArea::quadratic(1e-3), &consts, n, s, cfg.seed.wrapping_add(3));
    checks.push(CheckReport {
        criterion: Criterion::Positive,
        ..CheckReport::from_inequality(&near)
    });
    // negative control: the far perturbation must be flagged
    let far = genf_check(&PerturbedArea::quadratic(-0.6), &consts, n, s, cfg.seed.wrapping_add(4));
    checks.push(CheckReport {
        name: format!("{} flagged", far.name),
        criterion: Criterion::Holds,
        samples: far.n_samples,
        worst: far.min_gap,
        tolerance: 0.0,
        violations: u64::from(!far.violated),
        passed: far.violated,
        witness: far.witness.as_ref().and_then(|w| serde_json::to_value(w).ok()),
    });
    Ok(checks)
}

/// `g''(0)` for `g(t) = A(X + tY)` from central differences of the analytic
/// `g'(t) = <DA(X + tY), Y>`, extrapolated once.
pub fn lh_second_derivative_fd(x: &GradientMatrix, y: &GradientMatrix) -> f64 {
    let g1 = |t: f64| area_gradient(&x.axpy(t, y)).inner(y);
    let d = |h: f64| (g1(h) - g1(-h)) / (2.0 * h);
    let h = 4e-3;
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

fn lh(cfg: &SuiteConfig) -> Vec<CheckReport> {
    let (s, outer) = (cfg.samples, 1.5 * cfg.radius);
    let at = |i: u64| {
        let mut rng = rng_for(cfg.seed, i);
        let n = cycle_n(&cfg.n, i);
        let x = ball_matrix(&mut rng, i, n, outer);
        let dir = RankOneDirection::sample(&mut rng, n);
        (x, dir)
    };
    let mut checks = vec![sampled("lh-gap", s, Criterion::AtLeast, 1e-9, |i| {
        let (x, dir) = at(i);
        let v = lh_gap_area(&x, &dir).map_or(f64::NAN, |g| g.gap);
        (v, (x, dir))
    })];
    for k in 0..3 {
        checks.push(sampled(&format!("lh-bracket-{}", k + 1), s, Criterion::AtLeast, 1e-9, |i| {
            let (x, dir) = at(i);
            let v = lh_gap_area(&x, &dir).map_or(f64::NAN, |g| g.brackets[k]);
            (v, (x, dir))
        }));
    }
    checks.push(sampled("lh-second-derivative-fd", s, Criterion::AtMost, 1e-6, |i| {
        let (x, dir) = at(i);
        let v = lh_gap_area(&x, &dir).map_or(f64::NAN, |g| {
            let analytic = g.second_derivative(&x);
            let fd = lh_second_derivative_fd(&x, &dir.matrix);
            (analytic - fd).abs() / analytic.abs()
        });
        (v, (x, dir))
    }));
    checks
}

fn algebra(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let (s, r, tol) = (cfg.samples, cfg.radius, 1e-10);
    let point = |stream: u64, i: u64, which: u64| {
        let mut rng = rng_for(cfg.seed ^ stream, i);
        let (a, b) = (r * (2.0 * rng.random::<f64>() - 1.0), r * (2.0 * rng.random::<f64>() - 1.0));
        if which == 0 {
            h1(a, b)
        } else {
            h2(a, b)
        }
    };
    let lemma = |i: u64| check_lemma_algebra(&point(1, i, i % 2));
    let mut checks = vec![
        sampled("a-equals-xj", s, Criterion::AtMost, tol, |i| {
            let x = point(1, i, i % 2);
            let v = lemma(i).map_or(f64::NAN, |rep| rep.a_error / (1.0 + x.norm()));
            (v, x)
        }),
        sampled("b-equals-minus-j", s, Criterion::AtMost, tol, |i| {
            let v = lemma(i).map_or(f64::NAN, |rep| rep.b_error);
            (v, point(1, i, i % 2))
        }),
    ];
    for (which, label, sign) in [(0u64, "h1-no-rank-one", -1.0), (1, "h2-no-rank-one", 1.0)] {
        checks.push(sampled(label, s, Criterion::Positive, 0.0, |i| {
            let (x, y) = (point(2, i, which), point(3, i, which));
            let (gx, gy) = (GradientMatrix::from_plane(&x), GradientMatrix::from_plane(&y));
            let v = if rank_one_connection(&gx, &gy).is_some() {
                -1.0
            } else {
                sign * x.sub(&y).det()
            };
            (v, (x, y))
        }));
    }
    let crit = h1h2_critical_map(&Polygon::unit_square(), 0.1)?;
    let inner = crit
        .audit
        .weak_inner
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let ok = crit.audit.passes && inner <= 1e-8;
    checks.push(CheckReport::single(
        "critical-map-audit",
        ok,
        inner,
        1e-8,
        serde_json::to_value(&crit.audit)?,
    ));
    Ok(checks)
}
