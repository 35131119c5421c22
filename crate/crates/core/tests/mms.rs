use std::f64::consts::PI;

use minsurf::area::{area_density, area_gradient, field_a, field_b, lift};
use minsurf::matrix::GradientMatrix;
use minsurf::mms::{
    build_potentials, discrete_energy, el_residual, inclusion_residual, inner_variation_residual, ma_potential,
    solve_dirichlet, Boundary, BoundaryPreset, DiscreteField, Grid, Method, SolveParams,
};

fn unit(h: f64) -> Grid {
    Grid::unit_square(h).unwrap()
}

fn solve(h: f64, preset: BoundaryPreset, method: Method) -> (DiscreteField, minsurf::mms::SolveReport) {
    let params = SolveParams {
        method,
        max_iter: 500,
        ..SolveParams::default()
    };
    solve_dirichlet(&unit(h), &Boundary::Preset(preset), &params).unwrap()
}

/// Composite 4x4 Gauss-Legendre quadrature over the unit square.
fn quadrature(cells: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let nodes = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for cj in 0..cells {
        for ci in 0..cells {
            for (sx, wx) in nodes {
                for (sy, wy) in nodes {
                    let x = (ci as f64 + 0.5 + 0.5 * sx) * h;
                    let y = (cj as f64 + 0.5 + 0.5 * sy) * h;
                    total += wx * wy * f(x, y);
                }
            }
        }
    }
    total * h * h / 4.0
}

#[test]
fn energy_of_sine_perturbation_converges_to_quadrature() {
    let delta = 0.1;
    let exact = quadrature(200, |x, y| {
        let g = GradientMatrix::from_flat(
            2,
            &[delta * PI * (PI * x).cos() * (PI * y).sin(), delta * PI * (PI * x).sin() * (PI * y).cos(), 0.0, 0.0],
        );
        area_density(&g)
    });
    assert!(exact > 1.0);
    let errors: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
        .iter()
        .map(|&h| {
            let u = DiscreteField::from_fn(unit(h), 2, |[x, y]| vec![delta * (PI * x).sin() * (PI * y).sin(), 0.0]);
            let e = discrete_energy(&u);
            assert!(e > 1.0);
            (e - exact).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 3.5 && ratio < 4.5, "{errors:?}");
    }
}

#[test]
fn affine_data_is_reproduced() {
    let p: BoundaryPreset = "affine".parse().unwrap();
    let (u, rep) = solve(1.0 / 16.0, p.clone(), Method::Newton);
    assert!(rep.converged && rep.el_residual_norm <= 1e-10);
    assert!(rep.inner_residual_norm <= 1e-10);
    for (i, j) in u.grid.nodes() {
        let e = p.exact(u.grid.point(i, j)).unwrap();
        for c in 0..2 {
            assert!((u.get(i, j, c) - e[c]).abs() <= 1e-12);
        }
    }
}

/// Gauss-Seidel on the bilinear-element Laplacian (stencil 8/3 and -1/3).
fn discrete_laplace(boundary: &DiscreteField) -> DiscreteField {
    let mut u = boundary.clone();
    let g = u.grid;
    for (i, j) in g.interior() {
        u.set(i, j, 0, 0.0);
    }
    for _ in 0..20_000 {
        let mut change = 0.0f64;
        for (i, j) in g.interior().collect::<Vec<_>>() {
            let mut s = 0.0;
            for dj in [-1i64, 0, 1] {
                for di in [-1i64, 0, 1] {
                    if di != 0 || dj != 0 {
                        s += u.get((i as i64 + di) as usize, (j as i64 + dj) as usize, 0);
                    }
                }
            }
            let new = s / 8.0;
            change = change.max((new - u.get(i, j, 0)).abs());
            u.set(i, j, 0, new);
        }
        if change < 1e-16 {
            break;
        }
    }
    u
}

#[test]
fn small_data_follow_the_discrete_laplacian_to_third_order() {
    let h = 1.0 / 16.0;
    let gap = |delta: f64| {
        let preset = BoundaryPreset::SineBump { amplitude: delta };
        let (u, rep) = solve(h, preset.clone(), Method::Newton);
        assert!(rep.converged);
        let ring = Boundary::Preset(preset).initial_field(&unit(h)).unwrap();
        let lap = discrete_laplace(&ring);
        u.max_diff(&lap).unwrap()
    };
    let (g1, g2) = (gap(0.01), gap(0.02));
    assert!(g1 <= 1e-5, "{g1}");
    let ratio = g2 / g1;
    assert!(ratio > 7.0 && ratio < 9.0, "{g1} {g2}");
}

#[test]
fn harmonic_preset_is_exactly_discrete_harmonic() {
    let h = 1.0 / 16.0;
    let preset = BoundaryPreset::Harmonic { delta: 0.01 };
    let (u, _) = solve(h, preset.clone(), Method::Newton);
    let exact = DiscreteField::from_fn(unit(h), 1, |p| preset.eval(p));
    let lap = discrete_laplace(&Boundary::Preset(preset).initial_field(&unit(h)).unwrap());
    assert!(lap.max_diff(&exact).unwrap() < 1e-13);
    assert!(u.max_diff(&exact).unwrap() <= 1e-6);
}

#[test]
fn residual_of_a_perturbed_affine_map_approaches_the_smooth_residual() {
    let a = 0.3;
    let grad = |x: f64, y: f64| {
        GradientMatrix::from_flat(1, &[1.0 + a * PI * (PI * x).cos() * (PI * y).sin(), -0.5 + a * PI * (PI * x).sin() * (PI * y).cos()])
    };
    // divergence of DA(Du) by central differences of the exact field
    let s = 1e-4;
    let smooth = |x: f64, y: f64| {
        let fx = |x| area_gradient(&grad(x, y)).get(0, 0);
        let fy = |y| area_gradient(&grad(x, y)).get(0, 1);
        (fx(x + s) - fx(x - s)) / (2.0 * s) + (fy(y + s) - fy(y - s)) / (2.0 * s)
    };
    let target = smooth(0.25, 0.5);
    assert!(target.abs() > 0.1);
    let errors: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&cells| {
            let g = unit(1.0 / cells as f64);
            let u = DiscreteField::from_fn(g, 1, |[x, y]| vec![x - 0.5 * y + a * (PI * x).sin() * (PI * y).sin()]);
            let r = el_residual(&u);
            assert!(r.norm > 0.1);
            (r.field.get(cells / 4, cells / 2, 0) - target).abs()
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{errors:?}");
    }
}

#[test]
fn accepted_steps_never_raise_the_energy() {
    for method in [Method::Newton, Method::Descent] {
        for preset in [BoundaryPreset::SineBump { amplitude: 0.5 }, BoundaryPreset::scherk_unit()] {
            let (_, rep) = solve(1.0 / 16.0, preset, method);
            assert!(rep.converged, "{method:?}: {rep:?}");
            for w in rep.energy_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-13), "{:?}", rep.energy_history);
            }
        }
    }
}

#[test]
fn inner_residual_and_path_discrepancy_decay_on_a_solved_instance() {
    let runs: Vec<(f64, f64)> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
        .iter()
        .map(|&h| {
            let (u, rep) = solve(h, BoundaryPreset::holomorphic_default(), Method::Newton);
            let inner = inner_variation_residual(&u).norm;
            assert!((inner - rep.inner_residual_norm).abs() < 1e-15);
            (inner, build_potentials(&u, 0.05).path_discrepancy)
        })
        .collect();
    for w in runs.windows(2) {
        assert!(w[0].0 / w[1].0 > 2.5, "{runs:?}");
        assert!(w[0].1 / w[1].1 > 2.5, "{runs:?}");
    }
}

#[test]
fn potentials_of_an_affine_map_are_affine() {
    let x0 = GradientMatrix::from_flat(2, &[1.0, 0.5, -0.25, 2.0]);
    let u = DiscreteField::from_fn(unit(0.125), 2, |[x, y]| {
        x0.rows().iter().map(|r| r[0] * x + r[1] * y).collect()
    });
    let pot = build_potentials(&u, 0.05);
    assert!(pot.integrable && pot.path_discrepancy <= 1e-12);
    let (a, b) = (field_a(&x0), field_b(&x0));
    for (i, j) in u.grid.nodes() {
        let dv = pot.v.gradient(i, j);
        let dw = pot.w.gradient(i, j);
        assert!(dv.sub(&a).norm() < 1e-11);
        assert!(dw.sub(&GradientMatrix::from_plane(&b)).norm() < 1e-11);
    }
}

#[test]
fn flat_map_gives_the_quadratic_potential() {
    let u = DiscreteField::zeros(unit(0.125), 1);
    let pot = build_potentials(&u, 0.05);
    let (z, rep) = ma_potential(&pot.w, 0.05).unwrap();
    assert!(rep.max_det_error < 1e-12 && rep.max_det_error_near_ring < 1e-12);
    assert!((rep.min_laplacian - 2.0).abs() < 1e-10);
    for (i, j) in z.grid.nodes() {
        let [x, y] = z.grid.point(i, j);
        assert!((z.get(i, j, 0) - 0.5 * (x * x + y * y)).abs() < 1e-12);
    }
}

#[test]
fn inclusion_residual_of_a_perturbed_lift_matches_the_perturbation() {
    let x0 = GradientMatrix::from_flat(1, &[0.4, -0.7]);
    let l = lift(&x0);
    let noise = 1e-3;
    let stacked = DiscreteField::from_fn(unit(0.25), 4, |[x, y]| {
        vec![
            0.4 * x - 0.7 * y,
            l.a_block.get(0, 0) * x + l.a_block.get(0, 1) * y + noise * x,
            l.b_block.get(0, 0) * x + l.b_block.get(0, 1) * y,
            l.b_block.get(1, 0) * x + l.b_block.get(1, 1) * y,
        ]
    });
    let r = inclusion_residual(&stacked).unwrap();
    for (i, j) in r.grid.nodes() {
        let d = r.get(i, j, 0);
        assert!(d <= noise * (1.0 + 1e-9) && d > 0.5 * noise, "{d}");
    }
    let rough = DiscreteField::from_fn(unit(0.25), 4, |[x, y]| vec![x * y, (5.0 * x).sin(), y * y, -x]);
    assert!(inclusion_residual(&rough).unwrap().interior_max_abs() > 0.1);
}
