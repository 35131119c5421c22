//! Refinement experiment on a family approaching `C_A`: on each mesh the
//! stack `(u, v, w)` of a solved smooth map and its potentials gets an
//! oscillating divergence-free perturbation of size `eps` in `w`, and both
//! the weighted distance to `C_A` and the gradient distance to the exact
//! lift are recorded.

use serde::{Deserialize, Serialize};

use super::boundary::{Boundary, BoundaryPreset};
use super::grid::{DiscreteField, Grid};
use super::potentials::{build_potentials, DEFAULT_TOL_CURL};
use super::solver::{solve_dirichlet, SolveParams};
use crate::area::{dist_to_ca, lift};
use crate::error::{Error, Result};
use crate::sampling::par_map;

/// Weight `(1 - |x - c|^2 / r^2)^2` on the disc of radius `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Bump {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let d2 = ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)) / (self.radius * self.radius);
        if d2 < 1.0 {
            (1.0 - d2).powi(2)
        } else {
            0.0
        }
    }
}

pub const DEFAULT_WEIGHTS: [Bump; 3] = [
    Bump { center: [0.5, 0.5], radius: 0.35 },
    Bump { center: [0.3, 0.35], radius: 0.2 },
    Bump { center: [0.7, 0.65], radius: 0.2 },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessConfig {
    /// Mesh spacings, coarse to fine; each mesh must refine the previous one.
    pub spacings: Vec<f64>,
    /// Perturbation sizes, one per mesh.
    pub eps: Vec<f64>,
    /// Integrability exponent of the family, recorded only.
    pub p: f64,
    /// Exponent of the gradient distance.
    pub p_bar: f64,
    pub solution: BoundaryPreset,
    pub weights: Vec<Bump>,
    pub solve: SolveParams,
}

impl CompactnessConfig {
    /// Levels `1..=levels` with `h = 2^-(n+1)` and `eps = 2^-n`.
    pub fn dyadic(levels: u32) -> Self {
        CompactnessConfig {
            spacings: (1..=levels).map(|n| 0.5f64.powi(n as i32 + 1)).collect(),
            eps: (1..=levels).map(|n| 0.5f64.powi(n as i32)).collect(),
            p: 4.0,
            p_bar: 2.0,
            solution: BoundaryPreset::scherk_unit(),
            weights: DEFAULT_WEIGHTS.to_vec(),
            solve: SolveParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub h: f64,
    pub eps: f64,
    pub wavenumber: f64,
    pub solve_converged: bool,
    /// `sum w dist(DU, C_A) eta` for each weight.
    pub weighted_residuals: Vec<f64>,
    pub gradient_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub config: CompactnessConfig,
    pub levels: Vec<LevelReport>,
    /// Ratios `previous / current` of each weighted residual, then of the
    /// gradient distance; one row per level after the first.
    pub ratios: Vec<Vec<f64>>,
    /// Every sequence is non-increasing up to a 10% slack.
    pub monotone: bool,
}

impl CompactnessReport {
    /// Smallest decrease factor over the steps into levels `>= from_level`
    /// (levels count from 1).
    pub fn min_ratio_from(&self, from_level: usize) -> f64 {
        self.ratios
            .iter()
            .enumerate()
            .filter(|(k, _)| k + 2 >= from_level)
            .flat_map(|(_, r)| r.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Divergence-free oscillation `eps (-d2 psi, d1 psi)` with
/// `psi = sin(k x) sin(k y) / k^2`.
fn perturbation(p: [f64; 2], k: f64, eps: f64) -> [f64; 2] {
    let (sx, cx) = (k * p[0]).sin_cos();
    let (sy, cy) = (k * p[1]).sin_cos();
    [-eps * sx * cy / k, eps * cx * sy / k]
}

pub fn compactness_experiment(config: &CompactnessConfig) -> Result<CompactnessReport> {
    let m = config.spacings.len();
    if m == 0 || config.eps.len() != m {
        return Err(Error::Invalid("need one eps per mesh and at least one mesh".into()));
    }
    if config.solution.exact_gradient([0.5, 0.5]).is_none() {
        return Err(Error::Invalid("the solution preset needs a closed form".into()));
    }
    if !(config.p_bar >= 1.0) {
        return Err(Error::Invalid(format!("p_bar = {} must be at least 1", config.p_bar)));
    }
    let grids = config
        .spacings
        .iter()
        .map(|&h| Grid::unit_square(h))
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = grids.windows(2).find(|w| !w[0].is_refined_by(&w[1])) {
        return Err(Error::Invalid(format!(
            "meshes are not nested: h = {} then h = {}",
            w[0].h, w[1].h
        )));
    }
    let mut levels = Vec::with_capacity(m);
    for (idx, g) in grids.iter().enumerate() {
        levels.push(run_level(config, idx, g)?);
    }
    let series = |l: &LevelReport| -> Vec<f64> {
        let mut v = l.weighted_residuals.clone();
        v.push(l.gradient_distance);
        v
    };
    let ratios: Vec<Vec<f64>> = levels
        .windows(2)
        .map(|w| {
            series(&w[0])
                .iter()
                .zip(series(&w[1]))
                .map(|(a, b)| a / b)
                .collect()
        })
        .collect();
    let monotone = levels
        .windows(2)
        .all(|w| series(&w[0]).iter().zip(series(&w[1])).all(|(a, b)| b <= 1.1 * a));
    Ok(CompactnessReport {
        config: config.clone(),
        levels,
        ratios,
        monotone,
    })
}

fn run_level(config: &CompactnessConfig, idx: usize, g: &Grid) -> Result<LevelReport> {
    let (u, solve) = solve_dirichlet(g, &Boundary::Preset(config.solution.clone()), &config.solve)?;
    let pot = build_potentials(&u, DEFAULT_TOL_CURL);
    let eps = config.eps[idx];
    // four nodes per period keeps the discrete oscillation the same on every mesh
    let k = std::f64::consts::PI / (2.0 * g.h);
    let mut w = pot.w.clone();
    for (i, j) in g.nodes() {
        let d = perturbation(g.point(i, j), k, eps);
        w.set(i, j, 0, w.get(i, j, 0) + d[0]);
        w.set(i, j, 1, w.get(i, j, 1) + d[1]);
    }
    let stacked = DiscreteField::stack(&[&u, &pot.v, &w])?;
    let nodes: Vec<(usize, usize)> = g.nodes().collect();
    let per_node = par_map(nodes.len(), |n| -> Result<(f64, f64)> {
        let (i, j) = nodes[n];
        let p = g.point(i, j);
        let du = stacked.gradient(i, j);
        let exact = lift(&config.solution.exact_gradient(p).expect("checked above")).to_stacked();
        let dist_exact = du.sub(&exact).norm();
        let near = config.weights.iter().any(|b| b.eval(p) > 0.0);
        let dist = if near { dist_to_ca(&du)?.distance } else { 0.0 };
        Ok((dist, dist_exact))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let weighted_residuals = config
        .weights
        .iter()
        .map(|b| {
            nodes
                .iter()
                .zip(&per_node)
                .map(|(&(i, j), (d, _))| g.weight(i, j) * d * b.eval(g.point(i, j)))
                .sum()
        })
        .collect();
    let gradient_distance = nodes
        .iter()
        .zip(&per_node)
        .map(|(&(i, j), (_, e))| g.weight(i, j) * e.powf(config.p_bar))
        .sum::<f64>()
        .powf(1.0 / config.p_bar);
    Ok(LevelReport {
        level: idx + 1,
        h: g.h,
        eps,
        wavenumber: k,
        solve_converged: solve.converged,
        weighted_residuals,
        gradient_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_family_sees_only_discretization() {
        let mut cfg = CompactnessConfig::dyadic(3);
        cfg.eps = vec![0.0; 3];
        let rep = compactness_experiment(&cfg).unwrap();
        let last = rep.levels.last().unwrap();
        assert!(last.weighted_residuals.iter().all(|r| *r < 1e-3), "{last:?}");
        assert!(rep.levels.iter().all(|l| l.solve_converged));
    }

    #[test]
    fn rejects_non_nested_meshes() {
        let mut cfg = CompactnessConfig::dyadic(2);
        cfg.spacings = vec![0.25, 0.2];
        assert!(matches!(compactness_experiment(&cfg), Err(Error::Invalid(_))));
    }
}
