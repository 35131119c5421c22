//! Dirichlet data for the solver.
//!
//! | preset        | n | data                                              |
//! |---------------|---|---------------------------------------------------|
//! | `affine`      | n | `c + X0 x`                                        |
//! | `harmonic`    | 1 | `delta (x^2 - y^2)`, a small harmonic datum        |
//! | `holomorphic` | 2 | `(Re phi, Im phi)` with `phi(z) = scale exp(z)`    |
//! | `sine-bump`   | 1 | `amplitude sin(pi x) cos(pi y)`                   |
//! | `scherk`      | 1 | `log(cos(a (y - yc)) / cos(a (x - xc))) / a`      |
//!
//! Holomorphic graphs and Scherk's surface solve the equations exactly, so
//! they double as manufactured solutions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::{DiscreteField, Grid};
use crate::error::{Error, Result};
use crate::matrix::GradientMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum BoundaryPreset {
    Affine { matrix: GradientMatrix, offset: Vec<f64> },
    Harmonic { delta: f64 },
    Holomorphic { scale: f64 },
    SineBump { amplitude: f64 },
    Scherk { a: f64, center: [f64; 2] },
}

impl BoundaryPreset {
    pub fn components(&self) -> usize {
        match self {
            BoundaryPreset::Affine { matrix, .. } => matrix.n(),
            BoundaryPreset::Holomorphic { .. } => 2,
            _ => 1,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> Vec<f64> {
        let [x, y] = p;
        match self {
            BoundaryPreset::Affine { matrix, offset } => matrix
                .rows()
                .iter()
                .zip(offset)
                .map(|(r, c)| c + r[0] * x + r[1] * y)
                .collect(),
            BoundaryPreset::Harmonic { delta } => vec![delta * (x * x - y * y)],
            BoundaryPreset::Holomorphic { scale } => {
                let e = scale * x.exp();
                vec![e * y.cos(), e * y.sin()]
            }
            BoundaryPreset::SineBump { amplitude } => {
                vec![amplitude * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).cos()]
            }
            BoundaryPreset::Scherk { a, center } => {
                let (cx, cy) = ((a * (x - center[0])).cos(), (a * (y - center[1])).cos());
                vec![(cy / cx).ln() / a]
            }
        }
    }

    /// Closed-form solution where one is known.
    pub fn exact(&self, p: [f64; 2]) -> Option<Vec<f64>> {
        match self {
            BoundaryPreset::Affine { .. }
            | BoundaryPreset::Holomorphic { .. }
            | BoundaryPreset::Scherk { .. } => Some(self.eval(p)),
            _ => None,
        }
    }

    pub fn exact_gradient(&self, p: [f64; 2]) -> Option<GradientMatrix> {
        let [x, y] = p;
        match self {
            BoundaryPreset::Affine { matrix, .. } => Some(matrix.clone()),
            BoundaryPreset::Holomorphic { scale } => {
                let e = scale * x.exp();
                let (c, s) = (e * y.cos(), e * y.sin());
                Some(GradientMatrix::from_flat(2, &[c, -s, s, c]))
            }
            BoundaryPreset::Scherk { a, center } => Some(GradientMatrix::from_flat(
                1,
                &[(a * (x - center[0])).tan(), -(a * (y - center[1])).tan()],
            )),
            _ => None,
        }
    }

    /// Scherk's surface centered on the unit square.
    pub fn scherk_unit() -> Self {
        BoundaryPreset::Scherk { a: 1.0, center: [0.5, 0.5] }
    }

    pub fn holomorphic_default() -> Self {
        BoundaryPreset::Holomorphic { scale: 0.5 }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if let BoundaryPreset::Affine { matrix, offset } = self {
            if matrix.n() != offset.len() {
                return Err(Error::Shape("affine offset length differs from matrix rows".into()));
            }
        }
        if let BoundaryPreset::Scherk { a, center } = self {
            let d = grid.domain();
            let reach = (d[0] - center[0])
                .abs()
                .max((d[2] - center[0]).abs())
                .max((d[1] - center[1]).abs())
                .max((d[3] - center[1]).abs());
            if !(a * reach < 0.99 * std::f64::consts::FRAC_PI_2) {
                return Err(Error::Domain(format!(
                    "Scherk surface with a = {a} is singular on the domain"
                )));
            }
        }
        Ok(())
    }
}

/// Preset names accepted on the command line.
pub const PRESET_NAMES: [&str; 5] = ["affine", "harmonic", "holomorphic", "sine-bump", "scherk"];

impl FromStr for BoundaryPreset {
    type Err = Error;

    /// Default instance of each preset; `harmonic-<delta>` and
    /// `sine-bump-<amplitude>` set the parameter.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad preset parameter in {s:?}")))
        };
        Ok(match s {
            "affine" => BoundaryPreset::Affine {
                matrix: GradientMatrix::from_flat(2, &[1.0, 0.5, -0.25, 2.0]),
                offset: vec![0.1, -0.3],
            },
            "harmonic" => BoundaryPreset::Harmonic { delta: 0.01 },
            "holomorphic" => BoundaryPreset::holomorphic_default(),
            "sine-bump" => BoundaryPreset::SineBump { amplitude: 0.5 },
            "scherk" => BoundaryPreset::scherk_unit(),
            _ => {
                if let Some(t) = s.strip_prefix("harmonic-") {
                    BoundaryPreset::Harmonic { delta: num(t)? }
                } else if let Some(t) = s.strip_prefix("sine-bump-") {
                    BoundaryPreset::SineBump { amplitude: num(t)? }
                } else {
                    return Err(Error::Invalid(format!(
                        "unknown boundary preset {s:?}; expected one of {PRESET_NAMES:?}"
                    )));
                }
            }
        })
    }
}

/// Dirichlet data: a preset or a field whose ring is used.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Preset(BoundaryPreset),
    Field(DiscreteField),
}

impl Boundary {
    pub fn components(&self) -> usize {
        match self {
            Boundary::Preset(p) => p.components(),
            Boundary::Field(f) => f.components,
        }
    }

    /// Initial field: boundary data on the ring and the bilinear blend of
    /// the ring inside.
    pub fn initial_field(&self, grid: &Grid) -> Result<DiscreteField> {
        let m = self.components();
        let mut u = DiscreteField::zeros(*grid, m);
        match self {
            Boundary::Preset(p) => {
                p.check(grid)?;
                for (i, j) in grid.nodes().filter(|&(i, j)| grid.is_boundary(i, j)) {
                    let v = p.eval(grid.point(i, j));
                    u.node_mut(i, j).copy_from_slice(&v);
                }
            }
            Boundary::Field(f) => {
                if f.grid != *grid {
                    return Err(Error::Shape("boundary field lives on another grid".into()));
                }
                for (i, j) in grid.nodes().filter(|&(i, j)| grid.is_boundary(i, j)) {
                    u.node_mut(i, j).copy_from_slice(f.node(i, j));
                }
            }
        }
        if !u.is_finite() {
            return Err(Error::Invalid("boundary data is not finite".into()));
        }
        let (w, hgt) = (grid.nx + 1, grid.ny + 1);
        for (i, j) in grid.interior() {
            let (s, t) = (i as f64 / w as f64, j as f64 / hgt as f64);
            for c in 0..m {
                let edges = (1.0 - t) * u.get(i, 0, c)
                    + t * u.get(i, hgt, c)
                    + (1.0 - s) * u.get(0, j, c)
                    + s * u.get(w, j, c);
                let corners = (1.0 - s) * (1.0 - t) * u.get(0, 0, c)
                    + s * (1.0 - t) * u.get(w, 0, c)
                    + (1.0 - s) * t * u.get(0, hgt, c)
                    + s * t * u.get(w, hgt, c);
                u.set(i, j, c, edges - corners);
            }
        }
        Ok(u)
    }
}
