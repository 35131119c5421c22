use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::GradientMatrix;

/// Tensor grid on an axis-aligned rectangle. Nodes are indexed
/// `0..=nx + 1` by `0..=ny + 1`; the outer ring carries Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Invalid(format!("grid needs nx, ny >= 3, got {nx} x {ny}")));
        }
        if !(h > 0.0 && h.is_finite()) || origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("bad spacing {h} or origin {origin:?}")));
        }
        Ok(Grid { nx, ny, h, origin })
    }

    /// Unit square with spacing `h`; `1 / h` must be an integer.
    pub fn unit_square(h: f64) -> Result<Self> {
        let cells = (1.0 / h).round();
        if (cells * h - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("1/h = {} is not an integer", 1.0 / h)));
        }
        Grid::new(cells as usize - 1, cells as usize - 1, h, [0.0, 0.0])
    }

    /// Nodes per row, including the ring.
    pub fn width(&self) -> usize {
        self.nx + 2
    }

    pub fn height(&self) -> usize {
        self.ny + 2
    }

    pub fn node_count(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width() + i
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// `[x0, y0, x1, y1]`.
    pub fn domain(&self) -> [f64; 4] {
        let [x1, y1] = self.point(self.nx + 1, self.ny + 1);
        [self.origin[0], self.origin[1], x1, y1]
    }

    pub fn area(&self) -> f64 {
        let d = self.domain();
        (d[2] - d[0]) * (d[3] - d[1])
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx + 1 || j == self.ny + 1
    }

    /// Interior nodes in row-major order.
    pub fn interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.ny).flat_map(move |j| (1..=self.nx).map(move |i| (i, j)))
    }

    /// Interior nodes whose centered stencils avoid the ring, where nodal
    /// gradients switch to one-sided differences.
    pub fn deep_interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (2..self.ny).flat_map(move |j| (2..self.nx).map(move |i| (i, j)))
    }

    pub fn is_deep(&self, i: usize, j: usize) -> bool {
        (2..self.nx).contains(&i) && (2..self.ny).contains(&j)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height()).flat_map(move |j| (0..self.width()).map(move |i| (i, j)))
    }

    /// Trapezoid weight of a node, so that `sum w f` integrates `f`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let edge = |k: usize, last: usize| if k == 0 || k == last { 0.5 } else { 1.0 };
        edge(i, self.nx + 1) * edge(j, self.ny + 1) * self.h * self.h
    }

    /// Whether `fine` refines `self` by an integer factor with the same domain.
    pub fn is_refined_by(&self, fine: &Grid) -> bool {
        let ratio = self.h / fine.h;
        let r = ratio.round();
        let d0 = self.domain();
        let d1 = fine.domain();
        r >= 1.0
            && (ratio - r).abs() < 1e-9
            && d0.iter().zip(&d1).all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + a.abs()))
    }
}

/// Nodal values with `components` entries per node, ring included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub grid: Grid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        DiscreteField {
            grid,
            components,
            values: vec![0.0; grid.node_count() * components],
        }
    }

    pub fn from_fn(grid: Grid, components: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, components);
        for (i, j) in grid.nodes() {
            let v = f(grid.point(i, j));
            out.node_mut(i, j).copy_from_slice(&v[..components]);
        }
        out
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let k = self.grid.index(i, j) * self.components;
        &self.values[k..k + self.components]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = self.grid.index(i, j) * self.components;
        &mut self.values[k..k + self.components]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[self.grid.index(i, j) * self.components + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.grid.index(i, j) * self.components + c;
        self.values[k] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute value over interior nodes.
    pub fn interior_max_abs(&self) -> f64 {
        self.grid
            .interior()
            .flat_map(|(i, j)| self.node(i, j).to_vec())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest nodal difference from another field on the same grid.
    pub fn max_diff(&self, other: &DiscreteField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_same(&self, other: &DiscreteField) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        Ok(())
    }

    /// Concatenates the components of several fields on one grid.
    pub fn stack(parts: &[&DiscreteField]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Invalid("nothing to stack".into()))?;
        let grid = first.grid;
        if parts.iter().any(|p| p.grid != grid) {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        let m: usize = parts.iter().map(|p| p.components).sum();
        let mut out = DiscreteField::zeros(grid, m);
        for (i, j) in grid.nodes() {
            let node: Vec<f64> = parts.iter().flat_map(|p| p.node(i, j).to_vec()).collect();
            out.node_mut(i, j).copy_from_slice(&node);
        }
        Ok(out)
    }

    /// Nodal gradient: centered differences inside, second-order one-sided
    /// differences on the ring.
    pub fn gradient(&self, i: usize, j: usize) -> GradientMatrix {
        let g = &self.grid;
        let h = g.h;
        let d = |c: usize, along_x: bool| -> f64 {
            let (k, last) = if along_x { (i, g.nx + 1) } else { (j, g.ny + 1) };
            let at = |o: isize| {
                let k2 = (k as isize + o) as usize;
                if along_x {
                    self.get(k2, j, c)
                } else {
                    self.get(i, k2, c)
                }
            };
            if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if k == last {
                (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
            } else {
                (at(1) - at(-1)) / (2.0 * h)
            }
        };
        let rows: Vec<f64> = (0..self.components).flat_map(|c| [d(c, true), d(c, false)]).collect();
        GradientMatrix::from_flat(self.components, &rows)
    }
}

/// JSON header written next to the CSV values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub grid: Grid,
    pub components: usize,
    /// Rows follow `j` outer, `i` inner; one row per node, one column per
    /// component.
    pub layout: String,
    pub values: String,
}

const FORMAT: &str = "minsurf-field";

/// Writes `<stem>.json` and `<stem>.csv`; returns the header path.
pub fn write_field(field: &DiscreteField, stem: &Path) -> Result<PathBuf> {
    let header_path = stem.with_extension("json");
    let csv_path = stem.with_extension("csv");
    let header = FieldHeader {
        format: FORMAT.into(),
        version: 1,
        grid: field.grid,
        components: field.components,
        layout: "row-major: j outer, i inner, ring included".into(),
        values: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut out = BufWriter::new(File::create(&header_path)?);
    serde_json::to_writer_pretty(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&csv_path)
        .map_err(csv_error)?;
    for chunk in field.values.chunks(field.components) {
        w.serialize(chunk).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(header_path)
}

pub fn read_field(header_path: &Path) -> Result<DiscreteField> {
    let header: FieldHeader = serde_json::from_reader(BufReader::new(File::open(header_path)?))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(Error::Invalid(format!(
            "unsupported field format {} v{}",
            header.format, header.version
        )));
    }
    let grid = Grid::new(header.grid.nx, header.grid.ny, header.grid.h, header.grid.origin)?;
    let csv_path = header_path.with_file_name(&header.values);
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&csv_path)
        .map_err(csv_error)?;
    let mut values = Vec::with_capacity(grid.node_count() * header.components);
    for row in r.deserialize::<Vec<f64>>() {
        let row = row.map_err(csv_error)?;
        if row.len() != header.components {
            return Err(Error::Shape(format!(
                "row with {} values, expected {}",
                row.len(),
                header.components
            )));
        }
        values.extend(row);
    }
    if values.len() != grid.node_count() * header.components {
        return Err(Error::Shape(format!(
            "{} values for a {} x {} grid with {} components",
            values.len(),
            grid.width(),
            grid.height(),
            header.components
        )));
    }
    let field = DiscreteField {
        grid,
        components: header.components,
        values,
    };
    if !field.is_finite() {
        return Err(Error::Invalid("field contains non-finite values".into()));
    }
    Ok(field)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Invalid(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::unit_square(0.25).unwrap();
        assert_eq!((g.nx, g.ny, g.node_count()), (3, 3, 25));
        assert_eq!(g.domain(), [0.0, 0.0, 1.0, 1.0]);
        let total: f64 = g.nodes().map(|(i, j)| g.weight(i, j)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(Grid::unit_square(0.3).is_err());
        assert!(Grid::new(2, 5, 0.1, [0.0, 0.0]).is_err());
        assert!(g.is_refined_by(&Grid::unit_square(0.125).unwrap()));
        assert!(!g.is_refined_by(&Grid::unit_square(0.2).unwrap()));
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = Grid::unit_square(0.125).unwrap();
        let f = DiscreteField::from_fn(g, 1, |p| vec![p[0] * p[0] - 3.0 * p[0] * p[1] + p[1]]);
        for (i, j) in g.nodes() {
            let [x, y] = g.point(i, j);
            let d = f.gradient(i, j);
            assert!((d.get(0, 0) - (2.0 * x - 3.0 * y)).abs() < 1e-12);
            assert!((d.get(0, 1) - (1.0 - 3.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(4, 3, 0.1, [-0.2, 0.5]).unwrap();
        let f = DiscreteField::from_fn(g, 2, |p| vec![p[0].sin() / 3.0, p[1].exp()]);
        let header = write_field(&f, &dir.path().join("u")).unwrap();
        assert_eq!(read_field(&header).unwrap(), f);
        std::fs::write(dir.path().join("u.csv"), "1,2\n").unwrap();
        assert!(matches!(read_field(&header), Err(Error::Shape(_))));
    }
}
