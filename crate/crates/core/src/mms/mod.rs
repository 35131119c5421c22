//! Discrete stationary points of the area functional on rectangles.

mod boundary;
mod compactness;
mod grid;
mod potentials;
mod solver;

pub use boundary::{Boundary, BoundaryPreset, PRESET_NAMES};
pub use grid::{read_field, write_field, DiscreteField, FieldHeader, Grid};
pub use solver::{
    discrete_energy, el_residual, inner_stress, inner_variation_residual, solve_dirichlet,
    solve_from, weak_divergence, Method, Residual, SolveParams, SolveReport,
};
pub use potentials::{
    build_potentials, inclusion_residual, ma_potential, nodal_gradients, MongeAmpereReport,
    Potentials, RowField, DEFAULT_TOL_CURL,
};
pub use compactness::{
    compactness_experiment, Bump, CompactnessConfig, CompactnessReport, LevelReport,
    DEFAULT_WEIGHTS,
};
