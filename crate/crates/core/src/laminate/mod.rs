//! Piecewise affine maps, the `H1`/`H2` subspaces and simple laminates.

mod build;
mod h1h2;
mod map;
mod polygon;

pub use build::{
    audit_critical_map, audit_laminate, build_laminate, h1h2_critical_map, test_functions,
    CriticalMap, CriticalMapAudit, Laminate, LaminateAudit, LaminateSpec, MAX_PIECES,
};
pub use h1h2::{
    check_lemma_algebra, h1, h2, in_h1, in_h2, project_h1, project_h2, rank_one_connection,
    AlgebraReport, RankOneConnection,
};
pub use map::{
    gradient_class, gradient_stats, null_lagrangian_check, weak_divergence_pairing, AffineMap,
    AffinePiece, GradientClass, GradientStats, Locator, PiecewiseAffineMap, TilingAudit,
};
pub use polygon::{shoelace, HalfPlane, Point, Polygon};
