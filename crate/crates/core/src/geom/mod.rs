//! Set-based geometry substrate: constrained zonotopes and planar convex regions.
//!
//! Shadows and candidate-position sets are planar. They are built as
//! constrained zonotopes (footprint ⊕ shadow segment, clipped to the scene),
//! converted exactly to convex polygons, and then combined with closed-form
//! polygon booleans inside a [`RegionSet`].

mod polygon;
mod region;
mod zonotope;

pub use polygon::{convex_hull, ConvexPolygon, HalfPlane};
pub use region::RegionSet;
pub use zonotope::ConstrainedZonotope;

use crate::lp::LpError;
use thiserror::Error;

pub type Point2 = nalgebra::Vector2<f64>;

/// Vertex deduplication and orientation tolerance, meters.
pub const EPS_GEOM: f64 = 1e-9;
/// Feasibility slack for the constrained-zonotope linear programs.
pub const EPS_LP: f64 = 1e-8;
/// Regions below this area (m²) are treated as empty.
pub const EPS_AREA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid constrained zonotope: {0}")]
    InvalidZonotope(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("operation requires a nonempty set")]
    EmptySet,
    #[error("degenerate region (area {area:.3e} m²)")]
    DegenerateRegion { area: f64 },
    #[error("region is empty: no position")]
    NoPosition,
    #[error("direction is not a unit vector (norm {norm})")]
    NonUnitDirection { norm: f64 },
    #[error("lp solver failure: {0}")]
    Solver(#[from] LpError),
}

pub(crate) fn cross(a: Point2, b: Point2) -> f64 {
    a.x * b.y - a.y * b.x
}
