//! Zonotope shadow matching on the ground plane.
//!
//! A building's shadow for one satellite is the set of receiver positions whose
//! ray toward the satellite enters the building prism. At fixed antenna height
//! that set is the footprint swept backwards along the satellite azimuth by
//! `(h − h_a) / tan(el)`, i.e. `footprint ⊕ segment`. For a rectangular
//! footprint this is a zonotope with one extra generator, which is clipped to
//! the scene bounds as a constrained zonotope and then turned into a polygon.

use crate::geom::{convex_hull, ConstrainedZonotope, ConvexPolygon, GeomError, Point2, RegionSet, EPS_AREA, EPS_GEOM};
use crate::label::Label;
use crate::scene::{Building, SatelliteView, Scene};
use crate::select::SelectionDecision;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Satellites at or below this elevation cast effectively unbounded shadows.
pub const GRAZING_ELEVATION_DEG: f64 = 0.5;
/// A truth position closer than this to a shadow boundary is flagged as
/// boundary-ambiguous, meters.
pub const AMBIGUITY_BAND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZsmError {
    #[error("no shadow computed for selected satellite {0}")]
    MissingShadow(u32),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRegion {
    pub sat_id: u32,
    pub region: RegionSet,
    /// Elevation at or below [`GRAZING_ELEVATION_DEG`]; the shadow was clipped
    /// to the scene bounds.
    pub grazing: bool,
    /// Buildings whose shadow came from the convex-hull route because the
    /// footprint is not centrally symmetric or the zonotope route failed.
    pub hull_fallbacks: usize,
}

/// Which construction produced a building shadow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowRoute {
    Zonotope,
    Hull,
}

/// Horizontal sweep vector from the footprint toward the shadow tip, or
/// `None` when the building is not taller than the antenna.
fn sweep(building: &Building, sat: &SatelliteView, antenna_height: f64, cap: f64) -> Option<Point2> {
    let rise = building.height - antenna_height;
    if rise < 0.0 {
        return None;
    }
    let (az, el) = (sat.azimuth_deg.to_radians(), sat.elevation_deg.to_radians());
    let length = if sat.elevation_deg <= GRAZING_ELEVATION_DEG {
        cap
    } else {
        (rise / el.tan()).min(cap)
    };
    Some(-length * Point2::new(az.sin(), az.cos()))
}

fn footprint_plus_segment(footprint: &ConvexPolygon, v: Point2) -> Option<ConstrainedZonotope> {
    let z = footprint.as_zonotope()?;
    if v.norm() == 0.0 {
        return Some(z);
    }
    let seg = ConstrainedZonotope::zonotope(
        DVector::from_column_slice(&[0.5 * v.x, 0.5 * v.y]),
        DMatrix::from_column_slice(2, 1, &[0.5 * v.x, 0.5 * v.y]),
    )
    .ok()?;
    z.minkowski_sum(&seg).ok()
}

/// `hull(footprint ∪ (footprint + v)) ∩ bounds` through the constrained-zonotope route.
pub fn shadow_polygon_zonotope(
    footprint: &ConvexPolygon,
    v: Point2,
    bounds: &ConvexPolygon,
) -> Result<Option<ConvexPolygon>, GeomError> {
    let z = footprint_plus_segment(footprint, v)
        .ok_or_else(|| GeomError::InvalidPolygon("footprint is not centrally symmetric".into()))?;
    // Skip the LP-backed clip when the shadow already lies inside the bounds.
    let mut inside = true;
    for h in bounds.halfplanes() {
        match z.support(&[h.normal.x, h.normal.y])? {
            Some((val, _)) if val <= h.offset + EPS_GEOM => {}
            _ => {
                inside = false;
                break;
            }
        }
    }
    let clipped = if inside {
        z
    } else {
        let b = bounds
            .as_zonotope()
            .ok_or_else(|| GeomError::InvalidPolygon("bounds are not centrally symmetric".into()))?;
        z.intersect(&b)?
    };
    match clipped.to_polygon() {
        Ok(p) => Ok(Some(p)),
        Err(GeomError::EmptySet | GeomError::DegenerateRegion { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Same set as [`shadow_polygon_zonotope`], via a vertex hull and half-plane clipping.
pub fn shadow_polygon_hull(footprint: &ConvexPolygon, v: Point2, bounds: &ConvexPolygon) -> Option<ConvexPolygon> {
    let mut pts: Vec<Point2> = footprint.vertices().to_vec();
    pts.extend(footprint.vertices().iter().map(|p| p + v));
    let hull = ConvexPolygon::new(convex_hull(&pts)).ok()?;
    hull.intersect_poly(bounds)
}

fn building_shadow(
    building: &Building,
    v: Point2,
    bounds: &ConvexPolygon,
) -> Result<(Option<ConvexPolygon>, ShadowRoute), GeomError> {
    if building.footprint.as_zonotope().is_some() {
        match shadow_polygon_zonotope(&building.footprint, v, bounds) {
            Ok(p) => return Ok((p, ShadowRoute::Zonotope)),
            Err(GeomError::Solver(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((shadow_polygon_hull(&building.footprint, v, bounds), ShadowRoute::Hull))
}

fn boxes_overlap(a: (Point2, Point2), b: (Point2, Point2)) -> bool {
    a.0.x <= b.1.x && b.0.x <= a.1.x && a.0.y <= b.1.y && b.0.y <= a.1.y
}

/// Shadow of every building for one satellite, clipped to the scene bounds.
pub fn compute_shadow(scene: &Scene, sat: &SatelliteView, antenna_height: f64) -> Result<ShadowRegion, ZsmError> {
    compute_shadow_near(scene, sat, antenna_height, None)
}

/// As [`compute_shadow`], but skips buildings whose shadow cannot reach the
/// axis-aligned box `window`. Inside `window` the result is the same set.
pub fn compute_shadow_near(
    scene: &Scene,
    sat: &SatelliteView,
    antenna_height: f64,
    window: Option<(Point2, Point2)>,
) -> Result<ShadowRegion, ZsmError> {
    let (blo, bhi) = scene.bounds.bounding_box();
    let cap = 2.0 * (bhi - blo).norm();
    let mut polys = Vec::new();
    let mut hull_fallbacks = 0;
    for b in &scene.buildings {
        let Some(v) = sweep(b, sat, antenna_height, cap) else {
            continue;
        };
        if let Some(w) = window {
            let (lo, hi) = b.footprint.bounding_box();
            let reach = (lo.inf(&(lo + v)), hi.sup(&(hi + v)));
            if !boxes_overlap(reach, w) {
                continue;
            }
        }
        let (poly, route) = building_shadow(b, v, &scene.bounds)?;
        if route == ShadowRoute::Hull {
            hull_fallbacks += 1;
        }
        polys.extend(poly);
    }
    Ok(ShadowRegion {
        sat_id: sat.sat_id,
        region: RegionSet::union_of(polys),
        grazing: sat.elevation_deg <= GRAZING_ELEVATION_DEG,
        hull_fallbacks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    /// LOS: the receiver is outside the shadow.
    Subtract,
    /// NLOS: the receiver is inside the shadow.
    Intersect,
    /// Not applied because the AOI was already empty.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub sat_id: u32,
    pub label: Label,
    pub operation: Operation,
    pub resulting_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub region: RegionSet,
    pub initial_area: f64,
    pub log: Vec<RefinementStep>,
    /// No satellite was selected, so the AOI is the initial one.
    pub no_refinement: bool,
    /// Shadows that were actually applied, kept for boundary diagnostics.
    #[serde(skip)]
    pub applied_shadows: Vec<RegionSet>,
}

impl Aoi {
    pub fn new(region: RegionSet) -> Self {
        Self {
            initial_area: region.area(),
            region,
            log: Vec::new(),
            no_refinement: true,
            applied_shadows: Vec::new(),
        }
    }
}

/// Applies the selected decisions in ascending `sat_id`: LOS subtracts the
/// satellite's shadow, NLOS intersects with it. Stops once the AOI is empty
/// and logs the rest as skipped.
pub fn refine_aoi(
    initial: Aoi,
    decisions: &[SelectionDecision],
    shadows: &BTreeMap<u32, ShadowRegion>,
) -> Result<Aoi, ZsmError> {
    let mut chosen: Vec<(u32, Label)> = decisions
        .iter()
        .filter(|d| d.selected)
        .filter_map(|d| d.agreed_label.map(|l| (d.sat_id, l)))
        .collect();
    chosen.sort_by_key(|c| c.0);
    let mut aoi = initial;
    if chosen.is_empty() {
        return Ok(aoi);
    }
    aoi.no_refinement = false;
    for (sat_id, label) in chosen {
        let shadow = shadows.get(&sat_id).ok_or(ZsmError::MissingShadow(sat_id))?;
        if aoi.region.is_empty() {
            aoi.log.push(RefinementStep {
                sat_id,
                label,
                operation: Operation::Skipped,
                resulting_area: 0.0,
            });
            continue;
        }
        let operation = match label {
            Label::Los => {
                aoi.region = aoi.region.subtract(&shadow.region);
                Operation::Subtract
            }
            Label::Nlos => {
                aoi.region = aoi.region.intersect(&shadow.region);
                Operation::Intersect
            }
        };
        aoi.applied_shadows.push(shadow.region.clone());
        aoi.log.push(RefinementStep {
            sat_id,
            label,
            operation,
            resulting_area: aoi.region.area(),
        });
    }
    Ok(aoi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningOutcome {
    pub epoch_index: usize,
    pub success: bool,
    pub contains_truth: bool,
    /// Extent across the street; absent when the AOI is empty.
    pub cross_street_bound: Option<f64>,
    pub along_street_bound: Option<f64>,
    pub satellites_used: usize,
    pub misclassified_used: usize,
    pub no_refinement: bool,
    /// Truth within [`AMBIGUITY_BAND`] of an applied shadow boundary.
    pub boundary_ambiguous: bool,
    pub aoi_area: f64,
}

/// Scores a refined AOI against the true position. `epoch_index` and
/// `misclassified_used` are left for the caller to fill in.
pub fn score_epoch(aoi: &Aoi, truth: Point2, street_direction: Point2) -> Result<PositioningOutcome, GeomError> {
    let norm = street_direction.norm();
    if (norm - 1.0).abs() > EPS_GEOM {
        return Err(GeomError::NonUnitDirection { norm });
    }
    let across = Point2::new(-street_direction.y, street_direction.x);
    let success = !aoi.region.is_empty() && aoi.region.area() >= EPS_AREA;
    let (along, cross) = if success {
        (
            Some(aoi.region.extent(street_direction)?),
            Some(aoi.region.extent(across)?),
        )
    } else {
        (None, None)
    };
    let boundary_ambiguous = aoi
        .applied_shadows
        .iter()
        .any(|s| s.boundary_distance(truth) < AMBIGUITY_BAND);
    Ok(PositioningOutcome {
        epoch_index: 0,
        success,
        contains_truth: success && aoi.region.contains(truth, EPS_GEOM),
        cross_street_bound: cross,
        along_street_bound: along,
        satellites_used: aoi.log.len(),
        misclassified_used: 0,
        no_refinement: aoi.no_refinement,
        boundary_ambiguous,
        aoi_area: aoi.region.area(),
    })
}
