use super::{ConvexPolygon, GeomError, Point2, EPS_AREA, EPS_GEOM};
use serde::{Deserialize, Serialize};

/// Finite union of interior-disjoint convex polygons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    parts: Vec<ConvexPolygon>,
}

impl RegionSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Wraps parts that the caller guarantees are pairwise interior-disjoint.
    /// Parts below `EPS_AREA` are dropped.
    pub fn from_disjoint(parts: Vec<ConvexPolygon>) -> Self {
        Self {
            parts: parts.into_iter().filter(|p| p.area() >= EPS_AREA).collect(),
        }
    }

    /// Union of arbitrary (possibly overlapping) convex polygons, split into
    /// disjoint parts. Earlier polygons keep their shape; later ones are cut.
    pub fn union_of<I: IntoIterator<Item = ConvexPolygon>>(polys: I) -> Self {
        let mut out = Self::empty();
        for p in polys {
            out = out.union_polygon(&p);
        }
        out
    }

    pub fn union_polygon(&self, poly: &ConvexPolygon) -> Self {
        let mut fresh = vec![poly.clone()];
        for q in &self.parts {
            fresh = fresh.iter().flat_map(|f| f.subtract_parts(q)).collect();
            if fresh.is_empty() {
                break;
            }
        }
        let mut parts = self.parts.clone();
        parts.extend(fresh.into_iter().filter(|p| p.area() >= EPS_AREA));
        Self { parts }
    }

    pub fn parts(&self) -> &[ConvexPolygon] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(ConvexPolygon::area).sum()
    }

    pub fn contains(&self, p: Point2, eps: f64) -> bool {
        self.parts.iter().any(|part| part.contains(p, eps))
    }

    /// Distance from `p` to the nearest part boundary (∞ when empty).
    ///
    /// Shared edges between adjacent parts count as boundary too, which makes
    /// this a conservative measure of "near an edge".
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.parts
            .iter()
            .map(|q| q.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn intersect_polygon(&self, poly: &ConvexPolygon) -> Self {
        Self::from_disjoint(
            self.parts
                .iter()
                .filter_map(|p| p.intersect_poly(poly))
                .collect(),
        )
    }

    pub fn intersect(&self, other: &RegionSet) -> Self {
        let mut parts = Vec::new();
        for a in &self.parts {
            for b in &other.parts {
                if let Some(p) = a.intersect_poly(b) {
                    parts.push(p);
                }
            }
        }
        Self::from_disjoint(parts)
    }

    pub fn subtract_polygon(&self, poly: &ConvexPolygon) -> Self {
        Self::from_disjoint(
            self.parts
                .iter()
                .flat_map(|p| p.subtract_parts(poly))
                .collect(),
        )
    }

    pub fn subtract(&self, other: &RegionSet) -> Self {
        let mut cur = self.clone();
        for q in &other.parts {
            if cur.is_empty() {
                break;
            }
            cur = cur.subtract_polygon(q);
        }
        cur
    }

    /// Width of the region along `direction`: max minus min of vertex projections.
    pub fn extent(&self, direction: Point2) -> Result<f64, GeomError> {
        let norm = direction.norm();
        if (norm - 1.0).abs() > EPS_GEOM {
            return Err(GeomError::NonUnitDirection { norm });
        }
        if self.is_empty() {
            return Err(GeomError::NoPosition);
        }
        let (lo, hi) = self
            .parts
            .iter()
            .flat_map(|p| p.vertices())
            .map(|v| v.dot(&direction))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            });
        Ok(hi - lo)
    }

    pub fn bounding_box(&self) -> Option<(Point2, Point2)> {
        let mut it = self.parts.iter().map(ConvexPolygon::bounding_box);
        let first = it.next()?;
        Some(it.fold(first, |(lo, hi), (l, h)| (lo.inf(&l), hi.sup(&h))))
    }

    /// Largest pairwise overlap area between parts (diagnostic for the
    /// disjointness invariant).
    pub fn max_pairwise_overlap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.parts.len() {
            for j in i + 1..self.parts.len() {
                if let Some(p) = self.parts[i].intersect_poly(&self.parts[j]) {
                    worst = worst.max(p.area());
                }
            }
        }
        worst
    }
}
