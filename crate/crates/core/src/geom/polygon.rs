use super::{cross, GeomError, Point2, RegionSet, EPS_AREA, EPS_GEOM};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Closed half-plane `normal · x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Point2, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Signed violation `normal · p - offset` (≤ 0 inside).
    pub fn eval(&self, p: Point2) -> f64 {
        self.normal.dot(&p) - self.offset
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// Convex polygon with counter-clockwise vertices.
///
/// Collinear and duplicate vertices are stripped on construction, so every
/// stored vertex is a strict corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonRepr", into = "PolygonRepr")]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

#[derive(Serialize, Deserialize)]
struct PolygonRepr {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<PolygonRepr> for ConvexPolygon {
    type Error = GeomError;
    fn try_from(r: PolygonRepr) -> Result<Self, GeomError> {
        ConvexPolygon::new(r.vertices.iter().map(|v| Point2::new(v[0], v[1])).collect())
    }
}

impl From<ConvexPolygon> for PolygonRepr {
    fn from(p: ConvexPolygon) -> Self {
        PolygonRepr {
            vertices: p.vertices.iter().map(|v| [v.x, v.y]).collect(),
        }
    }
}

fn clean_ring(points: &[Point2]) -> Vec<Point2> {
    let mut ring: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        if ring.last().is_none_or(|q| (p - q).norm() > EPS_GEOM) {
            ring.push(p);
        }
    }
    while ring.len() > 1 && (ring[0] - ring[ring.len() - 1]).norm() <= EPS_GEOM {
        ring.pop();
    }
    // Drop vertices lying on the segment joining their neighbours.
    let mut changed = true;
    while changed && ring.len() >= 3 {
        changed = false;
        let n = ring.len();
        for i in 0..n {
            let a = ring[(i + n - 1) % n];
            let b = ring[i];
            let c = ring[(i + 1) % n];
            let base = (c - a).norm();
            let dist = if base > 0.0 {
                cross(c - a, b - a).abs() / base
            } else {
                (b - a).norm()
            };
            if dist <= EPS_GEOM {
                ring.remove(i);
                changed = true;
                break;
            }
        }
    }
    ring
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Andrew's monotone chain; returns CCW hull vertices without collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= EPS_GEOM);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 1] - lower[lower.len() - 2], p - lower[lower.len() - 2]) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 1] - upper[upper.len() - 2], p - upper[upper.len() - 2]) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    clean_ring(&lower)
}

impl ConvexPolygon {
    /// Validates and normalizes a vertex ring. Clockwise input is reversed.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeomError> {
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeomError::InvalidPolygon("non-finite vertex".into()));
        }
        let mut ring = clean_ring(&vertices);
        if ring.len() < 3 {
            return Err(GeomError::InvalidPolygon(format!(
                "{} distinct non-collinear vertices (need 3)",
                ring.len()
            )));
        }
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        let n = ring.len();
        let mut turning = 0.0;
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let c = ring[(i + 2) % n];
            let e1 = b - a;
            let e2 = c - b;
            // Signed distance of c from the supporting line of edge a→b.
            if cross(e1, c - a) / e1.norm() < -EPS_GEOM {
                return Err(GeomError::InvalidPolygon("not convex".into()));
            }
            turning += cross(e1, e2).atan2(e1.dot(&e2));
        }
        if (turning - TAU).abs() > 1e-6 {
            return Err(GeomError::InvalidPolygon("self-intersecting ring".into()));
        }
        Ok(Self { vertices: ring })
    }

    /// Convex hull of an arbitrary point cloud.
    pub fn hull_of(points: &[Point2]) -> Result<Self, GeomError> {
        Self::new(convex_hull(points))
    }

    /// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
    pub fn rectangle(min: Point2, max: Point2) -> Result<Self, GeomError> {
        Self::new(vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    /// Rectangle centered at `center` with half extents along the unit axis `u`
    /// and its left normal.
    pub fn oriented_rectangle(
        center: Point2,
        u: Point2,
        half_along: f64,
        half_across: f64,
    ) -> Result<Self, GeomError> {
        let v = Point2::new(-u.y, u.x);
        let a = u * half_along;
        let b = v * half_across;
        Self::new(vec![
            center - a - b,
            center + a - b,
            center + a + b,
            center - a + b,
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut acc = Point2::zeros();
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = cross(p, q);
            acc += (p + q) * w;
            a2 += w;
        }
        acc / (3.0 * a2)
    }

    /// Edge half-planes; the polygon is their intersection.
    pub fn halfplanes(&self) -> Vec<HalfPlane> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = (b - a).normalize();
                let normal = Point2::new(e.y, -e.x);
                HalfPlane::new(normal, normal.dot(&a))
            })
            .collect()
    }

    /// Closed membership with slack `eps` (meters).
    pub fn contains(&self, p: Point2, eps: f64) -> bool {
        self.halfplanes().iter().all(|h| h.eval(p) <= eps)
    }

    /// Euclidean distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn translated(&self, offset: Point2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
        }
    }

    /// Rotation by `angle` radians about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| Point2::new(c * v.x - s * v.y, s * v.x + c * v.y))
                .collect(),
        }
    }

    /// Clips against a closed half-plane; `None` when less than `EPS_AREA` remains.
    pub fn clip(&self, h: &HalfPlane) -> Option<Self> {
        let vals: Vec<f64> = self.vertices.iter().map(|&v| h.eval(v)).collect();
        if vals.iter().all(|&v| v <= 0.0) {
            return Some(self.clone());
        }
        if vals.iter().all(|&v| v >= 0.0) {
            return None;
        }
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (p, q) = (self.vertices[i], self.vertices[j]);
            let (vp, vq) = (vals[i], vals[j]);
            if vp <= 0.0 {
                out.push(p);
            }
            if (vp < 0.0 && vq > 0.0) || (vp > 0.0 && vq < 0.0) {
                let t = vp / (vp - vq);
                out.push(p + (q - p) * t);
            }
        }
        let poly = Self::new(out).ok()?;
        (poly.area() >= EPS_AREA).then_some(poly)
    }

    fn bbox_disjoint(&self, other: &Self) -> bool {
        let (alo, ahi) = self.bounding_box();
        let (blo, bhi) = other.bounding_box();
        alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y
    }

    /// Intersection of two convex polygons (zero or one part).
    pub fn intersect(&self, other: &Self) -> RegionSet {
        RegionSet::from_disjoint(self.intersect_poly(other).into_iter().collect())
    }

    pub(crate) fn intersect_poly(&self, other: &Self) -> Option<Self> {
        if self.bbox_disjoint(other) {
            return None;
        }
        let mut cur = self.clone();
        for h in other.halfplanes() {
            cur = cur.clip(&h)?;
        }
        Some(cur)
    }

    /// Closed difference `self \ other` as disjoint convex pieces, produced by
    /// clipping successively against each supporting half-plane of `other`.
    pub fn subtract(&self, other: &Self) -> RegionSet {
        RegionSet::from_disjoint(self.subtract_parts(other))
    }

    pub(crate) fn subtract_parts(&self, other: &Self) -> Vec<Self> {
        if self.intersect_poly(other).is_none() {
            return vec![self.clone()];
        }
        let mut pieces = Vec::new();
        let mut remaining = self.clone();
        for h in other.halfplanes() {
            if let Some(outside) = remaining.clip(&h.flipped()) {
                pieces.push(outside);
            }
            match remaining.clip(&h) {
                Some(r) => remaining = r,
                None => break,
            }
        }
        pieces
    }

    /// Zonotope representation when the polygon is centrally symmetric.
    ///
    /// A zonogon with `2k` vertices has the first `k` half-edge vectors as
    /// generators.
    pub fn as_zonotope(&self) -> Option<super::ConstrainedZonotope> {
        let n = self.vertices.len();
        if !n.is_multiple_of(2) {
            return None;
        }
        let k = n / 2;
        let center = (self.vertices[0] + self.vertices[k]) * 0.5;
        let scale = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(1.0, f64::max);
        for i in 0..k {
            let mid = (self.vertices[i] + self.vertices[i + k]) * 0.5;
            if (mid - center).norm() > 1e-9 * scale {
                return None;
            }
        }
        let mut g = nalgebra::DMatrix::zeros(2, k);
        for i in 0..k {
            let e = (self.vertices[i + 1] - self.vertices[i]) * 0.5;
            g[(0, i)] = e.x;
            g[(1, i)] = e.y;
        }
        super::ConstrainedZonotope::zonotope(nalgebra::DVector::from_column_slice(center.as_slice()), g).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap()
    }

    #[test]
    fn construction_normalizes() {
        // clockwise, with a duplicate and a collinear vertex
        let p = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.5),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert!((p.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_rings() {
        assert!(ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).is_err());
        let collinear = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        assert!(ConvexPolygon::new(collinear).is_err());
        let dart = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(0.0, 2.0),
            Point2::new(1.0, 1.0),
        ];
        assert!(matches!(ConvexPolygon::new(dart), Err(GeomError::InvalidPolygon(_))));
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(ConvexPolygon::new(bowtie).is_err());
        // pentagram ring: locally convex turns but winds twice
        let star: Vec<Point2> = (0..5)
            .map(|i| {
                let a = i as f64 * 2.0 * TAU / 5.0;
                Point2::new(a.cos(), a.sin())
            })
            .collect();
        assert!(ConvexPolygon::new(star).is_err());
    }

    #[test]
    fn intersect_idempotent_and_offset() {
        let a = unit_square();
        let r = a.intersect(&a);
        assert!((r.area() - 1.0).abs() < EPS_AREA);
        let b = a.translated(Point2::new(0.5, 0.0));
        assert!((a.intersect(&b).area() - 0.5).abs() < EPS_AREA);
        let far = a.translated(Point2::new(5.0, 5.0));
        assert!(a.intersect(&far).is_empty());
    }

    #[test]
    fn subtract_cases() {
        let a = unit_square();
        assert!(a.subtract(&a).is_empty());
        let far = a.translated(Point2::new(5.0, 0.0));
        let r = a.subtract(&far);
        assert_eq!(r.parts().len(), 1);
        assert!((r.area() - 1.0).abs() < EPS_AREA);
        let inner = ConvexPolygon::rectangle(Point2::new(0.25, 0.25), Point2::new(0.75, 0.75)).unwrap();
        let ring = a.subtract(&inner);
        assert!((ring.area() - 0.75).abs() < 1e-12);
        assert!(!ring.contains(Point2::new(0.5, 0.5), -EPS_GEOM));
        assert!(ring.contains(Point2::new(0.1, 0.5), 0.0));
    }

    #[test]
    fn subtract_inside_is_empty() {
        let small = ConvexPolygon::rectangle(Point2::new(0.2, 0.2), Point2::new(0.4, 0.4)).unwrap();
        assert!(small.subtract(&unit_square()).is_empty());
    }

    #[test]
    fn zonotope_round_trip() {
        let r = ConvexPolygon::oriented_rectangle(Point2::new(3.0, -1.0), Point2::new(0.6, 0.8), 4.0, 1.5).unwrap();
        let z = r.as_zonotope().unwrap();
        let back = z.to_polygon().unwrap();
        assert!((back.area() - r.area()).abs() < 1e-9);
        let tri = ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        assert!(tri.as_zonotope().is_none());
    }

    #[test]
    fn hull_and_centroid() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        let h = ConvexPolygon::hull_of(&pts).unwrap();
        assert_eq!(h.vertices().len(), 4);
        assert!((h.centroid() - Point2::new(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn serde_uses_plain_arrays() {
        let s = serde_json::to_string(&unit_square()).unwrap();
        assert_eq!(s, r#"{"vertices":[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]}"#);
        let back: ConvexPolygon = serde_json::from_str(&s).unwrap();
        assert_eq!(back, unit_square());
        assert!(serde_json::from_str::<ConvexPolygon>(r#"{"vertices":[[0,0],[1,0]]}"#).is_err());
    }
}
