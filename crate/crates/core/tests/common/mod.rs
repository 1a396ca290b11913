//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsm_core::features::{extract_features, LabeledSample};
use zsm_core::geom::{ConstrainedZonotope, ConvexPolygon, GeomError, Point2, EPS_GEOM};
use zsm_core::ml::{ClassProbability, Classifier, Dataset};
use zsm_core::scene::{
    direction, generate_scene, simulate_epochs, EpochObservation, NoiseConfig, RawObservation, SatelliteView, Scene,
    SceneConfig, Section,
};
use zsm_core::zsm::compute_shadow;
use zsm_core::Label;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes straight to the process stderr so the line shows up even when the
/// test harness captures output.
pub fn report(n: u32, name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n} [{verdict}] {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub agree: usize,
    pub total: usize,
    /// Points skipped because they fall in the boundary band.
    pub banded: usize,
}

impl Tally {
    pub fn record(&mut self, expected: bool, got: bool) {
        self.total += 1;
        if expected == got {
            self.agree += 1;
        }
    }

    pub fn merge(&mut self, other: Tally) {
        self.agree += other.agree;
        self.total += other.total;
        self.banded += other.banded;
    }

    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }
}

/// Cell centres of an `n × n` grid over the box.
pub fn grid(lo: Point2, hi: Point2, n: usize) -> Vec<Point2> {
    let step = (hi - lo) / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| Point2::new(lo.x + (i as f64 + 0.5) * step.x, lo.y + (j as f64 + 0.5) * step.y))
        .collect()
}

/// Smallest signed distance from `p` to the edge lines of a convex polygon,
/// positive inside. Orientation is taken from the vertex order itself.
pub fn polygon_margin(vertices: &[Point2], p: Point2) -> f64 {
    let n = vertices.len();
    let twice_area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum();
    let s = twice_area.signum();
    (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let e = b - a;
            s * (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / e.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Shoelace area.
pub fn shoelace(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        .abs()
}

/// Planar zonotope with its exact half-plane description: every facet is
/// normal to the perpendicular of one generator.
#[derive(Debug, Clone)]
pub struct Zonogon {
    pub center: Point2,
    pub generators: Vec<Point2>,
}

impl Zonogon {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let center = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let k = rng.random_range(2..=4);
        let generators = (0..k)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let len = rng.random_range(0.3..1.5);
                Point2::new(a.cos(), a.sin()) * len
            })
            .collect();
        Self { center, generators }
    }

    pub fn margin(&self, p: Point2) -> f64 {
        let d = p - self.center;
        self.generators
            .iter()
            .map(|g| {
                let n = Point2::new(-g.y, g.x) / g.norm();
                let bound: f64 = self.generators.iter().map(|h| n.dot(h).abs()).sum();
                bound - n.dot(&d).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Analytic area: sum of |det(gᵢ, gⱼ)| over generator pairs, times 4.
    pub fn area(&self) -> f64 {
        let g = &self.generators;
        let mut s = 0.0;
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                s += (g[i].x * g[j].y - g[i].y * g[j].x).abs();
            }
        }
        4.0 * s
    }

    pub fn reach(&self) -> (Point2, Point2) {
        let r = self
            .generators
            .iter()
            .fold(Point2::zeros(), |acc, g| acc + Point2::new(g.x.abs(), g.y.abs()));
        (self.center - r, self.center + r)
    }

    pub fn to_cz(&self) -> ConstrainedZonotope {
        let mut g = DMatrix::zeros(2, self.generators.len());
        for (j, v) in self.generators.iter().enumerate() {
            g[(0, j)] = v.x;
            g[(1, j)] = v.y;
        }
        ConstrainedZonotope::zonotope(DVector::from_column_slice(&[self.center.x, self.center.y]), g).unwrap()
    }
}

fn union_box(a: (Point2, Point2), b: (Point2, Point2)) -> (Point2, Point2) {
    (a.0.inf(&b.0), a.1.sup(&b.1))
}

/// One randomized constrained-zonotope intersection checked on a 100 × 100
/// grid (polygon route) plus 50 direct membership LPs.
pub fn cz_intersect_case(rng: &mut ChaCha8Rng) -> Tally {
    let a = Zonogon::random(rng);
    let b = Zonogon::random(rng);
    let z = a.to_cz().intersect(&b.to_cz()).unwrap();
    let poly = match z.to_polygon() {
        Ok(p) => Some(p),
        Err(GeomError::EmptySet | GeomError::DegenerateRegion { .. }) => None,
        Err(e) => panic!("to_polygon failed: {e}"),
    };
    let (lo, hi) = union_box(a.reach(), b.reach());
    let mut t = Tally::default();
    for (i, p) in grid(lo, hi, 100).into_iter().enumerate() {
        let m = a.margin(p).min(b.margin(p));
        if m.abs() <= EPS_GEOM {
            t.banded += 1;
            continue;
        }
        t.record(m > 0.0, poly.as_ref().is_some_and(|q| q.contains(p, EPS_GEOM)));
        if i % 200 == 0 {
            t.record(m > 0.0, z.contains_point(&[p.x, p.y]).unwrap());
        }
    }
    t
}

pub fn random_polygon(rng: &mut ChaCha8Rng, center: Point2) -> ConvexPolygon {
    loop {
        let r = rng.random_range(0.5..2.0);
        let n = rng.random_range(3..=10);
        let pts: Vec<Point2> = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s: f64 = rng.random_range(0.2..1.0);
                center + Point2::new(a.cos(), a.sin()) * (r * s)
            })
            .collect();
        if let Ok(p) = ConvexPolygon::hull_of(&pts) {
            if p.area() > 0.05 {
                return p;
            }
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PolyCase {
    pub intersect: Tally,
    pub subtract: Tally,
    /// |area(A∩B) + area(A\B) − area(A)| / area(A).
    pub area_rel_error: f64,
    pub max_overlap: f64,
}

pub fn poly_case(rng: &mut ChaCha8Rng) -> PolyCase {
    let ca = Point2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let a = random_polygon(rng, ca);
    let cb = Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let b = random_polygon(rng, cb);
    let inter = a.intersect(&b);
    let diff = a.subtract(&b);
    let (lo, hi) = union_box(a.bounding_box(), b.bounding_box());
    let mut out = PolyCase::default();
    for p in grid(lo, hi, 100) {
        let (ma, mb) = (polygon_margin(a.vertices(), p), polygon_margin(b.vertices(), p));
        if ma.abs() <= EPS_GEOM || mb.abs() <= EPS_GEOM {
            out.intersect.banded += 1;
            out.subtract.banded += 1;
            continue;
        }
        out.intersect.record(ma > 0.0 && mb > 0.0, inter.contains(p, EPS_GEOM));
        out.subtract.record(ma > 0.0 && mb < 0.0, diff.contains(p, EPS_GEOM));
    }
    let area_a = shoelace(a.vertices());
    let parts: f64 = inter
        .parts()
        .iter()
        .chain(diff.parts())
        .map(|p| shoelace(p.vertices()))
        .sum();
    out.area_rel_error = (parts - area_a).abs() / area_a;
    out.max_overlap = diff.max_pairwise_overlap();
    out
}

/// A small random scene: random street azimuth, few buildings.
pub fn small_scene(seed: u64) -> Scene {
    let mut r = rng(seed ^ 0x5eed);
    generate_scene(&SceneConfig {
        seed,
        street_azimuth_deg: r.random_range(0.0..360.0),
        training_epochs: 60,
        target_epochs: 20,
        building_count: 16,
        ..SceneConfig::default()
    })
    .unwrap()
}

/// Shadow membership against the ray test on a 100 × 100 grid over the scene
/// bounds, skipping points within `band` of the shadow boundary.
pub fn shadow_grid_case(seed: u64, band: f64) -> Tally {
    let scene = small_scene(seed);
    let mut r = rng(seed ^ 0xa11);
    let view = SatelliteView {
        sat_id: 1,
        azimuth_deg: r.random_range(0.0..360.0),
        elevation_deg: r.random_range(8.0..80.0),
        true_range: 2.0e7,
    };
    let shadow = compute_shadow(&scene, &view, scene.antenna_height()).unwrap();
    let dir = direction(view.azimuth_deg, view.elevation_deg);
    let frame = scene.frame;
    let length = scene.config.street_length();
    let across = scene.bounds.vertices().iter().fold(0.0f64, |m, v| {
        let o = Point2::new(frame.origin[0], frame.origin[1]);
        m.max((v - o).dot(&frame.across_unit()).abs())
    });
    let mut t = Tally::default();
    for q in grid(Point2::new(0.0, -across), Point2::new(length, across), 100) {
        let p = frame.to_world(q.x, q.y);
        if shadow.region.boundary_distance(p) < band {
            t.banded += 1;
            continue;
        }
        t.record(scene.is_blocked(p, dir), shadow.region.contains(p, EPS_GEOM));
    }
    t
}

/// Shadow of a single 10 m × 10 m, 40 m tall box under a satellite due north
/// at 45° elevation: how far the shadow reaches beyond the box, meters.
pub fn shadow_reach_40m_45deg() -> (f64, Scene, SatelliteView) {
    let mut scene = generate_scene(&SceneConfig {
        building_count: 0,
        ..SceneConfig::default()
    })
    .unwrap();
    let origin = scene.frame.to_world(500.0, 40.0);
    let footprint = ConvexPolygon::rectangle(origin, origin + Point2::new(10.0, 10.0)).unwrap();
    scene.buildings.push(zsm_core::scene::Building { footprint, height: 40.0 });
    let view = SatelliteView {
        sat_id: 7,
        azimuth_deg: 0.0,
        elevation_deg: 45.0,
        true_range: 2.0e7,
    };
    let shadow = compute_shadow(&scene, &view, scene.antenna_height()).unwrap();
    let (lo, _) = shadow.region.bounding_box().expect("shadow is nonempty");
    (origin.y - lo.y, scene, view)
}

/// Epoch built from explicit geometry: satellites 2·10⁷ m away along the
/// given (azimuth, elevation) directions, pseudorange = range + clock + error.
pub fn manual_epoch(receiver: [f64; 3], clock: f64, sky: &[(f64, f64)], errors: &[f64]) -> EpochObservation {
    let observations = sky
        .iter()
        .enumerate()
        .map(|(i, &(az, el))| {
            let d = direction(az, el);
            let s = [
                receiver[0] + 2.0e7 * d[0],
                receiver[1] + 2.0e7 * d[1],
                receiver[2] + 2.0e7 * d[2],
            ];
            RawObservation {
                sat_id: i as u32 + 1,
                pseudorange: 2.0e7 + clock + errors.get(i).copied().unwrap_or(0.0),
                cn0_dbhz: 40.0,
                elevation_deg: el,
                azimuth_deg: az,
                sat_position: s,
                truth_label: Label::Los,
            }
        })
        .collect();
    EpochObservation {
        epoch_index: 0,
        section: Section::Target,
        true_position: [receiver[0], receiver[1]],
        antenna_height: receiver[2],
        true_clock_bias: clock,
        observations,
    }
}

pub const SKY8: [(f64, f64); 8] = [
    (10.0, 70.0),
    (60.0, 35.0),
    (115.0, 50.0),
    (170.0, 25.0),
    (200.0, 65.0),
    (250.0, 40.0),
    (300.0, 20.0),
    (340.0, 55.0),
];

/// Gauss–Newton via an SVD least-squares solve, written independently of the
/// library solver. Returns `[x, y, z, clock]`.
pub fn reference_ls(epoch: &EpochObservation, start: [f64; 3]) -> [f64; 4] {
    let m = epoch.observations.len();
    let mut x = DVector::from_column_slice(&[start[0], start[1], start[2], 0.0]);
    for _ in 0..50 {
        let mut g = DMatrix::zeros(m, 4);
        let mut y = DVector::zeros(m);
        for (i, o) in epoch.observations.iter().enumerate() {
            let d = DVector::from_column_slice(&[
                x[0] - o.sat_position[0],
                x[1] - o.sat_position[1],
                x[2] - o.sat_position[2],
            ]);
            let r = d.norm();
            for k in 0..3 {
                g[(i, k)] = d[k] / r;
            }
            g[(i, 3)] = 1.0;
            y[i] = o.pseudorange - (r + x[3]);
        }
        let step = g.svd(true, true).solve(&y, 1e-14).unwrap();
        x += &step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    [x[0], x[1], x[2], x[3]]
}

/// Training (other sections) and test (target road) samples of one default scene.
pub fn synthetic_samples(seed: u64) -> (Scene, Vec<EpochObservation>, Vec<LabeledSample>, Vec<LabeledSample>) {
    let scene = generate_scene(&SceneConfig {
        seed,
        ..SceneConfig::default()
    })
    .unwrap();
    let epochs = simulate_epochs(&scene, &NoiseConfig::default());
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in &epochs {
        if let Ok(s) = extract_features(e, scene.street_midpoint()) {
            if e.section == Section::Training {
                train.extend(s);
            } else {
                test.extend(s);
            }
        }
    }
    (scene, epochs, train, test)
}

pub fn synthetic_datasets(seed: u64) -> (Dataset, Dataset) {
    let (_, _, train, test) = synthetic_samples(seed);
    (Dataset::from_samples(&train), Dataset::from_samples(&test))
}

/// Linearly separable 3-feature set: NLOS iff x₀ + x₁ > 0, with a gap of 0.4
/// around the boundary; x₂ is noise.
pub fn separable_toy(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let x: [f64; 3] = [
            r.random_range(-3.0..3.0),
            r.random_range(-3.0..3.0),
            r.random_range(-3.0..3.0),
        ];
        let s = x[0] + x[1];
        if s.abs() < 0.4 {
            continue;
        }
        rows.push(x.to_vec());
        labels.push(if s > 0.0 { Label::Nlos } else { Label::Los });
    }
    Dataset::new(rows, labels).unwrap()
}

/// Returns the probability listed for the case index stored in feature 0.
pub struct FixedModel(pub Vec<ClassProbability>);

impl Classifier for FixedModel {
    fn dim(&self) -> usize {
        3
    }

    fn predict_proba(&self, x: &[f64]) -> ClassProbability {
        self.0[x[0] as usize]
    }
}

/// Probability whose argmax is `label` with confidence exactly `c`.
pub fn prob(label: Label, c: f64) -> ClassProbability {
    match label {
        Label::Los => ClassProbability { p_los: c, p_nlos: 1.0 - c },
        Label::Nlos => ClassProbability { p_los: 1.0 - c, p_nlos: c },
    }
}
