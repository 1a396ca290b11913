//! Synthetic urban street scenes.
//!
//! A scene is a straight street flanked by box buildings, a slowly drifting
//! satellite sky, and a vehicle trajectory along the centerline. Ground-truth
//! LOS/NLOS labels come from ray tests against the extruded footprints, and
//! pseudorange / C/N₀ measurements are synthesized from those labels.
//!
//! Conventions: local east-north-up frame in meters, azimuth clockwise from
//! north in degrees, elevation above the horizon in degrees.

use crate::geom::{ConvexPolygon, GeomError, HalfPlane, Point2, RegionSet, EPS_GEOM};
use crate::label::Label;
use crate::rng::{purpose, stream};
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Distance from the local origin to every satellite, meters.
pub const SATELLITE_RANGE: f64 = 20_200_000.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("infeasible scene config: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Which region seeds the candidate-position set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoiMode {
    /// The street strip between the building fronts.
    Corridor,
    /// The full scene bounding box minus building footprints.
    BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    /// Curb-to-curb width, meters.
    pub street_width: f64,
    pub street_azimuth_deg: f64,
    /// Distance travelled between consecutive epochs, meters.
    pub epoch_spacing: f64,
    /// Epochs on the "other sections" used for training.
    pub training_epochs: usize,
    /// Epochs on the contiguous target road used for evaluation.
    pub target_epochs: usize,
    /// Street length before the first and after the last epoch, meters.
    pub end_padding: f64,
    pub building_count: usize,
    pub building_height: [f64; 2],
    pub building_depth: [f64; 2],
    /// Fraction of each frontage slot occupied by its building.
    pub building_fill: [f64; 2],
    /// Gap between the curb and a building front, meters.
    pub setback: [f64; 2],
    /// Minimum clearance between the trajectory and the curb, meters.
    pub curb_margin: f64,
    pub antenna_height: f64,
    pub satellite_count: usize,
    pub elevation_range_deg: [f64; 2],
    /// Largest azimuth drift per epoch, degrees.
    pub azimuth_rate_deg: f64,
    /// Largest elevation drift per epoch, degrees.
    pub elevation_rate_deg: f64,
    pub aoi_mode: AoiMode,
    /// Half-length of the along-street window that forms each epoch's
    /// initial AOI, meters. Stands in for a coarse position prior.
    pub aoi_half_length: f64,
    /// The window centre is offset from the truth by up to this, meters.
    pub aoi_offset_max: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            street_width: 30.0,
            street_azimuth_deg: 0.0,
            epoch_spacing: 2.0,
            training_epochs: 800,
            target_epochs: 146,
            end_padding: 60.0,
            building_count: 100,
            building_height: [20.0, 80.0],
            building_depth: [15.0, 40.0],
            building_fill: [0.4, 0.8],
            setback: [4.0, 12.0],
            curb_margin: 3.0,
            antenna_height: 1.8,
            satellite_count: 12,
            elevation_range_deg: [15.0, 85.0],
            azimuth_rate_deg: 0.01,
            elevation_rate_deg: 0.004,
            aoi_mode: AoiMode::Corridor,
            aoi_half_length: 50.0,
            aoi_offset_max: 20.0,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InfeasibleConfig(m));
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(self.street_width > 0.0) || self.street_width < 2.0 * self.curb_margin {
            return bad(format!(
                "street width {} m is narrower than twice the curb margin {} m",
                self.street_width, self.curb_margin
            ));
        }
        if self.curb_margin < 0.0 || self.epoch_spacing <= 0.0 || self.end_padding < 0.0 {
            return bad("negative margin, spacing or padding".into());
        }
        if self.target_epochs == 0 {
            return bad("target road needs at least one epoch".into());
        }
        if !range_ok(self.building_height) || self.building_height[0] <= 0.0 {
            return bad("building heights must be a positive ordered range".into());
        }
        if !range_ok(self.building_depth) || self.building_depth[0] <= 0.0 {
            return bad("building depths must be a positive ordered range".into());
        }
        if !range_ok(self.building_fill) || self.building_fill[0] <= 0.0 || self.building_fill[1] > 1.0 {
            return bad("building fill must lie in (0, 1]".into());
        }
        if !range_ok(self.setback) || self.setback[0] < 0.0 {
            return bad("setback must be a non-negative ordered range".into());
        }
        if self.antenna_height <= 0.0 {
            return bad("antenna height must be positive".into());
        }
        if self.satellite_count < 4 {
            return bad("at least four satellites are needed for a position fix".into());
        }
        if !(self.aoi_offset_max >= 0.0) || !(self.aoi_half_length > self.aoi_offset_max) {
            return bad("AOI half-length must exceed the (non-negative) prior offset".into());
        }
        let [lo, hi] = self.elevation_range_deg;
        let drift = self.elevation_rate_deg.abs() * self.total_epochs() as f64;
        if !range_ok(self.elevation_range_deg) || lo - drift <= 0.0 || hi + drift >= 90.0 {
            return bad("satellite elevations (with drift) must stay inside (0°, 90°)".into());
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.training_epochs + self.target_epochs
    }

    pub fn street_length(&self) -> f64 {
        2.0 * self.end_padding + (self.total_epochs().saturating_sub(1)) as f64 * self.epoch_spacing
    }
}

/// Extruded convex footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: ConvexPolygon,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Training,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub index: usize,
    pub position: [f64; 2],
    /// Distance along the street from its start, meters.
    pub along: f64,
    pub section: Section,
}

/// Linear az/el drift of one satellite across epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteTrack {
    pub sat_id: u32,
    pub azimuth0_deg: f64,
    pub elevation0_deg: f64,
    pub azimuth_rate_deg: f64,
    pub elevation_rate_deg: f64,
}

impl SatelliteTrack {
    pub fn az_el_at(&self, epoch: usize) -> (f64, f64) {
        let t = epoch as f64;
        let az = (self.azimuth0_deg + self.azimuth_rate_deg * t).rem_euclid(360.0);
        (az, self.elevation0_deg + self.elevation_rate_deg * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteView {
    pub sat_id: u32,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Receiver-to-satellite geometric range, meters.
    pub true_range: f64,
}

impl SatelliteView {
    pub fn direction(&self) -> [f64; 3] {
        direction(self.azimuth_deg, self.elevation_deg)
    }
}

/// Unit vector pointing from the receiver toward azimuth/elevation (degrees).
pub fn direction(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    let (se, ce) = elevation_deg.to_radians().sin_cos();
    [sa * ce, ca * ce, se]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub sat_id: u32,
    pub pseudorange: f64,
    pub cn0_dbhz: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub sat_position: [f64; 3],
    pub truth_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub epoch_index: usize,
    pub section: Section,
    pub true_position: [f64; 2],
    pub antenna_height: f64,
    pub true_clock_bias: f64,
    /// Sorted by `sat_id`.
    pub observations: Vec<RawObservation>,
}

impl EpochObservation {
    pub fn receiver(&self) -> [f64; 3] {
        [self.true_position[0], self.true_position[1], self.antenna_height]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_los: f64,
    pub sigma_nlos: f64,
    pub nlos_delay_min: f64,
    pub nlos_delay_max: f64,
    /// NLOS C/N₀ attenuation is uniform in `[nlos_loss_min_db, nlos_loss_max_db]`.
    pub nlos_loss_min_db: f64,
    pub nlos_loss_max_db: f64,
    pub sigma_cn0: f64,
    /// C/N₀ at the horizon, dB-Hz.
    pub cn0_base: f64,
    /// Added C/N₀ at zenith (scaled by sin(elevation)), dB.
    pub cn0_elevation_gain: f64,
    /// Probability that a blocked signal is still tracked via a reflection.
    pub nlos_tracking_probability: f64,
    /// Receiver clock bias at the first epoch is drawn from ±this, meters.
    pub clock_bias_span: f64,
    /// Clock drift per epoch is drawn from ±this, meters.
    pub clock_drift_span: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_los: 1.0,
            sigma_nlos: 3.0,
            nlos_delay_min: 2.0,
            nlos_delay_max: 30.0,
            nlos_loss_min_db: 0.0,
            nlos_loss_max_db: 10.0,
            sigma_cn0: 3.0,
            cn0_base: 35.0,
            cn0_elevation_gain: 10.0,
            nlos_tracking_probability: 0.15,
            clock_bias_span: 1000.0,
            clock_drift_span: 1.0,
        }
    }
}

impl NoiseConfig {
    /// No noise and no NLOS excess delay; pseudoranges equal range plus clock.
    pub fn noise_free() -> Self {
        Self {
            sigma_los: 0.0,
            sigma_nlos: 0.0,
            nlos_delay_min: 0.0,
            nlos_delay_max: 0.0,
            sigma_cn0: 0.0,
            ..Self::default()
        }
    }

    /// Mean C/N₀ of an unobstructed signal at this elevation.
    pub fn base_cn0(&self, elevation_deg: f64) -> f64 {
        self.cn0_base + self.cn0_elevation_gain * elevation_deg.to_radians().sin()
    }
}

pub const CN0_MIN: f64 = 10.0;
pub const CN0_MAX: f64 = 55.0;

/// Street frame: `along` runs down the street, `across` points to its right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreetFrame {
    pub origin: [f64; 2],
    pub along: [f64; 2],
    pub across: [f64; 2],
}

impl StreetFrame {
    pub fn new(azimuth_deg: f64) -> Self {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        Self {
            origin: [0.0, 0.0],
            along: [s, c],
            across: [c, -s],
        }
    }

    pub fn to_world(&self, along: f64, across: f64) -> Point2 {
        Point2::new(
            self.origin[0] + along * self.along[0] + across * self.across[0],
            self.origin[1] + along * self.along[1] + across * self.across[1],
        )
    }

    pub fn along_of(&self, p: Point2) -> f64 {
        (p.x - self.origin[0]) * self.along[0] + (p.y - self.origin[1]) * self.along[1]
    }

    pub fn along_unit(&self) -> Point2 {
        Point2::new(self.along[0], self.along[1])
    }

    pub fn across_unit(&self) -> Point2 {
        Point2::new(self.across[0], self.across[1])
    }

    /// Rectangle `[a0, a1] × [c0, c1]` in street coordinates.
    pub fn rectangle(&self, a0: f64, a1: f64, c0: f64, c1: f64) -> Result<ConvexPolygon, GeomError> {
        ConvexPolygon::oriented_rectangle(
            self.to_world(0.5 * (a0 + a1), 0.5 * (c0 + c1)),
            self.along_unit(),
            0.5 * (a1 - a0),
            // oriented_rectangle's second axis is the left normal; the extent is symmetric
            0.5 * (c1 - c0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: SceneConfig,
    pub rng_seed: u64,
    pub frame: StreetFrame,
    pub street_direction: [f64; 2],
    pub buildings: Vec<Building>,
    pub bounds: ConvexPolygon,
    pub initial_aoi: RegionSet,
    pub trajectory: Vec<TrajectoryPoint>,
    pub sky: Vec<SatelliteTrack>,
}

fn uniform(rng: &mut impl rand::Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Builds a reproducible scene from its config; the same config always yields
/// the same scene.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SceneError> {
    config.validate()?;
    let seed = config.seed;
    let frame = StreetFrame::new(config.street_azimuth_deg);
    let length = config.street_length();
    let half_w = 0.5 * config.street_width;

    let mut rng = stream(seed, purpose::BUILDINGS, 0);
    let mut buildings = Vec::with_capacity(config.building_count);
    let per_side = [config.building_count.div_ceil(2), config.building_count / 2];
    for (side_idx, &count) in per_side.iter().enumerate() {
        let side = if side_idx == 0 { 1.0 } else { -1.0 };
        if count == 0 {
            continue;
        }
        let slot = length / count as f64;
        for i in 0..count {
            let len = slot * uniform(&mut rng, config.building_fill);
            let start = i as f64 * slot + uniform(&mut rng, [0.0, slot - len]);
            let depth = uniform(&mut rng, config.building_depth);
            let setback = uniform(&mut rng, config.setback);
            let height = uniform(&mut rng, config.building_height);
            let inner = half_w + setback;
            let (c0, c1) = if side > 0.0 {
                (inner, inner + depth)
            } else {
                (-inner - depth, -inner)
            };
            buildings.push(Building {
                footprint: frame.rectangle(start, start + len, c0, c1)?,
                height,
            });
        }
    }

    let outer = half_w + config.setback[1] + config.building_depth[1] + 5.0;
    let bounds = frame.rectangle(0.0, length, -outer, outer)?;
    let initial_aoi = match config.aoi_mode {
        AoiMode::Corridor => RegionSet::from_disjoint(vec![frame.rectangle(0.0, length, -half_w, half_w)?]),
        AoiMode::BoundingBox => {
            let mut r = RegionSet::from_disjoint(vec![bounds.clone()]);
            for b in &buildings {
                r = r.subtract_polygon(&b.footprint);
            }
            r
        }
    };

    let trajectory = (0..config.total_epochs())
        .map(|k| {
            let along = config.end_padding + k as f64 * config.epoch_spacing;
            let p = frame.to_world(along, 0.0);
            TrajectoryPoint {
                index: k,
                position: [p.x, p.y],
                along,
                section: if k < config.training_epochs {
                    Section::Training
                } else {
                    Section::Target
                },
            }
        })
        .collect();

    let mut rng = stream(seed, purpose::SKY, 0);
    let sky = (0..config.satellite_count)
        .map(|i| SatelliteTrack {
            sat_id: i as u32 + 1,
            azimuth0_deg: rng.random_range(0.0..360.0),
            // uniform in sin(elevation): equal sky solid angle per draw
            elevation0_deg: uniform(
                &mut rng,
                config.elevation_range_deg.map(|e: f64| e.to_radians().sin()),
            )
            .asin()
            .to_degrees(),
            azimuth_rate_deg: config.azimuth_rate_deg * rng.random_range(-1.0..=1.0),
            elevation_rate_deg: config.elevation_rate_deg * rng.random_range(-1.0..=1.0),
        })
        .collect();

    Ok(Scene {
        config: config.clone(),
        rng_seed: seed,
        frame,
        street_direction: frame.along,
        buildings,
        bounds,
        initial_aoi,
        trajectory,
        sky,
    })
}

impl Scene {
    pub fn street_direction(&self) -> Point2 {
        Point2::new(self.street_direction[0], self.street_direction[1])
    }

    pub fn antenna_height(&self) -> f64 {
        self.config.antenna_height
    }

    /// Initial AOI for one epoch: the scene-wide AOI cut to an along-street
    /// window whose centre is offset from the true position by a seeded draw.
    /// The truth always lies strictly inside the window.
    pub fn initial_aoi_at(&self, epoch: usize) -> RegionSet {
        let mut rng = stream(self.rng_seed, purpose::AOI_PRIOR, epoch as u64);
        let offset = self.config.aoi_offset_max * rng.random_range(-1.0..=1.0);
        let centre = self.trajectory[epoch].along + offset;
        let h = self.config.aoi_half_length;
        let (lo, hi) = self.bounds.vertices().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let o = Point2::new(self.frame.origin[0], self.frame.origin[1]);
            let c = (v - o).dot(&self.frame.across_unit());
            (lo.min(c), hi.max(c))
        });
        match self.frame.rectangle(centre - h, centre + h, lo - 1.0, hi + 1.0) {
            Ok(window) => self.initial_aoi.intersect_polygon(&window),
            Err(_) => RegionSet::empty(),
        }
    }

    /// Street centre, the starting point for least-squares iteration.
    pub fn street_midpoint(&self) -> [f64; 3] {
        let p = self.frame.to_world(0.5 * self.config.street_length(), 0.0);
        [p.x, p.y, 0.0]
    }

    pub fn satellite_position(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
        let d = direction(azimuth_deg, elevation_deg);
        [d[0] * SATELLITE_RANGE, d[1] * SATELLITE_RANGE, d[2] * SATELLITE_RANGE]
    }

    /// Every satellite of the sky at `epoch`, with ranges from the true position.
    pub fn satellites_at(&self, epoch: usize) -> Vec<SatelliteView> {
        let tp = &self.trajectory[epoch];
        let rx = [tp.position[0], tp.position[1], self.antenna_height()];
        self.sky
            .iter()
            .map(|t| {
                let (az, el) = t.az_el_at(epoch);
                let s = Self::satellite_position(az, el);
                let range = ((s[0] - rx[0]).powi(2) + (s[1] - rx[1]).powi(2) + (s[2] - rx[2]).powi(2)).sqrt();
                SatelliteView {
                    sat_id: t.sat_id,
                    azimuth_deg: az,
                    elevation_deg: el,
                    true_range: range,
                }
            })
            .collect()
    }

    pub fn clock_bias_at(&self, epoch: usize, noise: &NoiseConfig) -> f64 {
        let mut rng = stream(self.rng_seed, purpose::CLOCK, 0);
        let b0 = noise.clock_bias_span * rng.random_range(-1.0..=1.0);
        let drift = noise.clock_drift_span * rng.random_range(-1.0..=1.0);
        b0 + drift * epoch as f64
    }

    /// Noise-free observation of every satellite at `epoch`, labelled LOS
    /// until [`label_epoch`] runs.
    pub fn epoch_skeleton(&self, epoch: usize, noise: &NoiseConfig) -> EpochObservation {
        let tp = &self.trajectory[epoch];
        let clock = self.clock_bias_at(epoch, noise);
        let observations = self
            .satellites_at(epoch)
            .into_iter()
            .map(|v| RawObservation {
                sat_id: v.sat_id,
                pseudorange: v.true_range + clock,
                cn0_dbhz: noise.base_cn0(v.elevation_deg).clamp(CN0_MIN, CN0_MAX),
                elevation_deg: v.elevation_deg,
                azimuth_deg: v.azimuth_deg,
                sat_position: Self::satellite_position(v.azimuth_deg, v.elevation_deg),
                truth_label: Label::Los,
            })
            .collect();
        EpochObservation {
            epoch_index: epoch,
            section: tp.section,
            true_position: tp.position,
            antenna_height: self.antenna_height(),
            true_clock_bias: clock,
            observations,
        }
    }

    pub fn target_epoch_indices(&self) -> Vec<usize> {
        self.trajectory
            .iter()
            .filter(|t| t.section == Section::Target)
            .map(|t| t.index)
            .collect()
    }

    /// True when a receiver at `p` (antenna height) sees the satellite
    /// direction blocked by any building.
    pub fn is_blocked(&self, p: Point2, direction: [f64; 3]) -> bool {
        let rx = [p.x, p.y, self.antenna_height()];
        self.buildings.iter().any(|b| los_ray_test(b, rx, direction))
    }
}

/// True iff the upward ray from `receiver` along `direction` meets the closed
/// prism `footprint × [0, height]`.
pub fn los_ray_test(building: &Building, receiver: [f64; 3], direction: [f64; 3]) -> bool {
    let dz = direction[2];
    if dz <= 0.0 {
        return false;
    }
    let z0 = receiver[2];
    if z0 > building.height || z0 < 0.0 {
        return false;
    }
    let t_max = (building.height - z0) / dz;
    let p0 = Point2::new(receiver[0], receiver[1]);
    let d = Point2::new(direction[0], direction[1]);
    // Cyrus–Beck clip of the segment p0 + t·d, t ∈ [0, t_max].
    let (mut lo, mut hi) = (0.0f64, t_max);
    for HalfPlane { normal, offset } in building.footprint.halfplanes() {
        let denom = normal.dot(&d);
        let num = offset - normal.dot(&p0);
        if denom.abs() < 1e-15 {
            if num < -EPS_GEOM {
                return false;
            }
        } else {
            let t = num / denom;
            if denom > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
            if lo > hi {
                return false;
            }
        }
    }
    true
}

/// Sets each observation's truth label: NLOS iff any building blocks the ray.
pub fn label_epoch(scene: &Scene, mut epoch: EpochObservation) -> EpochObservation {
    let p = Point2::new(epoch.true_position[0], epoch.true_position[1]);
    for o in &mut epoch.observations {
        let blocked = o.elevation_deg <= 0.0
            || scene.is_blocked(p, direction(o.azimuth_deg, o.elevation_deg));
        o.truth_label = if blocked { Label::Nlos } else { Label::Los };
    }
    epoch
}

/// Drops blocked signals that have no usable reflection. LOS signals are always
/// tracked; at least four signals survive (highest-elevation dropped ones are
/// restored first).
pub fn track_signals(scene: &Scene, mut epoch: EpochObservation, noise: &NoiseConfig) -> EpochObservation {
    let mut rng = stream(scene.rng_seed, purpose::TRACKING, epoch.epoch_index as u64);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for o in epoch.observations.drain(..) {
        let draw: f64 = rng.random();
        if o.truth_label == Label::Los || draw < noise.nlos_tracking_probability {
            kept.push(o);
        } else {
            dropped.push(o);
        }
    }
    dropped.sort_by(|a, b| b.elevation_deg.total_cmp(&a.elevation_deg));
    let mut dropped = dropped.into_iter();
    while kept.len() < 4 {
        match dropped.next() {
            Some(o) => kept.push(o),
            None => break,
        }
    }
    kept.sort_by_key(|o| o.sat_id);
    epoch.observations = kept;
    epoch
}

/// Adds noise, NLOS excess delay and C/N₀ to labelled observations.
///
/// The random stream is keyed by scene seed and epoch index and draws the same
/// number of variates per observation regardless of its label.
pub fn synthesize_measurements(scene: &Scene, mut epoch: EpochObservation, noise: &NoiseConfig) -> EpochObservation {
    let mut rng = stream(scene.rng_seed, purpose::MEASUREMENT, epoch.epoch_index as u64);
    let rx = epoch.receiver();
    for o in &mut epoch.observations {
        let z_range: f64 = StandardNormal.sample(&mut rng);
        let u_delay: f64 = rng.random();
        let z_cn0: f64 = StandardNormal.sample(&mut rng);
        let u_loss: f64 = rng.random();
        let s = o.sat_position;
        let range = ((s[0] - rx[0]).powi(2) + (s[1] - rx[1]).powi(2) + (s[2] - rx[2]).powi(2)).sqrt();
        let nlos = o.truth_label.is_nlos();
        let (sigma, delay) = if nlos {
            (
                noise.sigma_nlos,
                noise.nlos_delay_min + (noise.nlos_delay_max - noise.nlos_delay_min) * u_delay,
            )
        } else {
            (noise.sigma_los, 0.0)
        };
        o.pseudorange = range + epoch.true_clock_bias + delay + sigma * z_range;
        let loss = if nlos {
            noise.nlos_loss_min_db + (noise.nlos_loss_max_db - noise.nlos_loss_min_db) * u_loss
        } else {
            0.0
        };
        o.cn0_dbhz = (noise.base_cn0(o.elevation_deg) - loss + noise.sigma_cn0 * z_cn0).clamp(CN0_MIN, CN0_MAX);
    }
    epoch
}

/// Skeleton → labels → tracking → measurements for one epoch.
pub fn simulate_epoch(scene: &Scene, index: usize, noise: &NoiseConfig) -> EpochObservation {
    let e = scene.epoch_skeleton(index, noise);
    let e = label_epoch(scene, e);
    let e = track_signals(scene, e, noise);
    synthesize_measurements(scene, e, noise)
}

/// All epochs of the scene, in index order.
pub fn simulate_epochs(scene: &Scene, noise: &NoiseConfig) -> Vec<EpochObservation> {
    (0..scene.trajectory.len())
        .into_par_iter()
        .map(|k| simulate_epoch(scene, k, noise))
        .collect()
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<(), SceneError> {
    let text = serde_json::to_string_pretty(scene).map_err(|source| SceneError::Json {
        path: path.to_owned(),
        source,
    })?;
    std::fs::write(path, text).map_err(|source| SceneError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SceneError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn write_epochs(path: &Path, epochs: &[EpochObservation]) -> Result<(), SceneError> {
    let io_err = |source| SceneError::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    for e in epochs {
        let line = serde_json::to_string(e).map_err(|source| SceneError::Json {
            path: path.to_owned(),
            source,
        })?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochObservation>, SceneError> {
    let io_err = |source| SceneError::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| SceneError::Json {
            path: path.to_owned(),
            source,
        })?);
    }
    Ok(out)
}
