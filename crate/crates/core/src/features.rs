//! Snapshot least-squares positioning, pseudorange residuals, and the
//! three-feature vectors (elevation, C/N₀, residual) fed to the classifiers.
//!
//! Pseudoranges are nonlinear in position, so the solver runs Gauss–Newton:
//! each iteration linearizes about the current estimate and applies the normal
//! equations `p̂ = (GᵀG)⁻¹Gᵀρ̃` to the linearized system.

use crate::label::Label;
use crate::scene::EpochObservation;
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 10;
/// Iteration stops once the state update is shorter than this, meters.
pub const STEP_TOLERANCE: f64 = 1e-4;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LsError {
    #[error("degenerate geometry: {observations} observations, condition number {condition:.3e}")]
    DegenerateGeometry { observations: usize, condition: f64 },
    #[error("least squares did not converge; step norms {trace:?}")]
    NonConvergence { trace: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Rows `[eₓ, e_y, e_z, 1]`, `e` the unit vector from satellite to receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryMatrix {
    pub rows: Vec<[f64; 4]>,
}

impl GeometryMatrix {
    pub fn normal_matrix(&self) -> Matrix4<f64> {
        let mut n = Matrix4::zeros();
        for r in &self.rows {
            let v = Vector4::from_column_slice(r);
            n += v * v.transpose();
        }
        n
    }

    /// `Gᵀv`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vector4<f64> {
        self.rows
            .iter()
            .zip(v)
            .fold(Vector4::zeros(), |acc, (r, x)| acc + Vector4::from_column_slice(r) * *x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudorangeVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverEstimate {
    pub position: [f64; 3],
    pub clock_bias: f64,
}

impl ReceiverEstimate {
    fn state(&self) -> Vector4<f64> {
        Vector4::new(self.position[0], self.position[1], self.position[2], self.clock_bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub estimate: ReceiverEstimate,
    pub residuals: ResidualVector,
    pub geometry: GeometryMatrix,
    /// Step norm of every iteration.
    pub trace: Vec<f64>,
}

/// `δ = ρ̃ − G·[p; b]` in the linear model.
pub fn compute_residuals(
    rho: &PseudorangeVector,
    g: &GeometryMatrix,
    p: &ReceiverEstimate,
) -> Result<ResidualVector, LsError> {
    if rho.0.len() != g.rows.len() {
        return Err(LsError::DimensionMismatch(format!(
            "{} pseudoranges for {} geometry rows",
            rho.0.len(),
            g.rows.len()
        )));
    }
    let x = p.state();
    Ok(ResidualVector(
        rho.0
            .iter()
            .zip(&g.rows)
            .map(|(r, row)| r - Vector4::from_column_slice(row).dot(&x))
            .collect(),
    ))
}

fn linearize(epoch: &EpochObservation, p: &[f64; 3]) -> (GeometryMatrix, Vec<f64>) {
    let mut rows = Vec::with_capacity(epoch.observations.len());
    let mut ranges = Vec::with_capacity(epoch.observations.len());
    for o in &epoch.observations {
        let s = o.sat_position;
        let d = [p[0] - s[0], p[1] - s[1], p[2] - s[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        rows.push([d[0] / r, d[1] / r, d[2] / r, 1.0]);
        ranges.push(r);
    }
    (GeometryMatrix { rows }, ranges)
}

fn condition_number(n: &Matrix4<f64>) -> f64 {
    let eig = n.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Iterated linearized least squares starting from `initial` with zero clock
/// bias. Residuals are those of the final linearization.
pub fn solve_least_squares(epoch: &EpochObservation, initial: [f64; 3]) -> Result<LsSolution, LsError> {
    let m = epoch.observations.len();
    if m < 4 {
        return Err(LsError::DegenerateGeometry {
            observations: m,
            condition: f64::INFINITY,
        });
    }
    let rho: Vec<f64> = epoch.observations.iter().map(|o| o.pseudorange).collect();
    let mut est = ReceiverEstimate {
        position: initial,
        clock_bias: 0.0,
    };
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let (g, ranges) = linearize(epoch, &est.position);
        let n = g.normal_matrix();
        let condition = condition_number(&n);
        if !(condition <= MAX_CONDITION) {
            return Err(LsError::DegenerateGeometry {
                observations: m,
                condition,
            });
        }
        let prefit: Vec<f64> = rho
            .iter()
            .zip(&ranges)
            .map(|(r, range)| r - range - est.clock_bias)
            .collect();
        let rhs = g.transpose_mul(&prefit);
        let step = n
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or(LsError::DegenerateGeometry {
                observations: m,
                condition,
            })?;
        for (k, v) in est.position.iter_mut().enumerate() {
            *v += step[k];
        }
        est.clock_bias += step[3];
        let norm = step.norm();
        trace.push(norm);
        if norm < STEP_TOLERANCE {
            let (g, ranges) = linearize(epoch, &est.position);
            // ρ̃ − r(p̂) + e·p̂ is the pseudorange in the coordinates linearized at p̂.
            let linearized = PseudorangeVector(
                rho.iter()
                    .zip(&ranges)
                    .zip(&g.rows)
                    .map(|((r, range), row)| {
                        r - range + row[0] * est.position[0] + row[1] * est.position[1] + row[2] * est.position[2]
                    })
                    .collect(),
            );
            let residuals = compute_residuals(&linearized, &g, &est)?;
            return Ok(LsSolution {
                estimate: est,
                residuals,
                geometry: g,
                trace,
            });
        }
    }
    Err(LsError::NonConvergence { trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub elevation_deg: f64,
    pub cn0_dbhz: f64,
    pub residual_m: f64,
}

impl FeatureVector {
    pub const DIM: usize = 3;

    pub fn to_array(&self) -> [f64; 3] {
        [self.elevation_deg, self.cn0_dbhz, self.residual_m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
}

/// One sample per observation, in the epoch's `sat_id` order.
pub fn extract_features(epoch: &EpochObservation, initial: [f64; 3]) -> Result<Vec<LabeledSample>, LsError> {
    let sol = solve_least_squares(epoch, initial)?;
    Ok(epoch
        .observations
        .iter()
        .zip(&sol.residuals.0)
        .map(|(o, &res)| LabeledSample {
            features: FeatureVector {
                elevation_deg: o.elevation_deg,
                cn0_dbhz: o.cn0_dbhz,
                residual_m: res,
            },
            label: o.truth_label,
        })
        .collect())
}

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    elevation_deg: f64,
    cn0_dbhz: f64,
    residual_m: f64,
    label: String,
}

/// Writes `elevation_deg,cn0_dbhz,residual_m,label` with a header row.
pub fn write_samples_csv(path: &Path, samples: &[LabeledSample]) -> Result<(), DatasetIoError> {
    let err = |source| DatasetIoError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    if samples.is_empty() {
        w.write_record(["elevation_deg", "cn0_dbhz", "residual_m", "label"])
            .map_err(err)?;
    }
    for s in samples {
        w.serialize(CsvRow {
            elevation_deg: s.features.elevation_deg,
            cn0_dbhz: s.features.cn0_dbhz,
            residual_m: s.features.residual_m,
            label: s.label.to_string(),
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<LabeledSample>, DatasetIoError> {
    let mut r = csv::Reader::from_path(path).map_err(|source| DatasetIoError::Csv {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|source| DatasetIoError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let label = row.label.parse().map_err(|message| DatasetIoError::Parse {
            path: path.to_owned(),
            row: i + 1,
            message,
        })?;
        out.push(LabeledSample {
            features: FeatureVector {
                elevation_deg: row.elevation_deg,
                cn0_dbhz: row.cn0_dbhz,
                residual_m: row.residual_m,
            },
            label,
        });
    }
    Ok(out)
}
