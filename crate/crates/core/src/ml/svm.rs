//! C-SVC with an RBF kernel.
//!
//! The dual is solved by SMO with second-order working-set selection
//! (Fan, Chen & Lin, 2005), following LIBSVM's update and bias rules.
//! Probabilities come from a Platt sigmoid fitted to cross-validated decision
//! values with the Newton method of Lin, Lin & Weng (2007).

use super::{sigmoid, ClassProbability, Classifier, Dataset, MlError};
use crate::label::Label;
use crate::rng::{purpose, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// RBF width; `1 / (d · var)` of the standardized features when unset.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violating pair.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub platt_folds: usize,
    pub balanced: bool,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
            platt_folds: 3,
            balanced: false,
            cache_mb: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub dim: usize,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub gamma: f64,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ yᵢ` with `y = +1` for NLOS.
    pub dual_coefficients: Vec<f64>,
    /// Decision value is `Σ αᵢ yᵢ K(xᵢ, x) − rho`.
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub iterations: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// FIFO cache of kernel rows.
struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Box<[f64]>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_mb: usize) -> Self {
        let per_row = 8 * x.len().max(1);
        let capacity = (cache_mb * (1 << 20) / per_row).max(2);
        Self {
            x,
            gamma,
            rows: vec![None; x.len()],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = &self.x[i];
            let row: Box<[f64]> = self.x.iter().map(|xj| rbf(self.gamma, xi, xj)).collect();
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("row just filled")
    }
}

struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

const TAU: f64 = 1e-12;

fn solve_dual(
    x: &[Vec<f64>],
    y: &[f64],
    upper: &[f64],
    gamma: f64,
    tol: f64,
    max_iter: usize,
    cache_mb: usize,
) -> Result<DualSolution, MlError> {
    let n = x.len();
    let mut k = KernelRows::new(x, gamma, cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64, c: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    loop {
        // i: maximal -y G over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !is_upper(alpha[t], upper[t]) } else { !is_lower(alpha[t]) };
            if in_up && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        // j: second-order choice over I_low; also track min -y G there.
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        if let Some(i) = i_sel {
            let ki = k.row(i);
            let mut best = f64::INFINITY;
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t], upper[t]) };
                if !in_low {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let a = (2.0 - 2.0 * ki[t]).max(TAU);
                    let obj = -b * b / a;
                    if obj < best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax - gmin >= tol => (i, j),
            _ => break,
        };
        if iterations >= max_iter {
            return Err(MlError::NonConvergence {
                iterations,
                gap: gmax - gmin,
            });
        }
        iterations += 1;

        let kij = k.row(i)[j];
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let quad = (2.0 - 2.0 * kij).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        // G_t += Q_ti Δα_i + Q_tj Δα_j with Q_ts = y_t y_s K_ts.
        let di = (ai - old_i) * y[i];
        let dj = (aj - old_j) * y[j];
        let ki = k.row(i);
        for t in 0..n {
            grad[t] += y[t] * ki[t] * di;
        }
        let kj = k.row(j);
        for t in 0..n {
            grad[t] += y[t] * kj[t] * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t], upper[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { 0.5 * (ub + lb) };
    Ok(DualSolution { alpha, rho, iterations })
}

/// Platt sigmoid `P(y=+1 | f) = 1 / (1 + exp(A f + B))`.
fn fit_platt(dec: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&d, &t)| {
                let z = d * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&d, &t) in dec.iter().zip(&t) {
            // p = P(y=+1), q = 1 - p
            let p = sigmoid(-(d * a + b));
            let q = 1.0 - p;
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = t - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

struct Fitted {
    sv: Vec<Vec<f64>>,
    coef: Vec<f64>,
    rho: f64,
    iterations: usize,
}

impl Fitted {
    fn decision(&self, gamma: f64, z: &[f64]) -> f64 {
        self.sv
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(gamma, s, z))
            .sum::<f64>()
            - self.rho
    }
}

fn fit_dual(x: &[Vec<f64>], y: &[f64], cfg: &SvmConfig, gamma: f64) -> Result<Fitted, MlError> {
    let (pos, neg) = y.iter().fold((0usize, 0usize), |(p, n), &v| if v > 0.0 { (p + 1, n) } else { (p, n + 1) });
    let total = y.len() as f64;
    let upper: Vec<f64> = y
        .iter()
        .map(|&v| {
            if !cfg.balanced {
                cfg.c
            } else if v > 0.0 {
                cfg.c * total / (2.0 * pos as f64)
            } else {
                cfg.c * total / (2.0 * neg as f64)
            }
        })
        .collect();
    let sol = solve_dual(x, y, &upper, gamma, cfg.tolerance, cfg.max_iterations, cfg.cache_mb)?;
    let mut sv = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            sv.push(x[i].clone());
            coef.push(a * y[i]);
        }
    }
    Ok(Fitted {
        sv,
        coef,
        rho: sol.rho,
        iterations: sol.iterations,
    })
}

/// Below this many rows the cross-validation folds are too small to fit, so
/// Platt scaling uses in-sample decision values.
const MIN_ROWS_FOR_CV: usize = 10;

pub fn train_svm(data: &Dataset, cfg: &SvmConfig) -> Result<SvmModel, MlError> {
    data.require_two_classes()?;
    if !(cfg.c > 0.0) || !(cfg.tolerance > 0.0) || cfg.gamma.is_some_and(|g| !(g > 0.0)) {
        return Err(MlError::InvalidConfig("c, gamma and tolerance must be positive".into()));
    }
    let dim = data.dim();
    let n = data.len();
    let mut mean = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    for r in data.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    for r in data.rows() {
        for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let x: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let gamma = cfg.gamma.unwrap_or_else(|| {
        let all = x.iter().flatten();
        let count = (n * dim) as f64;
        let mu = all.clone().sum::<f64>() / count;
        let var = all.map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
        if var > 0.0 {
            1.0 / (dim as f64 * var)
        } else {
            1.0
        }
    });
    let y: Vec<f64> = data.labels().iter().map(|l| if l.is_nlos() { 1.0 } else { -1.0 }).collect();
    let full = fit_dual(&x, &y, cfg, gamma)?;

    let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    let folds = cfg.platt_folds;
    let dec: Vec<f64> = if folds < 2 || n < MIN_ROWS_FOR_CV.max(folds) {
        x.iter().map(|z| full.decision(gamma, z)).collect()
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(cfg.seed, purpose::SVM_FOLDS, 0));
        let mut dec = vec![0.0; n];
        for f in 0..folds {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let train: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let has_pos = ty.iter().any(|&v| v > 0.0);
            let has_neg = ty.iter().any(|&v| v < 0.0);
            if has_pos && has_neg {
                let m = fit_dual(&tx, &ty, cfg, gamma)?;
                for &i in &perm[lo..hi] {
                    dec[i] = m.decision(gamma, &x[i]);
                }
            } else {
                let v = if has_pos { 1.0 } else if has_neg { -1.0 } else { 0.0 };
                for &i in &perm[lo..hi] {
                    dec[i] = v;
                }
            }
        }
        dec
    };
    let (platt_a, platt_b) = fit_platt(&dec, &positive);
    Ok(SvmModel {
        dim,
        feature_mean: mean,
        feature_scale: scale,
        gamma,
        support_vectors: full.sv,
        dual_coefficients: full.coef,
        rho: full.rho,
        platt_a,
        platt_b,
        iterations: full.iterations,
    })
}

impl SvmModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Signed margin; positive leans NLOS.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let z = self.standardize(x);
        self.support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(s, c)| c * rbf(self.gamma, s, &z))
            .sum::<f64>()
            - self.rho
    }
}

impl Classifier for SvmModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, x: &[f64]) -> ClassProbability {
        let f = self.decision_value(x);
        ClassProbability::from_nlos(sigmoid(-(self.platt_a * f + self.platt_b)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktAudit {
    pub points: usize,
    pub violations: usize,
    pub max_violation: f64,
}

impl KktAudit {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the box-constrained KKT conditions of the trained dual on `data`
/// (which must be the training set): `α = 0 ⇒ y f ≥ 1`, `0 < α < C ⇒ y f = 1`,
/// `α = C ⇒ y f ≤ 1`, each within `tol`. Rows absent from the support set are
/// taken to have `α = 0`.
pub fn kkt_audit(model: &SvmModel, data: &Dataset, cfg: &SvmConfig, tol: f64) -> KktAudit {
    let (los, nlos) = data.class_counts();
    let total = data.len() as f64;
    let mut audit = KktAudit {
        points: data.len(),
        violations: 0,
        max_violation: 0.0,
    };
    for (row, label) in data.rows().iter().zip(data.labels()) {
        let y = if *label == Label::Nlos { 1.0 } else { -1.0 };
        let c = match (cfg.balanced, label) {
            (false, _) => cfg.c,
            (true, Label::Nlos) => cfg.c * total / (2.0 * nlos as f64),
            (true, Label::Los) => cfg.c * total / (2.0 * los as f64),
        };
        let z = model.standardize(row);
        let alpha = model
            .support_vectors
            .iter()
            .zip(&model.dual_coefficients)
            .find(|(s, _)| s.as_slice() == z.as_slice())
            .map_or(0.0, |(_, coef)| coef.abs());
        let margin = y * model.decision_value(row) - 1.0;
        let violation = if alpha <= 0.0 {
            (-margin).max(0.0)
        } else if alpha >= c {
            margin.max(0.0)
        } else {
            margin.abs()
        };
        audit.max_violation = audit.max_violation.max(violation);
        if violation > tol {
            audit.violations += 1;
        }
    }
    audit
}
