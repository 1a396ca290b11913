use super::tree::{grow, Criterion, DecisionTree, GrowParams};
use super::{sigmoid, ClassProbability, Classifier, Dataset, MlError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub balanced: bool,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            stages: 200,
            learning_rate: 0.1,
            max_depth: 3,
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub dim: usize,
    pub learning_rate: f64,
    pub initial_log_odds: f64,
    /// Regression trees whose leaves already include the learning rate and
    /// any step shrinkage, so the score is `initial_log_odds + Σ tree(x)`.
    pub trees: Vec<DecisionTree>,
    /// Weighted mean training log-loss before the first stage and after each stage.
    pub loss_trace: Vec<f64>,
}

/// Weighted mean logistic loss for targets `y ∈ {0,1}` and log-odds `f`.
fn log_loss(y: &[f64], w: &[f64], f: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((&y, &w), &f) in y.iter().zip(w).zip(f) {
        // log(1 + e^f) - y f, computed without overflow.
        let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
        num += w * (softplus - y * f);
        den += w;
    }
    num / den
}

const MAX_HALVINGS: usize = 30;

/// Newton leaf values on the logistic loss, with the stage step halved until
/// the training loss does not increase. This keeps the recorded loss trace
/// monotone even when a Newton leaf overshoots.
pub fn train_gbdt(data: &Dataset, cfg: &GbdtConfig) -> Result<GbdtModel, MlError> {
    data.require_two_classes()?;
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(MlError::InvalidConfig("learning_rate must be positive".into()));
    }
    let n = data.len();
    let y: Vec<f64> = data.labels().iter().map(|l| l.as_target()).collect();
    let w = data.class_weights(cfg.balanced);
    let (w1, wt) = y.iter().zip(&w).fold((0.0, 0.0), |(a, b), (y, w)| (a + y * w, b + w));
    let initial = (w1 / (wt - w1)).ln();
    let mut f = vec![initial; n];
    let mut trace = vec![log_loss(&y, &w, &f)];
    let mut trees = Vec::with_capacity(cfg.stages);
    let all: Vec<usize> = (0..n).collect();
    let mut residual = vec![0.0; n];
    let mut trial = vec![0.0; n];
    for _ in 0..cfg.stages {
        for i in 0..n {
            residual[i] = y[i] - sigmoid(f[i]);
        }
        let (mut tree, leaves) = grow(
            data.rows(),
            &residual,
            &w,
            all.clone(),
            GrowParams {
                criterion: Criterion::SquaredError,
                max_depth: cfg.max_depth,
                max_features: None,
                rng: None,
            },
        );
        let newton: Vec<f64> = leaves
            .iter()
            .map(|members| {
                let (num, den) = members.iter().fold((0.0, 0.0), |(a, b), &i| {
                    let p = y[i] - residual[i];
                    (a + w[i] * residual[i], b + w[i] * p * (1.0 - p))
                });
                if den > 1e-12 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect();
        let current = *trace.last().expect("trace starts nonempty");
        let mut scale = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for (leaf, v) in tree.leaves_mut().zip(&newton) {
                *leaf = scale * v;
            }
            for i in 0..n {
                trial[i] = f[i] + tree.predict(&data.rows()[i]);
            }
            let loss = log_loss(&y, &w, &trial);
            if loss <= current {
                accepted = Some(loss);
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some(loss) => {
                std::mem::swap(&mut f, &mut trial);
                trace.push(loss);
            }
            None => {
                for leaf in tree.leaves_mut() {
                    *leaf = 0.0;
                }
                trace.push(current);
            }
        }
        trees.push(tree);
    }
    Ok(GbdtModel {
        dim: data.dim(),
        learning_rate: cfg.learning_rate,
        initial_log_odds: initial,
        trees,
        loss_trace: trace,
    })
}

impl GbdtModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.initial_log_odds + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl Classifier for GbdtModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, x: &[f64]) -> ClassProbability {
        ClassProbability::from_nlos(sigmoid(self.decision_value(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;

    #[test]
    fn zero_stages_predicts_prior() {
        let d = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![Label::Los, Label::Nlos, Label::Los, Label::Nlos],
        )
        .unwrap();
        let m = train_gbdt(&d, &GbdtConfig { stages: 0, ..GbdtConfig::default() }).unwrap();
        assert_eq!(m.initial_log_odds, 0.0);
        assert_eq!(m.predict_proba(&[7.0]).p_los, 0.5);

        let skew = Dataset::new(vec![vec![0.0]; 4], vec![Label::Los, Label::Los, Label::Los, Label::Nlos]).unwrap();
        let m = train_gbdt(&skew, &GbdtConfig { stages: 0, ..GbdtConfig::default() }).unwrap();
        assert!((m.predict_proba(&[0.0]).p_nlos - 0.25).abs() < 1e-12);
    }

    #[test]
    fn loss_trace_monotone() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin(), i as f64]).collect();
        let labels = (0..60)
            .map(|i| if (i * 7) % 5 < 2 { Label::Nlos } else { Label::Los })
            .collect();
        let d = Dataset::new(rows, labels).unwrap();
        let m = train_gbdt(&d, &GbdtConfig { stages: 40, ..GbdtConfig::default() }).unwrap();
        assert_eq!(m.loss_trace.len(), 41);
        assert!(m.loss_trace.windows(2).all(|p| p[1] <= p[0]));
        assert!(m.loss_trace[40] < m.loss_trace[0]);
    }
}
