use super::tree::{grow, Criterion, DecisionTree, GrowParams};
use super::{ClassProbability, Classifier, Dataset, MlError};
use crate::rng::{purpose, stream};
use rand::RngExt;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    /// Features tried per split; `floor(sqrt(d))` when unset.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub balanced: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_depth: 8,
            max_features: None,
            bootstrap: true,
            balanced: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub dim: usize,
    pub feature_subsample_count: usize,
    pub seed: u64,
    /// Leaves hold the weighted NLOS fraction of their training rows.
    pub trees: Vec<DecisionTree>,
}

pub fn train_rf(data: &Dataset, cfg: &RfConfig) -> Result<RandomForestModel, MlError> {
    data.require_two_classes()?;
    if cfg.tree_count == 0 {
        return Err(MlError::InvalidConfig("tree_count must be positive".into()));
    }
    let dim = data.dim();
    let k = cfg
        .max_features
        .unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1))
        .clamp(1, dim);
    let targets: Vec<f64> = data.labels().iter().map(|l| l.as_target()).collect();
    let class_w = data.class_weights(cfg.balanced);
    let n = data.len();
    let trees = (0..cfg.tree_count)
        .map(|t| {
            let mut rng = stream(cfg.seed, purpose::RF_TREE, t as u64);
            // Bootstrap multiplicities become sample weights.
            let mut weights = vec![0.0; n];
            if cfg.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let idx: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
            for (w, c) in weights.iter_mut().zip(&class_w) {
                *w *= c;
            }
            grow(
                data.rows(),
                &targets,
                &weights,
                idx,
                GrowParams {
                    criterion: Criterion::Gini,
                    max_depth: cfg.max_depth,
                    max_features: Some(k),
                    rng: Some(&mut rng),
                },
            )
            .0
        })
        .collect();
    Ok(RandomForestModel {
        dim,
        feature_subsample_count: k,
        seed: cfg.seed,
        trees,
    })
}

impl Classifier for RandomForestModel {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Fraction of trees voting NLOS (hard votes).
    fn predict_proba(&self, x: &[f64]) -> ClassProbability {
        let votes = self.trees.iter().filter(|t| t.predict(x) > 0.5).count();
        ClassProbability::from_nlos(votes as f64 / self.trees.len() as f64)
    }
}
