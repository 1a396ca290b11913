//! Conservative satellite selection: a satellite is used only when all three
//! classifiers agree on its label and each one is confident about it.

use crate::features::FeatureVector;
use crate::label::Label;
use crate::ml::{ClassProbability, Classifier, TrainedEnsemble};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RejectionReason {
    Disagreement,
    LowConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub sat_id: u32,
    pub per_model_labels: Vec<Label>,
    pub per_model_confidences: Vec<f64>,
    pub selected: bool,
    pub agreed_label: Option<Label>,
    pub rejection_reason: Option<RejectionReason>,
}

/// Applies the unanimity and confidence gates to one satellite's model
/// outputs. Confidences must strictly exceed `threshold`.
pub fn decide(sat_id: u32, probs: &[ClassProbability], threshold: f64) -> SelectionDecision {
    let labels: Vec<Label> = probs.iter().map(ClassProbability::label).collect();
    let confidences: Vec<f64> = probs.iter().map(ClassProbability::confidence).collect();
    let unanimous = labels.windows(2).all(|w| w[0] == w[1]) && !labels.is_empty();
    let confident = confidences.iter().all(|&c| c > threshold);
    let (selected, agreed_label, rejection_reason) = match (unanimous, confident) {
        (false, _) => (false, None, Some(RejectionReason::Disagreement)),
        (true, false) => (false, None, Some(RejectionReason::LowConfidence)),
        (true, true) => (true, Some(labels[0]), None),
    };
    SelectionDecision {
        sat_id,
        per_model_labels: labels,
        per_model_confidences: confidences,
        selected,
        agreed_label,
        rejection_reason,
    }
}

fn check_threshold(threshold: f64) -> Result<(), SelectError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(SelectError::InvalidThreshold(threshold))
    }
}

/// One decision per satellite, sorted by `sat_id`.
///
/// Thresholds at or below 0.5 make the confidence gate vacuous (every
/// binary argmax has confidence ≥ 0.5); they are accepted so that plain
/// unanimous voting is the `threshold = 0` special case.
pub fn select_satellites(
    epoch_features: &[(u32, FeatureVector)],
    ensemble: &TrainedEnsemble,
    threshold: f64,
) -> Result<Vec<SelectionDecision>, SelectError> {
    select_with_models(epoch_features, &[&ensemble.rf, &ensemble.gbdt, &ensemble.svm], threshold)
}

/// [`select_satellites`] over an arbitrary list of models, in the given order.
pub fn select_with_models(
    epoch_features: &[(u32, FeatureVector)],
    models: &[&dyn Classifier],
    threshold: f64,
) -> Result<Vec<SelectionDecision>, SelectError> {
    check_threshold(threshold)?;
    let mut out: Vec<SelectionDecision> = epoch_features
        .iter()
        .map(|(id, f)| {
            let x = f.to_array();
            let probs: Vec<ClassProbability> = models.iter().map(|m| m.predict_proba(&x)).collect();
            decide(*id, &probs, threshold)
        })
        .collect();
    out.sort_by_key(|d| d.sat_id);
    Ok(out)
}

/// Single-model baseline: every satellite is used with that model's argmax label.
pub fn single_model_decisions<C: Classifier + ?Sized>(
    epoch_features: &[(u32, FeatureVector)],
    model: &C,
) -> Vec<SelectionDecision> {
    let mut out: Vec<SelectionDecision> = epoch_features
        .iter()
        .map(|(id, f)| {
            let p = model.predict_proba(&f.to_array());
            SelectionDecision {
                sat_id: *id,
                per_model_labels: vec![p.label()],
                per_model_confidences: vec![p.confidence()],
                selected: true,
                agreed_label: Some(p.label()),
                rejection_reason: None,
            }
        })
        .collect();
    out.sort_by_key(|d| d.sat_id);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBaseline {
    pub accuracy: f64,
    pub misclassified_per_epoch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub epochs: usize,
    pub signals: usize,
    pub unanimous_fraction: f64,
    /// Unanimous and above threshold.
    pub selected_fraction: f64,
    /// `None` when nothing was selected.
    pub selected_correct_rate: Option<f64>,
    pub selected_misclassified_per_epoch: f64,
    /// Per-model accuracy and misclassifications per epoch over all signals,
    /// in the order the models appear in each decision.
    pub per_model: Vec<ModelBaseline>,
}

/// `epochs[k]` pairs each decision of epoch `k` with the true label.
pub fn selection_statistics(epochs: &[Vec<(SelectionDecision, Label)>]) -> SelectionStats {
    let models = epochs
        .iter()
        .flatten()
        .map(|(d, _)| d.per_model_labels.len())
        .max()
        .unwrap_or(0);
    let mut signals = 0usize;
    let mut unanimous = 0usize;
    let mut selected = 0usize;
    let mut selected_wrong = 0usize;
    let mut model_wrong = vec![0usize; models];
    for (d, truth) in epochs.iter().flatten() {
        signals += 1;
        if d.rejection_reason != Some(RejectionReason::Disagreement) {
            unanimous += 1;
        }
        if d.selected {
            selected += 1;
            if d.agreed_label != Some(*truth) {
                selected_wrong += 1;
            }
        }
        for (m, l) in d.per_model_labels.iter().enumerate() {
            if l != truth {
                model_wrong[m] += 1;
            }
        }
    }
    let n_epochs = epochs.len();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    SelectionStats {
        epochs: n_epochs,
        signals,
        unanimous_fraction: frac(unanimous, signals),
        selected_fraction: frac(selected, signals),
        selected_correct_rate: (selected > 0).then(|| 1.0 - frac(selected_wrong, selected)),
        selected_misclassified_per_epoch: frac(selected_wrong, n_epochs),
        per_model: model_wrong
            .iter()
            .map(|&w| ModelBaseline {
                accuracy: 1.0 - frac(w, signals),
                misclassified_per_epoch: frac(w, n_epochs),
            })
            .collect(),
    }
}
