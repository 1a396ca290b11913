//! Experiment orchestration: scene → measurements → features → models →
//! per-epoch selection, refinement and scoring, aggregated per method.

mod compare;
mod output;
mod svg;

pub use compare::{compare_methods, reference_reports, TrendVerdict};
pub use output::{emit_report, REPORT_FORMAT};
pub use svg::{scene_map, visible_counts};

use crate::features::{extract_features, FeatureVector};
use crate::geom::{GeomError, Point2, RegionSet};
use crate::label::Label;
use crate::ml::{evaluate_accuracy, Algorithm, Dataset, MlConfig, MlError, TrainedEnsemble};
use crate::scene::{generate_scene, simulate_epochs, NoiseConfig, Scene, SceneConfig, SceneError, Section};
use crate::select::{
    select_satellites, selection_statistics, single_model_decisions, SelectError, SelectionDecision, SelectionStats,
    DEFAULT_THRESHOLD,
};
use crate::zsm::{compute_shadow_near, refine_aoi, score_epoch, Aoi, PositioningOutcome, ShadowRegion, ZsmError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "ZSM_URBAN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rf,
    Gbdt,
    Svm,
    Unanimous,
    UnanimousThreshold,
    /// Ablation: every satellite used with its true label.
    Truth,
}

impl Method {
    pub const DEFAULT: [Method; 5] = [
        Method::Rf,
        Method::Gbdt,
        Method::Svm,
        Method::Unanimous,
        Method::UnanimousThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::Gbdt => "gbdt",
            Method::Svm => "svm",
            Method::Unanimous => "unanimous",
            Method::UnanimousThreshold => "unanimous_threshold",
            Method::Truth => "truth",
        }
    }

    pub fn single_model(self) -> Option<Algorithm> {
        match self {
            Method::Rf => Some(Algorithm::Rf),
            Method::Gbdt => Some(Algorithm::Gbdt),
            Method::Svm => Some(Algorithm::Svm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The seed inside is replaced by each entry of `seeds`.
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    /// Model seeds are derived from each experiment seed.
    pub ml: MlConfig,
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Target epochs whose unanimous+threshold AOI is kept for the scene map.
    pub map_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise: NoiseConfig::default(),
            ml: MlConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            seeds: (1..=5).collect(),
            methods: Method::DEFAULT.to_vec(),
            map_epochs: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("comparison needs more data: {0}")]
    InsufficientData(String),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(HarnessError::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds".into()));
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(HarnessError::Config("duplicate seeds".into()));
        }
        let unique: BTreeSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(HarnessError::Config("duplicate methods".into()));
        }
        generate_scene(&self.scene).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Which pipeline stage a seed failed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Error)]
enum StageError {
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("train: {0}")]
    Ml(#[from] MlError),
    #[error("select: {0}")]
    Select(#[from] SelectError),
    #[error("zsm: {0}")]
    Zsm(#[from] ZsmError),
    #[error("score: {0}")]
    Geom(#[from] GeomError),
}

impl StageError {
    fn stage(&self) -> &'static str {
        match self {
            StageError::Scene(_) => "scene",
            StageError::Ml(_) => "train",
            StageError::Select(_) => "select",
            StageError::Zsm(_) => "refine",
            StageError::Geom(_) => "score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train_los: usize,
    pub train_nlos: usize,
    pub test_los: usize,
    pub test_nlos: usize,
}

/// Per-seed diagnostics that are not method metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub dataset: DatasetSizes,
    /// Epochs whose least-squares solve failed (their satellites are not classified).
    pub ls_failures: usize,
    /// Target-road accuracy of each model, `[rf, gbdt, svm]`.
    pub model_accuracy: [f64; 3],
    pub mean_visible_per_epoch: f64,
    /// Selection statistics at the configured threshold.
    pub selection: SelectionStats,
    pub shadow_hull_fallbacks: usize,
}

/// Per-epoch data kept for figures (first seed only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub seed: u64,
    pub scene: Scene,
    /// `(epoch_index, los, nlos)` tracked signals on the target road.
    pub visible: Vec<(usize, usize, usize)>,
    /// `(epoch_index, truth, unanimous+threshold AOI)`.
    pub aois: Vec<(usize, [f64; 2], RegionSet)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub method: Method,
    pub outcome: PositioningOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// `pooled`, `seed-N`, or `reference` for the published values.
    pub scope: String,
    pub seed: Option<u64>,
    pub method: Method,
    pub epoch_count: usize,
    /// Argmax accuracy for single models; correct rate among selected
    /// satellites for the voting methods.
    pub classification_accuracy: Option<f64>,
    pub mean_misclassified_per_epoch: Option<f64>,
    pub success_rate: Option<f64>,
    pub containment_rate: Option<f64>,
    /// Averaged over successful epochs only.
    pub mean_cross_bound: Option<f64>,
    pub mean_along_bound: Option<f64>,
    pub successful_epochs: Option<usize>,
    pub contained_epochs: Option<usize>,
    pub mean_satellites_used: Option<f64>,
    pub no_refinement_epochs: Option<usize>,
    pub boundary_ambiguous_epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Per-seed rows followed by pooled rows, each in method order.
    pub reports: Vec<MethodReport>,
    pub outcomes: Vec<EpochRecord>,
    pub seeds: Vec<SeedSummary>,
    pub failures: Vec<SeedFailure>,
    pub figure: Option<FigureData>,
}

struct SeedRun {
    summary: SeedSummary,
    outcomes: Vec<EpochRecord>,
    /// Voting-method accuracy inputs: `(selected, selected_wrong)` per method.
    selected_counts: BTreeMap<Method, (usize, usize)>,
    figure: Option<FigureData>,
}

struct EpochResult {
    outcomes: Vec<(Method, PositioningOutcome)>,
    decisions_at_threshold: Vec<(SelectionDecision, Label)>,
    los: usize,
    nlos: usize,
    hull_fallbacks: usize,
    map_aoi: Option<RegionSet>,
}

fn truth_decisions(epoch: &crate::scene::EpochObservation) -> Vec<SelectionDecision> {
    epoch
        .observations
        .iter()
        .map(|o| SelectionDecision {
            sat_id: o.sat_id,
            per_model_labels: vec![o.truth_label],
            per_model_confidences: vec![1.0],
            selected: true,
            agreed_label: Some(o.truth_label),
            rejection_reason: None,
        })
        .collect()
}

fn run_epoch(
    scene: &Scene,
    epoch: &crate::scene::EpochObservation,
    ensemble: &TrainedEnsemble,
    cfg: &ExperimentConfig,
    keep_aoi: bool,
) -> Result<EpochResult, StageError> {
    let k = epoch.epoch_index;
    let truth_labels: BTreeMap<u32, Label> = epoch.observations.iter().map(|o| (o.sat_id, o.truth_label)).collect();
    // A failed least-squares solve leaves the epoch without features, so no
    // classifier-based method uses any satellite there.
    let fv: Vec<(u32, FeatureVector)> = match extract_features(epoch, scene.street_midpoint()) {
        Ok(samples) => epoch
            .observations
            .iter()
            .zip(samples)
            .map(|(o, s)| (o.sat_id, s.features))
            .collect(),
        Err(_) => Vec::new(),
    };

    let at_threshold = select_satellites(&fv, ensemble, cfg.threshold)?;
    let mut per_method: Vec<(Method, Vec<SelectionDecision>)> = Vec::new();
    for &m in &cfg.methods {
        let d = match m {
            Method::Rf | Method::Gbdt | Method::Svm => {
                single_model_decisions(&fv, ensemble.get(m.single_model().expect("single model")))
            }
            Method::Unanimous => select_satellites(&fv, ensemble, 0.0)?,
            Method::UnanimousThreshold => at_threshold.clone(),
            Method::Truth => truth_decisions(epoch),
        };
        per_method.push((m, d));
    }

    let initial = scene.initial_aoi_at(k);
    let window = initial.bounding_box();
    let needed: BTreeSet<u32> = per_method
        .iter()
        .flat_map(|(_, d)| d.iter().filter(|d| d.selected).map(|d| d.sat_id))
        .collect();
    let mut shadows = BTreeMap::new();
    let mut hull_fallbacks = 0;
    if let Some(window) = window {
        for view in scene.satellites_at(k) {
            if needed.contains(&view.sat_id) {
                let s: ShadowRegion = compute_shadow_near(scene, &view, scene.antenna_height(), Some(window))?;
                hull_fallbacks += s.hull_fallbacks;
                shadows.insert(view.sat_id, s);
            }
        }
    }

    let truth = Point2::new(epoch.true_position[0], epoch.true_position[1]);
    let mut outcomes = Vec::with_capacity(per_method.len());
    let mut map_aoi = None;
    for (m, decisions) in &per_method {
        let aoi = refine_aoi(Aoi::new(initial.clone()), decisions, &shadows)?;
        let mut outcome = score_epoch(&aoi, truth, scene.street_direction())?;
        outcome.epoch_index = k;
        outcome.misclassified_used = decisions
            .iter()
            .filter(|d| d.selected && d.agreed_label != truth_labels.get(&d.sat_id).copied())
            .count();
        if keep_aoi && *m == Method::UnanimousThreshold {
            map_aoi = Some(aoi.region.clone());
        }
        outcomes.push((*m, outcome));
    }
    let nlos = epoch.observations.iter().filter(|o| o.truth_label.is_nlos()).count();
    Ok(EpochResult {
        outcomes,
        decisions_at_threshold: at_threshold
            .into_iter()
            .map(|d| {
                let t = truth_labels[&d.sat_id];
                (d, t)
            })
            .collect(),
        los: epoch.observations.len() - nlos,
        nlos,
        hull_fallbacks,
        map_aoi,
    })
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, with_figure: bool) -> Result<SeedRun, StageError> {
    let scene = generate_scene(&SceneConfig {
        seed,
        ..cfg.scene.clone()
    })?;
    let epochs = simulate_epochs(&scene, &cfg.noise);
    let extracted: Vec<_> = epochs
        .par_iter()
        .map(|e| extract_features(e, scene.street_midpoint()))
        .collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut ls_failures = 0;
    for (e, r) in epochs.iter().zip(extracted) {
        match r {
            Ok(s) if e.section == Section::Training => train.extend(s),
            Ok(s) => test.extend(s),
            Err(_) => ls_failures += 1,
        }
    }
    let train = Dataset::from_samples(&train);
    let test = Dataset::from_samples(&test);
    let ensemble = TrainedEnsemble::train(&train, &cfg.ml.reseeded(seed))?;
    let model_accuracy = Algorithm::ALL.map(|a| evaluate_accuracy(ensemble.get(a), &test).unwrap_or(f64::NAN));

    let targets: Vec<&crate::scene::EpochObservation> =
        epochs.iter().filter(|e| e.section == Section::Target).collect();
    let n_map = if with_figure { cfg.map_epochs.min(targets.len()) } else { 0 };
    let map_set: BTreeSet<usize> = (0..n_map)
        .map(|i| {
            let pos = if n_map == 1 { 0 } else { i * (targets.len() - 1) / (n_map - 1) };
            targets[pos].epoch_index
        })
        .collect();
    let results: Vec<EpochResult> = targets
        .par_iter()
        .map(|e| run_epoch(&scene, e, &ensemble, cfg, map_set.contains(&e.epoch_index)))
        .collect::<Result<_, _>>()?;

    let mut by_method: BTreeMap<Method, Vec<PositioningOutcome>> = BTreeMap::new();
    let mut selected_counts: BTreeMap<Method, (usize, usize)> = BTreeMap::new();
    for r in &results {
        for (m, o) in &r.outcomes {
            by_method.entry(*m).or_default().push(o.clone());
            let c = selected_counts.entry(*m).or_default();
            c.0 += o.satellites_used;
            c.1 += o.misclassified_used;
        }
    }
    let outcomes = cfg
        .methods
        .iter()
        .flat_map(|m| {
            by_method.remove(m).unwrap_or_default().into_iter().map(move |outcome| EpochRecord {
                seed,
                method: *m,
                outcome,
            })
        })
        .collect();
    let per_epoch: Vec<Vec<(SelectionDecision, Label)>> =
        results.iter().map(|r| r.decisions_at_threshold.clone()).collect();
    let visible: Vec<(usize, usize, usize)> = targets
        .iter()
        .zip(&results)
        .map(|(e, r)| (e.epoch_index, r.los, r.nlos))
        .collect();
    let mean_visible = if visible.is_empty() {
        0.0
    } else {
        visible.iter().map(|v| (v.1 + v.2) as f64).sum::<f64>() / visible.len() as f64
    };
    let figure = with_figure.then(|| FigureData {
        seed,
        aois: targets
            .iter()
            .zip(&results)
            .filter_map(|(e, r)| r.map_aoi.clone().map(|a| (e.epoch_index, e.true_position, a)))
            .collect(),
        visible,
        scene: scene.clone(),
    });
    let (train_los, train_nlos) = train.class_counts();
    let (test_los, test_nlos) = test.class_counts();
    Ok(SeedRun {
        summary: SeedSummary {
            seed,
            dataset: DatasetSizes {
                train_los,
                train_nlos,
                test_los,
                test_nlos,
            },
            ls_failures,
            model_accuracy,
            mean_visible_per_epoch: mean_visible,
            selection: selection_statistics(&per_epoch),
            shadow_hull_fallbacks: results.iter().map(|r| r.hull_fallbacks).sum(),
        },
        outcomes,
        selected_counts,
        figure,
    })
}

fn aggregate(
    scope: String,
    seed: Option<u64>,
    method: Method,
    outcomes: &[&PositioningOutcome],
    accuracy: Option<f64>,
) -> MethodReport {
    let n = outcomes.len();
    let rate = |k: usize| (n > 0).then(|| k as f64 / n as f64);
    let ok: Vec<&&PositioningOutcome> = outcomes.iter().filter(|o| o.success).collect();
    let mean = |f: &dyn Fn(&PositioningOutcome) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|o| f(o)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let contained = outcomes.iter().filter(|o| o.contains_truth).count();
    MethodReport {
        scope,
        seed,
        method,
        epoch_count: n,
        classification_accuracy: accuracy,
        mean_misclassified_per_epoch: rate(outcomes.iter().map(|o| o.misclassified_used).sum()),
        success_rate: rate(ok.len()),
        containment_rate: rate(contained),
        mean_cross_bound: mean(&|o| o.cross_street_bound),
        mean_along_bound: mean(&|o| o.along_street_bound),
        successful_epochs: Some(ok.len()),
        contained_epochs: Some(contained),
        mean_satellites_used: rate(outcomes.iter().map(|o| o.satellites_used).sum()),
        no_refinement_epochs: Some(outcomes.iter().filter(|o| o.no_refinement).count()),
        boundary_ambiguous_epochs: Some(outcomes.iter().filter(|o| o.boundary_ambiguous).count()),
    }
}

fn method_accuracy(method: Method, model_accuracy: &[f64; 3], selected: (usize, usize)) -> Option<f64> {
    match method.single_model() {
        Some(a) => Some(model_accuracy[Algorithm::ALL.iter().position(|x| *x == a).expect("known algorithm")]),
        None => (selected.0 > 0).then(|| 1.0 - selected.1 as f64 / selected.0 as f64),
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| HarnessError::ThreadPool(e.to_string())),
        _ => Ok(f()),
    }
}

/// Runs every seed (in parallel), then aggregates per seed and pooled over
/// all seeds. A failing seed is reported in `failures` and left out of the
/// pooled rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let runs: Vec<(u64, Result<SeedRun, StageError>)> = with_pool(|| {
        cfg.seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| (seed, run_seed(cfg, seed, i == 0)))
            .collect()
    })?;

    let mut result = ExperimentResult {
        config: cfg.clone(),
        ..ExperimentResult::default()
    };
    let mut pooled_selected: BTreeMap<Method, (usize, usize)> = BTreeMap::new();
    let mut pooled_model_correct = [0.0f64; 3];
    let mut pooled_test = 0usize;
    for (seed, run) in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                result.failures.push(SeedFailure {
                    seed,
                    stage: e.stage().into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let tests = run.summary.dataset.test_los + run.summary.dataset.test_nlos;
        for (acc, pooled) in run.summary.model_accuracy.iter().zip(&mut pooled_model_correct) {
            *pooled += acc * tests as f64;
        }
        pooled_test += tests;
        for &m in &cfg.methods {
            let outs: Vec<&PositioningOutcome> =
                run.outcomes.iter().filter(|r| r.method == m).map(|r| &r.outcome).collect();
            let sel = run.selected_counts.get(&m).copied().unwrap_or_default();
            let p = pooled_selected.entry(m).or_default();
            p.0 += sel.0;
            p.1 += sel.1;
            let acc = method_accuracy(m, &run.summary.model_accuracy, sel);
            result.reports.push(aggregate(format!("seed-{seed}"), Some(seed), m, &outs, acc));
        }
        if result.figure.is_none() {
            result.figure = run.figure;
        }
        result.outcomes.extend(run.outcomes);
        result.seeds.push(run.summary);
    }
    if !result.seeds.is_empty() {
        let model_acc = pooled_model_correct.map(|c| c / pooled_test.max(1) as f64);
        for &m in &cfg.methods {
            let outs: Vec<&PositioningOutcome> =
                result.outcomes.iter().filter(|r| r.method == m).map(|r| &r.outcome).collect();
            let acc = method_accuracy(m, &model_acc, pooled_selected.get(&m).copied().unwrap_or_default());
            result.reports.push(aggregate("pooled".into(), None, m, &outs, acc));
        }
    }
    Ok(result)
}

impl ExperimentResult {
    pub fn pooled(&self) -> Vec<&MethodReport> {
        self.reports.iter().filter(|r| r.scope == "pooled").collect()
    }

    pub fn for_seed(&self, seed: u64) -> Vec<&MethodReport> {
        self.reports.iter().filter(|r| r.seed == Some(seed)).collect()
    }
}
