mod common;

use common::*;
use proptest::prelude::*;
use rand::RngExt;
use std::sync::OnceLock;
use zsm_core::ml::*;
use zsm_core::Label;

struct Fixture {
    train: Dataset,
    test: Dataset,
    models: TrainedEnsemble,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (train, test) = synthetic_datasets(2);
        let models = TrainedEnsemble::train(&train, &MlConfig::default().reseeded(2)).unwrap();
        Fixture { train, test, models }
    })
}

fn all_models(e: &TrainedEnsemble) -> [&dyn Classifier; 3] {
    [&e.rf, &e.gbdt, &e.svm]
}

/// Weighted Gini of a split at every gap between sorted distinct values;
/// returns the gaps `(lo, hi)` achieving the minimum.
fn optimal_gini_gaps(x: &[f64], y: &[Label]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, bool)> = x.iter().zip(y).map(|(&v, l)| (v, l.is_nlos())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len() as f64;
    let total_pos = pts.iter().filter(|p| p.1).count() as f64;
    let gini = |pos: f64, cnt: f64| {
        let p = pos / cnt;
        2.0 * p * (1.0 - p)
    };
    let mut scored = Vec::new();
    let mut pos = 0.0;
    for i in 0..pts.len() - 1 {
        pos += pts[i].1 as u8 as f64;
        if pts[i].0 == pts[i + 1].0 {
            continue;
        }
        let left = (i + 1) as f64;
        let right = n - left;
        let impurity = (left * gini(pos, left) + right * gini(total_pos - pos, right)) / n;
        scored.push((impurity, (pts[i].0, pts[i + 1].0)));
    }
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    scored.into_iter().filter(|s| s.0 <= best + 1e-12).map(|s| s.1).collect()
}

#[test]
fn stump_split_is_gini_optimal() {
    let mut r = rng(12);
    for trial in 0..20 {
        let n = 60 + trial * 10;
        let cut = r.random_range(-1.0..1.0);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let y: Vec<Label> = x
            .iter()
            .map(|&v| {
                let flip = r.random_range(0.0..1.0) < 0.1;
                if (v > cut) != flip { Label::Nlos } else { Label::Los }
            })
            .collect();
        let data = Dataset::new(x.iter().map(|&v| vec![v]).collect(), y.clone()).unwrap();
        let cfg = RfConfig {
            tree_count: 1,
            max_depth: 1,
            bootstrap: false,
            ..RfConfig::default()
        };
        let model = train_rf(&data, &cfg).unwrap();
        let Node::Split { feature, threshold, .. } = model.trees[0].nodes[0] else {
            panic!("root should split");
        };
        assert_eq!(feature, 0);
        let gaps = optimal_gini_gaps(&x, &y);
        assert!(
            gaps.iter().any(|&(lo, hi)| lo <= threshold && threshold < hi),
            "threshold {threshold} outside optimal gaps {gaps:?}"
        );
    }
}

#[test]
fn training_is_deterministic() {
    let toy = separable_toy(300, 4);
    let cfg = MlConfig::default().reseeded(9);
    let a = TrainedEnsemble::train(&toy, &cfg).unwrap();
    let b = TrainedEnsemble::train(&toy, &cfg).unwrap();
    for (x, y) in [
        (Model::Rf(a.rf), Model::Rf(b.rf)),
        (Model::Gbdt(a.gbdt), Model::Gbdt(b.gbdt)),
        (Model::Svm(a.svm), Model::Svm(b.svm)),
    ] {
        assert_eq!(model_to_json(&x), model_to_json(&y));
    }
}

#[test]
fn separable_toy_is_learned() {
    let toy = separable_toy(400, 11);
    let held_out = separable_toy(400, 12);
    let e = TrainedEnsemble::train(&toy, &MlConfig::default()).unwrap();
    for m in all_models(&e) {
        assert!(evaluate_accuracy(m, &toy).unwrap() >= 0.99);
        assert!(evaluate_accuracy(m, &held_out).unwrap() >= 0.95);
    }
    // Deep inside the LOS half every tree ends in a pure LOS leaf.
    assert_eq!(e.rf.predict_proba(&[-2.9, -2.9, 0.0]).p_los, 1.0);
}

#[test]
fn zero_stage_boosting_predicts_the_prior() {
    let toy = separable_toy(500, 5);
    let (los, nlos) = toy.class_counts();
    let cfg = GbdtConfig {
        stages: 0,
        ..GbdtConfig::default()
    };
    let m = train_gbdt(&toy, &cfg).unwrap();
    let prior = nlos as f64 / (los + nlos) as f64;
    assert!((m.initial_log_odds - (prior / (1.0 - prior)).ln()).abs() < 1e-12);
    for x in toy.rows().iter().take(20) {
        assert!((m.predict_proba(x).p_nlos - prior).abs() < 1e-12);
    }

    let balanced = Dataset::new(
        vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
        vec![Label::Los, Label::Nlos, Label::Los, Label::Nlos],
    )
    .unwrap();
    let m = train_gbdt(&balanced, &cfg).unwrap();
    assert!((m.predict_proba(&[7.0]).p_los - 0.5).abs() < 1e-12);
}

#[test]
fn two_point_svm_splits_on_the_bisector() {
    let data = Dataset::new(vec![vec![0.0, 0.0], vec![2.0, 2.0]], vec![Label::Los, Label::Nlos]).unwrap();
    let m = train_svm(&data, &SvmConfig::default()).unwrap();
    for t in [-3.0, -1.0, 0.0, 0.5, 2.0] {
        let on = [1.0 + t, 1.0 - t];
        assert!(m.decision_value(&on).abs() < 1e-6, "f({on:?}) = {}", m.decision_value(&on));
    }
    assert!(m.decision_value(&[0.9, 0.9]) < 0.0 && m.decision_value(&[1.1, 1.1]) > 0.0);
    assert_eq!(m.predict(&[0.2, 0.2]), Label::Los);
    assert_eq!(m.predict(&[1.8, 1.8]), Label::Nlos);
}

#[test]
fn rbf_svm_separates_xor() {
    let rows = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
    let labels = vec![Label::Nlos, Label::Nlos, Label::Los, Label::Los];
    let data = Dataset::new(rows, labels).unwrap();
    let m = train_svm(&data, &SvmConfig::default()).unwrap();
    for (x, l) in data.rows().iter().zip(data.labels()) {
        assert_eq!(m.decision_value(x) > 0.0, l.is_nlos());
        assert_eq!(m.predict(x), *l);
    }
}

#[test]
fn single_class_data_is_rejected() {
    let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![Label::Los, Label::Los]).unwrap();
    assert!(matches!(train_rf(&data, &RfConfig::default()), Err(MlError::SingleClass(Label::Los))));
    assert!(matches!(train_gbdt(&data, &GbdtConfig::default()), Err(MlError::SingleClass(_))));
    assert!(matches!(train_svm(&data, &SvmConfig::default()), Err(MlError::SingleClass(_))));
    assert!(matches!(
        Dataset::new(vec![vec![f64::NAN]], vec![Label::Los]),
        Err(MlError::NonFinite { row: 0 })
    ));
}

#[test]
fn tree_models_ignore_feature_scale() {
    let (train, test) = synthetic_datasets(3);
    let scale = |d: &Dataset| {
        let rows = d.rows().iter().map(|r| vec![r[0], r[1] * 3.7, r[2]]).collect();
        Dataset::new(rows, d.labels().to_vec()).unwrap()
    };
    let (strain, stest) = (scale(&train), scale(&test));
    let rf_cfg = RfConfig {
        tree_count: 30,
        seed: 3,
        ..RfConfig::default()
    };
    let gb_cfg = GbdtConfig {
        stages: 60,
        ..GbdtConfig::default()
    };
    let rf = (train_rf(&train, &rf_cfg).unwrap(), train_rf(&strain, &rf_cfg).unwrap());
    let gb = (train_gbdt(&train, &gb_cfg).unwrap(), train_gbdt(&strain, &gb_cfg).unwrap());
    for (x, sx) in test.rows().iter().zip(stest.rows()) {
        assert!((rf.0.predict_proba(x).p_nlos - rf.1.predict_proba(sx).p_nlos).abs() < 1e-12);
        assert!((gb.0.predict_proba(x).p_nlos - gb.1.predict_proba(sx).p_nlos).abs() < 1e-9);
    }
}

/// Reliability check on rows held out from the training sections (three
/// rows in every ten), pooled over four scenes. The target road is a
/// different street, so it is not used here.
#[test]
fn probabilities_are_calibrated_on_held_out_data() {
    const BINS: usize = 10;
    const MIN_COUNT: usize = 40;
    let mut count = [[0usize; BINS]; 3];
    let mut nlos = [[0usize; BINS]; 3];
    for seed in 1..=4 {
        let (train, _) = synthetic_datasets(seed);
        let (fit, hold): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|i| i % 10 < 7);
        let (fit, hold) = (train.subset(&fit), train.subset(&hold));
        let e = TrainedEnsemble::train(&fit, &MlConfig::default().reseeded(seed)).unwrap();
        for (m, model) in all_models(&e).iter().enumerate() {
            for (x, l) in hold.rows().iter().zip(hold.labels()) {
                let b = ((model.predict_proba(x).p_nlos * BINS as f64) as usize).min(BINS - 1);
                count[m][b] += 1;
                nlos[m][b] += l.is_nlos() as usize;
            }
        }
    }
    for (m, name) in ["rf", "gbdt", "svm"].iter().enumerate() {
        let mut checked = 0;
        for b in 0..BINS {
            if count[m][b] < MIN_COUNT {
                continue;
            }
            checked += 1;
            let centre = (b as f64 + 0.5) / BINS as f64;
            let rate = nlos[m][b] as f64 / count[m][b] as f64;
            assert!(
                (rate - centre).abs() <= 0.15,
                "{name} bin {b}: rate {rate:.3} over {} samples",
                count[m][b]
            );
        }
        assert!(checked >= 5, "{name}: too few populated bins");
    }
}

#[test]
fn models_round_trip_through_files() {
    let f = fixture();
    let dir = std::env::temp_dir().join(format!("zsm-ml-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let models = [
        Model::Rf(f.models.rf.clone()),
        Model::Gbdt(f.models.gbdt.clone()),
        Model::Svm(f.models.svm.clone()),
    ];
    for m in &models {
        let path = dir.join(format!("{}.json", m.algorithm().name()));
        save_model(&path, m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(&back, m);
        for x in f.test.rows().iter().take(50) {
            assert_eq!(back.predict_proba(x), m.predict_proba(x));
        }
    }
    let stale = dir.join("stale.json");
    let text = model_to_json(&models[1]).replace("\"version\": 1", "\"version\": 99");
    std::fs::write(&stale, text).unwrap();
    assert!(matches!(load_model(&stale), Err(ModelIoError::Version { version: 99, .. })));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn synthetic_accuracy_is_in_a_plausible_band() {
    let f = fixture();
    for m in all_models(&f.models) {
        let acc = evaluate_accuracy(m, &f.test).unwrap();
        assert!((0.75..=0.99).contains(&acc), "accuracy {acc}");
    }
    assert!(f.train.len() > f.test.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn probabilities_are_valid_and_argmax_consistent(el in -10.0f64..95.0, cn0 in 0.0f64..60.0, res in -80.0f64..80.0) {
        let x = [el, cn0, res];
        for m in all_models(&fixture().models) {
            let p = m.predict_proba(&x);
            prop_assert!((0.0..=1.0).contains(&p.p_los) && (0.0..=1.0).contains(&p.p_nlos));
            prop_assert!((p.p_los + p.p_nlos - 1.0).abs() <= 1e-9);
            let argmax = if p.p_nlos > p.p_los { Label::Nlos } else { Label::Los };
            prop_assert_eq!(m.predict(&x), argmax);
            prop_assert!(p.confidence() >= 0.5);
        }
    }
}
