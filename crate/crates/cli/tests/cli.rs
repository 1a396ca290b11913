use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn zsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsm-urban"))
        .args(args)
        .env("ZSM_URBAN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("zsm-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene_config(dir: &Path) -> PathBuf {
    let path = dir.join("scene_config.json");
    std::fs::write(&path, r#"{"training_epochs": 120, "target_epochs": 20, "building_count": 40}"#).unwrap();
    path
}

#[test]
fn scene_dataset_train_and_plot_chain() {
    let dir = workdir("chain");
    let scene = dir.join("scene.json");
    let out = zsm(&["scene", "gen", "--config", s(&small_scene_config(&dir)), "--seed", "5", "--out", s(&scene)]);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&scene).unwrap()).unwrap();
    assert_eq!(json["rng_seed"], 5);
    assert_eq!(json["config"]["target_epochs"], 20);

    let show = zsm(&["scene", "show", s(&scene)]);
    assert_eq!(status(&show), 0);
    assert!(String::from_utf8_lossy(&show.stdout).contains("120 training, 20 target"));

    let data = dir.join("data");
    assert_eq!(status(&zsm(&["dataset", "build", "--scene", s(&scene), "--out", s(&data)])), 0);
    let epochs = std::fs::read_to_string(data.join("epochs.jsonl")).unwrap();
    assert_eq!(epochs.lines().count(), 140);
    let header = std::fs::read_to_string(data.join("train.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("elevation_deg,cn0_dbhz,residual_m,label"));

    for algo in ["rf", "gbdt", "svm"] {
        let model = dir.join(format!("{algo}.json"));
        let out = zsm(&[
            "train",
            "--algo",
            algo,
            "--data",
            s(&data.join("train.csv")),
            "--out",
            s(&model),
            "--seed",
            "9",
        ]);
        assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
        assert_eq!(m["format"], "zsm-urban-model");
        assert_eq!(m["model"]["algo"], algo);
    }

    let figs = dir.join("fig");
    let out = zsm(&["plot", "--scene", s(&scene), "--epochs", s(&data.join("epochs.jsonl")), "--out", s(&figs)]);
    assert_eq!(status(&out), 0);
    for name in ["scene_map.svg", "visible_satellites.svg"] {
        assert!(std::fs::read_to_string(figs.join(name)).unwrap().starts_with("<svg"));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn same_seed_gives_identical_scene_files() {
    let dir = workdir("determinism");
    let cfg = small_scene_config(&dir);
    for name in ["a.json", "b.json"] {
        assert_eq!(status(&zsm(&["scene", "gen", "--config", s(&cfg), "--seed", "11", "--out", s(&dir.join(name))])), 0);
    }
    assert_eq!(std::fs::read(dir.join("a.json")).unwrap(), std::fs::read(dir.join("b.json")).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_then_compare() {
    let dir = workdir("run");
    let cfg = dir.join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
            "scene": {"training_epochs": 120, "target_epochs": 20, "building_count": 40},
            "ml": {"rf": {"tree_count": 10}, "gbdt": {"stages": 20}},
            "seeds": [3],
            "map_epochs": 2
        }"#,
    )
    .unwrap();
    let report = dir.join("report");
    let out = zsm(&["run", "--config", s(&cfg), "--out", s(&report)]);
    assert_eq!(status(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["tables.csv", "outcomes.csv", "report.json", "scene_map.svg", "visible_satellites.svg"] {
        assert!(report.join(name).is_file(), "{name} missing");
    }

    let out = zsm(&["compare", s(&report)]);
    assert_eq!(status(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("published") && text.contains("unanimous_threshold"));
    assert_eq!(text.matches("holds").count() + text.matches("FAILS").count(), 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_with_two() {
    let dir = workdir("config");
    let typo = dir.join("typo.json");
    std::fs::write(&typo, r#"{"treshold": 0.8}"#).unwrap();
    let range = dir.join("range.json");
    std::fs::write(&range, r#"{"threshold": 1.5}"#).unwrap();
    let cramped = dir.join("cramped.json");
    std::fs::write(&cramped, r#"{"satellite_count": 2}"#).unwrap();
    let out_dir = dir.join("out");
    let out = s(&out_dir);
    let missing = dir.join("missing.json");

    for args in [
        vec!["run", "--config", s(&typo), "--out", out],
        vec!["run", "--config", s(&range), "--out", out],
        vec!["scene", "gen", "--config", s(&cramped), "--out", out],
        vec!["scene", "show", s(&missing)],
        vec!["train", "--algo", "knn", "--data", out, "--out", out],
        vec!["frobnicate"],
    ] {
        let o = zsm(&args);
        assert_eq!(status(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn pipeline_errors_exit_with_three() {
    let dir = workdir("pipeline");
    // Every row NLOS: nothing to separate.
    let data = dir.join("one_class.csv");
    std::fs::write(&data, "elevation_deg,cn0_dbhz,residual_m,label\n30,35,12,nlos\n40,33,20,nlos\n").unwrap();
    let out = zsm(&["train", "--algo", "rf", "--data", s(&data), "--out", s(&dir.join("m.json"))]);
    assert_eq!(status(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    // A report without pooled rows has nothing to compare.
    let report = dir.join("report.json");
    std::fs::write(&report, r#"{"format": "zsm-urban-report", "reports": []}"#).unwrap();
    assert_eq!(status(&zsm(&["compare", s(&report)])), 3);
    std::fs::remove_dir_all(&dir).unwrap();
}
