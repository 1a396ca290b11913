use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zsm_core::features::{extract_features, read_samples_csv, write_samples_csv, LabeledSample};
use zsm_core::harness::{
    compare_methods, emit_report, reference_reports, run_experiment, scene_map, visible_counts, ExperimentConfig,
    FigureData, HarnessError, MethodReport, TrendVerdict,
};
use zsm_core::ml::{
    evaluate_accuracy, save_model, train_gbdt, train_rf, train_svm, Algorithm, Dataset, MlConfig, MlError, Model,
};
use zsm_core::scene::{
    generate_scene, read_epochs, read_scene, simulate_epochs, write_epochs, write_scene, NoiseConfig, SceneConfig,
    Section,
};

/// Exit statuses besides success.
const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;

#[derive(Parser)]
#[command(name = "zsm-urban", version, about = "Satellite selection and shadow matching in synthetic urban canyons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect a scene.
    #[command(subcommand)]
    Scene(SceneCommand),
    /// Build training and test feature tables from a scene.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train one classifier on a feature table.
    Train(TrainArgs),
    /// Run the full experiment and write its report.
    Run(RunArgs),
    /// Print pooled metrics, published values and trend verdicts of a report.
    Compare(CompareArgs),
    /// Draw the scene map and visible-satellite chart for a scene.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum SceneCommand {
    /// Generate a scene from a config file (or the defaults).
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a scene file.
    Show { scene: PathBuf },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Simulate every epoch and write `epochs.jsonl`, `train.csv` and `test.csv`.
    Build {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    /// Feature table written by `dataset build`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hyperparameters; only the section for `--algo` is used.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// A `report.json`, or the directory holding one.
    report: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Epochs written by `dataset build`; simulated with default noise when absent.
    #[arg(long)]
    epochs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

/// A failure tagged with the exit status it maps to.
enum Failure {
    Config(anyhow::Error),
    Pipeline(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

trait Tag<T> {
    fn config(self) -> Outcome<T>;
    fn pipeline(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn pipeline(self) -> Outcome<T> {
        self.map_err(|e| Failure::Pipeline(e.into()))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn json_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn create_dir(dir: &Path) -> Outcome<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .pipeline()
}

fn scene_gen(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Outcome<()> {
    let mut cfg: SceneConfig = json_or_default(config).config()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scene = generate_scene(&cfg).config()?;
    write_scene(out, &scene).pipeline()?;
    println!(
        "wrote {} ({} buildings, {:.0} m street, {} target epochs)",
        out.display(),
        scene.buildings.len(),
        cfg.street_length(),
        scene.target_epoch_indices().len()
    );
    Ok(())
}

fn scene_show(path: &Path) -> Outcome<()> {
    let scene = read_scene(path).config()?;
    let c = &scene.config;
    let heights: Vec<f64> = scene.buildings.iter().map(|b| b.height).collect();
    let mean_height = if heights.is_empty() { 0.0 } else { heights.iter().sum::<f64>() / heights.len() as f64 };
    println!("seed              {}", scene.rng_seed);
    println!("street            {:.0} m long, {:.0} m wide, azimuth {:.1}°", c.street_length(), c.street_width, c.street_azimuth_deg);
    println!("buildings         {} (mean height {:.1} m)", scene.buildings.len(), mean_height);
    println!("epochs            {} training, {} target", c.training_epochs, c.target_epochs);
    println!("satellites        {}", scene.sky.len());
    println!("walkable area     {:.0} m²", scene.initial_aoi.area());
    Ok(())
}

fn dataset_build(scene: &Path, noise: Option<&Path>, out: &Path) -> Outcome<()> {
    let scene = read_scene(scene).config()?;
    let noise: NoiseConfig = json_or_default(noise).config()?;
    create_dir(out)?;
    let epochs = simulate_epochs(&scene, &noise);
    write_epochs(&out.join("epochs.jsonl"), &epochs).pipeline()?;
    let (mut train, mut test, mut failed) = (Vec::new(), Vec::new(), 0);
    for e in &epochs {
        match extract_features(e, scene.street_midpoint()) {
            Ok(s) if e.section == Section::Training => train.extend(s),
            Ok(s) => test.extend(s),
            Err(_) => failed += 1,
        }
    }
    write_samples_csv(&out.join("train.csv"), &train).pipeline()?;
    write_samples_csv(&out.join("test.csv"), &test).pipeline()?;
    let nlos = |v: &[LabeledSample]| v.iter().filter(|s| s.label.is_nlos()).count();
    println!(
        "{} epochs; train {} samples ({} NLOS), test {} samples ({} NLOS); {} epochs without a fix",
        epochs.len(),
        train.len(),
        nlos(&train),
        test.len(),
        nlos(&test),
        failed
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Outcome<()> {
    let samples = read_samples_csv(&args.data).config()?;
    let data = Dataset::from_samples(&samples);
    let cfg: MlConfig = json_or_default::<MlConfig>(args.config.as_deref()).config()?.reseeded(args.seed);
    let tag = |e: MlError| match e {
        MlError::InvalidConfig(_) => Failure::Config(e.into()),
        _ => Failure::Pipeline(e.into()),
    };
    let model = match args.algo {
        Algorithm::Rf => Model::Rf(train_rf(&data, &cfg.rf).map_err(tag)?),
        Algorithm::Gbdt => Model::Gbdt(train_gbdt(&data, &cfg.gbdt).map_err(tag)?),
        Algorithm::Svm => Model::Svm(train_svm(&data, &cfg.svm).map_err(tag)?),
    };
    save_model(&args.out, &model).pipeline()?;
    let acc = evaluate_accuracy(&model, &data).pipeline()?;
    println!("{} trained on {} samples; training accuracy {:.3}", args.algo.name(), data.len(), acc);
    Ok(())
}

fn print_reports(title: &str, rows: &[&MethodReport]) {
    let f = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
    println!("{title}");
    println!(
        "  {:<20} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "acc", "mis/ep", "success", "contain", "cross m", "along m"
    );
    for r in rows {
        println!(
            "  {:<20} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            r.method.name(),
            f(r.classification_accuracy, 3),
            f(r.mean_misclassified_per_epoch, 2),
            f(r.success_rate, 3),
            f(r.containment_rate, 3),
            f(r.mean_cross_bound, 1),
            f(r.mean_along_bound, 1)
        );
    }
}

fn print_verdict(v: &TrendVerdict) {
    let mark = |b: bool| if b { "holds" } else { "FAILS" };
    println!("trends");
    println!("  fewer misclassified satellites   {}", mark(v.t1_misclassification));
    println!("  success rate not lower           {}", mark(v.t2_success));
    println!("  containment not lower            {}", mark(v.t3_containment));
    println!("  bounds not tighter               {}", mark(v.t4_bounds));
}

fn run(args: &RunArgs) -> Outcome<()> {
    let cfg: ExperimentConfig = json_or_default(args.config.as_deref()).config()?;
    let result = run_experiment(&cfg).map_err(|e| match e {
        HarnessError::Config(_) => Failure::Config(e.into()),
        _ => Failure::Pipeline(e.into()),
    })?;
    let written = emit_report(&result, &args.out).pipeline()?;
    print_reports("pooled", &result.pooled());
    if let Ok(v) = compare_methods(&result.pooled()) {
        print_verdict(&v);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    if !result.failures.is_empty() {
        for f in &result.failures {
            eprintln!("seed {} failed in {}: {}", f.seed, f.stage, f.message);
        }
        return Err(Failure::Pipeline(anyhow!("{} of {} seeds failed", result.failures.len(), cfg.seeds.len())));
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> Outcome<()> {
    let path = if args.report.is_dir() { args.report.join("report.json") } else { args.report.clone() };
    let json: serde_json::Value = read_json(&path).config()?;
    let reports: Vec<MethodReport> = serde_json::from_value(json.get("reports").cloned().unwrap_or_default())
        .with_context(|| format!("{}: no readable \"reports\" array", path.display()))
        .config()?;
    let pooled: Vec<&MethodReport> = reports.iter().filter(|r| r.scope == "pooled").collect();
    if pooled.is_empty() {
        return Err(Failure::Pipeline(anyhow!("{} holds no pooled rows", path.display())));
    }
    print_reports("pooled (synthetic)", &pooled);
    let reference = reference_reports();
    print_reports("published", &reference.iter().collect::<Vec<_>>());
    let verdict = compare_methods(&pooled).pipeline()?;
    print_verdict(&verdict);
    Ok(())
}

fn plot(args: &PlotArgs) -> Outcome<()> {
    let scene = read_scene(&args.scene).config()?;
    let epochs = match &args.epochs {
        Some(p) => read_epochs(p).config()?,
        None => simulate_epochs(&scene, &NoiseConfig::default()),
    };
    let visible = epochs
        .iter()
        .filter(|e| e.section == Section::Target)
        .map(|e| {
            let nlos = e.observations.iter().filter(|o| o.truth_label.is_nlos()).count();
            (e.epoch_index, e.observations.len() - nlos, nlos)
        })
        .collect();
    let fig = FigureData {
        seed: scene.rng_seed,
        scene,
        visible,
        aois: Vec::new(),
    };
    create_dir(&args.out)?;
    for (name, body) in [("scene_map.svg", scene_map(&fig)), ("visible_satellites.svg", visible_counts(&fig))] {
        let path = args.out.join(name);
        std::fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .pipeline()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Scene(SceneCommand::Gen { config, seed, out }) => scene_gen(config.as_deref(), seed, &out),
        Command::Scene(SceneCommand::Show { scene }) => scene_show(&scene),
        Command::Dataset(DatasetCommand::Build { scene, noise, out }) => dataset_build(&scene, noise.as_deref(), &out),
        Command::Train(a) => train(&a),
        Command::Run(a) => run(&a),
        Command::Compare(a) => compare(&a),
        Command::Plot(a) => plot(&a),
    }
}

/// The error chain on one line. Library errors already fold their source into
/// their message, so causes repeated verbatim are dropped.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain().map(|c| c.to_string()) {
        if !out.contains(&cause) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&cause);
        }
    }
    out
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {}", describe(&e));
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_PIPELINE)
        }
    }
}
