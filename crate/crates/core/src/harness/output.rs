use super::{compare_methods, reference_reports, svg, ExperimentConfig, ExperimentResult, HarnessError, MethodReport};
use super::{SeedFailure, SeedSummary, TrendVerdict};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const REPORT_FORMAT: &str = "zsm-urban-report";
const REPORT_VERSION: u32 = 1;

const TABLE_HEADER: [&str; 21] = [
    "scope",
    "seed",
    "method",
    "epochs",
    "classification_accuracy",
    "misclassified_per_epoch",
    "success_rate",
    "containment_rate",
    "mean_cross_bound_m",
    "mean_along_bound_m",
    "successful_epochs",
    "contained_epochs",
    "mean_satellites_used",
    "no_refinement_epochs",
    "boundary_ambiguous_epochs",
    "reference_classification_accuracy",
    "reference_misclassified_per_epoch",
    "reference_success_rate",
    "reference_containment_rate",
    "reference_cross_bound_m",
    "reference_along_bound_m",
];

const OUTCOME_HEADER: [&str; 12] = [
    "seed",
    "method",
    "epoch",
    "success",
    "contains_truth",
    "cross_bound_m",
    "along_bound_m",
    "satellites_used",
    "misclassified_used",
    "no_refinement",
    "boundary_ambiguous",
    "aoi_area_m2",
];

#[derive(Serialize)]
struct SeedTrend {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<TrendVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    format: &'static str,
    version: u32,
    config: &'a ExperimentConfig,
    reports: &'a [MethodReport],
    reference: Vec<MethodReport>,
    trends: Option<TrendVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trends_error: Option<String>,
    seed_trends: Vec<SeedTrend>,
    seeds: &'a [SeedSummary],
    failures: &'a [SeedFailure],
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn table_row(r: &MethodReport, reference: Option<&MethodReport>) -> Vec<String> {
    let refcol = |f: fn(&MethodReport) -> Option<f64>| opt(reference.and_then(f));
    vec![
        r.scope.clone(),
        opt(r.seed),
        r.method.name().into(),
        r.epoch_count.to_string(),
        opt(r.classification_accuracy),
        opt(r.mean_misclassified_per_epoch),
        opt(r.success_rate),
        opt(r.containment_rate),
        opt(r.mean_cross_bound),
        opt(r.mean_along_bound),
        opt(r.successful_epochs),
        opt(r.contained_epochs),
        opt(r.mean_satellites_used),
        opt(r.no_refinement_epochs),
        opt(r.boundary_ambiguous_epochs),
        refcol(|x| x.classification_accuracy),
        refcol(|x| x.mean_misclassified_per_epoch),
        refcol(|x| x.success_rate),
        refcol(|x| x.containment_rate),
        refcol(|x| x.mean_cross_bound),
        refcol(|x| x.mean_along_bound),
    ]
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    std::fs::write(path, body).map_err(io_err(path))
}

/// Writes `tables.csv`, `outcomes.csv` and `report.json` into `out_dir`,
/// plus the two SVG figures when the result carries figure data. Returns the
/// paths written.
pub fn emit_report(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let reference = reference_reports();
    let mut written = Vec::new();

    let path = out_dir.join("tables.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(TABLE_HEADER).map_err(csv_err(&path))?;
    for r in &result.reports {
        let matching = (r.scope == "pooled")
            .then(|| reference.iter().find(|x| x.method == r.method))
            .flatten();
        w.write_record(table_row(r, matching)).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    let path = out_dir.join("outcomes.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(OUTCOME_HEADER).map_err(csv_err(&path))?;
    for rec in &result.outcomes {
        let o = &rec.outcome;
        w.write_record([
            rec.seed.to_string(),
            rec.method.name().into(),
            o.epoch_index.to_string(),
            o.success.to_string(),
            o.contains_truth.to_string(),
            opt(o.cross_street_bound),
            opt(o.along_street_bound),
            o.satellites_used.to_string(),
            o.misclassified_used.to_string(),
            o.no_refinement.to_string(),
            o.boundary_ambiguous.to_string(),
            o.aoi_area.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);

    let (trends, trends_error) = match compare_methods(&result.pooled()) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let seed_trends = result
        .seeds
        .iter()
        .map(|s| match compare_methods(&result.for_seed(s.seed)) {
            Ok(v) => SeedTrend {
                seed: s.seed,
                verdict: Some(v),
                error: None,
            },
            Err(e) => SeedTrend {
                seed: s.seed,
                verdict: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let report = Report {
        format: REPORT_FORMAT,
        version: REPORT_VERSION,
        config: &result.config,
        reports: &result.reports,
        reference,
        trends,
        trends_error,
        seed_trends,
        seeds: &result.seeds,
        failures: &result.failures,
    };
    let path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;
    write_file(&path, &json)?;
    written.push(path);

    if let Some(fig) = &result.figure {
        let path = out_dir.join("scene_map.svg");
        write_file(&path, &svg::scene_map(fig))?;
        written.push(path);
        let path = out_dir.join("visible_satellites.svg");
        write_file(&path, &svg::visible_counts(fig))?;
        written.push(path);
    }
    Ok(written)
}
