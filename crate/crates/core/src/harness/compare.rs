use super::{HarnessError, Method, MethodReport};
use serde::{Deserialize, Serialize};

const REFERENCE_JSON: &str = include_str!("../../data/reference_values.json");

/// Published per-method values, for juxtaposition in reports and for checking
/// the comparison logic. Never used as acceptance targets for synthetic runs.
pub fn reference_reports() -> Vec<MethodReport> {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference values parse")
}

/// One verdict per expected trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    /// Misclassified satellites per epoch under unanimous+threshold below every single model.
    pub t1_misclassification: bool,
    /// success(unanimous+threshold) ≥ success(unanimous) ≥ min over single models.
    pub t2_success: bool,
    /// Containment under unanimous+threshold at least every single model's.
    pub t3_containment: bool,
    /// Mean cross- and along-street bounds of each voting method at least every single model's.
    pub t4_bounds: bool,
    pub notes: Vec<String>,
}

fn get(reports: &[&MethodReport], m: Method) -> Option<&'static str> {
    reports.iter().any(|r| r.method == m).then_some(m.name())
}

fn field(
    reports: &[&MethodReport],
    m: Method,
    f: fn(&MethodReport) -> Option<f64>,
    what: &str,
) -> Result<f64, HarnessError> {
    reports
        .iter()
        .find(|r| r.method == m)
        .and_then(|r| f(r))
        .ok_or_else(|| HarnessError::InsufficientData(format!("{what} missing for {}", m.name())))
}

/// Evaluates the four trends on reports that share one scope (for example
/// the pooled rows of a run, or the reference rows).
pub fn compare_methods(reports: &[&MethodReport]) -> Result<TrendVerdict, HarnessError> {
    if reports.len() < 2 {
        return Err(HarnessError::InsufficientData("at least two methods are needed".into()));
    }
    let singles: Vec<Method> = [Method::Rf, Method::Gbdt, Method::Svm]
        .into_iter()
        .filter(|m| get(reports, *m).is_some())
        .collect();
    if singles.is_empty() {
        return Err(HarnessError::InsufficientData("no single-model method".into()));
    }
    let ut = Method::UnanimousThreshold;
    if get(reports, ut).is_none() {
        return Err(HarnessError::InsufficientData("unanimous_threshold missing".into()));
    }
    let mut notes = Vec::new();

    let mis = |m| field(reports, m, |r| r.mean_misclassified_per_epoch, "misclassified per epoch");
    let succ = |m| field(reports, m, |r| r.success_rate, "success rate");
    let cont = |m| field(reports, m, |r| r.containment_rate, "containment rate");
    let cross = |m| field(reports, m, |r| r.mean_cross_bound, "cross-street bound");
    let along = |m| field(reports, m, |r| r.mean_along_bound, "along-street bound");

    let ut_mis = mis(ut)?;
    let mut t1 = true;
    for &m in &singles {
        let v = mis(m)?;
        t1 &= ut_mis < v;
        notes.push(format!("T1 {:.3} vs {} {:.3}", ut_mis, m.name(), v));
    }

    let ut_succ = succ(ut)?;
    let min_single = singles.iter().map(|&m| succ(m)).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::INFINITY, f64::min);
    let t2 = match get(reports, Method::Unanimous) {
        Some(_) => {
            let u = succ(Method::Unanimous)?;
            notes.push(format!("T2 {ut_succ:.4} >= {u:.4} >= {min_single:.4}"));
            ut_succ >= u && u >= min_single
        }
        None => {
            notes.push(format!("T2 {ut_succ:.4} >= {min_single:.4} (no unanimous row)"));
            ut_succ >= min_single
        }
    };

    let ut_cont = cont(ut)?;
    let mut t3 = true;
    for &m in &singles {
        let v = cont(m)?;
        t3 &= ut_cont >= v;
        notes.push(format!("T3 {:.4} vs {} {:.4}", ut_cont, m.name(), v));
    }

    let mut t4 = true;
    for c in [Method::Unanimous, ut] {
        if get(reports, c).is_none() {
            continue;
        }
        let (cc, ca) = (cross(c)?, along(c)?);
        for &m in &singles {
            let (mc, ma) = (cross(m)?, along(m)?);
            t4 &= cc >= mc && ca >= ma;
            notes.push(format!(
                "T4 {} {cc:.2}/{ca:.2} m vs {} {mc:.2}/{ma:.2} m",
                c.name(),
                m.name()
            ));
        }
    }

    Ok(TrendVerdict {
        t1_misclassification: t1,
        t2_success: t2,
        t3_containment: t3,
        t4_bounds: t4,
        notes,
    })
}
