use hamcurv::entropy::entropy_report;
use serde_json::{json, Value};

use super::Outcome;
use crate::config::LoadedConfig;
use crate::output::{columns, num, opt, padded, point_cells, point_columns, Table};
use crate::Status;

pub(super) fn run(config: &LoadedConfig) -> hamcurv::Result<Outcome> {
    let system = config.system()?;
    let level = config.level_set(system)?;
    let run = &config.config.run;
    let e = config.entropy_config();
    let horizon = run.horizon.expect("validated horizon");
    let report = entropy_report(&level, run.samples.expect("validated samples"), horizon, run.seed, &e)?;

    let n = config.dimension();
    let dim = 2 * (n - 1);
    let mut header = point_columns(n);
    header.extend(["bound", "chi", "pairing_defect", "discretization_error", "numerical_error", "rprime"].map(String::from));
    header.extend(columns("lambda", dim));
    header.extend(["hypothesis_violation", "rprime_error", "error"].map(String::from));
    let mut samples = Table::new(header);
    for s in &report.samples {
        let mut cells = point_cells(s.index, &s.p, &s.q);
        cells.extend([opt(s.bound), opt(s.chi), opt(s.pairing_defect), opt(s.discretization_error), opt(s.numerical_error), opt(s.rprime)]);
        cells.extend(padded(s.exponents.as_deref(), dim));
        cells.push(s.hypothesis_violation.to_string());
        cells.push(s.rprime_error.clone().unwrap_or_default());
        cells.push(s.error.clone().unwrap_or_default());
        samples.push(cells);
    }

    let k = n - 1;
    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend(columns("v_eig", k));
    header.extend(["rprime", "rfull", "bound"].map(String::from));
    let mut convergence = Table::new(header);
    for (i, d) in report.diagnostics.iter().enumerate() {
        for j in 0..d.times.len() {
            let mut row = vec![i.to_string(), num(d.times[j])];
            row.extend(padded(Some(&d.v_eigenvalues[j]), k));
            row.extend([num(d.rprime[j]), num(d.rfull[j]), num(d.bound[j])]);
            convergence.push(row);
        }
    }

    let combined = (report.bound_estimate.stderr.powi(2) + report.pesin_estimate.stderr.powi(2)).sqrt();
    let inequality_holds = report.pesin_estimate.mean >= report.bound_estimate.mean - 3.0 * combined;
    let mut result = serde_json::to_value(&report).expect("report serializes");
    if let Value::Object(m) = &mut result {
        m.remove("samples");
        m.remove("diagnostics");
        m.insert(
            "diagnostic_summary".into(),
            json!(report
                .diagnostics
                .iter()
                .map(|d| json!({
                    "vdot_max": d.vdot_max,
                    "rprime_average": d.rprime_average,
                    "rfull_average": d.rfull_average,
                    "bound_average": d.bound_average,
                }))
                .collect::<Vec<_>>()),
        );
        m.insert("combined_stderr".into(), json!(combined));
        m.insert("inequality_holds".into(), json!(inequality_holds));
        m.insert("gap_within_2_sigma".into(), json!(report.equality_gap.abs() <= 2.0 * report.gap_sigma));
    }
    let lines = vec![
        format!("bound: integral of Tr sqrt(-R) = {} +- {}", report.bound_estimate.mean, report.bound_estimate.stderr),
        format!("bound: {} = {} +- {}", report.label, report.pesin_estimate.mean, report.pesin_estimate.stderr),
        format!(
            "bound: gap {} ({} sigma), {} of {} samples excluded",
            report.equality_gap, report.gap_significance, report.excluded, report.sample_count
        ),
    ];
    // The inequality holds whenever the checked hypotheses do, so a
    // significant violation points at the numerics.
    let (status, error) = if inequality_holds {
        (Status::Ok, None)
    } else {
        (Status::NumericalFailure, Some("Pesin estimate below the curvature bound by more than 3 sigma".to_string()))
    };
    Ok(Outcome { status, error, result, samples, convergence, lines })
}
