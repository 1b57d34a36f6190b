use hamcurv::entropy::{bound_integrand_of, curvature_scale, reduced_operator, CurvatureSource};
use hamcurv::flow::flow;
use hamcurv::PhasePoint;
use rayon::prelude::*;
use serde_json::json;

use super::{estimate, exclusion_status, max_of, points, Outcome};
use crate::config::LoadedConfig;
use crate::output::{columns, num, opt, padded, point_cells, point_columns, Table};

#[derive(Debug, Default)]
struct Row {
    energy: Option<f64>,
    eigenvalues: Option<Vec<f64>>,
    asym_defect: Option<f64>,
    relative_asymmetry: Option<f64>,
    closed_form: Option<Vec<f64>>,
    delta: Option<f64>,
    bound: Option<f64>,
    bound_error: Option<String>,
    error: Option<String>,
    hypothesis: bool,
}

/// `max |λ − λ_ref| / max(1, max |λ_ref|)`.
fn relative_delta(got: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    got.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

fn evaluate(config: &LoadedConfig, system: &hamcurv::HamiltonianSystem, z: &PhasePoint) -> Row {
    let e = config.entropy_config();
    let mut row = Row { energy: system.energy(z).ok(), ..Row::default() };
    let op = match reduced_operator(system, z, CurvatureSource::Pipeline, &e.jacobi) {
        Ok(op) => op,
        Err(err) => {
            row.hypothesis = err.is_hypothesis_violation();
            row.error = Some(err.to_string());
            return row;
        }
    };
    let eig: Vec<f64> = op.eigenvalues.iter().copied().collect();
    if let Ok(cf) = reduced_operator(system, z, CurvatureSource::ClosedForm, &e.jacobi) {
        let reference: Vec<f64> = cf.eigenvalues.iter().copied().collect();
        row.delta = Some(relative_delta(&eig, &reference));
        row.closed_form = Some(reference);
    }
    match curvature_scale(system, z).and_then(|s| bound_integrand_of(&op, s)) {
        Ok(b) => row.bound = Some(b),
        Err(err) => row.bound_error = Some(err.to_string()),
    }
    row.asym_defect = Some(op.asym_defect);
    row.relative_asymmetry = Some(op.relative_asymmetry());
    row.eigenvalues = Some(eig);
    row
}

pub(super) fn run(config: &LoadedConfig) -> hamcurv::Result<Outcome> {
    let system = config.system()?;
    let pts = points(config, &system)?;
    let n = config.dimension();
    let k = n - 1;
    let rows: Vec<Row> = pts.par_iter().map(|z| evaluate(config, &system, z)).collect();

    let mut header = point_columns(n);
    header.push("energy".into());
    header.extend(columns("eig", k));
    header.extend(columns("closed_form_eig", k));
    header.extend(["closed_form_delta", "asym_defect", "relative_asymmetry", "bound", "bound_error", "error"].map(String::from));
    let mut samples = Table::new(header);
    for (i, (z, r)) in pts.iter().zip(&rows).enumerate() {
        let mut cells = point_cells(i, z.p.as_slice(), z.q.as_slice());
        cells.push(opt(r.energy));
        cells.extend(padded(r.eigenvalues.as_deref(), k));
        cells.extend(padded(r.closed_form.as_deref(), k));
        cells.extend([opt(r.delta), opt(r.asym_defect), opt(r.relative_asymmetry), opt(r.bound)]);
        cells.push(r.bound_error.clone().unwrap_or_default());
        cells.push(r.error.clone().unwrap_or_default());
        samples.push(cells);
    }

    // Spectrum of R̂ along the orbit of the first point.
    let mut header = vec!["t".to_string()];
    header.extend(columns("eig", k));
    let mut convergence = Table::new(header);
    let e = config.entropy_config();
    if let (Some(horizon), Some(z0)) = (config.config.run.horizon, pts.first()) {
        let m = e.diagnostic_points;
        let integ = e.lyapunov.integrator(&system)?;
        let seg = horizon / (m - 1) as f64;
        let mut cur = z0.clone();
        for j in 0..m {
            if j > 0 {
                cur = flow(&system, &cur, seg, &integ)?.last().clone();
            }
            let eig: Option<Vec<f64>> = reduced_operator(&system, &cur, CurvatureSource::Pipeline, &e.jacobi)
                .ok()
                .map(|op| op.eigenvalues.iter().copied().collect());
            let mut cells = vec![num(j as f64 * seg)];
            cells.extend(padded(eig.as_deref(), k));
            convergence.push(cells);
        }
    }

    let ok: Vec<&Row> = rows.iter().filter(|r| r.error.is_none()).collect();
    let excluded = rows.len() - ok.len();
    let hypothesis = rows.iter().filter(|r| r.hypothesis).count();
    let all_eig: Vec<f64> = ok.iter().flat_map(|r| r.eigenvalues.clone().unwrap_or_default()).collect();
    let mean_eig: Vec<f64> = (0..k)
        .map(|i| {
            let xs: Vec<f64> = ok.iter().filter_map(|r| r.eigenvalues.as_ref().map(|v| v[i])).collect();
            hamcurv::linalg::mean_stderr(&xs).0
        })
        .collect();
    let bounds: Vec<f64> = ok.iter().filter_map(|r| r.bound).collect();
    let result = json!({
        "points": rows.len(),
        "excluded": excluded,
        "hypothesis_violations": hypothesis,
        "eigenvalue_min": all_eig.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x)))),
        "eigenvalue_max": max_of(all_eig.iter().copied()),
        "eigenvalue_mean": mean_eig,
        "max_asym_defect": max_of(ok.iter().filter_map(|r| r.asym_defect)),
        "max_relative_asymmetry": max_of(ok.iter().filter_map(|r| r.relative_asymmetry)),
        "max_closed_form_delta": max_of(ok.iter().filter_map(|r| r.delta)),
        "positive_curvature_points": ok.iter().filter(|r| r.bound_error.is_some()).count(),
        "bound_estimate": estimate(&bounds),
    });
    let (status, error) = exclusion_status(rows.len(), excluded, hypothesis, e.exclusion_cap);
    let lines = vec![format!(
        "curvature: {} points, {excluded} excluded, max closed-form delta {}",
        rows.len(),
        result["max_closed_form_delta"]
    )];
    Ok(Outcome { status, error, result, samples, convergence, lines })
}
