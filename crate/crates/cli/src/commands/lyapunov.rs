use hamcurv::entropy::{lyapunov_spectrum, LyapunovSpectrum};
use rayon::prelude::*;
use serde_json::json;

use super::{estimate, exclusion_status, max_of, points, Outcome};
use crate::config::LoadedConfig;
use crate::output::{columns, num, opt, padded, point_cells, point_columns, Table};

pub(super) fn run(config: &LoadedConfig) -> hamcurv::Result<Outcome> {
    let system = config.system()?;
    let pts = points(config, &system)?;
    let e = config.entropy_config();
    let horizon = config.config.run.horizon.expect("validated horizon");
    let dim = 2 * (config.dimension() - 1);
    let runs: Vec<hamcurv::Result<LyapunovSpectrum>> =
        pts.par_iter().map(|z| lyapunov_spectrum(&system, z, horizon, e.renorm_interval, &e.lyapunov)).collect();

    let mut header = point_columns(config.dimension());
    header.push("energy".into());
    header.extend(columns("lambda", dim));
    header.extend(["chi", "pairing_defect", "energy_drift", "error"].map(String::from));
    let mut samples = Table::new(header);
    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend(columns("lambda", dim));
    header.push("chi".into());
    let mut convergence = Table::new(header);

    for (i, (z, r)) in pts.iter().zip(&runs).enumerate() {
        let mut cells = point_cells(i, z.p.as_slice(), z.q.as_slice());
        cells.push(opt(system.energy(z).ok()));
        match r {
            Ok(s) => {
                cells.extend(padded(Some(&s.exponents), dim));
                cells.extend([num(s.chi), num(s.pairing_defect), num(s.energy_drift), String::new()]);
                for (t, ex) in &s.convergence_history {
                    let mut row = vec![i.to_string(), num(*t)];
                    row.extend(padded(Some(ex), dim));
                    row.push(num(hamcurv::entropy::chi_of(ex)));
                    convergence.push(row);
                }
            }
            Err(err) => {
                cells.extend(padded(None, dim));
                cells.extend([String::new(), String::new(), String::new(), err.to_string()]);
            }
        }
        samples.push(cells);
    }

    let ok: Vec<&LyapunovSpectrum> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let excluded = runs.len() - ok.len();
    let hypothesis = runs.iter().filter(|r| r.as_ref().is_err_and(|e| e.is_hypothesis_violation())).count();
    let chis: Vec<f64> = ok.iter().map(|s| s.chi).collect();
    let mean_exponents: Vec<f64> = (0..dim)
        .map(|j| hamcurv::linalg::mean_stderr(&ok.iter().map(|s| s.exponents[j]).collect::<Vec<_>>()).0)
        .collect();
    let result = json!({
        "points": runs.len(),
        "excluded": excluded,
        "hypothesis_violations": hypothesis,
        "horizon": horizon,
        "renorm_interval": e.renorm_interval,
        "chi_estimate": estimate(&chis),
        "mean_exponents": mean_exponents,
        "max_pairing_defect": max_of(ok.iter().map(|s| s.pairing_defect)),
        "max_energy_drift": max_of(ok.iter().map(|s| s.energy_drift)),
    });
    let (status, error) = exclusion_status(runs.len(), excluded, hypothesis, e.exclusion_cap);
    let lines = vec![format!(
        "lyapunov: chi = {} +- {} over {} points, max pairing defect {}",
        result["chi_estimate"]["mean"],
        result["chi_estimate"]["stderr"],
        ok.len(),
        result["max_pairing_defect"]
    )];
    Ok(Outcome { status, error, result, samples, convergence, lines })
}
