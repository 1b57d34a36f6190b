use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HYPERBOLIC: &str = r#"
[system]
family = "geodesic2d"
metric = "hyperbolic"
energy = 0.5
window = [[-1.0, 1.0], [0.5, 2.0]]

[run]
seed = 5
samples = 4
horizon = 20.0
dt = 1e-3
renorm_interval = 0.5
"#;

const FREE_TORUS: &str = r#"
[system]
family = "mechanical"
n = 2
topology = [{ periodic = 6.283185307179586 }, { periodic = 6.283185307179586 }]
energy = 0.5

[run]
seed = 2
samples = 4
horizon = 500.0
dt = 0.05
renorm_interval = 1.0
"#;

const HARMONIC: &str = r#"
[system]
family = "mechanical"
n = 2
topology = ["unbounded", "unbounded"]
energy = 1.0
window = [[-2.0, 2.0], [-2.0, 2.0]]

[[system.polynomial]]
coef = 0.5
powers = [2, 0]

[[system.polynomial]]
coef = 0.5
powers = [0, 2]

[run]
seed = 3
samples = 20
"#;

const SPHERE: &str = r#"
[system]
family = "geodesic2d"
metric = "sphere"
energy = 0.5
window = [[0.3, 2.8], []]

[run]
seed = 1
samples = 4
horizon = 5.0
dt = 2.5e-4
renorm_interval = 0.5
"#;

struct Run {
    dir: TempDir,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn report(&self) -> Value {
        let text = std::fs::read_to_string(self.out().join("report.json")).expect("report.json");
        serde_json::from_str(&text).unwrap()
    }

    fn file(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap()
    }

    fn stdout(&self) -> String {
        String::from_utf8_lossy(&self.output.stdout).into_owned()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }
}

fn run(command: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(&path, config).unwrap();
    let output = invoke(command, &path, &dir.path().join("out"), extra);
    Run { dir, output }
}

fn invoke(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamcurv"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn harmonic_curvature_matches_closed_form() {
    let r = run("curvature", HARMONIC, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let res = &r.report()["result"];
    assert!(f(&res["max_closed_form_delta"]) <= 1e-4, "{res}");
    assert_eq!(res["excluded"], 0);
    // Isotropic oscillator: positive curvature everywhere, so no bound.
    assert_eq!(res["positive_curvature_points"], 20);
    assert!(r.stdout().starts_with("curvature: 20 points"));
}

#[test]
fn free_particle_curvature_vanishes() {
    let r = run("curvature", FREE_TORUS, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let res = &r.report()["result"];
    assert!(f(&res["eigenvalue_min"]).abs() <= 1e-8, "{res}");
    assert!(f(&res["eigenvalue_max"]).abs() <= 1e-8, "{res}");
}

#[test]
fn missing_seed_is_a_config_error() {
    let r = run("curvature", &HARMONIC.replace("seed = 3\n", ""), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("seed"), "{}", r.stderr());
    assert!(r.stderr().contains("line"), "{}", r.stderr());
    assert!(!r.out().join("report.json").exists());
}

#[test]
fn horizon_shorter_than_interval_is_a_config_error() {
    let r = run("lyapunov", &HYPERBOLIC.replace("horizon = 20.0", "horizon = 0.1"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("line 11"), "{}", r.stderr());
}

#[test]
fn unknown_keys_and_empty_suites_are_rejected() {
    let r = run("verify", &HYPERBOLIC.replace("seed = 5", "seed = 5\nsead = 6"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("sead"));
    let r = run("verify", &format!("{HYPERBOLIC}suite = []\n"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("suite"));
    let r = run("bound", &format!("{HYPERBOLIC}suite = [\"energy\"]\n"), &[]);
    assert_eq!(r.code(), 2);
}

#[test]
fn sphere_bound_is_a_hypothesis_violation() {
    let r = run("bound", SPHERE, &[]);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    let report = r.report();
    assert_eq!(report["status"], "hypothesis_violation");
    assert!(report["error"].as_str().unwrap().contains("hypothesis"));
}

#[test]
fn sphere_curvature_is_positive() {
    let r = run("curvature", SPHERE, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let res = &r.report()["result"];
    assert!((f(&res["eigenvalue_min"]) - 1.0).abs() <= 1e-4, "{res}");
    assert!((f(&res["eigenvalue_max"]) - 1.0).abs() <= 1e-4, "{res}");
}

#[test]
fn free_particle_bound_and_entropy_are_small() {
    let r = run("bound", FREE_TORUS, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let res = &r.report()["result"];
    assert_eq!(f(&res["bound_estimate"]["mean"]), 0.0);
    // Linear growth leaves a log(T)/T remainder in the finite-time exponent.
    let pesin = f(&res["pesin_estimate"]["mean"]);
    assert!((0.0..2e-2).contains(&pesin), "{pesin}");
    assert_eq!(res["inequality_holds"], true);
}

#[test]
fn reports_do_not_depend_on_the_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, HYPERBOLIC).unwrap();
    let mut seen = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("out{workers}"));
        let o = invoke("bound", &cfg, &out, &["--workers", workers, "--bit-repro"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["metadata"]["workers"], workers.parse::<u64>().unwrap());
        report.as_object_mut().unwrap().remove("metadata");
        let samples = std::fs::read(out.join("samples.csv")).unwrap();
        let convergence = std::fs::read(out.join("convergence.csv")).unwrap();
        seen.push((serde_json::to_string(&report).unwrap(), samples, convergence));
    }
    assert!(seen[0] == seen[1]);
}

#[test]
fn verify_passes_on_hyperbolic() {
    let r = run("verify", HYPERBOLIC, &[]);
    assert_eq!(r.code(), 0, "{}\n{}", r.stdout(), r.stderr());
    let lines: Vec<&str> = r.stdout().lines().filter(|l| l.starts_with("PASS ")).map(|_| "").collect();
    assert_eq!(lines.len(), 8, "{}", r.stdout());
    let props = r.report()["result"]["properties"].as_array().unwrap().len();
    assert_eq!(props, 8);
}

#[test]
fn injected_fault_fails_symplecticity() {
    let cfg = format!("{HYPERBOLIC}suite = [\"symplecticity\", \"energy\"]\ninject = \"non_symplectic\"\n");
    let r = run("verify", &cfg, &[]);
    assert_eq!(r.code(), 4);
    assert!(r.stdout().lines().any(|l| l.starts_with("FAIL symplecticity")), "{}", r.stdout());
}

#[test]
fn csv_outputs_have_headers() {
    let r = run("lyapunov", HYPERBOLIC, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let samples = r.file("samples.csv");
    let header = samples.lines().next().unwrap();
    assert!(header.starts_with("index,p_1,p_2,q_1,q_2,energy,lambda_1"), "{header}");
    assert!(header.contains("chi") && header.contains("pairing_defect"));
    assert_eq!(samples.lines().count(), 5);
    let convergence = r.file("convergence.csv");
    assert!(convergence.starts_with("sample,t,lambda_1"), "{convergence}");

    let r = run("bound", HYPERBOLIC, &[]);
    let header = r.file("samples.csv").lines().next().unwrap().to_string();
    for col in ["bound", "chi", "discretization_error", "numerical_error", "rprime", "lambda_1"] {
        assert!(header.split(',').any(|c| c == col), "{col} missing from {header}");
    }
    assert!(r.file("convergence.csv").starts_with("sample,t,v_eig_1,rprime,rfull,bound"));
}
