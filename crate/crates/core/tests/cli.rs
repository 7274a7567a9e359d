use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dampwave"))
}

fn config(a0: f64, alpha: f64, regime: &str, horizon: f64) -> String {
    format!(
        r#"{{
  "damping": {{ "family": "monomial", "a0": {a0}, "alpha": {alpha} }},
  "potential": {{ "family": "gaussian", "v0": 1.0 }},
  "initial": {{ "radius": 1.0, "displacement": {{ "family": "hat", "amplitude": 1.0 }}, "velocity": {{ "family": "hat", "amplitude": 0.0 }} }},
  "grid": {{ "dx": 0.05, "horizon": {horizon}, "sample_every": 0.5 }},
  "multiplier": {{ "regime": "{regime}" }}
}}"#
    )
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_args(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trace_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sub.json", &config(1.0, 0.5, "subcritical", 5.0));
    let out = dir.path().join("trace.csv");
    let o = run_args(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,E,l2_u,dissipation,support_radius"));
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(dir.path().join("trace.csv.meta.json").exists());
}

#[test]
fn run_is_deterministic_and_sidecar_reproduces_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sub.json", &config(1.0, 0.5, "subcritical", 8.0));
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    for out in [&a, &b] {
        assert!(run_args(&["run", "--config", s(&cfg), "--out", s(out)]).status.success());
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let meta = dir.path().join("a.csv.meta.json");
    let o = run_args(&["run", "--config", s(&meta), "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read(&c).unwrap());
}

#[test]
fn run_without_out_prints_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sub.json", &config(1.0, 0.5, "subcritical", 1.0));
    let o = run_args(&["run", "--config", s(&cfg)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("t,E,"));
}

#[test]
fn alpha_out_of_range_is_a_validation_failure() {
    let dir = TempDir::new().unwrap();
    let body = config(1.0, 1.5, "subcritical", 5.0).replace(",\n  \"multiplier\": { \"regime\": \"subcritical\" }", "");
    let cfg = write(&dir, "bad.json", &body);
    let o = run_args(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[0, 1]"), "{}", stderr(&o));
}

#[test]
fn override_flag_bypasses_hypotheses() {
    let dir = TempDir::new().unwrap();
    let body = config(0.0, 0.5, "subcritical", 2.0).replace(",\n  \"multiplier\": { \"regime\": \"subcritical\" }", "");
    let cfg = write(&dir, "undamped.json", &body);
    let out = dir.path().join("u.csv");
    assert_eq!(run_args(&["run", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    let o = run_args(&["run", "--config", s(&cfg), "--out", s(&out), "--override-hypotheses"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_output_directory_is_io_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sub.json", &config(1.0, 0.5, "subcritical", 1.0));
    let o = run_args(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("nope/trace.csv"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("cannot create"));
    let o = run_args(&["run", "--config", s(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn malformed_config_lists_problems() {
    let dir = TempDir::new().unwrap();
    let body = config(1.0, 0.5, "subcritical", -1.0).replace("\"dx\": 0.05", "\"dx\": 0");
    let cfg = write(&dir, "bad.json", &body);
    let o = run_args(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("grid.dx") && e.contains("grid.horizon"), "{e}");
    let cfg = write(&dir, "syntax.json", "{ \"damping\": ");
    assert_eq!(run_args(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn certify_regimes() {
    let dir = TempDir::new().unwrap();
    let sub = write(&dir, "sub.json", &config(1.0, 0.5, "subcritical", 5.0));
    let o = run_args(&["certify", "--config", s(&sub)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("pass=true"));
    let t0: f64 = text.lines().find_map(|l| l.strip_prefix("t0=")).unwrap().parse().unwrap();
    assert!(t0.is_finite());

    let weak = write(&dir, "weak.json", &config(1.0, 1.0, "critical-weak", 5.0));
    let o = run_args(&["certify", "--config", s(&weak)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("theta=0.9"));

    let strong = write(&dir, "strong.json", &config(1.0, 1.0, "critical-strong", 5.0));
    let o = run_args(&["certify", "--config", s(&strong)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a1 > 2"), "{}", stderr(&o));
}

#[test]
fn certify_writes_csv_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "strong.json", &config(4.0, 1.0, "critical-strong", 5.0));
    let out = dir.path().join("cert.csv");
    assert!(run_args(&["certify", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("regime,t0,min_K1,min_K2,C_cert,max_F3_ratio,C_alpha,pass\ncritical-strong,"));
}

fn synthetic_trace(dir: &TempDir, name: &str, n: usize, e: impl Fn(f64) -> f64) -> PathBuf {
    let mut body = String::from("t,E,l2_u,dissipation,support_radius\n");
    for i in 0..=n {
        let t = i as f64;
        body.push_str(&format!("{t:.16e},{:.16e},0,0,0\n", e(t)));
    }
    write(dir, name, &body)
}

#[test]
fn fit_command() {
    let dir = TempDir::new().unwrap();
    let good = synthetic_trace(&dir, "pow.csv", 200, |t| (1.0 + t).powi(-2));
    let o = run_args(&["fit", s(&good)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    let row = text.lines().nth(1).unwrap();
    let p: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((p + 2.0).abs() < 1e-9, "{row}");
    assert!(row.starts_with("pow,"));

    let zero = synthetic_trace(&dir, "zero.csv", 200, |_| 0.0);
    let o = run_args(&["fit", s(&zero)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate trace"));

    let short = synthetic_trace(&dir, "short.csv", 20, |t| 1.0 / (1.0 + t));
    let o = run_args(&["fit", s(&short), "--window", "0.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too few points"));

    let cols = write(&dir, "cols.csv", "t,l2_u\n0,1\n");
    let o = run_args(&["fit", s(&cols)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column `E`"));
}

#[test]
fn converge_reports_order() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
  "damping": { "family": "monomial", "a0": 0.0, "alpha": 0.0 },
  "potential": { "family": "zero" },
  "initial": { "radius": 2.0, "displacement": { "family": "smooth-bump", "amplitude": 1.0 }, "velocity": { "family": "hat", "amplitude": 0.0 } },
  "grid": { "dx": 0.04, "courant": 0.5, "horizon": 2.0, "sample_every": 0.5 }
}"#;
    let cfg = write(&dir, "oracle.json", body);
    let o = run_args(&["converge", "--config", s(&cfg), "--levels", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("dx,max_error\n"));
    let order: f64 = text.lines().last().unwrap().strip_prefix("# order=").unwrap().parse().unwrap();
    assert!(order > 1.5 && order < 2.5, "{text}");

    let exact = write(&dir, "exact.json", &body.replace("\"courant\": 0.5", "\"courant\": 1.0").replace("smooth-bump", "hat"));
    let o = run_args(&["converge", "--config", s(&exact)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("# order=exact"), "{}", stderr(&o));
}

#[test]
fn sweep_runs_all_configs() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "one.json", &config(1.0, 0.5, "subcritical", 30.0));
    let b = write(&dir, "two.json", &config(4.0, 1.0, "critical-strong", 30.0));
    let out = dir.path().join("runs");
    fs::create_dir(&out).unwrap();
    let o = run_args(&["sweep", "--config", s(&a), "--config", s(&b), "--out", s(&out), "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["one.csv", "two.csv", "one.csv.meta.json", "fits.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let fits = fs::read_to_string(out.join("fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 3);
    assert!(fits.lines().nth(1).unwrap().starts_with("one,"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        dampwave::config::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
