use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn qnls() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qnls"))
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Run {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("config.json"), config).unwrap();
        Run { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("config.json")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, extra: &[&str]) -> i32 {
        let status = qnls()
            .arg(cmd)
            .arg("--config")
            .arg(self.config())
            .arg("--out")
            .arg(self.out(out))
            .args(extra)
            .output()
            .unwrap();
        status.status.code().unwrap()
    }

    fn json(&self, out: &str, file: &str) -> Value {
        read_json(&self.out(out).join(file))
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn re(v: &Value) -> f64 {
    v[0].as_f64().unwrap()
}

#[test]
fn thermo_negative_h_has_no_fermi_points() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -1, "T": 1}}"#);
    assert_eq!(run.exec("thermo", "o", &[]), 0);
    assert_eq!(run.json("o", "q_roots.json")["q_roots"], Value::Array(vec![]));
    let csv = std::fs::read_to_string(run.out("o").join("thermo.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "lambda,epsilon,theta,rho_t");
}

#[test]
fn thermo_positive_h_small_temperature_fermi_points() {
    let run = Run::new(r#"{"thermo": {"c": 200, "h": 1, "T": 0.02}}"#);
    assert_eq!(run.exec("thermo", "o", &[]), 0);
    let q: Vec<f64> = run.json("o", "q_roots.json")["q_roots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(q.len(), 2);
    assert!((q[0] + 1.0).abs() < 0.01 && (q[1] - 1.0).abs() < 0.01, "{q:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -0.5, "T": 1}, "experiment": {"t": [5, 10], "lambda0": [0.3]}}"#);
    for out in ["a", "b"] {
        assert_eq!(run.exec("thermo", out, &[]), 0);
        assert_eq!(run.exec("asym", out, &[]), 0);
    }
    for file in ["thermo.csv", "q_roots.json", "asym.csv", "asym.json"] {
        let a = std::fs::read(run.out("a").join(file)).unwrap();
        let b = std::fs::read(run.out("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let run = Run::new(
        r#"{"thermo": {"c": 2, "h": -0.5, "T": 1},
            "experiment": {"lambda0": [0.3, 0.6], "sweep": {"t_min": 2, "t_max": 6, "count": 3}}}"#,
    );
    assert_eq!(run.exec("sweep", "one", &["--threads", "1"]), 0);
    let status = qnls()
        .args(["sweep", "--config"])
        .arg(run.config())
        .arg("--out")
        .arg(run.out("env"))
        .env("QNLS_THREADS", "3")
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read_to_string(run.out("one").join("sweep.csv")).unwrap();
    let b = std::fs::read_to_string(run.out("env").join("sweep.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn exit_codes() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -1, "T": 1}, "phase": "positive_h"}"#);
    assert_eq!(run.exec("thermo", "o", &[]), 2);
    let missing = qnls().args(["thermo", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read config"));
    let between = Run::new(r#"{"thermo": {"c": 4, "h": 1, "T": 0.25}, "experiment": {"t": [10], "lambda0": [0.0]}}"#);
    assert_eq!(between.exec("asym", "o", &[]), 4);
    let far = Run::new(
        r#"{"thermo": {"c": 2, "h": -0.5, "T": 1}, "experiment": {"t": [400], "lambda0": [1.0]}, "grid": {"max_nodes": 500}}"#,
    );
    let out = qnls()
        .arg("fredholm")
        .arg("--config")
        .arg(far.config())
        .arg("--out")
        .arg(far.out("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("largest admissible time"));
    assert_eq!(run.exec("thermo", "o", &["--mode", "curved"]), 2);
}

#[test]
fn checks_pass_on_default_config_with_stable_schema() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -0.5, "T": 1}, "experiment": {"t": [5], "lambda0": [0.3], "draws": 4}}"#);
    assert_eq!(run.exec("checks", "a", &[]), 0);
    assert_eq!(run.exec("checks", "b", &[]), 0);
    let a = std::fs::read(run.out("a").join("checks.json")).unwrap();
    let b = std::fs::read(run.out("b").join("checks.json")).unwrap();
    assert_eq!(a, b);
    let report = run.json("a", "checks.json");
    assert_eq!(report["all_pass"], Value::Bool(true));
    for entry in report["checks"].as_array().unwrap() {
        let keys: Vec<&String> = entry.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["error", "name", "pass", "tolerance", "value"]);
    }
}

#[test]
fn broken_field_spec_fails_validation() {
    let run = Run::new(
        r#"{"thermo": {"c": 2, "h": -0.5, "T": 1},
            "fields": {"psi": {"kind": "affine_log", "a": [0.3, 0.2], "b": [0, 0]}},
            "experiment": {"t": [5], "lambda0": [0.3], "draws": 2}}"#,
    );
    assert_eq!(run.exec("checks", "o", &[]), 2);
    let report = run.json("o", "checks.json");
    assert_eq!(report["all_pass"], Value::Bool(false));
    let v = &report["checks"][0];
    assert_eq!(v["name"], "fields.validate");
    assert_eq!(v["pass"], Value::Bool(false));
    assert!(v["error"].as_str().unwrap().contains("not real"));
}

#[test]
fn field_spec_from_file() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -0.5, "T": 1}, "fields": "fields.json", "experiment": {"t": [5], "lambda0": [0.2]}}"#);
    std::fs::write(
        run.dir.path().join("fields.json"),
        r#"{"psi": {"kind": "affine_log", "a": [0.3, 0], "b": [0.1, 0]}}"#,
    )
    .unwrap();
    assert_eq!(run.exec("asym", "o", &[]), 0);
    let law = &run.json("o", "asym.json")[0]["law"];
    let lam = &law["saddle"]["Lambda"];
    assert!((re(lam) - 0.2).abs() < 1e-15);
    assert!((lam[1].as_f64().unwrap() - 0.3 / 10.0).abs() < 1e-15);
}

#[test]
fn compare_with_empty_occupation_is_zero() {
    let run = Run::new(r#"{"thermo": {"c": 2, "h": -60, "T": 1}, "experiment": {"t": [10, 20], "lambda0": [0.5]}}"#);
    assert_eq!(run.exec("compare", "o", &[]), 0);
    let c = &run.json("o", "compare.json")[0];
    for k in 0..2 {
        assert!(re(&c["logdet_oracle"][k]).abs() < 1e-12);
        assert!(re(&c["logdet_asym"][k]).abs() < 1e-12);
        assert!(c["residual"][k].as_f64().unwrap().abs() < 1e-12);
    }
}

/// Residuals of the `constant + p·ln t` fit over a window of times, the asymptotic
/// column and the fitted constant, for one mode.
fn compare_window(times: &str, mode: &str) -> (Vec<f64>, Vec<f64>, f64) {
    let run = Run::new(&format!(
        r#"{{"thermo": {{"c": 50, "h": -0.5, "T": 1}}, "experiment": {{"t": {times}, "lambda0": [1.0]}}}}"#
    ));
    assert_eq!(run.exec("compare", "o", &["--mode", mode]), 0);
    let c = &run.json("o", "compare.json")[0];
    let fit = &c["log_fit"];
    let residual = fit["residual"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let asym = c["logdet_asym"].as_array().unwrap().iter().map(re).collect();
    (residual, asym, fit["p"].as_f64().unwrap())
}

#[test]
fn compare_residual_trend() {
    let max = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let (early, _, _) = compare_window("[5, 10, 20]", "shifted");
    let (late, asym_shifted, p_shifted) = compare_window("[10, 20, 40]", "shifted");
    assert!(max(&late) < 0.6 * max(&early), "{early:?} {late:?}");
    let (late_plain, asym_plain, p_plain) = compare_window("[10, 20, 40]", "plain");
    assert!((asym_plain[2] - asym_shifted[2]).abs() > 1e-3);
    for (a, b) in late.iter().zip(&late_plain) {
        assert!((a - b).abs() < 1e-9, "{late:?} {late_plain:?}");
    }
    assert!(p_shifted.abs() < 0.05 && p_plain.abs() > p_shifted.abs());
}

#[test]
fn roots_localized_and_delta_for_positive_h() {
    let run = Run::new(r#"{"thermo": {"c": 4, "h": 1, "T": 0.25}, "experiment": {"t": [10], "lambda0": [1.3]}}"#);
    assert_eq!(run.exec("roots", "o", &[]), 0);
    let roots = run.json("o", "roots.json");
    let q: Vec<f64> = roots["q_roots"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(q.len(), 2);
    assert!((q[0] + q[1]).abs() < 1e-12 && q[1] > 0.0 && q[1] < 1.3);
    assert_eq!(roots["capital_lambdas"], roots["q_roots"]);

    assert_eq!(run.exec("localized-check", "o", &[]), 0);
    let local = &run.json("o", "localized.json")[0];
    assert!(local["max_jump"].as_f64().unwrap() < 1e-10);
    assert!(local["max_match_error"].as_f64().unwrap() < 1e-3);
    assert_eq!(local["matches"].as_array().unwrap().len(), 6);

    assert_eq!(run.exec("delta", "o", &[]), 0);
    let csv = std::fs::read_to_string(run.out("o").join("delta.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    for k in 1..5 {
        assert!((row[k] - row[k + 4]).abs() < 1e-6, "{row:?}");
    }
}
