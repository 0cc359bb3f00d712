use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qstein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstein")).args(args).output().expect("spawn qstein")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn help_lists_every_flag() {
    let expect: &[(&str, &[&str])] = &[
        ("sample", &["--d", "--q", "--mu", "--sigma-factor", "--dist", "--s", "--seed", "--escort", "--out", "--format"]),
        ("density", &["--points", "--x", "--escort", "--out"]),
        ("verify", &["--s", "--seed", "--nodes-1d", "--radial-nodes", "--angular-nodes", "--out"]),
        ("estimate", &["--estimator", "--function", "--s", "--seed", "--c3", "--out"]),
        ("experiment", &["--config", "--preset", "--out", "--csv", "--include-timings"]),
    ];
    for (cmd, flags) in expect {
        let o = qstein(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn sample_writes_bounded_rows_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch.csv");
    let o = qstein(&["sample", "--d", "1", "--q", "0", "--s", "1000", "--seed", "7", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_rows(&out);
    assert_eq!(header, ["x_1", "s"]);
    assert_eq!(rows.len(), 1000);
    let r = 1.5f64.powf(1.0 / 3.0);
    assert!(rows.iter().all(|x| x[0].abs() < r && x[1] < r * r));

    let echo: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("batch.csv.config.json")).unwrap()).unwrap();
    assert_eq!(echo["S"], 1000);
    assert_eq!(echo["seed"], 7);
    assert_eq!(echo["distribution"]["q"], 0.0);

    let again = dir.path().join("again.csv");
    qstein(&["sample", "--d", "1", "--q", "0", "--s", "1000", "--seed", "7", "--out", path(&again)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let factor = dir.path().join("l.json");
    std::fs::write(&factor, "[[1.5], [0.4, 0.6]]").unwrap();
    let first = dir.path().join("a.csv");
    let o = qstein(&[
        "sample", "--q", "0.4", "--mu", "1,-2", "--sigma-factor", path(&factor), "--s", "300", "--seed", "3", "--escort", "--out",
        path(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let echo: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.config.json")).unwrap()).unwrap();
    let dist = dir.path().join("dist.json");
    std::fs::write(&dist, echo["distribution"].to_string()).unwrap();
    let second = dir.path().join("b.csv");
    let s = echo["S"].to_string();
    let seed = echo["seed"].to_string();
    assert_eq!(echo["source"], "escort");
    let o = qstein(&["sample", "--dist", path(&dist), "--s", &s, "--seed", &seed, "--escort", "--out", path(&second)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn heavy_tails_are_rejected() {
    let o = qstein(&["sample", "--d", "2", "--q", "1.5", "--s", "10"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("q = 1.5 > 1") && msg.contains("not supported"), "{msg}");
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["sample", "--q", "0.5"],
        vec!["sample", "--d", "2", "--q", "0.5", "--mu", "1,2,3"],
        vec!["sample", "--d", "2", "--q", "0.5", "--sigma-factor", "/nonexistent/l.json"],
        vec!["estimate", "--d", "1", "--q", "0.5", "--estimator", "q_bonnet", "--function", "cubic"],
        vec!["estimate", "--d", "1", "--q", "0.5", "--estimator", "magic", "--function", "sine"],
        vec!["estimate", "--d", "1", "--q", "1", "--estimator", "prop_grad", "--function", "sine"],
        vec!["experiment"],
        vec!["frobnicate"],
    ] {
        let o = qstein(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"radius": {"d_max": 10, "colour": "red"}}"#).unwrap();
    let o = qstein(&["experiment", "--config", path(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"));

    std::fs::write(&cfg, r#"{"mu": [0], "sigma_factor_rows": [[1]], "q": 0.5, "extra": 1}"#).unwrap();
    let o = qstein(&["sample", "--dist", path(&cfg), "--s", "5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_qstein"))
        .args(["sample", "--d", "1", "--q", "0", "--s", "5"])
        .env("QSTEIN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_passes_in_one_and_two_dimensions() {
    for (q, d) in [("0", "1"), ("0.99", "2")] {
        let o = qstein(&["verify", "--q", q, "--d", d, "--s", "20000"]);
        let text = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "q={q} D={d}\n{text}{}", stderr(&o));
        assert!(text.contains("stein/quadrature") && !text.contains("FAIL"));
    }
}

#[test]
fn verify_refuses_three_dimensions() {
    let o = qstein(&["verify", "--d", "3", "--q", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("D ≤ 2"));
}

#[test]
fn estimate_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let o = qstein(&[
        "estimate", "--d", "2", "--q", "0.5", "--estimator", "prop_grad", "--function", "tanh_sum", "--s", "4000", "--seed", "5",
        "--out", path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["value", "stderr", "bound", "S", "seed", "estimator", "config"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["estimator"], "prop_grad");
    assert_eq!(v["S"], 4000);
    assert_eq!(v["value"].as_array().unwrap().len(), 2);
    assert!(v["bound"]["per_entry"].as_f64().unwrap() > 0.0);
    assert_eq!(v["config"]["function"], "tanh_sum");

    // polynomials have no global gradient bound
    let o = qstein(&["estimate", "--d", "1", "--q", "0.5", "--estimator", "prop_grad", "--function", "poly2", "--s", "100"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["bound"].is_null());
}

#[test]
fn every_estimator_runs() {
    for est in [
        "stein_lhs", "stein_rhs_escort", "stein_rhs_p_only", "q_bonnet", "q_price", "prop_grad", "prop_hess", "gaussian_bonnet",
        "gaussian_price",
    ] {
        let o = qstein(&["estimate", "--d", "2", "--q", "0.3", "--estimator", est, "--function", "sine", "--s", "500"]);
        assert_eq!(code(&o), 0, "{est}: {}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let width = if matches!(est, "q_price" | "prop_hess" | "gaussian_price") { 4 } else { 2 };
        assert_eq!(v["value"].as_array().unwrap().len(), width, "{est}");
    }
}

#[test]
fn density_marks_points_outside_the_support() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("p.csv");
    std::fs::write(&pts, "x_1,x_2\n0,0\n0.5,-0.25\n").unwrap();
    let o = qstein(&["density", "--d", "2", "--q", "0", "--points", path(&pts), "--x", "3,0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x_1,x_2,log_density,density");
    assert_eq!(lines.len(), 4);
    // at the centre of q = 0, D = 2: p = 2/(π R²) with R² = 2/√π
    let centre: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((centre - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    assert_eq!(lines[3], "3,0,-Infinity,0");
}

#[test]
fn experiment_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"radius": {"qs": [0.5], "d_max": 5}}"#).unwrap();
    let (out, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let o = qstein(&["experiment", "--config", path(&cfg), "--out", path(&out), "--csv", path(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["radius"]["d_max"], 5);
    assert!(v.get("timings").is_none() || v["timings"].is_null());
    let (header, _) = {
        let mut r = csv::Reader::from_path(&csv).unwrap();
        (r.headers().unwrap().clone(), ())
    };
    assert_eq!(&header[0], "schema_version");
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, 1 + 5);

    let o = qstein(&["experiment", "--config", path(&cfg), "--include-timings"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["timings"].is_array() || v["timings"].is_object());
}
