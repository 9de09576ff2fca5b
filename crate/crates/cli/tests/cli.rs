use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vekua")).current_dir(dir).args(args).output().expect("spawn vekua")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn cx(re: f64, im: f64) -> Value {
    json!({"re": re, "im": im})
}

fn torus(dir: &Path) {
    write(dir, "torus.json", &json!({"group": ["t1"], "L": "Dt", "p": cx(0.5, 0.0), "q": cx(0.0, 0.0), "cutoff": 100}));
}

fn sphere(dir: &Path) {
    write(dir, "s3.json", &json!({"group": ["s3"], "L": "2*d0^2", "p": cx(1.0, 0.0), "q": cx(1.0, 0.0), "cutoff": 30}));
}

fn ode(dir: &Path, delta: f64, alpha: Value) {
    write(
        dir,
        "ode.json",
        &json!({"group": ["s3", "t1"], "D": "1i*d0 + 1i*Dt", "p0": 0.15, "lambda": 0.1, "delta": delta,
            "alpha": alpha, "q": {"form": "1-cos"}, "s": {"form": "cos", "amp": 0.1}, "grid": 256, "cutoff": 4}),
    );
}

#[test]
fn torus_classify_has_no_zeros() {
    let d = TempDir::new().unwrap();
    torus(d.path());
    let o = run(d.path(), &["classify", "--config", "torus.json", "--out", "c.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read(d.path(), "c.json");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["caveat"], "truncation-limited");
    assert_eq!(r["tolerances"]["zero_tol"], 1e-12);
    assert!(r["compat_warning"].is_string());
    let res = &r["result"];
    assert_eq!(res["zeros"].as_array().unwrap().len(), 0);
    assert!((res["min_abs_disc"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(res["gh_verdict"], "GH_PLAUSIBLE");
    let csv = fs::read_to_string(d.path().join("c.shells.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("weight,min_abs_disc,zero_count"));
    assert_eq!(lines.next(), Some("1.0,0.25,0"));
}

#[test]
fn sphere_classify_reports_zeros() {
    let d = TempDir::new().unwrap();
    sphere(d.path());
    let o = run(d.path(), &["classify", "--config", "s3.json", "--cutoff", "10", "--out", "s.json"]);
    assert_eq!(code(&o), 2);
    let r = read(d.path(), "s.json");
    assert_eq!(r["cutoff"], 10.0);
    assert!(!r["result"]["zeros"].as_array().unwrap().is_empty());
    assert_eq!(r["result"]["gh_verdict"], "GH_FAIL_ZERO_SET_INFINITE");
}

#[test]
fn config_errors_exit_one_with_position() {
    let d = TempDir::new().unwrap();
    write(d.path(), "bad.json", &json!({"group": ["t1"], "L": "Dt", "q": cx(0.0, 0.0)}));
    let o = run(d.path(), &["classify", "--config", "bad.json"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing field `p`") && err.contains("line"), "{err}");

    torus(d.path());
    let o = run(d.path(), &["classify", "--config", "torus.json", "--cutoff", "0.5"]);
    assert_eq!(code(&o), 1);
    let o = run(d.path(), &["classify", "--config", "missing.json"]);
    assert_eq!(code(&o), 1);

    write(d.path(), "sym.json", &json!({"group": ["t1"], "L": "Dt +", "p": cx(1.0, 0.0), "q": cx(0.0, 0.0), "cutoff": 5}));
    let o = run(d.path(), &["classify", "--config", "sym.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at char"));
}

#[test]
fn constant_solve_round_trips() {
    let d = TempDir::new().unwrap();
    torus(d.path());
    let f: Vec<Value> = (-5i64..=5)
        .map(|k| json!({"rep": [k], "matrix": [[cx(1.0 / (1.0 + (k * k) as f64), 0.3 * k as f64)]]}))
        .collect();
    write(d.path(), "f.json", &Value::Array(f));
    let o = run(d.path(), &["solve", "--config", "torus.json", "--rhs", "f.json", "--out", "u.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read(d.path(), "u.summary.json");
    assert!(s["result"]["relative_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(s["result"]["modes"], 11);

    // independent check: Pu = Dt u - ½ conj(u(-k)) with Dt acting as k
    let u = read(d.path(), "u.json");
    let coef = |k: i64| -> (f64, f64) {
        let rec = u.as_array().unwrap().iter().find(|r| r["rep"][0] == k).unwrap();
        let c = &rec["matrix"][0][0];
        (c["re"].as_f64().unwrap(), c["im"].as_f64().unwrap())
    };
    for k in -5i64..=5 {
        let (ur, ui) = coef(k);
        let (vr, vi) = coef(-k);
        let kf = k as f64;
        let (pr, pi) = (kf * ur - 0.5 * vr, kf * ui + 0.5 * vi);
        assert!((pr - 1.0 / (1.0 + kf * kf)).abs() < 1e-12 && (pi - 0.3 * kf).abs() < 1e-12, "k={k}");
    }
}

#[test]
fn zero_rhs_gives_zero_solution() {
    let d = TempDir::new().unwrap();
    torus(d.path());
    write(d.path(), "zero.json", &json!([]));
    let o = run(d.path(), &["solve", "--config", "torus.json", "--rhs", "zero.json", "--out", "u.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(d.path(), "u.json"), json!([]));
}

#[test]
fn inadmissible_rhs_exits_three() {
    let d = TempDir::new().unwrap();
    sphere(d.path());
    // ℓ = 0 is singular for this operator; a generic value there breaks compatibility
    write(d.path(), "f.json", &json!([{"rep": [0], "matrix": [[cx(0.0, 1.0)]]}]));
    let o = run(d.path(), &["solve", "--config", "s3.json", "--rhs", "f.json", "--cutoff", "3", "--out", "u.json"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 3, "{err}");
    assert!(err.contains("inadmissible"), "{err}");
    assert_eq!(read(d.path(), "u.summary.json")["result"]["admissible"], false);
}

#[test]
fn time_solve_writes_solution_and_diagnostics() {
    let d = TempDir::new().unwrap();
    ode(d.path(), 0.3, cx(1.0, 0.5));
    let n = 256;
    let samples: Vec<Value> = (0..=n).map(|j| cx((2.0 * PI * j as f64 / n as f64).cos(), 0.0)).collect();
    write(d.path(), "f.json", &json!([{"rep": [0, 1], "grid": n, "entries": [{"row": 0, "col": 0, "samples": samples}]}]));
    let o = run(d.path(), &["solve", "--config", "ode.json", "--rhs", "f.json", "--out", "u.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read(d.path(), "u.summary.json");
    assert!(s["result"]["max_residual"].as_f64().unwrap() < 1e-4);
    assert_eq!(s["result"]["hypotheses"]["a_ok"], true);
    let csv = fs::read_to_string(d.path().join("u.modes.csv")).unwrap();
    assert!(csv.starts_with("mode,weight,rho_re,rho_im,den_minus,den_plus,residual"));
    assert_eq!(csv.lines().count(), 2);
    assert!(read(d.path(), "u.json").as_array().unwrap().len() == 2);
}

#[test]
fn degenerate_ode_exits_four() {
    let d = TempDir::new().unwrap();
    ode(d.path(), 1.0, cx(1.0, 0.0));
    write(d.path(), "f.json", &json!([]));
    let o = run(d.path(), &["solve", "--config", "ode.json", "--rhs", "f.json", "--out", "u.json"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(d.path(), "u.summary.json")["result"]["hypotheses"]["a_ok"], false);
    let o = run(d.path(), &["ode-check", "--config", "ode.json", "--out", "h.json"]);
    assert_eq!(code(&o), 4);
    assert_eq!(read(d.path(), "h.json")["result"]["a_ok"], false);
}

#[test]
fn ode_check_passes_generic_case() {
    let d = TempDir::new().unwrap();
    ode(d.path(), 0.3, cx(1.0, 0.5));
    let o = run(d.path(), &["ode-check", "--config", "ode.json", "--out", "h.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let h = read(d.path(), "h.json");
    assert_eq!(h["result"]["split_ok"], true);
    assert_eq!(h["tolerances"]["ode_residual_tol"], 1e-4);
}

#[test]
fn zero_witness_is_annihilated() {
    let d = TempDir::new().unwrap();
    sphere(d.path());
    let o = run(d.path(), &["witness", "--config", "s3.json", "--kind", "gh-zero", "--modes", "20", "--out", "w.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read(d.path(), "w.verify.json");
    assert_eq!(v["result"]["modes_used"], 20);
    assert!(v["result"]["residual_norm"].as_f64().unwrap() <= 1e-12);
    assert!(!read(d.path(), "w.json").as_array().unwrap().is_empty());
}

#[test]
fn torus_has_no_zero_witness() {
    let d = TempDir::new().unwrap();
    torus(d.path());
    let o = run(d.path(), &["witness", "--config", "torus.json", "--kind", "gh-zero", "--out", "w.json"]);
    assert_eq!(code(&o), 5);
    assert!(!d.path().join("w.json").exists());
}

#[test]
fn small_divisor_witness_grows() {
    let d = TempDir::new().unwrap();
    write(
        d.path(),
        "t2.json",
        &json!({"group": ["t1", "t1"], "L": "Dt@0 + 1.4142135623730951*Dt@1", "p": cx(1.0, 0.0), "q": cx(1.0, 0.0), "cutoff": 150}),
    );
    let o = run(d.path(), &["witness", "--config", "t2.json", "--kind", "gs-fail", "--modes", "8", "--out", "g.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read(d.path(), "g.verify.json");
    let rows = v["result"]["rows"].as_array().unwrap();
    assert!(rows.len() >= 5);
    let abs_u: Vec<f64> = rows.iter().map(|r| r["abs_u"].as_f64().unwrap()).collect();
    assert!(abs_u.windows(2).all(|w| w[1] > w[0]), "{abs_u:?}");
    assert!(abs_u.last().unwrap() / abs_u[0] > 1e3);
    assert_eq!(v["result"]["abs_u_increasing"], true);
    assert!(v["result"]["residual_norm"].as_f64().unwrap() < 1e-9);
    assert!(d.path().join("g.rhs.json").exists());
}

#[test]
fn decay_fits_solution() {
    let d = TempDir::new().unwrap();
    torus(d.path());
    let f: Vec<Value> = (-30i64..=30).map(|k| json!({"rep": [k], "matrix": [[cx((-0.2 * (k * k) as f64).exp(), 0.0)]]})).collect();
    write(d.path(), "f.json", &Value::Array(f));
    let o = run(d.path(), &["decay", "--config", "torus.json", "--field", "f.json", "--out", "dec.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read(d.path(), "dec.json");
    assert!(r["result"]["fit"]["exponent"].as_f64().unwrap() < -10.0);
    assert_eq!(r["result"]["reps"], 61);
}
