use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use hidden_chsh::{analyze, TwoQubitState};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hidden-chsh"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut all = vec!["gen"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", &path]);
    let o = run(&all);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path
}

#[test]
fn analyze_werner_reports_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let w = gen(dir.path(), "w.json", &["--kind", "werner", "-p", "0.8"]);
    let o = run(&["analyze", "--state", &w, "--json"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["hidden_nonlocal"], Value::Bool(true));
    assert!((v["max_filtered_chsh"].as_f64().unwrap() - 2.26274).abs() < 1e-5);
    for key in ["spectrum", "horodecki_M", "chsh_unfiltered", "separable", "lambda0", "lambda3"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let table = run(&["analyze", "--state", &w]);
    assert_eq!(code(&table), 0);
    assert!(String::from_utf8_lossy(&table.stdout).contains("hidden_nonlocal     true"));
}

#[test]
fn gen_then_analyze_reproduces_the_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("w", &["--kind", "werner", "-p", "0.8"]),
        ("p", &["--kind", "pure", "--seed", "4"]),
        ("c", &["--kind", "choi", "--seed", "9", "--env-dim", "3"]),
        ("e", &["--kind", "eq7", "-a", "1", "-b", ".5", "-c", ".5", "-d", ".4"]),
    ];
    for (name, args) in cases {
        let path = gen(dir.path(), name, args);
        let state = hidden_chsh::statefile::read_state(Path::new(&path), 1e-10).unwrap();
        let lib = serde_json::to_value(analyze(&state).unwrap()).unwrap();
        let cli = stdout_json(&run(&["analyze", "--state", &path, "--json"]));
        assert_eq!(lib, cli, "{name}");
    }
}

#[test]
fn analyze_product_state_has_zero_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen(dir.path(), "p.json", &["--kind", "eq7", "-a", "1", "-b", "1", "-c", "1", "-d", "0"]);
    let state = hidden_chsh::statefile::read_state(Path::new(&p), 1e-10).unwrap();
    assert!(state.trace_distance(&TwoQubitState::product_basis(0, 0)) < 1e-15);
    let v = stdout_json(&run(&["analyze", "--state", &p, "--json"]));
    for k in 0..4 {
        assert!(v[format!("lambda{k}")].as_f64().unwrap().abs() <= 1e-12);
    }
    assert_eq!(v["hidden_nonlocal"], Value::Bool(false));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"rho\": [[1, 0]]").unwrap();
    let o = run(&["analyze", "--state", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    // a Hermitian, unit-trace matrix with a negative eigenvalue
    let neg = dir.path().join("neg.json");
    let row = |i: usize| {
        (0..4)
            .map(|j| match (i == j, i) {
                (true, 3) => "[-0.1, 0]".to_string(),
                (true, _) => format!("[{}, 0]", 1.1 / 3.0),
                _ => "[0, 0]".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    };
    std::fs::write(&neg, format!("{{\"rho\": [[{}],[{}],[{}],[{}]]}}", row(0), row(1), row(2), row(3))).unwrap();
    let o = run(&["analyze", "--state", neg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("NotPositive"));

    assert_eq!(code(&run(&["survey", "--samples", "0", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["survey", "--samples", "10"])), 2);
    let o = run(&["survey", "--samples", "10", "--seed", "1", "--measure", "lebesgue"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("UnknownMeasure"));
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let out = dir.path().join("x.json");
    let o = run(&["gen", "--kind", "eq7", "-a", "1", "-b", ".5", "-c", ".5", "-d", ".6", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    let o = run(&["gen", "--kind", "werner", "-p", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn survey_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let csv = dir.path().join("a.csv");
    let o = run(&["survey", "--samples", "5000", "--seed", "7", "--out", a.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let progress = String::from_utf8_lossy(&o.stderr);
    assert!(progress.lines().filter(|l| l.starts_with("progress:")).count() >= 5);
    let o = run(&["--threads", "2", "survey", "--samples", "5000", "--seed", "7", "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let v: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["n"], 5000);
    assert_eq!(v["consistency_violations"], 0);
    assert_eq!(v["measure_tag"], "stinespring-env4");
    for key in ["frac_separable", "frac_not_hidden_nonlocal", "frac_no_unfiltered_chsh"] {
        let e = &v[key];
        let (lo, val, hi) = (e["ci_low"].as_f64().unwrap(), e["value"].as_f64().unwrap(), e["ci_high"].as_f64().unwrap());
        assert!(lo <= val && val <= hi, "{key}");
    }
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("label,count,fraction,ci_low,ci_high\n"));
}

#[test]
fn verify_random_choi_states() {
    let o = run(&["verify", "--random", "100", "--seed", "3"]);
    let v = stdout_json(&o);
    assert_eq!(v["total"], 100);
    assert_eq!(v["certified"], 100, "{v}");
    assert_eq!(code(&o), 0);
}

#[test]
fn verify_single_states() {
    let dir = tempfile::tempdir().unwrap();
    let w = gen(dir.path(), "w.json", &["--kind", "werner", "-p", "0.5"]);
    let o = run(&["verify", "--state", &w, "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(v["states"][0]["best_chsh"].as_f64().unwrap() <= 2.0);
    assert_eq!(v["states"][0]["certified"], Value::Bool(true));

    let e = gen(dir.path(), "e.json", &["--kind", "eq7", "-a", "1", "-b", ".5", "-c", ".5", "-d", ".4"]);
    let o = run(&["verify", "--state", &e, "--seed", "1", "--slack", "0.05"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let bound = v["states"][0]["closed_form_bound"].as_f64().unwrap();
    assert!((bound - 2.0 * 1.64f64.sqrt()).abs() < 1e-10);
    let best = v["states"][0]["best_chsh"].as_f64().unwrap();
    assert!(best <= bound + 1e-6 && best >= bound - 0.05);

    assert_eq!(code(&run(&["verify", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["verify", "--state", &w])), 2);
}

#[test]
fn distill_cases() {
    let dir = tempfile::tempdir().unwrap();
    let w = gen(dir.path(), "w.json", &["--kind", "werner", "-p", "0.8"]);
    let v = stdout_json(&run(&["distill", "--state", &w, "--json"]));
    assert_eq!(v["case"], "bell_diagonal");
    assert!(v["tradeoff"].is_null());

    let e = gen(dir.path(), "e.json", &["--kind", "eq7", "-a", "1", "-b", ".5", "-c", ".5", "-d", ".4"]);
    let v = stdout_json(&run(&["distill", "--state", &e, "--json", "--n-grid", "1,10,100"]));
    assert_eq!(v["case"], "rank_deficient_i");
    let rows = v["tradeoff"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let last = rows[2]["chsh"].as_f64().unwrap();
    assert!((last - 2.0 * 1.64f64.sqrt()).abs() < 1e-3);
    assert!(rows[2]["success_probability"].as_f64().unwrap() < rows[0]["success_probability"].as_f64().unwrap());
    let text = run(&["distill", "--state", &e]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("rank_deficient_i"));

    let p = gen(dir.path(), "p.json", &["--kind", "eq7", "-a", "1", "-b", "1", "-c", "1", "-d", "0"]);
    let v = stdout_json(&run(&["distill", "--state", &p, "--json"]));
    assert_eq!(v["case"], "product_iv");
}

#[test]
fn distill_reports_convergence_failure() {
    let dir = tempfile::tempdir().unwrap();
    let c = gen(dir.path(), "c.json", &["--kind", "choi", "--seed", "12"]);
    let o = run(&["distill", "--state", &c, "--eps", "1e-16", "--max-iter", "3"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ConvergenceFailure") && err.contains("3 iterations"), "{err}");
}
