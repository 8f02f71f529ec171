use std::path::Path;
use std::process::{Command, Output};

fn dgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = dgd(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SWEEP_SPEC: &str = r#"{
  "kind": "stochastic_tau",
  "problem": {"d": 4, "mu": 1.0, "lambda": 0.1, "seed": 3},
  "taus": [1, 2],
  "sigma2s": [0.5],
  "horizons": [{"fixed": 40}],
  "eta": "theory",
  "trials": 20,
  "seed": 9
}"#;

#[test]
fn coeffs_geometric_case() {
    let out = ok(&["coeffs", "--alpha", "0.5", "--tau", "0", "--k", "3"]);
    assert!(out.ends_with('\n') && !out.contains('\r'));
    let last = out.lines().last().unwrap();
    assert!(last.starts_with("3,0.125,"), "{last}");
    assert_eq!(out.lines().next().unwrap(), "k,b_k,bound_regime,bound_value");
}

#[test]
fn roots_certificate_all_clauses() {
    let out = ok(&["roots", "--alpha", "0.02", "--tau", "1", "--certify"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for clause in ["dominant_real", "dominant_bound", "nondominant_bound", "derivative_bound"] {
        assert_eq!(v[clause], true, "{clause}");
    }
    // 1 - z + 0.02 z² has roots (1 ± √0.92)/0.04.
    let z1 = v["roots"]["roots"][0]["re"].as_f64().unwrap();
    assert!((z1 - (1.0 - 0.92f64.sqrt()) / 0.04).abs() < 1e-12);
}

#[test]
fn invalid_eta_names_the_flag() {
    let o = dgd(&["simulate", "--alg", "dgd", "--tau", "1", "--eta", "invalid"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--eta"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    assert_eq!(dgd(&["--help"]).status.code(), Some(0));
    assert_eq!(dgd(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(dgd(&[]).status.code(), Some(1));
    // Precondition failures are validation errors.
    let o = dgd(&["bounds", "--kind", "thm1", "--lambda", "0.1", "--eta", "0.5", "--tau", "1", "--k", "12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("precondition"));
    let o = dgd(&["simulate", "--tau", "1", "--eta", "0.5", "--paper-valid"]);
    assert_eq!(o.status.code(), Some(1));
    let o = dgd(&["lowerbound", "--kind", "convex", "--tau", "1", "--k", "10", "--d", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("too small"));
    let o = dgd(&["--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn forced_bounds_flag_rows() {
    let o = dgd(&["bounds", "--kind", "thm1", "--lambda", "0.1", "--eta", "0.5", "--tau", "1", "--k", "12", "--force"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let out = stdout(&o);
    assert!(out.lines().skip(1).all(|l| l.contains(",false,")));
}

#[test]
fn bounds_example_value() {
    let out = ok(&["bounds", "--kind", "thm1", "--lambda", "0.1", "--eta", "0.025", "--tau", "1", "--k", "10"]);
    let row = out.lines().last().unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 5.0 * 0.9975f64.powi(22)).abs() < 1e-13, "{row}");
}

#[test]
fn tune_reports_case() {
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["tune", "--tau", "4", "--sigma2", "0", "--k", "100"])).unwrap();
    assert_eq!(v["case"], "cap");
    assert_eq!(v["eta"].as_f64().unwrap(), 1.0 / 80.0);
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["tune", "--tau", "4", "--sigma2", "100", "--k", "5"])).unwrap();
    assert_eq!(v["case"], "zero");
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["tune", "--tau", "4", "--sigma2", "0.01", "--k", "100000"])).unwrap();
    assert_eq!(v["case"], "interior");
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let base = ["simulate", "--alg", "sdgd", "--tau", "2", "--d", "4", "--k", "50", "--sigma2", "0.2", "--trials", "64", "--seed", "5"];
    let one = ok(&[&base[..], &["--threads", "1"]].concat());
    let four = ok(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(one, four);
    assert_eq!(one.lines().count(), 52);
}

#[test]
fn problem_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(dir.path(), "p.json", r#"{"eigenvalues": [1.0, 0.5], "b": [-1.0, -1.0], "c": 0.0}"#);
    let out = ok(&["simulate", "--problem", &problem, "--alg", "gd", "--eta", "0.05", "--k", "2"]);
    // w* = (1, 2), F* = -1.5, w0 = 0 gives F(w0) - F* = 1.5.
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.5);
}

#[test]
fn sweep_writes_metadata_next_to_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SWEEP_SPEC);
    let out = dir.path().join("rows.csv");
    ok(&["sweep", "--spec", &spec, "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("algorithm,tau,batch,eta,sigma2,k,trials,mean_subopt"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rows.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 9);
    assert_eq!(meta["spec_hash"].as_str().unwrap().len(), 64);
}

fn round_trip(args: &[&str], dir: &Path, tag: &str) {
    let direct = ok(args);
    let dumped = ok(&[args, &["--dump-config"]].concat());
    let cfg = write(dir, &format!("{tag}.json"), &dumped);
    let replayed = ok(&["--config", &cfg]);
    assert_eq!(direct, replayed, "{tag}");
    // The dump of a replayed config is itself a fixed point.
    assert_eq!(ok(&["--config", &cfg, "--dump-config"]), dumped, "{tag}");
}

#[test]
fn every_subcommand_round_trips_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SWEEP_SPEC);
    let problem = write(dir.path(), "p.json", r#"{"eigenvalues": [1.0, 0.25, 0.1], "b": [1.0, 0.0, -1.0], "c": 2.0}"#);
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--alg", "sdgd", "--tau", "3", "--d", "5", "--k", "60", "--sigma2", "0.1", "--trials", "8", "--seed", "2", "--noise", "spherical"]),
        ("simulate_file", vec!["simulate", "--problem", &problem, "--alg", "dgd", "--tau", "1", "--k", "20", "--format", "json"]),
        ("minibatch", vec!["simulate", "--alg", "minibatch", "--batch", "4", "--d", "3", "--k", "40", "--sigma2", "0.3", "--eta", "tuned"]),
        ("idle_agd", vec!["simulate", "--alg", "idle-agd", "--agd", "convex", "--lambda", "0", "--tau", "2", "--d", "6", "--k", "30", "--epsilon", "1e-3"]),
        ("coeffs", vec!["coeffs", "--alpha", "0.01", "--tau", "3", "--k", "50", "--method", "partial-fractions"]),
        ("roots", vec!["roots", "--alpha", "0.004", "--tau", "5", "--certify"]),
        ("bounds", vec!["bounds", "--kind", "thm4-convex", "--tau", "2", "--sigma2", "0.5", "--k", "30", "--format", "json"]),
        ("tune", vec!["tune", "--curvature", "convex", "--tau", "2", "--sigma2", "1", "--k", "1000", "--format", "csv"]),
        ("lowerbound", vec!["lowerbound", "--kind", "strong", "--tau", "2", "--k", "40", "--method", "idle-gd"]),
        ("sweep", vec!["sweep", "--spec", &spec, "--threads", "2"]),
    ];
    for (tag, args) in &cases {
        round_trip(args, dir.path(), tag);
    }
}

#[test]
fn config_is_self_contained() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", SWEEP_SPEC);
    let dumped = ok(&["sweep", "--spec", &spec, "--dump-config"]);
    std::fs::remove_file(&spec).unwrap();
    let cfg = write(dir.path(), "cfg.json", &dumped);
    let out = ok(&["--config", &cfg]);
    assert!(out.lines().count() > 1);
}

#[test]
fn config_rejects_extra_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let dumped = ok(&["tune", "--tau", "1", "--sigma2", "1", "--k", "10", "--dump-config"]);
    let cfg = write(dir.path(), "cfg.json", &dumped);
    let o = dgd(&["--config", &cfg, "tune", "--tau", "1", "--sigma2", "1", "--k", "10"]);
    assert_eq!(o.status.code(), Some(1));
}
