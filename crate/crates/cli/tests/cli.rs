//! End-to-end checks of the `osc` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn osc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osc")).args(args).output().expect("spawn osc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const TIGHT: &str = "\
name = tight
[class]
kind = threshold
n = 7
[adversary]
kind = threshold_tight
t_star = 3
[learner]
algorithms = vue, vue_prod
p = sqrt(N/T)
[run]
horizons = 200, 400
seeds = 2
";

#[test]
fn sweep_writes_csvs_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TIGHT);
    let out = dir.path().join("out");
    let o = osc(&["sweep", &cfg, "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,seed,algorithm,adversary,T,p,eta,lambda,epsilon,M_T,A_T,A_star,M_star,excess_mistakes,excess_abstentions,MMEA,coin_heads"
    );
    assert_eq!(lines.count(), 8);
    assert!(!summary.contains('\r'));

    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 5);

    // Defaults are echoed, and the echoed file is itself a valid config.
    let resolved = fs::read_to_string(out.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("eta = 0.5"));
    assert!(resolved.contains("mode = summary_only"));
    let again = dir.path().join("again");
    let cfg2 = dir.path().join("resolved.cfg");
    fs::write(&cfg2, resolved).unwrap();
    let o = osc(&["sweep", cfg2.to_str().unwrap(), "--output", again.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success());
    assert_eq!(fs::read(again.join("summary.csv")).unwrap(), summary.into_bytes());
}

#[test]
fn worker_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TIGHT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = osc(&["sweep", &cfg, "--output", a.to_str().unwrap()]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_osc"))
        .args(["sweep", &cfg, "--output", b.to_str().unwrap()])
        .env("OSC_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TIGHT.replace("t_star = 3", "t_star = 3\ncolour = red"));
    let o = osc(&["sweep", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"));

    let cfg = write_config(
        dir.path(),
        &TIGHT.replace("algorithms = vue, vue_prod\np = sqrt(N/T)", "algorithms = mixed_loss_prod\np = 0.05\nlambda = 0.1"),
    );
    let o = osc(&["sweep", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda <= p"));

    assert_eq!(osc(&["sweep", "/nonexistent/x.cfg"]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = osc(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn run_prints_summary_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TIGHT);
    let tr = dir.path().join("t.csv");
    let o = osc(&["run", &cfg, "--point", "1", "--transcript", tr.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["algorithm"], "vue");
    assert_eq!(v["horizon"], 400);
    let text = fs::read_to_string(&tr).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x,y,action,feedback,coin");
    assert_eq!(text.lines().count(), 401);

    let o = osc(&["run", &cfg, "--transcript", "-"]);
    assert!(stdout(&o).starts_with("t,x,y,action,feedback,coin\n"));
    assert_eq!(osc(&["run", &cfg, "--point", "99"]).status.code(), Some(2));
}

#[test]
fn validators_report_json() {
    let o = osc(&["alln", "--p", "0.25", "--delta", "0.1", "--horizon", "2000", "--trials", "500", "--stress", "random(0.5)"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["p", "delta", "horizon", "trials", "stress", "violations", "fraction", "bound"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert_eq!(v["stress"], "random(0.5)");

    let o = osc(&["lil", "--p", "0.1", "--delta", "0.05", "--horizon", "1000", "--trials", "200"]);
    assert!(o.status.success());

    // Parameters outside the lemma's range are configuration errors.
    assert_eq!(osc(&["alln", "--p", "0.7", "--delta", "0.1"]).status.code(), Some(2));
}

#[test]
fn lowerbound_reports_and_passes() {
    let o = osc(&["lowerbound", "--algorithm", "vue", "--horizon", "500", "--seeds", "40"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["k_hat"].as_f64().unwrap() >= 0.0);
}

#[test]
fn rates_fits_exact_powers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.csv");
    let mut text = String::from("T,value\n");
    for k in 10..=17 {
        let t = 2f64.powi(k);
        text.push_str(&format!("{t},{}\n", 2.0 * t.powf(0.7)));
    }
    fs::write(&path, text).unwrap();
    let o = osc(&["rates", path.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let fit = &v[0];
    assert!((fit["slope"].as_f64().unwrap() - 0.7).abs() < 1e-9);
    assert_eq!(fit["n_points"], 8);
    assert_eq!(fit["series"], "value");

    assert_eq!(osc(&["rates", path.to_str().unwrap(), "--column", "nope"]).status.code(), Some(2));
}

#[test]
fn rates_reads_sweep_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TIGHT.replace("horizons = 200, 400", "horizons = 200, 400, 800"));
    let out = dir.path().join("out");
    assert!(osc(&["sweep", &cfg, "--output", out.to_str().unwrap()]).status.success());
    let agg = out.join("aggregate.csv");
    let o = osc(&["rates", agg.to_str().unwrap(), "--column", "mean_A_T"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["n_points"], 3);
}

#[test]
fn paretodata_emits_curves() {
    let o = osc(&["paretodata", "--alpha-star", "0.8", "--points", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("curve,mu,alpha\n"));
    assert!(text.contains("frontier,0.5,0.5"));
    assert!(text.contains("alpha_star_constraint"));
}
