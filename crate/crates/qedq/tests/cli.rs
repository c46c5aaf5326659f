use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qedq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qedq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

const MMINF: &str = r#"{"model": {"family": "infinite_server", "n": 10, "lambda": 10.0},
    "simulation": {"horizon": 1.0, "replications": 2}}"#;

#[test]
fn simulate_writes_one_audited_log_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), MMINF).unwrap();
    let o = qedq(&["simulate", "--config", "m.json", "--seed", "5", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = only_run_dir(&dir.path().join("runs"));
    assert!(run.file_name().unwrap().to_str().unwrap().ends_with("-5"));
    for rep in 0..2 {
        let log = std::fs::read_to_string(run.join(format!("paths/events_{rep}.csv"))).unwrap();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some("t,event_type,Q_after"));
        // flow conservation: each row moves the count by the event's sign
        let mut q: i64 = -1;
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            let after: i64 = f[2].parse().unwrap();
            match f[1] {
                "initial" => assert_eq!(after, 10),
                "arrival" => assert_eq!(after, q + 1),
                "departure" | "abandonment" => assert_eq!(after, q - 1),
                other => panic!("unexpected event {other}"),
            }
            q = after;
        }
    }
    assert!(run.join("ensemble.csv").exists());
    assert!(run.join("resolved_config.json").exists());
    assert!(!run.join("paths/events_2.csv").exists());
}

#[test]
fn same_seed_gives_identical_outputs_and_a_fresh_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), MMINF).unwrap();
    for _ in 0..2 {
        let o = qedq(&["simulate", "--config", "m.json", "--seed", "9", "--out", "runs"], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    assert_eq!(dirs.len(), 2);
    assert!(dirs[1].to_str().unwrap().ends_with("-9-1"));
    for f in ["paths/events_0.csv", "paths/events_1.csv", "ensemble.csv", "replications.csv"] {
        assert_eq!(std::fs::read(dirs[0].join(f)).unwrap(), std::fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resolved_config_reloads_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), MMINF).unwrap();
    qedq(&["simulate", "--config", "m.json", "--seed", "3", "--out", "a"], dir.path());
    let first = only_run_dir(&dir.path().join("a"));
    let resolved = first.join("resolved_config.json");
    let o = qedq(&["simulate", "--config", resolved.to_str().unwrap(), "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let second = only_run_dir(&dir.path().join("b"));
    assert_eq!(first.file_name(), second.file_name());
    assert_eq!(std::fs::read(first.join("ensemble.csv")).unwrap(), std::fs::read(second.join("ensemble.csv")).unwrap());
}

#[test]
fn unknown_family_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), r#"{"model": {"family": "mm1", "n": 10}, "simulation": {"horizon": 1}}"#).unwrap();
    let o = qedq(&["simulate", "--config", "m.json", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.family"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn verify_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| qedq(args, dir.path()).status.code();
    assert_eq!(code(&["verify", "--experiments", "poisson_clt"]), Some(64));
    assert_eq!(code(&["verify", "--seed", "1"]), Some(64));
    assert_eq!(code(&["verify", "--seed", "1", "--experiments", "nope"]), Some(64));
    assert_eq!(code(&["verify", "--seed", "1", "--bogus"]), Some(64));
    assert_eq!(code(&["verify", "--seed", "1", "--all", "--experiments", "fluid"]), Some(64));
}

#[test]
fn single_experiment_gives_a_single_verdict_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = qedq(&["verify", "--seed", "1", "--experiments", "poisson_clt", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let run = only_run_dir(&dir.path().join("runs"));
    let verdicts = std::fs::read_to_string(run.join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(verdicts.trim()).unwrap();
    assert_eq!(v["experiment"], "poisson_clt");
    assert_eq!(v["status"], "pass");
    assert_eq!(v["seed"], 1);
    assert!(v.get("runtime_s").is_none());
    let summary = std::fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.starts_with("experiment,status,statistic,threshold,runtime_s,replications\npoisson_clt,pass,"));
}

#[test]
fn underpowered_verify_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"params": {"poisson_clt": {"replications": 50}}}"#).unwrap();
    let o = qedq(&["verify", "--config", "c.json", "--seed", "1", "--experiments", "poisson_clt", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"params": {"poisson_clt": {"ks_threshold": 0.0001}}}"#).unwrap();
    let o = qedq(&["verify", "--config", "c.json", "--seed", "1", "--experiments", "poisson_clt", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

fn limit_run(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.json"), config).unwrap();
    let o = qedq(&["limit", "--config", "l.json", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = only_run_dir(&dir.path().join("runs"));
    (dir, run)
}

#[test]
fn integral_map_demo_reproduces_the_exponential() {
    let (_d, run) = limit_run(r#"{"limit": {"kind": "integral_map", "theta": 1.0, "x0": 1.0, "horizon": 2.0, "dt": 0.001}}"#);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert!(s["sup_error_vs_exponential"].as_f64().unwrap() < 1e-3);
    let x = std::fs::read_to_string(run.join("x.csv")).unwrap();
    let last: Vec<f64> = x.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 2.0).abs() < 1e-12);
    assert!((last[1] - (-2.0f64).exp()).abs() < 1e-3);
}

#[test]
fn reflected_map_demo_stays_below_the_barrier() {
    let (_d, run) = limit_run(
        r#"{"limit": {"kind": "reflected_map", "theta": 0.5, "beta": -2.0, "kappa": 1.0, "x0": 0.0, "horizon": 3.0, "dt": 0.001}}"#,
    );
    let x = std::fs::read_to_string(run.join("x.csv")).unwrap();
    let max = x.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).fold(f64::MIN, f64::max);
    assert!(max <= 1.0 + 1e-12, "{max}");
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert!(s["max_regulator"].as_f64().unwrap() > 0.0);
}

#[test]
fn ou_limit_exports_ensemble_statistics() {
    let (_d, run) = limit_run(r#"{"limit": {"kind": "ou", "x0": 2.0, "horizon": 1.0, "dt": 0.01, "replications": 2000, "grid_dt": 0.5}}"#);
    let text = std::fs::read_to_string(run.join("ensemble.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    // mean 2e^{-t}, variance 1 − e^{-2t}
    for r in &rows {
        let t = r[0];
        assert!((r[2] - 2.0 * (-t).exp()).abs() <= 4.0 * r[4].max(1e-12), "t={t} mean={}", r[2]);
        assert!((r[3] - (1.0 - (-2.0 * t).exp())).abs() < 0.1, "t={t} var={}", r[3]);
    }
    assert!(run.join("path_0.jsonl").exists());
}

#[test]
fn sweep_writes_one_ensemble_per_scale() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.json"),
        r#"{"sweep": {"beta": 1.0, "theta": 0.5, "n_list": [25, 100], "horizon": 1.0, "replications": 20}}"#,
    )
    .unwrap();
    let o = qedq(&["sweep", "--config", "s.json", "--out", "runs"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = only_run_dir(&dir.path().join("runs"));
    assert!(run.join("ensemble_n25.csv").exists() && run.join("ensemble_n100.csv").exists());
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s[1]["lambda"], 90.0);
}
