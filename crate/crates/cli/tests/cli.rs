use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddopt() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddopt"));
    cmd.env_remove("DDOPT_SEED");
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY_POLARIZED: &[&str] = &[
    "--set",
    "trials=2",
    "--set",
    "horizon=20",
    "--set",
    "population.size=40",
    "--set",
    "n_mb=10",
    "--set",
    "oracle.restarts=2",
];

fn run_tiny(out: &Path, extra: &[&str]) -> Output {
    ddopt()
        .arg("run")
        .arg("--config")
        .arg(configs().join("polarized.toml"))
        .args(["--profile", "fast"])
        .args(TINY_POLARIZED)
        .args(extra)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn run_writes_aggregate_and_summary_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_tiny(dir.path(), &[]);
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("vanilla"), "{text}");
    assert!(text.contains("composite"), "{text}");
    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("algorithm,horizon,trials,iter,"));
    // 2 algorithms x 21 rows + header
    assert_eq!(agg.lines().count(), 2 * 21 + 1);
    for name in ["vanilla_trial0.csv", "vanilla_trial1.csv", "composite_trial0.csv", "composite_trial1.csv"] {
        assert!(dir.path().join("runs").join(name).is_file(), "missing {name}");
    }
    assert!(dir.path().join("metadata.json").is_file());
}

#[test]
fn missing_config_exits_2_naming_path() {
    let o = ddopt()
        .args(["run", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.toml"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn unknown_override_key_exits_2() {
    let o = ddopt()
        .args(["describe", "--scenario", "polarized", "--set", "optimizer.etaa=1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("etaa"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment\nscenario = 1\n").unwrap();
    let o = ddopt().arg("describe").arg("--config").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn set_override_is_echoed_in_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_tiny(dir.path(), &["--set", "eta=0.01"]);
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["optimizer"]["eta"].as_f64(), Some(0.01));
    let overrides = meta["overrides"].as_array().unwrap();
    assert!(overrides
        .iter()
        .any(|o| o["key"] == "optimizer.eta" && o["value"] == "0.01"), "{overrides:?}");
}

#[test]
fn seed_env_overrides_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddopt()
        .env("DDOPT_SEED", "77")
        .args(["describe", "--scenario", "recommender"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("seed = 77"), "{text}");
    assert!(text.contains("DDOPT_SEED"));
    let bad = ddopt()
        .env("DDOPT_SEED", "minus one")
        .args(["describe", "--scenario", "recommender"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    drop(dir);
}

#[test]
fn repeated_runs_give_identical_aggregate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_tiny(a.path(), &[]).status.success());
    assert!(ddopt()
        .args(["--jobs", "1"])
        .arg("run")
        .arg("--config")
        .arg(configs().join("polarized.toml"))
        .args(TINY_POLARIZED)
        .arg("--out")
        .arg(b.path())
        .output()
        .unwrap()
        .status
        .success());
    let read = |d: &Path| std::fs::read(d.join("aggregate.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn check_suite_filter_runs_one_suite() {
    let o = ddopt().args(["check", "--suite", "sensitivity"]).output().unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 1);
    assert!(text.starts_with("PASS sensitivity"), "{text}");
}

#[test]
fn check_all_suites_pass_by_default() {
    let o = ddopt().arg("check").output().unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    for suite in ["sensitivity", "projection", "transport", "vk", "lyapunov", "steady_state"] {
        assert!(text.contains(&format!("PASS {suite}")), "{text}");
    }
}

#[test]
fn injected_failure_names_the_suite() {
    let o = ddopt()
        .args(["check", "--suite", "projection", "--inject-failure", "projection"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL projection"), "{text}");
    assert!(text.lines().any(|l| l.trim_start().starts_with("projection:")), "{text}");
}

#[test]
fn unknown_suite_is_a_config_error() {
    let o = ddopt().args(["check", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn oracle_json(dir: &Path) -> serde_json::Value {
    let o = ddopt()
        .arg("oracle")
        .arg("--config")
        .arg(configs().join("recommender.toml"))
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("u* = ["));
    serde_json::from_str(&std::fs::read_to_string(dir.join("oracle.json")).unwrap()).unwrap()
}

#[test]
fn recommender_oracle_is_feasible_converged_and_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = oracle_json(a.path());
    let second = oracle_json(b.path());
    let o = &first["oracle"];
    assert!(o["residual"].as_f64().unwrap() <= 1e-8, "{o}");
    let u: Vec<f64> = o["u_star"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(u.len(), 100);
    let sum: f64 = u.iter().sum();
    assert!((sum - 250.0).abs() <= 1e-8, "budget {sum}");
    assert!(u.iter().all(|&x| (0.0..=5.0).contains(&x)));
    assert_eq!(first["oracle"]["u_star"], second["oracle"]["u_star"]);
}

#[test]
fn describe_prints_every_default() {
    for scenario in ["polarized", "recommender", "rate_sweep"] {
        let o = ddopt().args(["describe", "--scenario", scenario]).output().unwrap();
        assert!(o.status.success());
        let text = stdout(&o);
        for section in [
            "[experiment]",
            "[population]",
            "[dynamics]",
            "[objective]",
            "[constraint]",
            "[optimizer]",
            "[dfo]",
            "[oracle]",
            "[diagnostics]",
        ] {
            assert!(text.contains(section), "{scenario}: missing {section}");
        }
        for key in ["seed", "trials", "horizon", "eta", "n_mb", "sensitivity", "ss_tol", "w1_atoms", "ground_metric"] {
            assert!(text.lines().any(|l| l.starts_with(&format!("{key} ="))), "{scenario}: missing {key}");
        }
        // The printed config is itself a complete, loadable config.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resolved.toml");
        std::fs::write(&path, &text).unwrap();
        let again = ddopt().arg("describe").arg("--config").arg(&path).output().unwrap();
        assert!(again.status.success(), "{}", stderr(&again));
        assert_eq!(stdout(&again), text);
    }
}

#[test]
fn sweep_rejects_other_scenarios() {
    let o = ddopt()
        .arg("sweep")
        .arg("--config")
        .arg(configs().join("recommender.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_prints_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = ddopt()
        .arg("sweep")
        .arg("--config")
        .arg(configs().join("rate_sweep.toml"))
        .args(["--set", "sweep.horizons=[50,100,200]", "--set", "trials=2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("log-log slope"));
    assert!(dir.path().join("runs").join("composite_T200_trial1.csv").is_file());
}
