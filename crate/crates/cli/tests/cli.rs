use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smcal::data::save_dataset;
use smcal::{generate, Regime, Scenario, ScenarioSpec};

fn smcal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smcal")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn dataset(dir: &Path, scenario: Scenario, n: usize, d: usize, seed: u64) -> PathBuf {
    let (data, _) = generate(&ScenarioSpec::new(scenario, n, seed).with_d(d)).unwrap();
    let path = dir.join(format!("data{seed}.csv"));
    save_dataset(&data, &path).unwrap();
    path
}

const QUICK: &[&str] = &["--lambda-count", "3", "--alpha-grid", "1,4", "--folds", "3", "--step", "backtracking"];

#[test]
fn simulate_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let mut args = vec!["simulate", "--scenario", "linear-uniform", "--n", "50", "--d", "5", "--reps", "3"];
        args.extend(["--seed", "7", "--threads", threads, "--output", out]);
        args.extend(QUICK);
        let o = smcal(&args, dir.path());
        ok(&o);
        let table = String::from_utf8(o.stdout).unwrap();
        assert!(table.contains("pcd") && table.contains("estimated_value"));
        let csv = std::fs::read(dir.path().join(out).join("replicates.csv")).unwrap();
        let json = std::fs::read(dir.path().join(out).join("summary.json")).unwrap();
        runs.push((csv, json));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let summary: serde_json::Value = serde_json::from_slice(&runs[0].1).unwrap();
    let pcd = summary["metrics"]["pcd"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pcd));
    assert_eq!(summary["metrics"]["pcd"]["n_ok"], 3);
}

#[test]
fn fit_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), Scenario::LinearUniform, 120, 5, 1);
    let data = data.to_str().unwrap();
    let mut args = vec!["fit", "--input", data, "--output", "r.json", "--cv-table", "cv.csv", "--seed", "3"];
    args.extend(QUICK);
    ok(&smcal(&args, dir.path()));
    let regime = Regime::load(dir.path().join("r.json")).unwrap();
    assert_eq!(regime.beta.len(), 5);
    assert!(regime.sweeps.is_some() && regime.final_loss.is_some());
    assert_eq!(std::fs::read_to_string(dir.path().join("cv.csv")).unwrap().lines().count(), 7);

    ok(&smcal(&["predict", "--regime", "r.json", "--input", data, "--output", "p.csv"], dir.path()));
    let pred = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next(), Some("decision"));
    let decisions: Vec<&str> = lines.collect();
    assert_eq!(decisions.len(), 120);
    assert!(decisions.iter().all(|d| *d == "0" || *d == "1"));

    let eval = ["evaluate", "--input", data, "--regime", "r.json", "--bootstrap", "200", "--seed", "5", "--output"];
    let a = smcal(&[&eval[..], &["e1.json"]].concat(), dir.path());
    ok(&a);
    assert!(String::from_utf8_lossy(&a.stdout).contains("95% CI"));
    ok(&smcal(&[&eval[..], &["e2.json", "--threads", "2"]].concat(), dir.path()));
    let e1 = std::fs::read(dir.path().join("e1.json")).unwrap();
    assert_eq!(e1, std::fs::read(dir.path().join("e2.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&e1).unwrap();
    assert!(v["bootstrap"]["ci_low"].as_f64().unwrap() <= v["bootstrap"]["ci_high"].as_f64().unwrap());
}

#[test]
fn fixed_huge_penalty_zeroes_free_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), Scenario::LinearUniform, 60, 6, 2);
    let o = smcal(&["fit", "--input", data.to_str().unwrap(), "--lambda", "1e9", "--alpha", "2"], dir.path());
    ok(&o);
    let regime = Regime::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(regime.beta[0].abs(), 1.0);
    assert!(regime.beta[1..].iter().all(|b| *b == 0.0));
}

#[test]
fn fit_keeps_few_false_positives() {
    // The contrast depends on x1 and x2 only; the other 48 coordinates are noise.
    let dir = tempfile::tempdir().unwrap();
    let mut false_pos = 0;
    for seed in 0..3 {
        let data = dataset(dir.path(), Scenario::LinearUniform, 200, 50, 10 + seed);
        let mut args =
            vec!["fit", "--input", data.to_str().unwrap(), "--lambda-min-ratio", "0.2", "--lambda-count", "6"];
        args.extend(["--alpha-grid", "0.5,2,10", "--step", "backtracking"]);
        let o = smcal(&args, dir.path());
        ok(&o);
        let r = Regime::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
        false_pos += r.beta[2..].iter().filter(|b| **b != 0.0).count();
    }
    assert!(false_pos <= 15, "{false_pos} noise coordinates selected over 3 fits");
}

#[test]
fn matching_everyone_doubles_mean_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "y,a,x1\n1,1,0.5\n3,1,-0.5\n2,0,0.1\n6,0,0.2\n").unwrap();
    std::fs::write(dir.path().join("all.json"), Regime::new(vec![1.0], -10.0).to_json().unwrap()).unwrap();
    let o = smcal(&["evaluate", "--input", "d.csv", "--regime", "all.json", "--output", "v.json"], dir.path());
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("v.json")).unwrap()).unwrap();
    // Treated outcomes 1 and 3 weighted by 1 / 0.5 over n = 4.
    assert!((v["estimate"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), Scenario::LinearUniform, 60, 4, 3);
    std::fs::write(dir.path().join("run.conf"), "lambda = 1e9\nalpha = 2\nseed = 4\n").unwrap();
    let d = data.to_str().unwrap();
    let o = smcal(&["fit", "--input", d, "--config", "run.conf"], dir.path());
    ok(&o);
    let r = Regime::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.lambda, 1e9);
    let o = smcal(&["fit", "--input", d, "--config", "run.conf", "--lambda", "0.001"], dir.path());
    ok(&o);
    let r = Regime::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.lambda, 0.001);
    std::fs::write(dir.path().join("bad.conf"), "colour = red\n").unwrap();
    assert_eq!(smcal(&["fit", "--input", d, "--config", "bad.conf"], dir.path()).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = smcal(&["fit", "--input", "missing.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).to_lowercase().contains("no such file"));
    assert_eq!(smcal(&["fit", "--input", "x.csv", "--unknown"], dir.path()).status.code(), Some(2));
    assert_eq!(smcal(&["--threads", "0", "simulate", "--scenario", "model1"], dir.path()).status.code(), Some(2));
    assert_eq!(smcal(&["simulate", "--scenario", "model9"], dir.path()).status.code(), Some(1));
    assert_eq!(smcal(&["simulate", "--scenario", "model1", "--d", "3"], dir.path()).status.code(), Some(1));

    std::fs::write(dir.path().join("bad.csv"), "y,a,x1\n1,2,0.5\n").unwrap();
    assert_eq!(smcal(&["fit", "--input", "bad.csv"], dir.path()).status.code(), Some(1));

    let data = dataset(dir.path(), Scenario::LinearUniform, 30, 4, 4);
    std::fs::write(dir.path().join("r.json"), Regime::new(vec![1.0, 0.0], 0.0).to_json().unwrap()).unwrap();
    let o = smcal(&["predict", "--regime", "r.json", "--input", data.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "dimension mismatch");
    let o =
        smcal(&["evaluate", "--input", data.to_str().unwrap(), "--regime", "r.json", "--propensity", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1), "overlap");
}
