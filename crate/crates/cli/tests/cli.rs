use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"{
  "paths": {"out_dir": "out"},
  "seed": 3,
  "cv": {"folds": 3, "repeats": 2},
  "synth": {"n_patients": 700, "n_variables": 5, "prevalence_target": 0.2,
            "missing_rate": 0.2, "sampling_rate_per_hour": 1.0, "seed": 3}
}"#;

fn chfhmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chfhmm"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = chfhmm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

fn trained() -> TempDir {
    let dir = workspace();
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    ok(dir.path(), &["--config", "cfg.json", "train"]);
    dir
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn synth_is_deterministic_and_seed_flag_wins() {
    let a = workspace();
    let b = workspace();
    ok(a.path(), &["--config", "cfg.json", "synth"]);
    ok(b.path(), &["--config", "cfg.json", "synth"]);
    assert_eq!(read(a.path(), "observations.csv"), read(b.path(), "observations.csv"));
    assert_eq!(read(a.path(), "outcomes.csv"), read(b.path(), "outcomes.csv"));
    assert!(read(a.path(), "observations.csv").starts_with("patient_id,variable,offset_minutes,value\n"));

    ok(b.path(), &["--config", "cfg.json", "--seed", "7", "synth"]);
    assert_ne!(read(a.path(), "outcomes.csv"), read(b.path(), "outcomes.csv"));
    let c = workspace();
    let cfg7 = CONFIG.replace("\"seed\": 3}", "\"seed\": 7}");
    fs::write(c.path().join("cfg.json"), cfg7).unwrap();
    ok(c.path(), &["--config", "cfg.json", "synth"]);
    assert_eq!(read(b.path(), "outcomes.csv"), read(c.path(), "outcomes.csv"));
}

#[test]
fn config_problems_exit_with_two() {
    let dir = workspace();
    let out = chfhmm(dir.path(), &["--config", "missing.json", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    fs::write(dir.path().join("bad.json"), r#"{"window_hourz": 12}"#).unwrap();
    assert_eq!(chfhmm(dir.path(), &["--config", "bad.json", "train"]).status.code(), Some(2));
    assert_eq!(chfhmm(dir.path(), &["--window-hours", "0", "train"]).status.code(), Some(2));
    assert_eq!(chfhmm(dir.path(), &["--score-table", "nope.json", "train"]).status.code(), Some(2));
    assert_eq!(chfhmm(dir.path(), &["frobnicate"]).status.code(), Some(2));
    // No synth section.
    fs::write(dir.path().join("plain.json"), "{}").unwrap();
    assert_eq!(chfhmm(dir.path(), &["--config", "plain.json", "synth"]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_with_one() {
    let dir = workspace();
    // Cohort files absent.
    assert_eq!(chfhmm(dir.path(), &["--config", "cfg.json", "train"]).status.code(), Some(1));
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    let out = chfhmm(dir.path(), &["--config", "cfg.json", "--k-clusters", "100000", "train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clustering"));
}

#[test]
fn train_writes_one_model_per_day_and_is_reproducible() {
    let dir = trained();
    let first = read(dir.path(), "model.json");
    let json: serde_json::Value = serde_json::from_str(&first).unwrap();
    let days: Vec<&String> = json["models"].as_object().unwrap().keys().collect();
    assert_eq!(days, ["2", "3", "4", "5"]);
    assert_eq!(json["config"]["window_hours"], 12);
    assert_eq!(json["features"]["cluster"]["medoids"].as_array().unwrap().len(), 4);
    ok(dir.path(), &["--config", "cfg.json", "train", "--dump"]);
    assert_eq!(first, read(dir.path(), "model.json"));
    assert!(read(dir.path(), "features.csv").starts_with("patient_id,window,y_1,"));
    assert!(read(dir.path(), "states.csv").starts_with("patient_id,target_day,window,symbol,state\n"));
    let fits: serde_json::Value = serde_json::from_str(&read(dir.path(), "fits.json")).unwrap();
    for day in ["2", "3", "4", "5"] {
        let windows = fits[day].as_array().unwrap();
        assert_eq!(windows.len(), 2);
        assert!(windows[0]["beta"].is_array() && windows[0]["iterations"].is_u64());
        assert!(windows[0]["grad_norm"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn train_reports_silhouette() {
    let dir = workspace();
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    let out = chfhmm(dir.path(), &["--config", "cfg.json", "train", "--silhouette"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7, "{text}");
    for (line, k) in lines.iter().zip(2..) {
        let mut parts = line.split(' ');
        assert_eq!(parts.next(), Some("silhouette"));
        assert_eq!(parts.next(), Some(format!("k={k}").as_str()));
        let value: f64 = parts.next().unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&value), "{text}");
        assert_eq!(parts.next().is_some(), k == 4, "{line}");
    }
}

#[test]
fn predict_scores_every_patient_and_day() {
    let dir = trained();
    ok(dir.path(), &["--config", "cfg.json", "predict"]);
    let text = read(dir.path(), "predictions.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("patient_id,target_day,eta"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len() % 4, 0);
    for r in &rows {
        let eta: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&eta));
    }

    // Scoring a subset gives the same numbers as scoring the whole file.
    let obs = read(dir.path(), "observations.csv");
    let first_id = rows[0][0];
    let subset: String = obs
        .lines()
        .filter(|l| l.starts_with("patient_id") || l.starts_with(&format!("{first_id},")))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("one.csv"), subset).unwrap();
    ok(dir.path(), &["--config", "cfg.json", "--observations", "one.csv", "predict"]);
    let single = read(dir.path(), "predictions.csv");
    let expected: String = text
        .lines()
        .filter(|l| l.starts_with("patient_id") || l.starts_with(&format!("{first_id},")))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(single, expected);
}

#[test]
fn predict_on_empty_cohort_writes_header_only() {
    let dir = trained();
    fs::write(dir.path().join("empty.csv"), "patient_id,variable,offset_minutes,value\n").unwrap();
    ok(dir.path(), &["--config", "cfg.json", "--observations", "empty.csv", "predict"]);
    assert_eq!(read(dir.path(), "predictions.csv"), "patient_id,target_day,eta\n");
}

#[test]
fn predict_rejects_unknown_variables() {
    let dir = trained();
    fs::write(
        dir.path().join("odd.csv"),
        "patient_id,variable,offset_minutes,value\nq1,lactate,30,2.5\nq1,heart_rate,40,90\n",
    )
    .unwrap();
    let out = chfhmm(dir.path(), &["--config", "cfg.json", "--observations", "odd.csv", "predict"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lactate"));
}

#[test]
fn evaluate_writes_report_and_long_metrics() {
    let dir = workspace();
    ok(dir.path(), &["--config", "cfg.json", "synth"]);
    ok(dir.path(), &["--config", "cfg.json", "evaluate"]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    for day in ["2", "3", "4", "5"] {
        let methods = report[day].as_object().unwrap();
        assert_eq!(methods.len(), 4);
        for m in methods.values() {
            for metric in ["aucpr", "cstat", "auroc"] {
                let s = &m[metric];
                assert!(s["ci_low"].as_f64().unwrap() <= s["mean"].as_f64().unwrap());
                assert!(s["mean"].as_f64().unwrap() <= s["ci_high"].as_f64().unwrap());
            }
        }
        assert_eq!(report["p_values"][day].as_object().unwrap().len(), 3);
    }
    let metrics = read(dir.path(), "metrics.csv");
    assert!(metrics.starts_with("day,method,metric,repeat,fold,value\n"));
    assert_eq!(metrics.lines().count() - 1, 4 * 4 * 3 * 2 * 3);
}

#[test]
fn curves_have_two_groups_per_day() {
    let dir = trained();
    ok(dir.path(), &["--config", "cfg.json", "curves"]);
    let text = read(dir.path(), "curves.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("group,target_day,mean_survival,ci_low,ci_high"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert!(r[0] == "death" || r[0] == "survival");
        for v in &r[2..] {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    for day in ["2", "3", "4", "5"] {
        let mean = |g: &str| -> f64 {
            rows.iter().find(|r| r[0] == g && r[1] == day).unwrap()[2].parse().unwrap()
        };
        assert!(mean("death") < mean("survival"), "day {day}");
    }
}
