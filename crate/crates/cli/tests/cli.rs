mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{sample_change, scratch_case};

fn safecase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safecase"))
        .args(args)
        .env_remove("SAFECASE_DIR")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn status_of_shipped_case() {
    let dir = scratch_case();
    let o = safecase(&["status", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("root G1: Valid"));
    assert!(!out.contains("Invalid") && !out.contains("Unknown"));
    for leaf in ["A1", "A2", "A3", "A4", "A5", "Sn1", "Sn2"] {
        assert!(out.lines().any(|l| l.starts_with(leaf) && l.contains("Valid")), "{leaf}");
    }

    let o = safecase(&["status", p(dir.path()), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status_map"]["G1"], "Valid");
}

#[test]
fn default_case_from_environment() {
    let dir = scratch_case();
    let o = Command::new(env!("CARGO_BIN_EXE_safecase"))
        .args(["query", "--tags", "fusion"])
        .env("SAFECASE_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "A4\tassumption\n");
}

#[test]
fn query_tags() {
    let dir = scratch_case();
    let o = safecase(&["query", p(dir.path()), "--tags", "braking distance"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "A2\tassumption\n");
    let o = safecase(&["query", p(dir.path()), "--tags", "AGV,rear-agent"]);
    assert_eq!(stdout(&o), "A1\tassumption\nA2\tassumption\nA5\tassumption\n");
    let o = safecase(&["query", p(dir.path()), "--tags", "AGV,rear-agent", "--all"]);
    assert_eq!(stdout(&o), "A1\tassumption\n");
}

#[test]
fn impact_exit_codes_follow_stage() {
    let dir = scratch_case();
    for (file, code, stage) in [("frame-rate.yaml", 0, 1), ("speed-change.yaml", 1, 2), ("structural.yaml", 1, 3)] {
        let o = safecase(&["impact", p(dir.path()), p(&sample_change(file))]);
        assert_eq!(o.status.code(), Some(code), "{file}: {}", stderr(&o));
        let report: serde_yaml::Value = serde_yaml::from_slice(&o.stdout).unwrap();
        assert_eq!(report["stage"].as_u64(), Some(stage), "{file}");
    }
    let o = safecase(&["impact", p(dir.path()), p(&sample_change("speed-change.yaml"))]);
    let report: serde_yaml::Value = serde_yaml::from_slice(&o.stdout).unwrap();
    assert_eq!(report["reevaluated"]["Sn2"]["after"]["value"], "Invalid");
    assert_eq!(report["status_map"]["G1"], "Invalid");
    assert_eq!(report["remediations"]["Sn2"]["action"], "retest");
    // the report is stored beside the case
    assert_eq!(fs::read_dir(dir.path().join("changes")).unwrap().count(), 6);
}

#[test]
fn apply_stage_one_then_refuse_stage_two() {
    let dir = scratch_case();
    let case = p(dir.path());
    let run_impact = |file: &str| -> std::path::PathBuf {
        let o = safecase(&["impact", case, p(&sample_change(file))]);
        let report: serde_yaml::Value = serde_yaml::from_slice(&o.stdout).unwrap();
        let id = report["change_id"].as_str().unwrap().to_string();
        dir.path().join("changes").join(format!("{id}.impact.yaml"))
    };

    let speed_report = run_impact("speed-change.yaml");
    let o = safecase(&["apply", case, p(&sample_change("speed-change.yaml")), p(&speed_report)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage 2"), "{}", stderr(&o));

    let fr_report = run_impact("frame-rate.yaml");
    let o = safecase(&["apply", case, p(&sample_change("frame-rate.yaml")), p(&fr_report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("case.yaml")).unwrap();
    let doc: serde_yaml::Value = serde_yaml::from_str(&text).unwrap();
    assert_eq!(doc["parameters"]["frame_rate"]["value"].as_f64(), Some(20.0));
    assert_eq!(fs::read_dir(dir.path().join("snapshots")).unwrap().count(), 1);
    assert_eq!(safecase(&["status", case]).status.code(), Some(0));

    // report computed before the apply is now stale
    let o = safecase(&["apply", case, p(&sample_change("speed-change.yaml")), p(&speed_report)]);
    assert_eq!(o.status.code(), Some(1));
    let o = safecase(&["apply", case, p(&sample_change("frame-rate.yaml")), p(&fr_report)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("closed"));
}

#[test]
fn snapshot_and_diff() {
    let dir = scratch_case();
    let case = p(dir.path());
    let o = safecase(&["snapshot", case, "--label", "baseline"]);
    assert_eq!(o.status.code(), Some(0));
    let id = stdout(&o).trim().to_string();
    assert_eq!(id.len(), 64);
    let o = safecase(&["snapshot", case, "--label", "again"]);
    assert_eq!(stdout(&o).trim(), id);

    let o = safecase(&["diff", case, &id[..10], "current"]);
    assert_eq!(o.status.code(), Some(0));
    let d: serde_yaml::Value = serde_yaml::from_slice(&o.stdout).unwrap();
    assert_eq!(d["metadata_changed"], false);
    assert!(d["env"]["modified"].as_sequence().unwrap().is_empty());
    assert_eq!(safecase(&["diff", case, "ffffffff", "current"]).status.code(), Some(2));
}

#[test]
fn validate_reports_problems() {
    let dir = scratch_case();
    let case = p(dir.path());
    let o = safecase(&["validate", case]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("ok: 13 nodes, 7 leaves, 7 bindings, 2 artifacts"));

    let path = dir.path().join("case.yaml");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("{from: G3, to: Sn2, kind: SupportedBy}", "{from: Sn2, to: G3, kind: SupportedBy}")).unwrap();
    let o = safecase(&["validate", case]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("malformed case"));

    fs::write(&path, text.replace("0.95", "0.97")).unwrap();
    assert_eq!(safecase(&["validate", case]).status.code(), Some(0));
    fs::write(dir.path().join("artifacts/coverage_report.yaml"), "tool: x\nmetrics: {}\n").unwrap();
    let o = safecase(&["validate", case]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("digest"));
}

#[test]
fn usage_errors() {
    assert_eq!(safecase(&[]).status.code(), Some(2));
    assert_eq!(safecase(&["query"]).status.code(), Some(2));
    assert_eq!(safecase(&["status", "/definitely/not/here"]).status.code(), Some(2));
    let dir = scratch_case();
    let bad = dir.path().join("bad.yaml");
    fs::write(&bad, "source: incident_report\npayload: nothing\n").unwrap();
    let o = safecase(&["impact", p(dir.path()), p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("neither tags nor parameter updates"));
    fs::write(&bad, "source: incident_report\nparam_updates: {warp: 9}\n").unwrap();
    assert_eq!(safecase(&["impact", p(dir.path()), p(&bad)]).status.code(), Some(2));
    assert_eq!(safecase(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let scenario = common::workspace().join("sample-case/artifacts/fp_scenario.yaml");
    let sample = common::workspace().join("sample-case");
    let o = safecase(&["simulate", p(&scenario), "-o", p(&csv), "--case", p(&sample)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,d_agv_rear,detected_fusion,fp_ml,v_agv,v_rear\n"));
    assert_eq!(text.lines().count(), 802);

    let o = safecase(&["simulate", p(&scenario), "-o", p(&csv), "--case", p(&sample), "--set", "v_agv=4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("collision"));
    // unlinked parameters cannot be resolved
    assert_eq!(safecase(&["simulate", p(&scenario), "-o", p(&csv)]).status.code(), Some(2));
}
