use std::path::Path;
use std::process::{Command, Output};

fn vsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out: Vec<_> = walk(dir);
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let Ok(rd) = std::fs::read_dir(dir) else { return Vec::new() };
    rd.flat_map(|e| {
        let p = e.unwrap().path();
        if p.is_dir() { walk(&p) } else { vec![p] }
    })
    .collect()
}

#[test]
fn gen_writes_requested_count_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = vsr(&["gen", "--config", "2,1,1", "--ops", "inv,add,sub,mul", "--count", "10", "--seed", "1", "--out", path(d.path())]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = files_under(a.path());
    assert_eq!(fa.len(), 10);
    for (x, y) in fa.iter().zip(files_under(b.path())) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn gen_zero_count_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let o = vsr(&["gen", "--config", "3,2,2", "--count", "0", "--out", path(d.path())]);
    assert!(o.status.success());
    assert!(files_under(d.path()).is_empty());
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(vsr(&["gen", "--config", "2,1", "--out", path(d.path())]).status.code(), Some(2));
    assert_eq!(vsr(&["gen", "--config", "1,0,1", "--ops", "add,mul", "--out", path(d.path())]).status.code(), Some(2));
    assert_eq!(vsr(&["run", "--algorithm", "sa", "--data", path(d.path())]).status.code(), Some(2));
    assert_eq!(vsr(&["run", "--algorithm", "mcts", "--data", "/nonexistent/x.json"]).status.code(), Some(2));
}

#[test]
fn failed_equation_is_reported_and_exits_with_one() {
    let d = tempfile::tempdir().unwrap();
    let group = d.path().join("mixed");
    std::fs::create_dir_all(&group).unwrap();
    std::fs::write(group.join("bad.json"), "{\"num_vars\": 1}").unwrap();
    let o = vsr(&["export-bundled", "--out", path(d.path())]);
    assert!(o.status.success());
    std::fs::copy(d.path().join("livermore2/Vars4-1.json"), group.join("good.json")).unwrap();
    let summary = d.path().join("summary.csv");
    let o = vsr(&[
        "run", "--algorithm", "mcts", "--episodes", "3", "--test-size", "50",
        "--data", path(&group), "--summary", path(&summary),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["equation_id"], "bad");
    assert!(lines[0]["error"].is_string());
    assert_eq!(lines[1]["equation_id"], "good");
    assert!(lines[1]["error"].is_null());
    assert!(lines[1]["metrics"]["nmse"].is_number());
    let csv = std::fs::read_to_string(summary).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("mixed,mcts,2,1,"));
}

#[test]
fn eval_ground_truth_scores_zero() {
    let d = tempfile::tempdir().unwrap();
    vsr(&["export-bundled", "--out", path(d.path())]);
    let eq = d.path().join("feynman/I.39.22.json");
    let o = vsr(&["eval", "--expr", path(&eq), "--equation", path(&eq), "--n", "500"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["nmse"], 0.0);
    assert_eq!(r["r2"], 1.0);

    let expr = d.path().join("e.txt");
    std::fs::write(&expr, "x1 + x2 + x3 + x4").unwrap();
    let o = vsr(&["eval", "--expr", path(&expr), "--equation", path(&d.path().join("livermore2/Vars4-21.json"))]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["nmse"].as_f64().unwrap() > 0.0);
}

#[test]
fn count_space_agrees_with_closed_form() {
    let o = vsr(&["count-space", "--max-len", "7"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4 * 3 * 2);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn run_reports_match_published_schema() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/run_report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();

    let d = tempfile::tempdir().unwrap();
    vsr(&["gen", "--config", "2,1,1", "--ops", "inv,add,sub,mul", "--count", "2", "--out", path(d.path())]);
    let group = d.path().join("trig-2-1-1");
    std::fs::write(group.join("broken.json"), "{}").unwrap();
    let mut lines = Vec::new();
    for args in [
        vec!["--algorithm", "vsr-mcts", "--episodes", "5"],
        vec!["--algorithm", "gp", "--generations", "3", "--pool", "10", "--timing"],
    ] {
        let o = vsr(&[&["run", "--data", path(&group), "--test-size", "50"], &args[..]].concat());
        lines.extend(String::from_utf8(o.stdout).unwrap().lines().map(str::to_string));
    }
    assert_eq!(lines.len(), 6);
    for line in &lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if let Err(e) = validator.validate(&v) {
            panic!("{line}: {e}");
        }
    }

    let mut v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    v.as_object_mut().unwrap().remove("recovered");
    assert!(!validator.is_valid(&v));
}
