use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nettack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nettack"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = nettack(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "g", "--nodes", "80", "--features", "30", "--seed", "2"], d);
    ok(&["split", "--graph", "g", "--seed", "1", "--out", "split.json"], d);
    ok(&["train-surrogate", "--graph", "g", "--split", "split.json", "--out", "model.json"], d);
    dir
}

#[test]
fn lcc_writes_id_mapping() {
    let dir = prepared();
    ok(&["lcc", "--in", "g", "--out", "l"], dir.path());
    let mapping = fs::read_to_string(dir.path().join("l/mapping.tsv")).unwrap();
    let lines: Vec<&str> = mapping.lines().collect();
    assert_eq!(lines[0], "new_id\toriginal_id");
    assert!(lines[1..].iter().enumerate().all(|(i, l)| l.starts_with(&format!("{i}\t"))));
}

#[test]
fn attack_log_respects_flags() {
    let dir = prepared();
    let d = dir.path();
    ok(
        &[
            "attack", "--graph", "g", "--model", "model.json", "--target", "3", "--budget", "4",
            "--structure-only", "--out", "s.json", "--graph-out", "attacked",
        ],
        d,
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    let log = v["result"]["perturbations"].as_array().unwrap();
    assert!(log.len() <= 4);
    assert!(log.iter().all(|p| p["flip"]["kind"] == "edge"));
    assert!(v["constraint_audit"]["steps"].as_array().unwrap().len() == log.len());
    assert!(d.join("attacked/edges.tsv").exists());

    ok(
        &[
            "attack", "--graph", "g", "--model", "model.json", "--target", "3", "--mode", "influencer",
            "--attackers", "10,11", "--budget", "3", "--out", "i.json",
        ],
        d,
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("i.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["attackers"], serde_json::json!([10, 11]));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = prepared();
    let d = dir.path();
    let out = nettack(&["attack", "--graph", "g", "--model", "model.json", "--target", "999", "--out", "x.json"], d);
    assert!(!out.status.success());
    assert!(!d.join("x.json").exists());
    let out = nettack(&["attack", "--graph", "g", "--model", "model.json", "--target", "1", "--structure-only", "--features-only", "--out", "x.json"], d);
    assert!(!out.status.success());
    let out = nettack(&["report", "--in", ".", "--table", "9"], d);
    assert!(!out.status.success());
}
