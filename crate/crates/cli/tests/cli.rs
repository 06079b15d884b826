use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coshflows"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

/// Header and rows of a CSV file, split on commas.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn reduce_reports_quarter_capacity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("reduce");
    let o = run(&configs().join("06_reduce.json"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("capacities.csv"));
    let cap = header.iter().position(|h| h == "capacity").unwrap();
    let row = rows.iter().find(|r| r[0] == "fixture:three_chain").unwrap();
    assert!((row[cap].parse::<f64>().unwrap() - 0.25).abs() < 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "passed");
    assert!(manifest["files"].as_array().unwrap().iter().any(|f| f["name"] == "capacities.csv"));
}

#[test]
fn two_node_trajectory_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("evolve");
    let o = run(&configs().join("evolve_two_node.json"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(header[1], "node:a");
    assert_eq!(rows.len(), 21);
    for r in rows {
        let t: f64 = r[0].parse().unwrap();
        let a: f64 = r[1].parse().unwrap();
        assert!((a - (0.5 + 0.5 * (-2.0 * t).exp())).abs() < 1e-10, "t = {t}: {a}");
    }
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    for text in ["{ not json", r#"{"kind":"reduce","params":{"seed":1,"typo":2}}"#, r#"{"kind":"nope"}"#] {
        let cfg = write_config(tmp.path(), text);
        let o = run(&cfg, &out);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!out.exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("12_gillespie.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a).status.success());
    assert!(run(&cfg, &b).status.success());
    let mut names: Vec<String> =
        fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "report.json"));
    for n in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn exhausted_budget_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"kind":"reduce","time_budget_s":1e-9,"params":{"random_networks":1000,"seed":1}}"#,
    );
    let out = tmp.path().join("fail");
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let failure: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert!(failure["error"].as_str().unwrap().contains("budget"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = bin().env("COSHFLOWS_THREADS", "zero").arg("fixtures").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fixtures_export_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("fixtures").arg("--export").arg(tmp.path()).output().unwrap();
    assert!(o.status.success());
    let text = fs::read_to_string(tmp.path().join("three_chain.json")).unwrap();
    let net = coshflows::io::GraphFile::parse(&text).unwrap().two_terminal().unwrap();
    let cap = coshflows::network_reduction::capacity(&net, &[0.0; 3]).unwrap().capacity;
    assert!((cap - 0.25).abs() < 1e-12);
    // exported file is valid as a config source
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"kind":"reduce","params":{{"networks":["{}"],"random_networks":0,"seed":1}}}}"#,
            tmp.path().join("three_chain.json").display()
        ),
    );
    assert!(run(&cfg, &tmp.path().join("out")).status.success());
}
