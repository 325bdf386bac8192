use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use yada_core::{bind, evaluate, parse_path, parse_schema, DataTree};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn yada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yada"))
        .args(args)
        .output()
        .expect("spawn yada")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fx(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

/// Copy of the shipped harness config with absolute paths, edited by `f`.
fn harness_copy(dir: &Path, f: impl Fn(String) -> String) -> String {
    let base = fixtures().display().to_string();
    let text = fs::read_to_string(fixtures().join("harness.toml"))
        .unwrap()
        .replace("\"air-quality", &format!("\"{base}/air-quality"))
        .replace("\"datasets/", &format!("\"{base}/datasets/"));
    let path = dir.join("harness.toml");
    fs::write(&path, f(text)).unwrap();
    path.display().to_string()
}

fn sha256(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn compile_prints_reparseable_canonical_text() {
    let o = yada(&["compile", &fx("air-quality.yada")]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let original = parse_schema(&fs::read_to_string(fixtures().join("air-quality.yada")).unwrap()).unwrap();
    assert_eq!(parse_schema(&text).unwrap(), original);
    // printing is a fixed point
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.yada");
    fs::write(&again, &text).unwrap();
    assert_eq!(stdout(&yada(&["compile", again.to_str().unwrap()])), text);
}

#[test]
fn parse_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.yada");
    fs::write(&bad, "module m { leaf x { type decimal; } }").unwrap();
    for args in [
        vec!["compile".to_string(), bad.display().to_string()],
        vec!["compile".into(), dir.path().join("missing.yada").display().to_string()],
        vec!["query".into(), fx("air-quality.yada"), fx("air-quality-sample.json"), "AirGasesURI".into()],
        vec!["query".into(), fx("air-quality.yada"), fx("air-quality-sample.json"), "/NoSuch/value".into()],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = yada(&args);
        assert_eq!(code(&o), 1, "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    }
}

#[test]
fn config_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| t);
    let sub = dir.path().join("u");
    fs::create_dir_all(&sub).unwrap();
    let unknown = harness_copy(&sub, |t| t.replace("[sweep]", "[sweep]\nnodes = 3"));
    for args in [
        vec!["ingest"],
        vec!["--config", "/definitely/not/here.toml", "ingest"],
        vec!["--config", &cfg, "--set", "ingest.inter_reading_gap_ms=0", "ingest"],
        vec!["--config", &cfg, "--set", "sweep.num_nodes=[]", "simulate"],
        vec!["--config", &cfg, "--set", "sim.jitter_ms=-1", "simulate"],
        vec!["--config", &cfg, "--set", "bogus", "ingest"],
        vec!["--config", &unknown, "ingest"],
    ] {
        assert_eq!(code(&yada(&args)), 2, "{args:?}");
    }
}

#[test]
fn under_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| t.replace("used_samples = 800", "used_samples = 5000"));
    let o = yada(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "ingest"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("garage-door"));

    let csv = dir.path().join("header-only.csv");
    fs::write(&csv, "date,time,fridge_temperature,temp_condition,label,type\n").unwrap();
    let cfg = harness_copy(dir.path(), |t| {
        t.replace(&format!("{}/datasets/fridge.csv", fixtures().display()), &csv.display().to_string())
    });
    assert_eq!(code(&yada(&["--config", &cfg, "ingest"])), 3);
}

#[test]
fn query_lists_the_nine_gases() {
    let o = yada(&["query", &fx("air-quality.yada"), &fx("air-quality-sample.json"), "/AirGasesURI/value/*"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l.starts_with("/AirGasesURI/value/")));
    assert!(lines.contains(&"/AirGasesURI/value/ozone = 0.031"));
}

#[test]
fn query_agrees_with_library_evaluation() {
    let schema = Arc::new(parse_schema(&fs::read_to_string(fixtures().join("air-quality.yada")).unwrap()).unwrap());
    let tree = DataTree::from_json(
        Arc::clone(&schema),
        &fs::read_to_string(fixtures().join("air-quality-sample.json")).unwrap(),
    )
    .unwrap();
    for path in [
        "/AirParticleURI",
        "/AirParticleURI/value[key='12.50']",
        "/AirParticleURI/value/pm10-data",
        "/*/value",
        "/AirGasesURI/value/ozone",
        "/AirHumidityURI",
    ] {
        let bound = bind(&parse_path(path).unwrap(), &schema).unwrap();
        let expected: String = evaluate(&tree, &bound)
            .into_iter()
            .map(|p| format!("{p} = {}\n", tree.get(&p).unwrap()))
            .collect();
        let o = yada(&["query", &fx("air-quality.yada"), &fx("air-quality-sample.json"), path]);
        assert_eq!(code(&o), 0, "{path}");
        assert_eq!(stdout(&o), expected, "{path}");
    }
}

#[test]
fn validate_reports_leaf_counts() {
    let o = yada(&["validate", &fx("air-quality.yada"), &fx("air-quality-sample.json")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("ok (17 leaves)"));
}

#[test]
fn ingest_writes_ten_thousand_stable_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| t);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(code(&yada(&["--config", &cfg, "--out", out.to_str().unwrap(), "ingest"])), 0);
    }
    let text = fs::read_to_string(a.join("replay.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("ts_ms,sensor_id,path,value"));
    assert_eq!(text.lines().count(), 10_001);
    assert_eq!(sha256(&a.join("replay.csv")), sha256(&b.join("replay.csv")));
    assert_eq!(
        sha256(&a.join("replay.csv")),
        "ca1888d6137424807c59cf72afcda60d6639111efb7a12edcb142336f7a23b71"
    );
    assert_eq!(code(&yada(&["--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "8", "ingest"])), 0);
    assert_ne!(sha256(&a.join("replay.csv")), sha256(&c.join("replay.csv")));
}

#[test]
fn simulate_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| t.replace("num_nodes = [4, 6, 16]", "num_nodes = [4]"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = yada(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["comparison.csv", "metrics.csv", "rtt.csv", "e2e.csv", "sync.csv", "events-with-4.csv", "events-without-4.csv", "summary.txt"] {
        assert_eq!(sha256(&a.join(f)), sha256(&b.join(f)), "{f}");
    }
    let report = yada(&["report", a.to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    assert_eq!(stdout(&report).lines().count(), 3);
    assert_eq!(code(&yada(&["report", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn full_selection_makes_modes_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| {
        t.lines()
            .filter(|l| !l.starts_with("selection_file"))
            .collect::<Vec<_>>()
            .join("\n")
            .replace("num_nodes = [4, 6, 16]", "num_nodes = [1]")
    });
    let out = dir.path().join("o");
    let o = yada(&["--config", &cfg, "--out", out.to_str().unwrap(), "--set", "output.event_log=false", "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(&r[0], "1");
    for (w, wo) in [(1, 2), (3, 4), (5, 6), (7, 8)] {
        assert_eq!(r[w], r[wo], "column {w}");
    }
    assert_eq!(r[9].parse::<f64>().unwrap(), 0.0);
    assert!(!out.join("events-with-1.csv").exists());
}

#[test]
fn poll_interval_override_changes_poll_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = harness_copy(dir.path(), |t| t.replace("num_nodes = [4, 6, 16]", "num_nodes = [4]"));
    let polls = |extra: &[&str]| -> usize {
        let out = dir.path().join(format!("p{}", extra.len()));
        let mut args = vec!["--config", &cfg, "--out", out.to_str().unwrap(), "--set", "output.event_log=false"];
        args.extend_from_slice(extra);
        args.push("simulate");
        assert_eq!(code(&yada(&args)), 0);
        let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
        let line = summary.lines().find(|l| l.contains("mode=with:")).unwrap();
        line.rsplit("polls=").next().unwrap().parse().unwrap()
    };
    let base = polls(&[]);
    let slower = polls(&["--set", "sim.monitor_poll_ms=200"]);
    assert_eq!(base, 9_999);
    assert_eq!(slower, 4_999);
}
