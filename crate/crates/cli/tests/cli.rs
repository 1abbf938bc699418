// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regcpt::simlab::{gen_dataset, scaled_jump, ChangePoint, SimDesign};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_regcpt");

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest().join("tests/fixtures").join(name)
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = manifest().join("../../schemas").join(name);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&doc).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let v = schema(schema_name);
    let errors: Vec<String> = v
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

fn regcpt(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("REGCPT_WORKERS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_csv(path: &Path, design: &SimDesign, rows: usize) {
    let sim = gen_dataset(design).unwrap();
    let (x, y) = (sim.data.x(), sim.data.y());
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["y".to_string()];
    header.extend((1..=design.p).map(|j| format!("x{j}")));
    w.write_record(&header).unwrap();
    for i in 0..rows {
        let mut rec = vec![format!("{:?}", y[i])];
        rec.extend((0..design.p).map(|j| format!("{:?}", x[(i, j)])));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

fn two_cpt_design() -> SimDesign {
    let (n, p) = (300, 20);
    let jump = scaled_jump(3.0, n, p, &regcpt::simlab::design::MULTI_PATTERN);
    let down: Vec<f64> = jump.iter().map(|v| -v).collect();
    SimDesign {
        n,
        p,
        active_pool: (1, 10),
        cpts: vec![ChangePoint { k: 100, delta: jump }, ChangePoint { k: 200, delta: down }],
        seed: 43,
        ..SimDesign::default()
    }
}

/// The checked-in fixture must equal what the generator produces.
#[test]
fn fixture_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("two_cpt.csv");
    write_csv(&fresh, &two_cpt_design(), 300);
    let path = fixture("two_cpt.csv");
    if std::env::var_os("REGCPT_BLESS").is_some() {
        std::fs::copy(&fresh, &path).unwrap();
    }
    assert_eq!(std::fs::read(&fresh).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn segment_golden_two_changes() {
    let input = fixture("two_cpt.csv");
    let out = regcpt(&["segment", "--input", input.to_str().unwrap(), "--seed", "7"]);
    let doc = json(&out);
    assert_valid("segmentation_result.schema.json", &doc);
    assert_eq!(doc["m_hat"], 2);
    let golden = fixture("segment_two_cpt.golden.json");
    if std::env::var_os("REGCPT_BLESS").is_some() {
        std::fs::write(&golden, &out.stdout).unwrap();
    }
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        std::fs::read_to_string(golden).unwrap()
    );
}

#[test]
fn segment_csv_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("h.csv");
    let input = fixture("two_cpt.csv");
    let out = regcpt(&[
        "segment",
        "--input",
        input.to_str().unwrap(),
        "--seed",
        "7",
        "--format",
        "csv",
        "--dump-process",
        dump.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["s", "e", "depth", "seed", "p_value", "reject", "k_hat"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows[0][0].parse::<usize>().unwrap(), 0);
    assert_eq!(rows[0][1].parse::<usize>().unwrap(), 300);
    let text = std::fs::read_to_string(dump).unwrap();
    assert!(text.starts_with("k,t,flagged,h\n"));
    // Grid of the root interval: trimmed by max(30, 40) rows on each side.
    assert_eq!(text.lines().count(), 1 + (260 - 40 + 1));
}

#[test]
fn segment_short_series_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.csv");
    write_csv(&short, &two_cpt_design(), 60);
    let out = regcpt(&["segment", "--input", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["m_hat"], 0);
}

#[test]
fn detect_reports_every_field() {
    let input = fixture("two_cpt.csv");
    let doc = json(&regcpt(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--response",
        "y",
        "--alpha",
        "0.05",
        "--tau0",
        "0.1",
        "--boot",
        "100",
        "--seed",
        "7",
    ]));
    assert_valid("detection_report.schema.json", &doc);
    for key in [
        "t_stat",
        "crit",
        "p_value",
        "reject",
        "t_hat",
        "k_hat",
        "sigma_eps_sq",
        "B",
        "alpha",
        "tau0",
        "group",
        "seed",
        "flagged_replicates",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["reject"], true);
    assert_eq!(doc["B"], 100);
    assert_eq!(doc["group"].as_array().unwrap().len(), 20);
}

#[test]
fn group_range_syntax() {
    let input = fixture("two_cpt.csv");
    let doc = json(&regcpt(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--group",
        "1,2,5-9",
        "--boot",
        "20",
    ]));
    assert_eq!(doc["group"], serde_json::json!([1, 2, 5, 6, 7, 8, 9]));
    let out = regcpt(&["detect", "--input", input.to_str().unwrap(), "--group", "0,3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = regcpt(&["detect", "--input", input.to_str().unwrap(), "--group", "5-40"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_data_errors() {
    let out = regcpt(&["detect", "--alpha", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
    let out = regcpt(&["detect", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = regcpt(&["detect", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let input = fixture("two_cpt.csv");
    let out = regcpt(&["detect", "--input", input.to_str().unwrap(), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = regcpt(&["detect", "--input", input.to_str().unwrap(), "--response", "z"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let input = fixture("two_cpt.csv");
    std::fs::write(
        &cfg,
        format!(
            "[input]\npath = {:?}\nresponse = \"y\"\n\n[test]\nalpha = 0.1\nB = 40\nseed = 3\ngroup = [1, 2, 3]\n",
            input.to_str().unwrap()
        ),
    )
    .unwrap();
    let doc = json(&regcpt(&["detect", "--config", cfg.to_str().unwrap(), "--boot", "30"]));
    assert_eq!(doc["alpha"], 0.1);
    assert_eq!(doc["B"], 30);
    assert_eq!(doc["seed"], 3);
    assert_eq!(doc["group"], serde_json::json!([1, 2, 3]));

    std::fs::write(&cfg, "[test]\nalpah = 0.1\n").unwrap();
    let out = regcpt(&[
        "detect",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_csv_round_trips_and_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("theta.cache");
    let input = fixture("two_cpt.csv");
    let args = |fmt: &'static str| {
        vec![
            "detect".to_string(),
            "--input".into(),
            input.to_str().unwrap().into(),
            "--boot".into(),
            "30".into(),
            "--seed".into(),
            "5".into(),
            "--format".into(),
            fmt.into(),
            "--precision-cache".into(),
            cache.to_str().unwrap().into(),
        ]
    };
    let run = |fmt| {
        let a = args(fmt);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        regcpt(&refs)
    };
    let first = json(&run("json"));
    assert!(cache.exists());
    let second = json(&run("json"));
    assert_eq!(first, second);
    let plain = json(&regcpt(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--boot",
        "30",
        "--seed",
        "5",
    ]));
    assert_eq!(first, plain);

    let out = run("csv");
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let field = |k: &str| row[header.iter().position(|h| h == k).unwrap()].to_string();
    assert_eq!(
        field("t_stat").parse::<f64>().unwrap(),
        first["t_stat"].as_f64().unwrap()
    );
    assert_eq!(
        field("p_value").parse::<f64>().unwrap(),
        first["p_value"].as_f64().unwrap()
    );
    assert_eq!(field("reject"), first["reject"].to_string());
    assert_eq!(field("B"), "30");
}

#[test]
fn cv_reports_the_selected_multiplier() {
    let input = fixture("two_cpt.csv");
    let doc = json(&regcpt(&[
        "cv",
        "--input",
        input.to_str().unwrap(),
        "--c-grid",
        "1,2,4",
        "--seed",
        "2",
    ]));
    assert_valid("schedule_cv.schema.json", &doc);
    assert_eq!(doc["c_grid"], serde_json::json!([1.0, 2.0, 4.0]));
    let c = doc["c"].as_f64().unwrap();
    assert!([1.0, 2.0, 4.0].contains(&c));
}

fn small_spec(dir: &Path) -> PathBuf {
    let path = dir.join("case.toml");
    std::fs::write(
        &path,
        r#"reps = 3
min_len = 40

[design]
n = 240
p = 20
active_pool = [1, 10]
seed = 11

[[design.cpts]]
k = 80
c = 3.0
pattern = "multi"

[[design.cpts]]
k = 160
c = 3.0
pattern = "multi"
sign = -1.0

[test]
B = 40
seed = 4
"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_spec_is_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let one = regcpt(&["simulate", "--spec", spec.to_str().unwrap(), "--workers", "1"]);
    let eight = regcpt(&["simulate", "--spec", spec.to_str().unwrap(), "--workers", "8"]);
    let doc = json(&one);
    assert_eq!(one.stdout, eight.stdout);
    assert_valid("experiment_reports.schema.json", &doc);
    assert_eq!(doc[0]["kind"], "multicpt");
    assert_eq!(doc[0]["reps"], 3);

    let env = Command::new(BIN)
        .args(["simulate", "--spec", spec.to_str().unwrap()])
        .env("REGCPT_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(env.stdout, one.stdout);

    let out = regcpt(&["simulate", "--spec", spec.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(&rdr.headers().unwrap()[0], "kind");
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "multicpt");
    assert_eq!(row[13].parse::<f64>().unwrap(), doc[0]["mean_m_hat"].as_f64().unwrap());
}

#[test]
fn simulate_preset() {
    let doc = json(&regcpt(&[
        "simulate",
        "--preset",
        "table2_cell",
        "--C",
        "2",
        "--reps",
        "2",
        "--seed",
        "1",
    ]));
    assert_valid("experiment_reports.schema.json", &doc);
    assert_eq!(doc.as_array().unwrap().len(), 2);
    assert!(doc[0]["rejection_rate"].is_number());
    assert_eq!(doc[0]["group"], "S");
    assert_eq!(doc[1]["group"], "Sc");

    let out = regcpt(&["simulate", "--preset", "table7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = regcpt(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}
