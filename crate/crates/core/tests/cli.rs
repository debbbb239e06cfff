use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cibflow::model::{serialize_study_spec, Finding, Severity};
use cibflow::{fixtures, pipeline};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_cibflow");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CIBFLOW_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("mini_pipeline.json");
    let before = fs::read(data("mini_study.json")).unwrap();
    let mut manifests = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(name);
        let res = run(&[
            "pipeline",
            "--config",
            s(&config),
            "--runs",
            "2000",
            "--workers",
            workers,
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        for artifact in [
            pipeline::FINDINGS_JSON,
            pipeline::ENSEMBLE_FILE,
            pipeline::SHARES_CSV,
            pipeline::SHARES_JSON,
            pipeline::CANDIDATES_JSON,
            pipeline::CANDIDATES_CSV,
            pipeline::MCDA_JSON,
            pipeline::MCDA_CSV,
            pipeline::QUANTIFIED_CSV,
            pipeline::QUANTIFIED_JSON,
            pipeline::MANIFEST_JSON,
        ] {
            assert!(out.join(artifact).is_file(), "missing {artifact}");
        }
        assert!(!out.join(pipeline::ERROR_JSON).exists());
        manifests.push(fs::read(out.join(pipeline::MANIFEST_JSON)).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(fs::read(data("mini_study.json")).unwrap(), before);

    let manifest: Value = serde_json::from_slice(&manifests[0]).unwrap();
    assert_eq!(manifest["master_seed"], 2025);
    assert_eq!(manifest["run_count"], 2000);
    let stages: Vec<&str> = manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        ["validate", "simulate", "screen", "mcda", "quantify"]
    );

    let quantified =
        fs::read_to_string(dir.path().join("a").join(pipeline::QUANTIFIED_CSV)).unwrap();
    assert!(quantified.starts_with("dimension,unit,period,central,low,high,provenance"));
}

fn write_config(dir: &Path, body: Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn simulate_only_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        json!({
            "spec": data("mini_study.json"),
            "runs": 200,
            "seed": 3,
            "stages": {"simulate": true, "screen": false, "mcda": false, "quantify": false}
        }),
    );
    let out = dir.path().join("out");
    let res = run(&["pipeline", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join(pipeline::ENSEMBLE_FILE).is_file());
    assert!(out.join(pipeline::SHARES_CSV).is_file());
    for absent in [
        pipeline::CANDIDATES_JSON,
        pipeline::MCDA_JSON,
        pipeline::QUANTIFIED_CSV,
    ] {
        assert!(!out.join(absent).exists(), "{absent} should not be written");
    }
}

fn invalid_spec(dir: &Path) -> PathBuf {
    let mut spec = fixtures::miniature_study();
    let p = spec.descriptors[0].cyclic.as_mut().unwrap();
    p.stay = 0.6;
    let path = dir.join("bad_study.json");
    fs::write(&path, serialize_study_spec(&spec)).unwrap();
    path
}

#[test]
fn invalid_spec_stops_before_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = invalid_spec(dir.path());
    let out = dir.path().join("out");
    let res = run(&[
        "pipeline",
        "--config",
        s(&data("mini_pipeline.json")),
        "--spec",
        s(&bad),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 1);
    let findings: Vec<Finding> =
        serde_json::from_slice(&fs::read(out.join(pipeline::FINDINGS_JSON)).unwrap()).unwrap();
    assert!(findings
        .iter()
        .any(|f| f.severity == Severity::Error && f.message.contains("must sum to 1.0")));
    assert!(!out.join(pipeline::ENSEMBLE_FILE).exists());
    let error: Value =
        serde_json::from_slice(&fs::read(out.join(pipeline::ERROR_JSON)).unwrap()).unwrap();
    assert_eq!(error["stage"], "validate");

    let res = run(&["validate", "--spec", s(&bad)]);
    assert_eq!(code(&res), 1);
    let res = run(&["validate", "--spec", s(&data("mini_study.json"))]);
    assert_eq!(code(&res), 0);
}

#[test]
fn exit_codes_for_bad_input_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\"descriptors\": 3}").unwrap();
    assert_eq!(code(&run(&["validate", "--spec", s(&junk)])), 1);

    let out = dir.path().join("out");
    let res = run(&[
        "simulate",
        "--spec",
        s(&data("mini_study.json")),
        "--workers",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 3);

    let missing = write_config(dir.path(), json!({"spec": "nowhere.json"}));
    assert_eq!(
        code(&run(&[
            "pipeline",
            "--config",
            s(&missing),
            "--out",
            s(&out)
        ])),
        3
    );
}

#[test]
fn enumerate_lists_the_consistent_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("two.json");
    fs::write(&spec, serialize_study_spec(&fixtures::two_by_two())).unwrap();
    let res = run(&["enumerate", "--spec", s(&spec)]);
    assert_eq!(code(&res), 0);
    let rows: Vec<Value> = serde_json::from_slice(&res.stdout).unwrap();
    let states: Vec<&Value> = rows.iter().map(|r| &r["states"]).collect();
    assert_eq!(states, [&json!([0, 0]), &json!([1, 1])]);

    let res = run(&["enumerate", "--spec", s(&spec), "--limit", "3"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn stage_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let study = data("mini_study.json");
    let step = dir.path().join("steps");
    let args = ["--runs", "2000", "--seed", "2025"];

    let sim = [
        &["simulate", "--spec", s(&study), "--out", s(&step)][..],
        &args[..],
    ]
    .concat();
    assert_eq!(code(&run(&sim)), 0);
    let ensemble = step.join(pipeline::ENSEMBLE_FILE);
    assert_eq!(
        code(&run(&[
            "stats",
            "--ensemble",
            s(&ensemble),
            "--spec",
            s(&study),
            "--out",
            s(&step)
        ])),
        0
    );

    let screening = write_config(
        dir.path(),
        json!({
            "outcome": "DO",
            "k": 4,
            "best_state": "Net-zero aligned",
            "endpoint_rules": [{"PS": "Low", "DO": "Net-zero aligned"}]
        }),
    );
    let res = run(&[
        "screen",
        "--spec",
        s(&study),
        "--ensemble",
        s(&ensemble),
        "--outcome",
        "DO",
        "--screening",
        s(&screening),
        "--out",
        s(&step),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let candidates = step.join(pipeline::CANDIDATES_JSON);
    let res = run(&[
        "mcda",
        "--input",
        s(&data("mini_mcda.json")),
        "--candidates",
        s(&candidates),
        "--out",
        s(&step),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let res = run(&[
        "quantify",
        "--spec",
        s(&study),
        "--candidates",
        s(&candidates),
        "--translation",
        s(&data("mini_translation.json")),
        "--identities",
        s(&data("mini_identities.json")),
        "--mcda",
        s(&step.join(pipeline::MCDA_JSON)),
        "--ensemble",
        s(&ensemble),
        "--out",
        s(&step),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let whole = dir.path().join("whole");
    let res = run(&[
        "pipeline",
        "--config",
        s(&data("mini_pipeline.json")),
        "--runs",
        "2000",
        "--out",
        s(&whole),
    ]);
    assert_eq!(code(&res), 0);
    for artifact in [
        pipeline::ENSEMBLE_FILE,
        pipeline::SHARES_CSV,
        pipeline::CANDIDATES_JSON,
        pipeline::MCDA_JSON,
        pipeline::QUANTIFIED_CSV,
    ] {
        assert_eq!(
            fs::read(step.join(artifact)).unwrap(),
            fs::read(whole.join(artifact)).unwrap(),
            "{artifact} differs between stage commands and the pipeline"
        );
    }
}
