mod common;

use common::{cli, edit_toml, fixture_copy};
use jargon::dataset::load_annotations;
use jargon::report::read_meta;

fn config_arg(dir: &std::path::Path) -> String {
    dir.join("run.toml").display().to_string()
}

#[test]
fn eval_writes_reports_with_sidecars() {
    let dir = fixture_copy();
    let config = config_arg(dir.path());
    let o = cli(&["eval", "--config", &config], "");
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("target,configuration,mean_f1,annotators\n"));
    let out = dir.path().join("out");
    for name in [
        "eval_results.csv",
        "eval_macro.csv",
        "coefficient_frequency.csv",
        "sweep.csv",
        "features.csv",
    ] {
        let meta = read_meta(&out.join(name)).unwrap_or_else(|| panic!("no sidecar for {name}"));
        assert_eq!(meta.seed, 7);
        assert_eq!(meta.config_hash.len(), 64);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["results"].as_array().unwrap().len(), 22);

    let o = cli(&["report", "--config", &config, "--format", "json"], "");
    assert_eq!(o.code, 0, "{}", o.stderr);
    let summary: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(summary["sources"][0]["report"], "eval_report.json");
    assert!(out.join("summary.csv").exists());
}

#[test]
fn missing_annotations_is_a_validation_error() {
    let dir = fixture_copy();
    let run = dir.path().join("run.toml");
    edit_toml(&run, "paths", &[("annotations", "\"nowhere.jsonl\"")]);
    let o = cli(&["train", "--config", &config_arg(dir.path())], "");
    assert_eq!(o.code, 3);
    assert!(o.stderr.contains("nowhere.jsonl"), "{}", o.stderr);
}

#[test]
fn missing_config_and_bad_usage() {
    let o = cli(&["eval", "--config", "/no/such/run.toml"], "");
    assert_eq!(o.code, 3);
    assert!(o.stderr.contains("/no/such/run.toml"));
    assert_eq!(cli(&["eval", "--bogus"], "").code, 2);
    assert_eq!(cli(&[], "").code, 2);
    let help = cli(&["--help"], "");
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("extract-terms"));
}

#[test]
fn ingest_writes_dataset_stats() {
    let dir = fixture_copy();
    let o = cli(&["ingest", "--config", &config_arg(dir.path()), "--format", "json"], "");
    assert_eq!(o.code, 0, "{}", o.stderr);
    let stats: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(stats["n_annotators"], 11);
    assert!(dir.path().join("out/dataset_stats.csv").exists());
}

#[test]
fn featurize_resumes_only_under_the_same_config() {
    let dir = fixture_copy();
    let config = config_arg(dir.path());
    let path = dir.path().join("out/features.csv");
    let first = cli(&["featurize", "--config", &config], "");
    assert_eq!(first.code, 0, "{}", first.stderr);
    let written = std::fs::read_to_string(&path).unwrap();
    assert!(!first.stderr.contains("reusing"));

    let second = cli(&["featurize", "--config", &config], "");
    assert_eq!(second.code, 0);
    assert!(second.stderr.contains("reusing 10428 rows"), "{}", second.stderr);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), written);

    let reseeded = cli(&["featurize", "--config", &config, "--seed", "8"], "");
    assert_eq!(reseeded.code, 0);
    assert!(!reseeded.stderr.contains("reusing"));
    assert_eq!(read_meta(&path).unwrap().seed, 8);
}

#[test]
fn out_flag_redirects_artifacts() {
    let dir = fixture_copy();
    let elsewhere = dir.path().join("elsewhere");
    let o = cli(
        &[
            "ingest",
            "--config",
            &config_arg(dir.path()),
            "--out",
            elsewhere.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(elsewhere.join("dataset_stats.csv").exists());
    assert!(!dir.path().join("out").exists());
}

fn first_abstract(dir: &std::path::Path) -> String {
    let text = std::fs::read_to_string(dir.join("abstracts.jsonl")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    doc["doc_id"].as_str().unwrap().to_string()
}

#[test]
fn annotate_reprompts_on_out_of_range_rating() {
    let dir = fixture_copy();
    let config = config_arg(dir.path());
    let id = first_abstract(dir.path());
    let terms = dir.path().join("terms.jsonl");
    std::fs::write(
        &terms,
        format!("{{\"abstract_id\":\"{id}\",\"terms\":[\"alpha term\",\"beta term\"]}}\n"),
    )
    .unwrap();
    let target = dir.path().join("new_annotations.jsonl");
    let (terms_arg, target_arg) = (terms.display().to_string(), target.display().to_string());
    let argv = [
        "annotate",
        "--config",
        &config,
        "--annotator",
        "r99",
        "--terms",
        &terms_arg,
        "--output",
        &target_arg,
    ];

    let o = cli(&argv, "7\n");
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout.matches("Familiarity (1-5, q to quit): ").count(), 2);
    assert!(o.stdout.contains("Please enter a whole number from 1 to 5."));
    assert!(!target.exists());

    let o = cli(&argv, "7\n3\nlater\ndefinition, example\nq\n");
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("Unknown need"));
    let records = load_annotations(&target).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!((records[0].rating, records[0].term.as_str()), (3, "alpha term"));
    assert_eq!(records[0].needs.len(), 2);

    // the rated pair is skipped on the next session
    let o = cli(&argv, "1\n\n");
    assert_eq!(o.code, 0);
    assert!(!o.stdout.contains("alpha term"));
    let records = load_annotations(&target).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!((records[1].rating, records[1].term.as_str()), (1, "beta term"));
}
