//! End-to-end tests of the `headroom` binary: exit codes, file contracts,
//! byte determinism, and cross-command round trips on small instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use headroom_core::{leh_score, ItemParameters};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_headroom"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A 10-responder, 12-item, 2-dataset response file, deterministic.
fn write_small_responses(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{
            "m_responders": 10,
            "datasets": [["east", 8], ["west", 4]],
            "theta_sampler": {"kind": "normal", "mean": 0.0, "sd": 1.0},
            "log_alpha_sampler": {"kind": "normal", "mean": 0.0, "sd": 0.4},
            "beta_sampler": {"kind": "normal", "mean": 0.0, "sd": 1.0},
            "logit_gamma_sampler": {"kind": "normal", "mean": -2.0, "sd": 1.0},
            "seed": 11
        }"#,
    )
    .unwrap();
    let sim = dir.join("sim");
    let out = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "simulate failed: {}", stderr_of(&out));
    sim.join("responses.csv")
}

fn fit_small(responses: &Path, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "fit",
        "--responses",
        responses.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--steps",
        "150",
        "--seed",
        "2",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fit_small(&responses, &a, &[]).status.success());
    assert!(fit_small(&responses, &b, &[]).status.success());
    for name in ["fit.json", "items.csv", "responders.csv", "datasets.csv"] {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
}

#[test]
fn items_csv_leh_recomputes_from_parameters_and_theta_star() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let out = dir.path().join("fit");
    assert!(fit_small(&responses, &out, &[]).status.success());

    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("fit.json")).unwrap()).unwrap();
    let theta_star = doc["result"]["theta_star"].as_f64().unwrap();

    let mut rdr = csv::Reader::from_path(out.join("items.csv")).unwrap();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.unwrap();
        let item = ItemParameters {
            alpha: record[2].parse().unwrap(),
            beta: record[4].parse().unwrap(),
            gamma: record[5].parse().unwrap(),
        };
        let expected = format!("{:.6}", leh_score(&item, theta_star));
        // The file's alpha/beta/gamma are 6-decimal roundings of the fitted
        // values, so the recomputed slope can sit half an ulp-of-print away;
        // compare at one unit in the last printed decimal.
        let got: f64 = record[6].parse().unwrap();
        let want: f64 = expected.parse().unwrap();
        assert!(
            (got - want).abs() <= 1e-6 + 1e-12,
            "leh mismatch for {}: file {} vs recomputed {}",
            &record[0],
            &record[6],
            expected
        );
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn duplicate_cell_fails_atomically_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("dup.csv");
    fs::write(
        &bad,
        "responder_id,item_id,dataset_id,correct\nr1,a,X,1\nr1,a,X,0\nr2,a,X,1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = fit_small(&bad, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.starts_with("error[input]: "), "stderr was: {err}");
    assert!(err.contains("duplicate"), "stderr was: {err}");
    assert_eq!(
        err.trim_end().lines().count(),
        1,
        "single-line error contract"
    );
    assert!(!out_dir.exists(), "no partial outputs on input errors");
}

#[test]
fn missing_input_file_gives_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_small(&dir.path().join("nope.csv"), &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).starts_with("error[io]: "));
}

#[test]
fn csv_and_jsonl_inputs_yield_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());

    // Re-encode the CSV as JSONL.
    let jsonl = dir.path().join("responses.jsonl");
    let mut lines = String::new();
    let mut rdr = csv::Reader::from_path(&responses).unwrap();
    for record in rdr.records() {
        let r = record.unwrap();
        lines.push_str(&format!(
            "{{\"responder_id\":\"{}\",\"item_id\":\"{}\",\"dataset_id\":\"{}\",\"correct\":{}}}\n",
            &r[0], &r[1], &r[2], &r[3]
        ));
    }
    fs::write(&jsonl, lines).unwrap();

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(fit_small(&responses, &a, &[]).status.success());
    let out = run(&[
        "fit",
        "--responses",
        jsonl.to_str().unwrap(),
        "--format",
        "jsonl",
        "--out",
        b.to_str().unwrap(),
        "--steps",
        "150",
        "--seed",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["items.csv", "responders.csv", "datasets.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between csv and jsonl input"
        );
    }
}

#[test]
fn analyze_reproduces_fit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let fit_out = dir.path().join("fit");
    assert!(fit_small(&responses, &fit_out, &[]).status.success());

    let an_out = dir.path().join("an");
    let out = run(&[
        "analyze",
        "--fit",
        fit_out.join("fit.json").to_str().unwrap(),
        "--responses",
        responses.to_str().unwrap(),
        "--out",
        an_out.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["items.csv", "responders.csv", "datasets.csv"] {
        assert_eq!(
            fs::read(fit_out.join(name)).unwrap(),
            fs::read(an_out.join(name)).unwrap(),
            "{name} differs between fit and analyze"
        );
    }
}

#[test]
fn analyze_rejects_mismatched_responses() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let fit_out = dir.path().join("fit");
    assert!(fit_small(&responses, &fit_out, &[]).status.success());

    let other = dir.path().join("other.csv");
    fs::write(
        &other,
        "responder_id,item_id,dataset_id,correct\nr1,a,X,1\nr1,b,X,0\nr2,a,X,0\nr2,b,X,1\n",
    )
    .unwrap();
    let out = run(&[
        "analyze",
        "--fit",
        fit_out.join("fit.json").to_str().unwrap(),
        "--responses",
        other.to_str().unwrap(),
        "--out",
        dir.path().join("an").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("covers"), "{}", stderr_of(&out));
}

#[test]
fn stability_with_empty_exclusion_reports_perfect_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let out_dir = dir.path().join("stab");
    let out = run(&[
        "stability",
        "--responses",
        responses.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--steps",
        "150",
        "--seed",
        "2",
        "--exclude-top-k",
        "0",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("stability.json")).unwrap()).unwrap();
    assert_eq!(doc["leh"]["pearson_r"].as_f64().unwrap(), 1.0);
    assert_eq!(doc["leh"]["median_abs_diff"].as_f64().unwrap(), 0.0);
    assert_eq!(doc["log_alpha"]["pearson_r"].as_f64().unwrap(), 1.0);
    assert!(out_dir.join("full/items.csv").exists());
    assert!(out_dir.join("excluded/items.csv").exists());
}

#[test]
fn stability_requires_exactly_one_exclusion_flag() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let out = run(&[
        "stability",
        "--responses",
        responses.to_str().unwrap(),
        "--out",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "missing exclusion flag is a usage error"
    );
    let out = run(&[
        "stability",
        "--responses",
        responses.to_str().unwrap(),
        "--out",
        dir.path().join("s").to_str().unwrap(),
        "--exclude-top-k",
        "1",
        "--exclude-unanimous",
    ]);
    assert_eq!(out.status.code(), Some(2), "two exclusion flags conflict");
}

#[test]
fn fail_on_degenerate_exits_with_degenerate_code() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    let out_dir = dir.path().join("out");
    // An absurd learning rate reliably blows the optimization up.
    let out = fit_small(
        &responses,
        &out_dir,
        &["--lr", "1e6", "--fail-on-degenerate"],
    );
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).starts_with("error[degenerate]: "));
    // Reports and the completed document still exist for diagnosis.
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "complete");
    assert_eq!(doc["result"]["degenerate"], true);
    assert!(out_dir.join("items.csv").exists());
}

#[test]
fn pending_document_written_before_results() {
    let dir = tempfile::tempdir().unwrap();
    let responses = write_small_responses(dir.path());
    // Interrupt-free proof: the pending write happens before fitting, so a
    // fresh out dir plus an immediately-killed run still contains fit.json.
    // Here we simply check the completed document records the resolved
    // config and seed exactly.
    let out_dir = dir.path().join("out");
    assert!(fit_small(&responses, &out_dir, &["--mc-samples", "3"])
        .status
        .success());
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(doc["seed"], 2);
    assert_eq!(doc["config"]["steps"], 150);
    assert_eq!(doc["config"]["mc_samples"], 3);
    assert_eq!(doc["config"]["learning_rate"], 0.05);
    assert_eq!(doc["prior"]["log_alpha_sigma"], 0.4);
}

#[test]
fn simulate_requires_spec_or_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
