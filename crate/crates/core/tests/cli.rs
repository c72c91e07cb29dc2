//! Exit-code and output contracts for the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attack-forecast"))
}

fn templates_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("templates")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_text_is_stable() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let expected = "\
Attack graph forecasting and technique-level interpretation toolkit

Usage: attack-forecast [OPTIONS] <COMMAND>

Commands:
  build-asg   Build an attack scene graph from an annotated-sentence report
  templates   Load, validate, and summarize a template directory
  synth       Synthesize a training corpus by splicing templates
  train       Train the forecast model on a directory of graph files
  forecast    Extend a provenance graph into a forecast graph
  align       Align a query graph against a host graph
  interpret   Report techniques whose templates align into a graph
  evaluate    Run an experiment
  export-dot  Render a graph file as DOT
  help        Print this message or the help of the given subcommand(s)

Options:
      --config <CONFIG>  JSON config file with defaults; flags override it
  -h, --help             Print help
  -V, --version          Print version
";
    assert_eq!(text, expected);
}

#[test]
fn usage_errors_exit_2() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["align", "--query"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_1_with_error_line() {
    let out = bin()
        .args(["export-dot", "--graph", "/definitely/not/here.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: "), "got: {}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_templates_is_a_validation_error() {
    let out = bin().arg("templates").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error: "));
    assert!(stderr(&out).contains("--templates"));
}

#[test]
fn templates_listing_and_stats() {
    let out = bin()
        .args(["templates", "--templates"])
        .arg(templates_dir())
        .arg("--stats")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("T1003.002\tcredential-access"));
    assert!(text.contains("\"template_count\""));
}

#[test]
fn synth_align_interpret_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let out = bin()
        .args(["synth", "--templates"])
        .arg(templates_dir())
        .arg("--out")
        .arg(&corpus)
        .args(["--count", "3", "--chain-min", "1", "--chain-max", "2", "--seed", "11"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(corpus.join("manifest.tsv").is_file());

    let g0 = corpus.join("synth_0000.json");
    let out = bin()
        .args(["align", "--query"])
        .arg(&g0)
        .arg("--host")
        .arg(&g0)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).starts_with("score\t1.0000\n"), "got: {}", stdout(&out));

    let out = bin()
        .args(["interpret", "--afg"])
        .arg(&g0)
        .arg("--templates")
        .arg(templates_dir())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let manifest = std::fs::read_to_string(corpus.join("manifest.tsv")).unwrap();
    let truth = manifest
        .lines()
        .find(|l| l.starts_with("synth_0000.json"))
        .and_then(|l| l.split('\t').nth(1))
        .unwrap();
    for technique in truth.split(',') {
        assert!(
            stdout(&out).lines().any(|l| l.starts_with(technique)),
            "{technique} missing from interpret output: {}",
            stdout(&out)
        );
    }
}

#[test]
fn export_dot_writes_digraph() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    bin()
        .args(["synth", "--templates"])
        .arg(templates_dir())
        .arg("--out")
        .arg(&corpus)
        .args(["--count", "1", "--chain-min", "1", "--chain-max", "1", "--seed", "3"])
        .output()
        .unwrap();
    let dot_path = tmp.path().join("g.dot");
    let out = bin()
        .args(["export-dot", "--graph"])
        .arg(corpus.join("synth_0000.json"))
        .arg("--out")
        .arg(&dot_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let dot = std::fs::read_to_string(&dot_path).unwrap();
    assert!(dot.starts_with("digraph attack_graph {"));
    assert!(dot.trim_end().ends_with('}'));
}

#[test]
fn config_file_supplies_template_dir_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            "{{\"templates\": {:?}}}",
            templates_dir().display().to_string()
        ),
    )
    .unwrap();

    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("templates")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("T1083"));

    // Same via the environment variable.
    let out = bin()
        .env("ATTACK_FORECAST_CONFIG", &cfg)
        .arg("templates")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    // An explicit flag overrides the configured directory.
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["templates", "--templates", "/no/such/dir"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, "{\"tempaltes\": \"/tmp\"}").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("templates")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error: "));
}

#[test]
fn build_asg_produces_a_graph_file() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.json");
    std::fs::write(
        &report,
        r#"[
  {"index": 0,
   "tokens": [
     {"text": "malware.exe", "pos": "NOUN", "head": 1, "deprel": "nsubj"},
     {"text": "reads", "pos": "VERB", "head": null, "deprel": "root"},
     {"text": "secrets.db", "pos": "NOUN", "head": 1, "deprel": "obj"}],
   "spans": [
     {"start": 0, "end": 1, "name": "malware.exe", "class": "Process"},
     {"start": 2, "end": 3, "name": "secrets.db", "class": "File"}]},
  {"index": 1,
   "tokens": [
     {"text": "malware.exe", "pos": "NOUN", "head": 1, "deprel": "nsubj"},
     {"text": "spawns", "pos": "VERB", "head": null, "deprel": "root"},
     {"text": "helper.exe", "pos": "NOUN", "head": 1, "deprel": "obj"}],
   "spans": [
     {"start": 0, "end": 1, "name": "malware.exe", "class": "Process"},
     {"start": 2, "end": 3, "name": "helper.exe", "class": "Process"}]},
  {"index": 2,
   "tokens": [
     {"text": "helper.exe", "pos": "NOUN", "head": 1, "deprel": "nsubj"},
     {"text": "connects", "pos": "VERB", "head": null, "deprel": "root"},
     {"text": "c2.evil.net", "pos": "NOUN", "head": 1, "deprel": "obj"}],
   "spans": [
     {"start": 0, "end": 1, "name": "helper.exe", "class": "Process"},
     {"start": 2, "end": 3, "name": "c2.evil.net", "class": "Socket"}]}
]"#,
    )
    .unwrap();
    let out_graph = tmp.path().join("asg.json");
    let out = bin()
        .args(["build-asg", "--report"])
        .arg(&report)
        .arg("--out")
        .arg(&out_graph)
        .args(["--min-nodes", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("nodes\t4\tedges\t3"));

    // The default minimum (5) discards this small report.
    let out = bin()
        .args(["build-asg", "--report"])
        .arg(&report)
        .arg("--out")
        .arg(tmp.path().join("asg2.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fewer than 5"));
}
