use std::path::Path;
use std::process::{Command, Output};

use graph_pcg::constraints::builtin;
use graph_pcg::export::graph_to_json_string;
use graph_pcg::graph::GraphState;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graph-pcg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_graph(dir: &Path, name: &str, g: &GraphState) {
    let cs = builtin::set(1).unwrap();
    std::fs::write(dir.join(name), graph_to_json_string(g, &cs).unwrap()).unwrap();
}

#[test]
fn validate_reports_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // U V W U with U0-V1, V1-W2, V1-U3
    let valid = GraphState::from_edges(vec![0, 1, 2, 0], 3, [(1, 0), (2, 1), (3, 1)]).unwrap();
    write_graph(d, "valid.json", &valid);
    let out = cli(d, &["validate", "--constraints", "set1", "--graph", "valid.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).trim_end().ends_with("valid"));

    let bare = GraphState::from_edges(vec![0, 1, 2, 0], 3, []).unwrap();
    write_graph(d, "bare.json", &bare);
    let out = cli(d, &["validate", "--constraints", "set1", "--graph", "bare.json"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("total 5 "), "{text}");
    assert!(text.trim_end().ends_with("invalid"));

    std::fs::write(d.join("alien.json"), r#"{"nodes":[{"id":0,"type":"Q"}],"edges":[]}"#).unwrap();
    let out = cli(d, &["validate", "--constraints", "set1", "--graph", "alien.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = cli(d, &["validate", "--constraints", "set1", "--graph", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(tmp.path(), &["validate", "--graph", "x.json"]).status.code(), Some(2));
    assert_eq!(cli(tmp.path(), &["train", "--constraints", "set2", "--max-size", "x", "--out", "m"]).status.code(), Some(2));
    assert_eq!(cli(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn train_generate_export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = cli(
        d,
        &["train", "--constraints", "set1_economy", "--max-size", "6", "--steps", "2500", "--out", "m.bin"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("m.bin").exists() && d.join("m.csv").exists());
    let log = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "update,steps,mean_reward,validity_rate,entropy");
    assert_eq!(log.lines().count(), 3);

    let bad = cli(d, &["train", "--constraints", "set1", "--max-size", "5", "--steps", "2000", "--out", "x.bin"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("multiple"));
    let bad = cli(d, &["train", "--constraints", "set1", "--max-size", "2", "--steps", "1250", "--out", "x.bin"]);
    assert_eq!(bad.status.code(), Some(1));

    let gen = cli(d, &["generate", "--model", "m.bin", "--config", "Source=3,Converter=2,Pool=1", "--out", "g.json"]);
    assert!(matches!(gen.status.code(), Some(0 | 1)));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("g.json")).unwrap()).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 6);

    let over = cli(d, &["generate", "--model", "m.bin", "--config", "U=7"]);
    assert_eq!(over.status.code(), Some(1));

    let dot = cli(d, &["export", "--constraints", "set1_economy", "--graph", "g.json", "--format", "dot"]);
    assert_eq!(dot.status.code(), Some(0));
    assert!(stdout(&dot).starts_with("graph") || stdout(&dot).starts_with("digraph"));
}
