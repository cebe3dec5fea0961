use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hyperforge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperforge")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "error must be a single line: {stderr}");
    serde_json::from_str(stderr.trim_end()).expect("error line is JSON")
}

#[test]
fn full_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let gen = stdout_json(&hyperforge(
        &["gen-data", "--kind", "tree", "--out", "data", "--seed", "3", "--train", "4", "--val", "1", "--test", "2", "--tree-nodes", "12"],
        d,
    ));
    assert_eq!(gen["train"], 4);
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }

    fs::write(d.join("cfg.txt"), "dataset = data\nsteps = 3\nhidden_dim = 8\nnum_layers = 1\ncheckpoint = model.ckpt\n").unwrap();
    let trained = stdout_json(&hyperforge(&["train", "--config", "cfg.txt"], d));
    assert_eq!(trained["steps"], 3);
    assert!(d.join("model.ckpt").exists());

    let sampled = stdout_json(&hyperforge(
        &["sample", "--ckpt", "model.ckpt", "--n-nodes", "12", "--count", "2", "--out", "gen", "--seed", "5"],
        d,
    ));
    assert_eq!(sampled["count"], 2);
    let lines = fs::read_to_string(d.join("gen/samples.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    for line in lines.lines() {
        let g: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(g["n"], 12);
    }

    let report = stdout_json(&hyperforge(&["eval", "--gen", "gen", "--ref", "data", "--kind", "tree"], d));
    assert_eq!(report["node_num_diff"], 0.0);
    assert!(report["validity_fraction"].is_number());

    for (format, expected) in [("dot", "graph_1.dot"), ("jsonl", "graphs.jsonl")] {
        let out = format!("export_{format}");
        stdout_json(&hyperforge(&["export", "--in", "gen", "--format", format, "--out", &out], d));
        assert!(d.join(&out).join(expected).exists(), "{format}");
    }
    let out = hyperforge(&["export", "--in", "gen", "--format", "obj"], d);
    assert_eq!(error_line(&out)["error"], "invalid_parameter");
}

#[test]
fn meshes_export_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("mesh")).unwrap();
    fs::write(
        d.join("mesh/tet.obj"),
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 2 4\nf 1 3 4\nf 2 3 4\n",
    )
    .unwrap();
    stdout_json(&hyperforge(&["export", "--in", "mesh", "--format", "obj", "--out", "copy"], d));
    let report = stdout_json(&hyperforge(&["eval", "--gen", "copy", "--ref", "mesh"], d));
    assert_eq!(report["degree_wasserstein"], 0.0);
    assert!(report["chamfer_nearest"].as_f64().unwrap() < 1e-2);
    assert!(report.get("validity_fraction").is_none());
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout_json(&hyperforge(&["gen-data", "--kind", "tree", "--out", "data", "--train", "2", "--val", "0", "--test", "0", "--tree-nodes", "8"], d));
    fs::write(d.join("cfg.txt"), "dataset = data\nsteps = 2\nhidden_dim = 8\nnum_layers = 1\n").unwrap();
    stdout_json(&hyperforge(&["train", "--config", "cfg.txt"], d));
    for out in ["a", "b"] {
        stdout_json(&hyperforge(&["sample", "--ckpt", "model.ckpt", "--n-nodes", "8", "--count", "3", "--out", out, "--seed", "9"], d));
    }
    assert_eq!(fs::read(d.join("a/samples.jsonl")).unwrap(), fs::read(d.join("b/samples.jsonl")).unwrap());
}

#[test]
fn coarsen_demo_writes_every_level() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.jsonl"), r#"{"n":6,"edges":[[0,1,2],[2,3],[3,4,5],[5,0]]}"#).unwrap();
    let v = stdout_json(&hyperforge(&["coarsen-demo", "--in", "g.jsonl", "--seed", "1"], d));
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.first().unwrap()["num_left"], 6);
    assert_eq!(levels.last().unwrap()["num_left"], 1);
    for (l, level) in levels.iter().enumerate() {
        assert_eq!(level["budget_sum"], 6);
        assert_eq!(level["reconstructs"], true);
        assert!(d.join(format!("g_levels/level_{l}.jsonl")).exists());
        assert!(d.join(format!("g_levels/level_{l}.dot")).exists());
    }
}

#[test]
fn failures_are_single_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = hyperforge(&["eval", "--gen", "missing", "--ref", "missing"], d);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "io");

    let out = hyperforge(&["gen-data", "--kind", "grid", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = hyperforge(&["frobnicate"], d);
    assert_eq!(error_line(&out)["error"], "usage");

    fs::write(d.join("bad.txt"), "dataset = data\nwarp_factor = 9\n").unwrap();
    let out = hyperforge(&["train", "--config", "bad.txt"], d);
    assert_eq!(error_line(&out)["error"], "unknown_kind");

    fs::write(d.join("bad.jsonl"), r#"{"n":2,"edges":[[0,5]]}"#).unwrap();
    let out = hyperforge(&["coarsen-demo", "--in", "bad.jsonl"], d);
    assert_eq!(error_line(&out)["error"], "node_out_of_range");
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperforge(&["--help"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("coarsen-demo"));
}
