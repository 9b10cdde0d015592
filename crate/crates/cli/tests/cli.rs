use std::path::Path;

use assert_cmd::Command;

fn relwalk() -> Command {
    Command::cargo_bin("relwalk").unwrap()
}

fn stdout(cmd: &mut Command) -> String {
    String::from_utf8(cmd.assert().success().get_output().stdout.clone()).unwrap()
}

/// Small BA-2motif dataset and a briefly trained model.
fn motif_setup(dir: &Path) {
    relwalk().args(["gen", "ba2motif", "--n", "12", "--base-size", "8", "--out"]).arg(dir.join("ba")).assert().success();
    relwalk()
        .args(["train", "--epochs", "20", "--hidden", "6", "--data"])
        .arg(dir.join("ba"))
        .arg("--out")
        .arg(dir.join("model.json"))
        .assert()
        .success();
}

#[test]
fn explain_emits_walks_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    motif_setup(dir.path());
    let out = stdout(
        relwalk()
            .args(["explain", "--method", "emp-neu", "--topk", "3", "--model"])
            .arg(dir.path().join("model.json"))
            .arg("--graph")
            .arg(dir.path().join("ba/graph_00010.json")),
    );
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (summary, walks) = lines.split_last().unwrap();
    assert!(summary["summary"]["k_tilde"].as_u64().unwrap() >= walks.len() as u64);
    for w in walks {
        assert_eq!(w["nodes"].as_array().unwrap().len(), 4);
        assert_eq!(w["neurons"].as_array().unwrap().len(), 4);
        assert!(w["relevance"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn low_mem_gives_same_walks() {
    let dir = tempfile::tempdir().unwrap();
    motif_setup(dir.path());
    let run = |low: bool| {
        let mut c = relwalk();
        c.args(["explain", "--method", "amp-ave", "--topk", "5", "--model"])
            .arg(dir.path().join("model.json"))
            .arg("--graph")
            .arg(dir.path().join("ba/graph_00011.json"));
        if low {
            c.arg("--low-mem");
        }
        stdout(&mut c)
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap().get("nodes").cloned())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn budget_refusal_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    motif_setup(dir.path());
    relwalk()
        .args(["explain", "--method", "exhaustive-node", "--budget", "100", "--model"])
        .arg(dir.path().join("model.json"))
        .arg("--graph")
        .arg(dir.path().join("ba/graph_00000.json"))
        .assert()
        .code(3);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    motif_setup(dir.path());
    let model = dir.path().join("model.json");
    let graph = dir.path().join("ba/graph_00000.json");
    relwalk().args(["explain", "--gamma", "steep:1", "--model"]).arg(&model).arg("--graph").arg(&graph).assert().code(2);
    relwalk().args(["explain", "--topk", "0", "--model"]).arg(&model).arg("--graph").arg(&graph).assert().code(2);
    relwalk().args(["gen", "ba2motif", "--base-size", "3", "--out"]).arg(dir.path().join("x")).assert().code(2);
    relwalk().args(["eval", "colsim", "--n-test", "40", "--model"]).arg(&model).arg("--data").arg(dir.path().join("ba")).assert().code(2);
    std::fs::write(dir.path().join("bad.json"), r#"{"layers": 3}"#).unwrap();
    relwalk().args(["explain", "--model"]).arg(dir.path().join("bad.json")).arg("--graph").arg(&graph).assert().code(2);
}

#[test]
fn eval_commands_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    motif_setup(dir.path());
    let model = dir.path().join("model.json");
    let data = dir.path().join("ba");
    for (metric, header) in [
        ("pr", "sample,target,K,Kstar,precision,recall"),
        ("colsim", "bin_lo,bin_hi,count"),
        ("edge-recall", "sample,cutoff,recall"),
        ("positive-ratio", "sample,target,gamma,k,k_tilde,ratio"),
    ] {
        let mut c = relwalk();
        c.args(["eval", metric, "--n-test", "4", "--model"]).arg(&model).arg("--data").arg(&data);
        let out = stdout(&mut c);
        assert_eq!(out.lines().next(), Some(header), "{metric}");
    }
}

#[test]
fn infection_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("inf");
    relwalk().args(["gen", "infection", "--n", "4", "--nodes", "60", "--carriers", "0.05", "--out"]).arg(&data).assert().success();
    let model = dir.path().join("m.json");
    let summary = stdout(relwalk().args(["train", "--epochs", "30", "--data"]).arg(&data).arg("--out").arg(&model));
    let summary: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    assert_eq!(summary["dims"], serde_json::json!([2, 16, 16, 2]));
    let out = stdout(relwalk().args(["eval", "infection-recall", "--n-test", "1", "--model"]).arg(&model).arg("--data").arg(&data));
    assert_eq!(out.lines().next(), Some("sample,target,chain_len,padded_rank,collapsed_rank"));
    relwalk().args(["eval", "edge-recall", "--model"]).arg(&model).arg("--data").arg(&data).assert().code(2);
}

#[test]
fn bench_flags_extrapolated_rows() {
    let out = stdout(relwalk().args(["bench", "--ms", "10", "--ls", "2", "--reps", "1", "--budget", "50", "--methods", "exhaustive-node"]));
    let row: Vec<_> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "exhaustive-node");
    assert_eq!(row[8], "true");
    relwalk().args(["bench", "--ms", "5"]).assert().code(2);
}
