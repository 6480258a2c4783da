//! End-to-end checks of the command-line driver: exit codes, the script
//! grammar, and the statistics schema.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynapsp"))
}

fn write_fixtures(dir: &Path) -> (String, String) {
    let graph = dir.join("g.txt");
    let ops = dir.join("ops.txt");
    fs::write(&graph, "5 5\n0 1 1\n1 2 1\n2 3 1\n3 4 1\n4 0 1\n").unwrap();
    fs::write(
        &ops,
        "query 0 3\ndel 2\nquery 0 3\nins 5 1 1\n1 2\n4 3\ndel 0\ndump\n",
    )
    .unwrap();
    (
        graph.to_str().unwrap().to_string(),
        ops.to_str().unwrap().to_string(),
    )
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn verify_exits_zero_on_correct_build() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, ops) = write_fixtures(dir.path());
    for mode in ["det", "fast", "space", "rand"] {
        let out = run(&["verify", "--graph", &graph, "--ops", &ops, "--mode", mode]);
        assert!(out.status.success(), "mode {mode}: {out:?}");
    }
}

#[test]
fn verify_exits_one_when_corrupted() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, ops) = write_fixtures(dir.path());
    let out = run(&[
        "verify",
        "--graph",
        &graph,
        "--ops",
        &ops,
        "--mode",
        "det",
        "--corrupt",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("verification failed"), "{err}");
}

#[test]
fn malformed_inputs_exit_two_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, ops) = write_fixtures(dir.path());

    let bad_graph = dir.path().join("bad.txt");
    fs::write(&bad_graph, "2 1\n0 9 1\n").unwrap();
    let out = run(&["run", "--graph", bad_graph.to_str().unwrap(), "--ops", &ops]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let bad_ops = dir.path().join("badops.txt");
    fs::write(&bad_ops, "del 0\nfrobnicate 1\n").unwrap();
    let out = run(&["run", "--graph", &graph, "--ops", bad_ops.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // an insertion naming a non-next slot is an input error
    let bad_ins = dir.path().join("badins.txt");
    fs::write(&bad_ins, "ins 9 0 0\n").unwrap();
    let out = run(&["run", "--graph", &graph, "--ops", bad_ins.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_prints_queries_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, ops) = write_fixtures(dir.path());
    let out = run(&["run", "--graph", &graph, "--ops", &ops, "--mode", "space"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "3"); // query 0 3 on the intact cycle
    assert_eq!(lines[1], "inf"); // after deleting 2
                                 // dump: alive vertices are 1, 3, 4, 5 after `del 0`
    assert_eq!(lines.len(), 2 + 4);
    assert_eq!(lines[2].split_whitespace().count(), 4);
}

#[test]
fn bench_stats_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (graph, ops) = write_fixtures(dir.path());
    let stats_a = dir.path().join("a.jsonl");
    let stats_b = dir.path().join("b.jsonl");
    for stats in [&stats_a, &stats_b] {
        let out = run(&[
            "bench",
            "--graph",
            &graph,
            "--ops",
            &ops,
            "--mode",
            "rand",
            "--seed",
            "7",
            "--stats",
            stats.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let normalize = |p: &Path| -> Vec<serde_json::Value> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                let obj = v.as_object_mut().unwrap();
                for key in [
                    "update_index",
                    "op",
                    "time_ms",
                    "phi",
                    "c_size",
                    "mode",
                    "seed",
                ] {
                    assert!(obj.contains_key(key), "missing {key}");
                }
                obj.remove("time_ms");
                v
            })
            .collect()
    };
    let a = normalize(&stats_a);
    assert_eq!(a.len(), 3); // del 2, ins 5, del 0
    assert_eq!(a, normalize(&stats_b));
}
