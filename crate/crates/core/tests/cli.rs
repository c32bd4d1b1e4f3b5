mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use strength_init::{load_matrix, strength_stats, Side};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_strength-init"));
    c.env_remove("STRENGTH_INIT_DATA");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn init_rewire_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wmat");
    let b = dir.path().join("b.wmat");
    let a2 = dir.path().join("a2.wmat");
    let common = ["--seed", "7", "--layer", "1", "--rep", "2"];
    let init = |out: &Path| {
        let mut args = vec![
            "init",
            "--method",
            "kaiming-uniform",
            "--rows",
            "200",
            "--cols",
            "100",
            "--out",
            p(out),
        ];
        args.extend(common);
        ok(&args);
    };
    init(&a);
    init(&a2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&a2).unwrap());

    let mut args = vec![
        "rewire",
        "--in",
        p(&a),
        "--out",
        p(&b),
        "--passes",
        "bidirectional",
    ];
    args.extend(common);
    ok(&args);

    let (ma, mb) = (load_matrix(&a).unwrap(), load_matrix(&b).unwrap());
    assert_eq!(ma.sorted_entries(), mb.sorted_entries());
    let before = strength_stats(&ma, Side::Input).variance;
    let after = strength_stats(&mb, Side::Input).variance;
    assert!(after < 0.2 * before);

    let json = ok(&["analyze", "--in", p(&b), "--side", "input", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["n"], 200);
    assert_eq!(v["variance"].as_f64().unwrap(), after);
}

#[test]
fn csv_and_conv_paths() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("k.csv");
    let b = dir.path().join("k_pa.csv");
    ok(&[
        "init",
        "--method",
        "glorot-normal",
        "--rows",
        "36",
        "--cols",
        "8",
        "--out",
        p(&a),
    ]);
    ok(&["rewire", "--in", p(&a), "--out", p(&b), "--conv", "3,3,4,8"]);
    assert!(fs::read_to_string(&b).unwrap().lines().count() >= 36);

    let bad = run(&["rewire", "--in", p(&a), "--out", p(&b), "--conv", "3,3,4,9"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn variance_search_flag() {
    let dir = tempfile::tempdir().unwrap();
    let lo = dir.path().join("lo.wmat");
    let hi = dir.path().join("hi.wmat");
    let base = [
        "init",
        "--method",
        "kaiming-normal",
        "--rows",
        "64",
        "--cols",
        "64",
        "--candidates",
        "10",
    ];
    let mut a = base.to_vec();
    a.extend(["--search", "min", "--out", p(&lo)]);
    ok(&a);
    let mut b = base.to_vec();
    b.extend(["--search", "max", "--out", p(&hi)]);
    ok(&b);
    let v = |path: &Path| strength_stats(&load_matrix(path).unwrap(), Side::Input).variance;
    assert!(v(&lo) < v(&hi));
}

#[test]
fn sweep_and_cost_tables() {
    let csv = ok(&["sweep", "--sizes", "16,32", "--trials", "4", "--seed", "3"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("size,"));
    assert_eq!(
        csv,
        ok(&["analyze", "--sweep", "--sizes", "16,32", "--trials", "4", "--seed", "3"])
    );

    let cost = ok(&["cost", "--sizes", "16,32"]);
    assert_eq!(cost.lines().count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(&["init", "--method", "nope", "--rows", "2", "--cols", "2", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["analyze", "--in", "/nonexistent.wmat"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.wmat");
    fs::write(&junk, b"WMAT1 rows=2 cols=2\n").unwrap();
    assert_eq!(run(&["analyze", "--in", p(&junk)]).status.code(), Some(2));
    let out = run(&[
        "train",
        "--arch",
        "16,8,10",
        "--init",
        "glorot-uniform",
        "--out",
        p(dir.path()),
        "--data-dir",
        p(&dir.path().join("none")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    common::write_synthetic_mnist(dir.path(), 100, 20);
    let out = dir.path().join("diverged");
    let status = run(&[
        "train",
        "--arch",
        "16,8,10",
        "--init",
        "glorot-uniform",
        "--lr",
        "1e300",
        "--epochs",
        "3",
        "--batch-size",
        "10",
        "--data-dir",
        p(dir.path()),
        "--out",
        p(&out),
    ]);
    assert_eq!(status.status.code(), Some(3));
    let last = fs::read_to_string(out.join("rep_000.jsonl")).unwrap();
    assert!(last.lines().last().unwrap().contains("\"diverged\""));
}

#[test]
fn train_compare_export() {
    let dir = tempfile::tempdir().unwrap();
    common::write_synthetic_mnist(dir.path(), 300, 60);
    let base = dir.path().join("runs/base");
    let pa = dir.path().join("runs/pa");
    for (mode, out) in [("none", &base), ("pa", &pa)] {
        let out_s = p(out).to_string();
        let status = bin()
            .env("STRENGTH_INIT_DATA", dir.path())
            .args([
                "train",
                "--arch",
                "16,12,10",
                "--dataset",
                "mnist",
                "--init",
                "kaiming-uniform",
            ])
            .args([
                "--rewire",
                mode,
                "--seed",
                "5",
                "--reps",
                "3",
                "--epochs",
                "4",
                "--batch-size",
                "16",
            ])
            .args(["--lr", "0.05", "--jobs", "2", "--out", &out_s])
            .status()
            .unwrap();
        assert!(status.success());
        for r in 0..3 {
            let lines = fs::read_to_string(out.join(format!("rep_{r:03}.jsonl"))).unwrap();
            let records: Vec<serde_json::Value> = lines
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
            assert_eq!(records.len(), 5);
            assert!(records[..4].iter().all(|r| r["type"] == "epoch"));
            assert_eq!(records[4]["type"], "summary");
        }
        assert!(out.join("summary.json").exists());
    }

    let md = ok(&[
        "compare",
        "--baseline",
        p(&base),
        "--treatment",
        p(&pa),
        "--alpha",
        "0.05",
    ]);
    assert!(md.contains('|'));
    let json = ok(&[
        "compare",
        "--baseline",
        p(&base),
        "--treatment",
        p(&pa),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["metrics"].as_array().unwrap().len(), 4);
    let csv = ok(&[
        "compare",
        "--baseline",
        p(&base),
        "--treatment",
        p(&pa),
        "--format",
        "csv",
    ]);
    assert_eq!(csv.lines().count(), 5);

    let listed = ok(&["export", p(&base)]);
    assert_eq!(listed.lines().count(), 2);
    let curves = fs::read_to_string(base.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 5);
    let flow = fs::read_to_string(base.join("gradient_flow.csv")).unwrap();
    assert_eq!(flow.lines().count(), 1 + 4 * 2);

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["export", p(&empty)]).status.code(), Some(1));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn manifest_reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    common::write_synthetic_mnist(dir.path(), 200, 40);
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{
  "dataset": "mnist",
  "arch": [16, 8, 10],
  "init": "glorot-uniform",
  "baseline": "none",
  "treatment": "pa",
  "global_seed": 3,
  "repetitions": 2,
  "output_dir": "unused",
  "schedule": {"epochs": 2, "batch_size": 20, "lr0": 0.05, "momentum": 0.9}
}"#,
    )
    .unwrap();
    let outs: Vec<_> = [("1", "a"), ("3", "b")]
        .iter()
        .map(|(jobs, name)| {
            let out = dir.path().join(name);
            ok(&[
                "run",
                p(&manifest),
                "--data-dir",
                p(dir.path()),
                "--out",
                p(&out),
                "--jobs",
                jobs,
            ]);
            out
        })
        .collect();
    let a = snapshot(&outs[0]);
    assert_eq!(a, snapshot(&outs[1]));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "manifest.json",
        "comparison.md",
        "none/rep_000.jsonl",
        "none/rep_001.jsonl",
        "none/summary.json",
        "pa/summary.json",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
}
