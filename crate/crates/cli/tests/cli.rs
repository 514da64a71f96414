use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncfair::{write_array, DenseArray};
use serde_json::Value;

fn ncfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four classes sitting on the coordinate axes, with classifier rows equal to
/// their centred means: every cosine is 1, so the alignment spread is 0.
fn self_dual_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let centers = [[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
    let offsets = [[0.1, 0.2], [-0.1, -0.2], [0.2, -0.1], [-0.2, 0.1]];
    let mut reps = Vec::new();
    let mut labels = Vec::new();
    for (c, m) in centers.iter().enumerate() {
        for o in offsets {
            reps.extend([m[0] + o[0], m[1] + o[1]]);
            labels.push(c);
        }
    }
    let (r, l, w) = (
        dir.join("reps.npy"),
        dir.join("labels.npy"),
        dir.join("w.npy"),
    );
    write_array(&DenseArray::from_f64(vec![16, 2], reps).unwrap(), &r).unwrap();
    write_array(&DenseArray::from_labels(&labels), &l).unwrap();
    write_array(
        &DenseArray::from_f64(vec![4, 2], centers.concat()).unwrap(),
        &w,
    )
    .unwrap();
    (r, l, w)
}

#[test]
fn stats_then_nc_on_self_dual_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (r, l, w) = self_dual_fixture(dir.path());
    let snap = dir.path().join("snap");
    let stats = json_stdout(&ncfair(&[
        "stats",
        "--reprs",
        s(&r),
        "--labels",
        s(&l),
        "--out",
        s(&snap),
    ]));
    assert_eq!(stats["tokens_seen"], 16);
    assert_eq!(stats["classes_seen"], 4);

    let report = json_stdout(&ncfair(&[
        "nc",
        "--stats",
        s(&snap),
        "--weights",
        s(&w),
        "--reprs",
        s(&r),
        "--labels",
        s(&l),
    ]));
    assert!(report["nc3_u"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(report["nc4"].as_f64(), Some(100.0));
    assert_eq!(report["classes_with_data"], 4);

    // Merging a second copy doubles the counts but keeps the geometry.
    let merged = dir.path().join("merged");
    let again = json_stdout(&ncfair(&[
        "stats",
        "--reprs",
        s(&r),
        "--labels",
        s(&l),
        "--stats",
        s(&snap),
        "--out",
        s(&merged),
    ]));
    assert_eq!(again["tokens_seen"], 32);
    let out = dir.path().join("report.json");
    let o = ncfair(&[
        "nc",
        "--stats",
        s(&merged),
        "--weights",
        s(&w),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let merged_report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(merged_report["nc1"], report["nc1"]);
    assert!(merged_report["nc4"].is_null());
}

#[test]
fn stereoset_csv_reproduces_a_printed_icat() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("score_stereo,score_anti,score_unrelated\n");
    for i in 0..10_000 {
        let meaningful = i < 8417;
        let stereotyped = i < 6028;
        let (st, an) = if stereotyped {
            (-1.0, -2.0)
        } else {
            (-2.0, -1.0)
        };
        let un = if meaningful { -3.0 } else { 0.0 };
        writeln!(csv, "{st},{an},{un}").unwrap();
    }
    let p = dir.path().join("stereoset.csv");
    fs::write(&p, csv).unwrap();
    let v = json_stdout(&ncfair(&["fairness", "stereoset", s(&p)]));
    assert!((v["lm"].as_f64().unwrap() - 84.17).abs() < 1e-9);
    assert!((v["ss"].as_f64().unwrap() - 60.28).abs() < 1e-9);
    assert!((v["icat"].as_f64().unwrap() - 66.86).abs() <= 0.02);
}

#[test]
fn other_fairness_suites_run() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "becpro",
            "group,association\nfemale,-0.0641\nmale,-0.0237\n",
            "diff",
        ),
        (
            "winobias",
            "category,correct\n1A,false\n1A,true\n1P,true\n2A,true\n2P,true\n",
            "tpr1",
        ),
        (
            "bios",
            "gender,gold,predicted\nM,nurse,nurse\nF,nurse,surgeon\n",
            "gap_tpr",
        ),
        (
            "nli",
            "entail,neutral,contradict\n0.1,0.8,0.1\n0.6,0.3,0.1\n",
            "nn",
        ),
    ];
    for (suite, text, key) in cases {
        let p = dir.path().join(format!("{suite}.csv"));
        fs::write(&p, text).unwrap();
        let v = json_stdout(&ncfair(&["fairness", suite, s(&p)]));
        assert!(v[key].is_number(), "{suite}: {v}");
    }
    let v = json_stdout(&ncfair(&[
        "fairness",
        "becpro",
        s(&dir.path().join("becpro.csv")),
    ]));
    assert!((v["diff"].as_f64().unwrap() - 0.0404).abs() < 1e-12);
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn demo_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = ncfair(&["demo", "--seed", "7", "--out", s(d)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(p, _)| p == Path::new("summary.json")));
    assert!(ta
        .iter()
        .any(|(p, _)| p == Path::new("regularized/logits.npy")));
    assert_eq!(ta, tb);

    let summary: Value =
        serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    let nc3 = |k: &str| summary[k]["report"]["nc3_u"].as_f64().unwrap();
    assert!(nc3("regularized") < nc3("baseline"));
}

#[test]
fn train_and_sweep_write_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(
        &cfg,
        r#"{"epochs": 1, "eval_sentences": 100, "corpus": {"num_sentences": 300}}"#,
    )
    .unwrap();
    let run_dir = dir.path().join("run");
    let v = json_stdout(&ncfair(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&run_dir),
        "--alpha",
        "5",
    ]));
    assert_eq!(v["alpha"].as_f64(), Some(5.0));
    assert_eq!(
        fs::read_to_string(run_dir.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );

    let sweep = dir.path().join("sweep");
    let o = ncfair(&[
        "sweep",
        "--config",
        s(&cfg),
        "--alpha",
        "0,3",
        "--out",
        s(&sweep),
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = ncfair(&[
        "sweep",
        "--config",
        s(&cfg),
        "--alpha",
        "0",
        "--out",
        s(&sweep),
        "--format",
        "table",
    ]);
    assert!(table.status.success());
    assert!(String::from_utf8_lossy(&table.stdout).contains("alpha"));
    assert!(sweep.join("sweep.json").is_file());
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    assert_eq!(ncfair(&["nc", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        ncfair(&["fairness", "stereoset", "x.csv", "--format", "table"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = ncfair(&["nc", "--stats", s(&missing), "--weights", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    assert_eq!(ncfair(&["--version"]).status.code(), Some(0));
}

#[test]
fn help_lists_defaults() {
    let o = ncfair(&["sweep", "--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[default: 0,1,3,5,10,30,50]"), "{text}");
    let demo = String::from_utf8_lossy(&ncfair(&["demo", "--help"]).stdout).to_string();
    assert!(demo.contains("[default: 7]"));
}
