use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyncov::stats_archive::read_stats_archive;
use nalgebra::DMatrix;
use serde_json::Value;

fn dyncov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyncov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dyncov(args);
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

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn json(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap()
}

fn toy_train(dir: &Path) -> PathBuf {
    write(
        dir,
        "toy.csv",
        "f0,f1,label\n1,0,0\n-1,0,0\n0,1,1\n0,-1,1\n",
    )
}

#[test]
fn fit_toy_archive() {
    let dir = tempfile::tempdir().unwrap();
    let train = toy_train(dir.path());
    let stats = dir.path().join("toy.fstats");
    let summary = json(&ok(&["fit", "--train", p(&train), "--out", p(&stats)]));
    assert_eq!(summary["n"], 4);
    assert_eq!(summary["d"], 2);
    assert_eq!(summary["n_classes"], 2);
    assert_eq!(summary["k"], 1);
    assert_eq!(summary["eigenvalue_min"], 0.5);

    let (back, basis) = read_stats_archive(&stats).unwrap();
    assert_eq!(back.cov_within, DMatrix::from_diagonal_element(2, 2, 0.5));
    assert_eq!(basis.unwrap().k(), 1);
}

#[test]
fn fit_errors() {
    let dir = tempfile::tempdir().unwrap();
    let train = toy_train(dir.path());
    let out = dir.path().join("s.fstats");
    let missing = dir.path().join("missing-labels.txt");

    let res = dyncov(&[
        "fit",
        "--train",
        p(&train),
        "--labels",
        p(&missing),
        "--out",
        p(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing-labels.txt"));
    assert!(res.stdout.is_empty());

    let res = dyncov(&["fit", "--train", p(&train), "--k", "2", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let unlabeled = write(dir.path(), "u.csv", "1,0\n0,1\n");
    let res = dyncov(&["fit", "--train", p(&unlabeled), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));

    // exactly repeated rows with no regularization: numerical failure
    let flat = write(
        dir.path(),
        "flat.csv",
        "f0,f1,label\n1,0,0\n1,0,0\n0,1,1\n0,1,1\n",
    );
    let res = dyncov(&[
        "fit",
        "--train",
        p(&flat),
        "--eps-scale",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn eval_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let id = write(d, "id.txt", "2\n3\n");
    let ood = write(d, "ood.txt", "0\n1\n");
    let report = json(&ok(&["eval", "--test", p(&id), "--ood", p(&ood)]));
    assert_eq!(report["auroc"], 1.0);
    assert_eq!(report["fpr95"], 0.0);
    assert_eq!(report["n_id"], 2);

    let swapped = json(&ok(&["eval", "--test", p(&ood), "--ood", p(&id)]));
    assert_eq!(swapped["auroc"], 0.0);

    let id = write(d, "id4.txt", "3\n1\n");
    let ood = write(d, "ood4.txt", "2\n0\n");
    let out = d.join("report.json");
    let hist = d.join("hist.csv");
    let report = json(&ok(&[
        "eval",
        "--test",
        p(&id),
        "--ood",
        p(&ood),
        "--out",
        p(&out),
        "--hist",
        p(&hist),
        "--bins",
        "3",
    ]));
    assert_eq!(report["auroc"], 0.75);
    assert_eq!(json(&std::fs::read_to_string(&out).unwrap()), report);
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 4);

    let empty = write(d, "empty.txt", "");
    assert_eq!(
        dyncov(&["eval", "--test", p(&empty), "--ood", p(&ood)])
            .status
            .code(),
        Some(2)
    );
}

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Pipeline {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&[
            "synth",
            "--out",
            p(&root),
            "--n-classes",
            "4",
            "--dim",
            "12",
            "--n-per-class",
            "80",
            "--n-ood",
            "150",
            "--seed",
            "3",
        ]);
        ok(&[
            "fit",
            "--train",
            p(&root.join("train.fmat")),
            "--out",
            p(&root.join("s.fstats")),
            "--k",
            "4",
        ]);
        Pipeline { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        p(&self.root.join(name)).to_string()
    }

    /// Scores ID and OOD with extra flags and evaluates through the CLI.
    fn eval(&self, tag: &str, flags: &[&str]) -> Value {
        for set in ["id_test", "ood_test"] {
            let out = self.path(&format!("{tag}_{set}.csv"));
            let stats = self.root_stats();
            let test = self.path(&format!("{set}.fmat"));
            let mut args = vec!["score", "--stats", &stats, "--test", &test, "--out", &out];
            args.extend(flags);
            ok(&args);
        }
        json(&ok(&[
            "eval",
            "--test",
            &self.path(&format!("{tag}_id_test.csv")),
            "--ood",
            &self.path(&format!("{tag}_ood_test.csv")),
        ]))
    }

    fn root_stats(&self) -> String {
        self.path("s.fstats")
    }

    fn common(&self) -> Vec<String> {
        vec![
            "--stats".into(),
            self.root_stats(),
            "--test".into(),
            self.path("id_test.fmat"),
            "--ood".into(),
            self.path("ood_test.fmat"),
        ]
    }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn sweep_matches_eval_and_validates_grid() {
    let pipe = Pipeline::new();
    let mut args: Vec<String> = vec!["sweep".into()];
    args.extend(pipe.common());
    let run = |grid: &str| {
        let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
        a.extend(["--grid", grid]);
        dyncov(&a)
    };

    let out = run("1");
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    let report = pipe.eval("k1", &["--k", "1"]);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), num(&report["auroc"]));
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), num(&report["fpr95"]));

    let out = run("3,3");
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);

    for bad in ["0", "12", "2,40", "x"] {
        let out = run(bad);
        assert_eq!(out.status.code(), Some(2), "grid {bad}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn ablate_rows_match_single_runs() {
    let pipe = Pipeline::new();
    let mut args: Vec<String> = vec!["ablate".into()];
    args.extend(pipe.common());
    args.extend(["--k".into(), "4".into()]);
    let text = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let rows = csv_rows(&text);
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["baseline", "dme", "dme+rsp", "dme+dcm", "full"]);
    for row in &rows {
        let auroc: f64 = row[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&auroc));
    }

    let baseline = pipe.eval("maha", &["--method", "maha", "--no-dcm"]);
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), num(&baseline["auroc"]));
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), num(&baseline["fpr95"]));
    let full = pipe.eval("dcc", &["--method", "dcc", "--k", "4"]);
    assert_eq!(rows[4][4].parse::<f64>().unwrap(), num(&full["auroc"]));
    assert_eq!(rows[4][5].parse::<f64>().unwrap(), num(&full["fpr95"]));
}

#[test]
fn scores_do_not_depend_on_thread_count() {
    let pipe = Pipeline::new();
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = pipe.path(&format!("t{threads}.fmat"));
        ok(&[
            "score",
            "--stats",
            &pipe.root_stats(),
            "--test",
            &pipe.path("ood_test.fmat"),
            "--out",
            &out,
            "--format",
            "fmat",
            "--threads",
            threads,
        ]);
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let stdout = ok(&[
        "score",
        "--stats",
        &pipe.root_stats(),
        "--test",
        &pipe.path("id_test.fmat"),
    ]);
    assert!(stdout.starts_with("index,score,argmin_class,clamped,singular\n"));
    assert_eq!(stdout.lines().count(), 321);
}

#[test]
fn diagnose_writes_csv_and_summary() {
    let pipe = Pipeline::new();
    let out = pipe.path("diag.csv");
    let ood_out = pipe.path("diag_ood.csv");
    let hist = pipe.path("norms.csv");
    let summary = json(&ok(&[
        "diagnose",
        "--stats",
        &pipe.root_stats(),
        "--test",
        &pipe.path("id_test.fmat"),
        "--ood",
        &pipe.path("ood_test.fmat"),
        "--out",
        &out,
        "--ood-out",
        &ood_out,
        "--hist",
        &hist,
        "--bins",
        "10",
    ]));
    assert_eq!(summary["k"], 4);
    assert_eq!(summary["test"]["n"], 320);
    assert_eq!(summary["ood"]["n"], 150);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(
        "index,p,q,s,residual_norm,chosen_class,condition_holds,clamped,adjusted_class\n"
    ));
    assert_eq!(text.lines().count(), 321);
    assert_eq!(
        std::fs::read_to_string(&ood_out).unwrap().lines().count(),
        151
    );
    assert!(std::fs::read_to_string(&hist)
        .unwrap()
        .starts_with("bin_left,bin_right,count_ID,count_OOD\n"));

    let res = dyncov(&[
        "diagnose",
        "--stats",
        &pipe.root_stats(),
        "--test",
        &pipe.path("id_test.fmat"),
        "--no-rsp",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_reads_spec_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"n_classes": 3, "dim": 5, "n_per_class": 10, "n_ood": 7}"#,
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let echoed = json(&ok(&[
            "synth",
            "--out",
            p(&out),
            "--spec",
            p(&spec),
            "--format",
            "csv",
            "--seed",
            "5",
        ]));
        assert_eq!(echoed["seed"], 5);
        assert_eq!(echoed["dim"], 5);
        outputs.push(std::fs::read(out.join("train.csv")).unwrap());
        assert_eq!(
            std::fs::read_to_string(out.join("ood_test.csv"))
                .unwrap()
                .lines()
                .count(),
            7
        );
    }
    assert_eq!(outputs[0], outputs[1]);

    let bad = write(dir.path(), "bad.json", r#"{"n_clases": 3}"#);
    let res = dyncov(&[
        "synth",
        "--out",
        p(&dir.path().join("c")),
        "--spec",
        p(&bad),
    ]);
    assert_eq!(res.status.code(), Some(2));
}
