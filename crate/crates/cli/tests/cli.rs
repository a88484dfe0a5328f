use std::path::Path;
use std::process::{Command, Output};

fn dndcmh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dndcmh")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dndcmh(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn codes_lists_the_length_63_table() {
    let text = ok(&["codes", "--c", "63"]);
    for row in ["63, 51, 2", "63, 45, 3", "63, 39, 4", "63, 36, 5", "63, 30, 6", "63, 24, 7", "63, 18, 10", "63, 16, 11", "63, 10, 13"] {
        assert!(text.lines().any(|l| l.trim() == row), "missing {row} in\n{text}");
    }
}

#[test]
fn codes_rejects_unsupported_length() {
    assert!(!dndcmh(&["codes", "--c", "64"]).status.success());
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for path in [&a, &b] {
        ok(&["gen-data", "--out", p(path), "--subjects", "5", "--images-per-subject", "3", "--d-attr", "6", "--d-img", "8", "--seed", "9"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn eval_of_a_hand_built_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let rankings = dir.path().join("r.txt");
    std::fs::write(&rankings, "# query 0 mask 100\n1, 4, 0, 0\n2, 7, 1, 1\n3, 1, 2, 0\n").unwrap();
    let text = ok(&["eval", "--rankings", p(&rankings), "--ndcg-k", "2"]);
    assert!(text.lines().any(|l| l == "MAP, 1, 0.5"), "{text}");
    let ndcg = 1.0 / 3f64.log2();
    let line = text.lines().find(|l| l.starts_with("NDCG@2, 1, ")).unwrap();
    let v: f64 = line.rsplit(", ").next().unwrap().parse().unwrap();
    assert!((v - ndcg).abs() < 1e-12);
}

#[test]
fn bad_invocations_fail() {
    assert!(!dndcmh(&["frobnicate"]).status.success());
    assert!(!dndcmh(&["eval", "--rankings", "/nonexistent/file"]).status.success());
    assert!(!dndcmh(&["eval", "--rankings", "x", "--arity", "4"]).status.success());
}

#[test]
fn train_encode_retrieve_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = d.join("train.txt");
    let test = d.join("test.txt");
    let cfg = d.join("cfg.txt");
    let out = d.join("out");
    std::fs::write(&cfg, "c = 15\nm = 2\nepochs_stage1a = 5\nouter_rounds_max = 2\nlr = 1e-4\nL = 3\n").unwrap();
    ok(&[
        "gen-data", "--out", p(&train), "--subjects", "8", "--images-per-subject", "4", "--d-attr", "8", "--d-img", "12",
        "--seed", "1", "--test-out", p(&test), "--test-per-subject", "1",
    ]);
    ok(&[
        "train", "--config", p(&cfg), "--data", p(&train), "--out-dir", p(&out), "--hidden", "16,16", "--necd-epochs", "1",
        "--necd-frames", "120",
    ]);
    for f in ["encoders.bin", "necd.bin", "code.txt", "report.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let gallery = d.join("gallery.txt");
    let encoders = out.join("encoders.bin");
    ok(&["encode", "--encoders", p(&encoders), "--data", p(&test), "--modality", "image", "--out", p(&gallery)]);
    assert_eq!(std::fs::read_to_string(&gallery).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 8);
    let ranks = d.join("ranks.txt");
    ok(&[
        "retrieve", "--index", p(&gallery), "--encoders", p(&encoders), "--random-queries", "5", "--arity", "1", "--out",
        p(&ranks),
    ]);
    let text = ok(&["eval", "--rankings", p(&ranks), "--index", p(&gallery)]);
    assert!(text.starts_with("metric, query_arity, value\n"));
    let ber = ok(&["ber", "--code", p(&out.join("code.txt")), "--necd", p(&out.join("necd.bin")), "--snr", "3", "--frames", "200"]);
    assert!(ber.starts_with("decoder,snr_db,ber,fer"), "{ber}");
}
