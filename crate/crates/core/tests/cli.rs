use std::path::Path;
use std::process::Command;

use routecodec::dra::{DraModel, RouteSpec};

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_routecodec")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_encode_decode_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = d.join("m.drnw");
    std::fs::write(&model, DraModel::new(RouteSpec::default(), 3).unwrap().to_checkpoint()).unwrap();
    ok(&["gen-synth", "--seed", "4", "--out", s(&d.join("syn")), "--sequences", "1", "--frames", "4", "--size", "32x32", "--motion", "shift:1,0"]);
    let seq = d.join("syn/seq_000");
    let stream = d.join("a.drnv");
    let stats = d.join("a.csv");
    ok(&["encode", "--model", s(&model), "--rca", "oracle", "--target", "0.5", "--gop", "2", "--in", s(&seq), "--out", s(&stream), "--stats", s(&stats)]);
    ok(&["decode", "--model", s(&model), "--in", s(&stream), "--out", s(&d.join("dec"))]);
    let report = d.join("r.csv");
    ok(&["eval", "--ref", s(&seq), "--dec", s(&d.join("dec")), "--stats", s(&stats), "--report", s(&report)]);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("delta_r_percent"), "{text}");

    // the decoded PSNR agrees with what the encoder logged
    let logged = routecodec::pipeline::SequenceStats::read_csv(std::fs::File::open(&stats).unwrap()).unwrap();
    let line = text.lines().find(|l| l.starts_with("mean_psnr")).unwrap();
    let decoded: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((decoded - logged.mean_psnr()).abs() < 0.05, "{decoded} vs {}", logged.mean_psnr());
}

#[test]
fn bd_reads_curves() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "bpp,psnr\n0.1,30\n0.2,32.5\n0.4,35\n0.8,37\n").unwrap();
    std::fs::write(&b, "bpp,psnr\n0.09,30\n0.18,32.5\n0.36,35\n0.72,37\n").unwrap();
    let out = ok(&["bd", "--curve-a", s(&a), "--curve-b", s(&b)]);
    assert!(out.contains("BD-Rate -10.000%"), "{out}");
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    assert_eq!(cli(&["encode"]).status.code(), Some(2));
    assert_eq!(cli(&["gen-synth", "--seed", "1", "--out", "/tmp/x", "--motion", "wobble"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.drnw");
    assert_eq!(cli(&["decode", "--model", s(&missing), "--in", s(&missing), "--out", "/tmp/y"]).status.code(), Some(3));
    let bad = dir.path().join("bad.drnw");
    std::fs::write(&bad, b"junk").unwrap();
    assert_eq!(cli(&["decode", "--model", s(&bad), "--in", s(&bad), "--out", "/tmp/y"]).status.code(), Some(3));
}
