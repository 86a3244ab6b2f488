#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

pub fn zsmstm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_zsmstm")).args(args).output().expect("binary runs");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap_or(-1), text)
}

pub fn ok(args: &[&str]) -> String {
    let (code, text) = zsmstm(args);
    assert_eq!(code, 0, "zsmstm {args:?} failed:\n{text}");
    text
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth-data, train, transfer and metrics in `dir`; returns the distance report CSV.
pub fn pipeline(dir: &Path, epochs: &str) -> String {
    let data = dir.join("data");
    let run = dir.join("run");
    let pred = dir.join("pred");
    let report = dir.join("report.csv");
    ok(&[
        "synth-data", "--out", p(&data), "--seen", "2", "--unseen", "1", "--per-speaker", "10", "--seed", "5",
        "--d-text", "8", "--n-mels", "32", "--frames", "16", "--max-words", "4",
    ]);
    ok(&[
        "train", "--data", p(&data.join("manifest.tsv")), "--out", p(&run), "--preset", "tiny", "--epochs", epochs,
        "--batch-size", "4", "--initial-lr", "1e-3", "--warmup-steps", "10", "--seed", "1",
    ]);
    ok(&[
        "transfer", "--checkpoint", p(&run.join("model.ckpt")), "--data", p(&data.join("manifest.tsv")),
        "--source-speaker", "seen00", "--target-speaker", "unseen00", "--out", p(&pred),
    ]);
    ok(&[
        "metrics", "--pred", p(&pred), "--source", p(&data.join("intervals/seen00")), "--target",
        p(&data.join("intervals/unseen00")), "--out", p(&report),
    ]);
    std::fs::read_to_string(report).unwrap()
}
