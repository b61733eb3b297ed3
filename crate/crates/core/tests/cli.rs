use std::path::Path;
use std::process::{Command, Output};

use stylemel::dataset::toy::write_toy_corpus;
use stylemel::dataset::MelCache;

fn stylemel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylemel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stylemel(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stylemel(dir.path(), &["--help"]).status.success());
    assert!(!stylemel(dir.path(), &["train", "--no-such-flag"]).status.success());
    assert!(!stylemel(dir.path(), &["bogus"]).status.success());
    let missing = stylemel(dir.path(), &["preprocess", "--data-root", "nowhere", "--out", "c.melc"]);
    assert!(!missing.status.success());
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());
}

#[test]
fn preprocess_train_generate_render() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_toy_corpus(d.join("corpus"), 6, 2).unwrap();
    let summary = ok(d, &["preprocess", "--data-root", "corpus", "--classes", "low,high", "--out", "c.melc"]);
    assert!(summary.lines().any(|l| l == "total 6"), "{summary}");
    assert_eq!(MelCache::load(d.join("c.melc")).unwrap().len(), 6);

    let train = [
        "train", "--cache", "c.melc", "--out-dir", "run", "--preset", "toy", "--set", "fade_samples=32",
        "--set", "stabilize_samples=32", "--set", "channels=4", "--total-samples", "160",
    ];
    ok(d, &train);
    assert!(d.join("run/latest.ckpt").is_file());
    assert!(d.join("run/config.txt").is_file());

    for out in ["a", "b"] {
        ok(d, &["--seed", "9", "generate", "--checkpoint", "run/latest.ckpt", "--digit", "1", "--count", "4", "--out-dir", out]);
    }
    let mut files: Vec<_> = std::fs::read_dir(d.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files.len(), 4);
    for f in &files {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    assert!(!stylemel(d, &["generate", "--checkpoint", "run/latest.ckpt", "--digit", "7", "--out-dir", "c"])
        .status
        .success());

    ok(d, &["plot", "--mel-file", "a/digit1-0000.mel", "--out-png", "p.png", "--scale", "1"]);
    assert_eq!(&std::fs::read(d.join("p.png")).unwrap()[1..4], b"PNG");
    ok(d, &["to-audio", "--mel-file", "a/digit1-0000.mel", "--out-wav", "a.wav", "--griffin-lim-iters", "4"]);
    assert!(hound::WavReader::open(d.join("a.wav")).unwrap().len() > 0);

    let acc = ok(d, &["train-classifier", "--cache", "c.melc", "--out", "cl.bin", "--preset", "toy", "--train-samples", "64", "--holdout", "0.34"]);
    assert!(acc.contains("held-out accuracy"), "{acc}");
    let fd = ok(d, &["evaluate-fd", "--checkpoint", "run/latest.ckpt", "--cache", "c.melc", "--classifier", "cl.bin", "--samples", "16"]);
    let value: f64 = fd.trim().strip_prefix("fd ").unwrap().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
}
