use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grfg")).args(args).output().unwrap()
}

fn write_csv(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut text = String::from("p,q,r,y\n");
    for _ in 0..80 {
        let (p, q, r): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen());
        text.push_str(&format!("{p},{q},{r},{}\n", p * q + r));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn run_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_csv(&data);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# quick\nn_trees = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = grfg(&[
        "run", "--data", data.to_str().unwrap(), "--target", "y", "--iters", "4", "--seed", "2",
        "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "best_features.csv", "trace.log"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = out.join("report.json");
    let o = grfg(&["report", "--report", report.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!o.stdout.is_empty());

    let o = grfg(&["trace", "--report", report.to_str().unwrap(), "--feature", "mul(p,sin(q))"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p [original]") && text.contains("q [original]"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_csv(&data);
    let out = dir.path().join("out");
    let missing = grfg(&["run", "--data", "/nonexistent.csv", "--target", "y", "--out", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_target = grfg(&["run", "--data", data.to_str().unwrap(), "--target", "zz", "--out", out.to_str().unwrap()]);
    assert_eq!(bad_target.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_target.stderr).contains("zz"));
    let bad_mode = grfg(&["run", "--data", data.to_str().unwrap(), "--target", "y", "--mode", "best", "--out", out.to_str().unwrap()]);
    assert_eq!(bad_mode.status.code(), Some(1));
    assert_eq!(grfg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(grfg(&["--help"]).status.code(), Some(0));
}
