//! Compares original, random and learned generation on a synthetic target
//! `y = f1·f2 + sin(f3) + 0.05·ε` with eight raw descriptors.
//!
//! Usage: `synthetic_benchmark [iterations] [seeds] [config-file]`

use std::time::Instant;

use grfg::pipeline::{run, Mode, RunConfig};
use grfg::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64) -> Dataset {
    let n = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..8).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y = (0..n)
        .map(|i| cols[0][i] * cols[1][i] + cols[2][i].sin() + 0.05 * rng.gen_range(-1.0..1.0))
        .collect();
    let names = ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"];
    Dataset::from_columns(&names, cols, "y", y).expect("valid synthetic data")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iters = args.first().and_then(|a| a.parse().ok()).unwrap_or(60);
    let seeds = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(5u64);
    let base = match args.get(2) {
        Some(path) => RunConfig::load(path).expect("readable configuration"),
        None => RunConfig::default(),
    };
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for seed in 0..seeds {
        let data = dataset(seed);
        let mut line = format!("seed {seed}:");
        for (slot, label, mode, no_cluster) in [
            ("org", Mode::Org, false),
            ("rdg", Mode::Rdg, false),
            ("grfg", Mode::Grfg, false),
            ("grfg-c", Mode::Grfg, true),
        ]
        .into_iter()
        .enumerate()
        .map(|(i, x)| (i, x.0, x.1, x.2))
        {
            let mut cfg = RunConfig {
                seed,
                mode,
                max_iterations: iters,
                ..base.clone()
            };
            cfg.ablation.no_cluster = no_cluster;
            let start = Instant::now();
            let out = run(&data, &cfg).expect("run succeeds");
            scores[slot].push(out.report.best.v_a);
            line += &format!(
                "  {label} {:.4} (@{}, {:.1}s)",
                out.report.best.v_a,
                out.report.best.iteration,
                start.elapsed().as_secs_f64()
            );
        }
        println!("{line}");
    }
    let labels = ["org", "rdg", "grfg", "grfg-c"];
    let medians: Vec<String> = labels
        .iter()
        .zip(scores)
        .map(|(l, s)| format!("{l} {:.4}", median(s)))
        .collect();
    println!("median: {}", medians.join("  "));
}
