use grfg::info::{MiCache, MiConfig};
use grfg::pipeline::{rescore, run, write_outputs, IterationRecord, Mode, RunConfig};
use grfg::{evaluate_expression, Dataset, Expr, OperationSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(seed: u64) -> Dataset {
    let n = 160;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y = (0..n)
        .map(|i| cols[0][i] * cols[1][i] + cols[2][i].cos() + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    Dataset::from_columns(&["a", "b", "c", "d", "e"], cols, "y", y).unwrap()
}

fn quick(seed: u64, mode: Mode, iterations: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        mode,
        max_iterations: iterations,
        ..RunConfig::default()
    };
    cfg.eval.forest.n_trees = 15;
    cfg
}

/// The choice made at an iteration, ignoring everything downstream of it.
fn choice(r: &IterationRecord) -> (Option<Vec<String>>, Option<String>, Option<Vec<String>>) {
    (r.group1.clone(), r.operation.clone(), r.group2.clone())
}

#[test]
fn fully_exploring_grfg_matches_random_generation() {
    let d = toy(1);
    let rdg = run(&d, &quick(5, Mode::Rdg, 12)).unwrap();
    let mut cfg = quick(5, Mode::Grfg, 12);
    cfg.agents.epsilon_override = Some(1.0);
    let grfg = run(&d, &cfg).unwrap();
    let a: Vec<_> = rdg.report.iterations.iter().map(choice).collect();
    let b: Vec<_> = grfg.report.iterations.iter().map(choice).collect();
    assert_eq!(a, b);
    assert_eq!(rdg.report.best.v_a, grfg.report.best.v_a);
}

#[test]
fn ablations_leave_the_original_scoring_untouched() {
    let d = toy(2);
    let base = run(&d, &quick(3, Mode::Grfg, 6)).unwrap();
    for flag in ["no_cluster", "euclidean_distance", "random_unary_group", "random_binary_align"] {
        let mut cfg = quick(3, Mode::Grfg, 6);
        cfg.set(flag, "true").unwrap();
        let ablated = run(&d, &cfg).unwrap();
        assert_eq!(ablated.report.iterations[0], base.report.iterations[0], "{flag}");
        assert_eq!(ablated.report.split_hash, base.report.split_hash, "{flag}");
    }
}

#[test]
fn no_cluster_acts_on_single_descriptors() {
    let d = toy(3);
    let mut cfg = quick(4, Mode::Grfg, 8);
    cfg.ablation.no_cluster = true;
    let out = run(&d, &cfg).unwrap();
    let iters = &out.report.iterations;
    for w in iters.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        if cur.skipped.is_none() {
            assert_eq!(cur.n_groups, Some(prev.n_descriptors));
            assert_eq!(cur.group1.as_ref().unwrap().len(), 1);
        }
    }
}

#[test]
fn unary_ablation_diverges_only_after_a_unary_step() {
    let d = toy(4);
    let base = run(&d, &quick(6, Mode::Grfg, 10)).unwrap();
    let mut cfg = quick(6, Mode::Grfg, 10);
    cfg.ablation.random_unary_group = true;
    let ablated = run(&d, &cfg).unwrap();
    let ops = OperationSet::default();
    for (x, y) in base.report.iterations.iter().zip(&ablated.report.iterations).skip(1) {
        assert_eq!(choice(x), choice(y));
        let op: grfg::Operation = x.operation.as_deref().unwrap().parse().unwrap();
        assert!(ops.operations().contains(&op));
        if !op.is_binary() {
            break;
        }
        assert_eq!(x, y, "binary steps precede any unary one, so records match");
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let d = toy(5);
    let a = run(&d, &quick(9, Mode::Grfg, 8)).unwrap();
    let b = run(&d, &quick(9, Mode::Grfg, 8)).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    let c = run(&d, &quick(10, Mode::Grfg, 8)).unwrap();
    assert_ne!(a.report.to_json(), c.report.to_json());
}

#[test]
fn every_mode_respects_the_size_limit() {
    let d = toy(6);
    for mode in [Mode::Grfg, Mode::Rdg, Mode::Erg, Mode::Org] {
        let mut cfg = quick(2, mode, 10);
        cfg.generation.size_tolerance = 2.0;
        let out = run(&d, &cfg).unwrap();
        assert_eq!(out.report.size_limit, 10);
        assert!(out.report.iterations.iter().all(|r| r.n_descriptors <= 10), "{mode:?}");
        assert!(out.last.n_descriptors() <= 10);
    }
}

#[test]
fn exported_best_set_re_evaluates_and_rescores() {
    let d = toy(7);
    let cfg = quick(1, Mode::Grfg, 10);
    let out = run(&d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();

    let mut reader = csv::Reader::from_path(dir.path().join("best_features.csv")).unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    let ops = OperationSet::default();
    let mut rebuilt = Vec::new();
    for (j, h) in headers.iter().enumerate().filter(|(_, h)| h.as_str() != "y") {
        let expr: Expr = h.parse().unwrap();
        let values = evaluate_expression(&expr, &d, &ops).unwrap();
        let exported: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        assert_eq!(
            values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            exported.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "{h}"
        );
        rebuilt.push(grfg::Descriptor::new(expr, values).unwrap());
    }
    let set = out.best.with_columns(rebuilt).unwrap();
    let score = rescore(&set, &cfg).unwrap();
    assert!((score.v_a - out.report.best.v_a).abs() <= 1e-12);
}

#[test]
fn mutual_information_cache_sees_only_training_rows() {
    let d = toy(8);
    let rows: Vec<usize> = (0..80).collect();
    let cfg = MiConfig::default();
    let cache = MiCache::with_rows(d.target(), rows, &cfg).unwrap();
    let a = &d.columns()[0];
    let head: Vec<f64> = a.values()[..80].to_vec();
    let direct = grfg::info::mutual_information(&head, &d.target()[..80], &cfg).unwrap();
    assert_eq!(cache.relevance(a), direct);
}
