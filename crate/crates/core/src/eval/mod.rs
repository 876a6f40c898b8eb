//! Downstream scoring: regressors, metrics, and the fixed split protocol.

mod forest;
mod metrics;
mod ridge;
mod tree;

pub use forest::{Forest, ForestConfig};
pub use metrics::{metrics, metrics_with, Metrics, MetricsMode};
pub use ridge::Ridge;
pub use tree::{RegressionTree, TreeConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Forest,
    Ridge,
    Tree,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(Self::Forest),
            "ridge" => Ok(Self::Ridge),
            "tree" => Ok(Self::Tree),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub model: ModelKind,
    pub forest: ForestConfig,
    pub ridge_lambda: f64,
    pub tree_depth: usize,
    pub test_fraction: f64,
    pub metrics_mode: MetricsMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Forest,
            forest: ForestConfig::default(),
            ridge_lambda: 1.0,
            tree_depth: 10,
            test_fraction: 0.2,
            metrics_mode: MetricsMode::Mean,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        if !(self.ridge_lambda >= 0.0) || !self.ridge_lambda.is_finite() {
            return Err(Error::Config("ridge_lambda must be finite and non-negative".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 0.5) {
            return Err(Error::Config("test_fraction must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// A fitted downstream model.
#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Forest(Forest),
    Ridge(Ridge),
    Tree(RegressionTree),
}

impl Regressor {
    pub fn predict(&self, cols: &[&[f64]], rows: &[usize]) -> Vec<f64> {
        match self {
            Self::Forest(f) => f.predict(cols, rows),
            Self::Ridge(r) => r.predict(cols, rows),
            Self::Tree(t) => t.predict(cols, rows),
        }
    }
}

fn column_views(data: &Dataset) -> Vec<&[f64]> {
    data.columns().iter().map(|c| c.values()).collect()
}

pub fn fit_forest(data: &Dataset, rows: &[usize], cfg: &ForestConfig) -> Result<Forest> {
    Forest::fit(&column_views(data), data.target(), rows, cfg)
}

pub fn fit_ridge(data: &Dataset, rows: &[usize], lambda: f64) -> Result<Ridge> {
    Ridge::fit(&column_views(data), data.target(), rows, lambda)
}

pub fn fit_tree(data: &Dataset, rows: &[usize], max_depth: usize) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("tree needs at least one training row".into()));
    }
    let cfg = TreeConfig {
        max_depth,
        ..Default::default()
    };
    // a tree with all features per split consumes no randomness
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(RegressionTree::fit(&column_views(data), data.target(), rows.to_vec(), cfg, &mut rng))
}

pub fn fit(data: &Dataset, rows: &[usize], cfg: &EvalConfig) -> Result<Regressor> {
    if data.n_descriptors() == 0 {
        return Err(Error::Empty("descriptor set"));
    }
    Ok(match cfg.model {
        ModelKind::Forest => Regressor::Forest(fit_forest(data, rows, &cfg.forest)?),
        ModelKind::Ridge => Regressor::Ridge(fit_ridge(data, rows, cfg.ridge_lambda)?),
        ModelKind::Tree => Regressor::Tree(fit_tree(data, rows, cfg.tree_depth)?),
    })
}

/// Row partition shared by every iteration of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Rows never used for model selection, when requested.
    pub holdout: Option<Vec<usize>>,
}

impl EvalProtocol {
    /// Seeded shuffle into train/test, or train/test/holdout when
    /// `holdout` is set (test and holdout each take `test_fraction`).
    /// Each part is sorted ascending.
    pub fn split(n: usize, test_fraction: f64, holdout: bool, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 0.5) {
            return Err(Error::Config("test_fraction must lie in (0, 0.5)".into()));
        }
        let n_test = ((test_fraction * n as f64).round() as usize).max(2);
        let n_hold = if holdout { n_test } else { 0 };
        if n < n_test + n_hold + 2 {
            return Err(Error::InvalidInput(format!("{n} rows are too few to split")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut test = idx[..n_test].to_vec();
        let mut hold = idx[n_test..n_test + n_hold].to_vec();
        let mut train = idx[n_test + n_hold..].to_vec();
        test.sort_unstable();
        hold.sort_unstable();
        train.sort_unstable();
        Ok(Self {
            train,
            test,
            holdout: holdout.then_some(hold),
        })
    }

    /// SHA-256 over the partition, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut part = |tag: &str, rows: &[usize]| {
            h.update(tag.as_bytes());
            for r in rows {
                h.update((*r as u64).to_le_bytes());
            }
        };
        part("train", &self.train);
        part("test", &self.test);
        if let Some(hold) = &self.holdout {
            part("holdout", hold);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Test-row 1-RAE.
    pub v_a: f64,
    pub metrics: Metrics,
}

fn score_rows(data: &Dataset, train: &[usize], eval_rows: &[usize], cfg: &EvalConfig) -> Result<Score> {
    let model = fit(data, train, cfg)?;
    let pred = model.predict(&column_views(data), eval_rows);
    let truth: Vec<f64> = eval_rows.iter().map(|&r| data.target()[r]).collect();
    let metrics = metrics_with(&truth, &pred, cfg.metrics_mode)?;
    Ok(Score {
        v_a: metrics.one_minus_rae,
        metrics,
    })
}

/// Fits on the train rows and scores the test rows.
pub fn score_space(data: &Dataset, protocol: &EvalProtocol, cfg: &EvalConfig) -> Result<Score> {
    score_rows(data, &protocol.train, &protocol.test, cfg)
}

/// Fits on the train rows and scores the holdout rows, if any.
pub fn score_holdout(data: &Dataset, protocol: &EvalProtocol, cfg: &EvalConfig) -> Result<Option<Score>> {
    protocol
        .holdout
        .as_ref()
        .map(|h| score_rows(data, &protocol.train, h, cfg))
        .transpose()
}

/// K-fold cross-validation; the metric triple is averaged over folds.
pub fn score_cv(data: &Dataset, folds: usize, seed: u64, cfg: &EvalConfig) -> Result<Score> {
    let n = data.n_samples();
    if folds < 2 || n < 2 * folds {
        return Err(Error::Config(format!("cannot run {folds}-fold cross-validation on {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut sums = [0.0; 3];
    for k in 0..folds {
        let lo = k * n / folds;
        let hi = (k + 1) * n / folds;
        let mut test = idx[lo..hi].to_vec();
        let mut train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        let s = score_rows(data, &train, &test, cfg)?;
        sums[0] += s.metrics.one_minus_rae;
        sums[1] += s.metrics.one_minus_mae;
        sums[2] += s.metrics.one_minus_mse;
    }
    let f = folds as f64;
    let metrics = Metrics {
        one_minus_rae: sums[0] / f,
        one_minus_mae: sums[1] / f,
        one_minus_mse: sums[2] / f,
    };
    Ok(Score {
        v_a: metrics.one_minus_rae,
        metrics,
    })
}

/// Random-forest impurity importance fitted on the train rows, summing to 1.
pub fn feature_importance(data: &Dataset, protocol: &EvalProtocol, forest: &ForestConfig) -> Result<Vec<f64>> {
    Ok(fit_forest(data, &protocol.train, forest)?.importance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let names: Vec<String> = (0..m).map(|i| format!("f{i}")).collect();
        let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Dataset::from_columns(&names, cols, "y", y).unwrap()
    }

    #[test]
    fn split_is_disjoint_cover_and_stable() {
        let p = EvalProtocol::split(103, 0.2, false, 5).unwrap();
        assert_eq!(p.test.len(), 21);
        let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(p.hash(), EvalProtocol::split(103, 0.2, false, 5).unwrap().hash());
        assert_ne!(p.hash(), EvalProtocol::split(103, 0.2, false, 6).unwrap().hash());

        let h = EvalProtocol::split(100, 0.2, true, 5).unwrap();
        assert_eq!((h.train.len(), h.test.len(), h.holdout.as_ref().unwrap().len()), (60, 20, 20));
        assert!(EvalProtocol::split(3, 0.2, false, 0).is_err());
    }

    #[test]
    fn leaked_target_scores_high() {
        let d = noisy(500, 1, 1);
        let mut cols = d.columns().to_vec();
        cols.push(crate::dataset::Descriptor::raw("leak", d.target().to_vec()).unwrap());
        let d = d.with_columns(cols).unwrap();
        let p = EvalProtocol::split(500, 0.2, false, 1).unwrap();
        let cfg = EvalConfig {
            forest: ForestConfig { n_trees: 30, ..Default::default() },
            ..Default::default()
        };
        let v = score_space(&d, &p, &cfg).unwrap().v_a;
        assert!(v >= 0.9, "{v}");
    }

    #[test]
    fn model_kinds_and_cv_run() {
        let d = noisy(60, 2, 2);
        for model in [ModelKind::Forest, ModelKind::Ridge, ModelKind::Tree] {
            let cfg = EvalConfig {
                model,
                forest: ForestConfig { n_trees: 5, ..Default::default() },
                ..Default::default()
            };
            let p = EvalProtocol::split(60, 0.2, true, 0).unwrap();
            assert!(score_space(&d, &p, &cfg).unwrap().v_a <= 1.0);
            assert!(score_holdout(&d, &p, &cfg).unwrap().is_some());
            assert!(score_cv(&d, 5, 0, &cfg).unwrap().v_a <= 1.0);
        }
    }

    #[test]
    fn tree_depth_zero_predicts_train_mean() {
        let d = noisy(30, 2, 4);
        let rows: Vec<usize> = (0..20).collect();
        let t = fit_tree(&d, &rows, 0).unwrap();
        let mean = rows.iter().map(|&r| d.target()[r]).sum::<f64>() / 20.0;
        let cols = column_views(&d);
        assert!(t.predict(&cols, &[25, 26]).iter().all(|&p| p == mean));
    }
}
