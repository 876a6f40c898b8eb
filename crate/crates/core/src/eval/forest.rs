use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `ceil(m / 3)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_leaf: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 || self.max_features == Some(0) {
            return Err(Error::Config("forest sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn features_per_split(&self, m: usize) -> usize {
        self.max_features.unwrap_or(m.div_ceil(3)).clamp(1, m.max(1))
    }
}

/// Bagged ensemble of regression trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl Forest {
    pub fn fit(cols: &[&[f64]], y: &[f64], rows: &[usize], cfg: &ForestConfig) -> Result<Self> {
        cfg.validate()?;
        if rows.len() < 2 {
            return Err(Error::InvalidInput("forest needs at least two training rows".into()));
        }
        if cols.is_empty() {
            return Err(Error::Empty("descriptor set"));
        }
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            min_samples_leaf: cfg.min_samples_leaf,
            max_features: Some(cfg.features_per_split(cols.len())),
        };
        let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
        let trees = (0..cfg.n_trees)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeder.gen());
                let sample: Vec<usize> = if cfg.bootstrap {
                    (0..rows.len()).map(|_| rows[rng.gen_range(0..rows.len())]).collect()
                } else {
                    rows.to_vec()
                };
                RegressionTree::fit(cols, y, sample, tree_cfg, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            n_features: cols.len(),
        })
    }

    /// Mean of the tree predictions, summed in tree order.
    pub fn predict(&self, cols: &[&[f64]], rows: &[usize]) -> Vec<f64> {
        let k = self.trees.len() as f64;
        rows.iter()
            .map(|&r| self.trees.iter().map(|t| t.predict_row(cols, r)).sum::<f64>() / k)
            .collect()
    }

    /// Per-tree normalized impurity decrease, averaged and renormalized to
    /// sum 1. A forest with no splits reports uniform importance.
    pub fn importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            let raw = t.raw_importance();
            let s: f64 = raw.iter().sum();
            if s > 0.0 {
                acc.iter_mut().zip(raw).for_each(|(a, r)| *a += r / s);
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        } else {
            acc.fill(1.0 / self.n_features as f64);
        }
        acc
    }
}
