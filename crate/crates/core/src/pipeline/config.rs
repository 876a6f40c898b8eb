use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{Agent1Reward, AgentConfig};
use crate::cluster::ClusteringConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, MetricsMode, ModelKind};
use crate::generation::GenerationConfig;
use crate::info::MiConfig;
use crate::ops::OperationSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Learned cascading generation.
    #[default]
    Grfg,
    /// The same loop with uniformly random choices and no learning.
    Rdg,
    /// One-shot expansion of every descriptor, then reduction.
    Erg,
    /// The original descriptor set only.
    Org,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grfg" => Ok(Self::Grfg),
            "rdg" => Ok(Self::Rdg),
            "erg" => Ok(Self::Erg),
            "org" => Ok(Self::Org),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Grfg => "grfg",
            Self::Rdg => "rdg",
            Self::Erg => "erg",
            Self::Org => "org",
        }
    }
}

/// Switches that each replace one step of the learned loop.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Every descriptor forms its own group.
    pub no_cluster: bool,
    /// Cluster on the euclidean distance between group representations.
    pub euclidean_distance: bool,
    /// Unary operations transform a uniformly random group.
    pub random_unary_group: bool,
    /// Binary operations pair members after randomly subsampling the
    /// larger group, instead of ranking pairs by similarity.
    pub random_binary_align: bool,
}

impl Ablation {
    pub fn any(&self) -> bool {
        self.no_cluster || self.euclidean_distance || self.random_unary_group || self.random_binary_align
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub max_iterations: usize,
    pub mode: Mode,
    pub operations: OperationSet,
    pub ablation: Ablation,
    /// Stop after this many iterations without a new best score.
    pub early_stop_patience: Option<usize>,
    /// Folds for the final cross-validated scores.
    pub cv_folds: Option<usize>,
    /// Carve a third split that never influences model selection.
    pub holdout: bool,
    pub mi: MiConfig,
    pub clustering: ClusteringConfig,
    pub generation: GenerationConfig,
    pub agents: AgentConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iterations: 100,
            mode: Mode::Grfg,
            operations: OperationSet::default(),
            ablation: Ablation::default(),
            early_stop_patience: None,
            cv_folds: None,
            holdout: false,
            mi: MiConfig::default(),
            clustering: ClusteringConfig::default(),
            generation: GenerationConfig::default(),
            agents: AgentConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode != Mode::Grfg && self.ablation.any() {
            return Err(Error::Config("ablation flags are only valid in grfg mode".into()));
        }
        if self.early_stop_patience == Some(0) {
            return Err(Error::Config("early_stop_patience must be positive".into()));
        }
        if matches!(self.cv_folds, Some(k) if k < 2) {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        self.clustering.validate()?;
        self.generation.validate()?;
        self.agents.validate()?;
        self.eval.validate()
    }

    /// Downstream settings with the forest seeded from the run seed.
    pub fn eval_config(&self) -> EvalConfig {
        let mut e = self.eval.clone();
        e.forest.seed = self.seed;
        e
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "max_iterations" => self.max_iterations = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "operations" => {
                let names: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                self.operations = OperationSet::from_names(&names)?;
            }
            "no_cluster" => self.ablation.no_cluster = parse_bool(key, v)?,
            "euclidean_distance" => self.ablation.euclidean_distance = parse_bool(key, v)?,
            "random_unary_group" => self.ablation.random_unary_group = parse_bool(key, v)?,
            "random_binary_align" => self.ablation.random_binary_align = parse_bool(key, v)?,
            "early_stop_patience" => self.early_stop_patience = parse_opt(key, v)?,
            "cv_folds" => self.cv_folds = parse_opt(key, v)?,
            "holdout" => self.holdout = parse_bool(key, v)?,
            "mi_bins" => self.mi.n_bins = parse(key, v)?,
            "mi_epsilon" => self.mi.epsilon = parse(key, v)?,
            "mi_exclude_diagonal" => self.mi.exclude_diagonal = parse_bool(key, v)?,
            "cluster_threshold" => self.clustering.stop_threshold = parse(key, v)?,
            "cluster_min_groups" => self.clustering.min_groups = parse(key, v)?,
            "top_k" => self.generation.top_k = parse(key, v)?,
            "size_tolerance" => self.generation.size_tolerance = parse(key, v)?,
            "dedup_tolerance" => self.generation.dedup_tolerance = parse(key, v)?,
            "center" => self.generation.center = parse_bool(key, v)?,
            "dedup_monotone" => self.generation.dedup_monotone = parse_bool(key, v)?,
            "hidden" => {
                self.agents.hidden = v
                    .split(',')
                    .map(|h| parse(key, h.trim()))
                    .collect::<Result<_>>()?
            }
            "learning_rate" => self.agents.learning_rate = parse(key, v)?,
            "gamma" => self.agents.gamma = parse(key, v)?,
            "replay_capacity" => self.agents.replay_capacity = parse(key, v)?,
            "batch_size" => self.agents.batch_size = parse(key, v)?,
            "epsilon_start" => self.agents.exploration.start = parse(key, v)?,
            "epsilon_end" => self.agents.exploration.end = parse(key, v)?,
            "epsilon_decay_fraction" => self.agents.exploration.decay_fraction = parse(key, v)?,
            "epsilon" => self.agents.epsilon_override = parse_opt(key, v)?,
            "agent1_reward" => {
                self.agents.agent1_reward = match v {
                    "prose" => Agent1Reward::Prose,
                    "formula" => Agent1Reward::Formula,
                    _ => return Err(Error::Config(format!("invalid value '{v}' for '{key}'"))),
                }
            }
            "target_sync" => self.agents.target_sync = parse_opt(key, v)?,
            "model" => self.eval.model = v.parse::<ModelKind>()?,
            "n_trees" => self.eval.forest.n_trees = parse(key, v)?,
            "max_depth" => self.eval.forest.max_depth = parse(key, v)?,
            "min_samples_leaf" => self.eval.forest.min_samples_leaf = parse(key, v)?,
            "max_features" => self.eval.forest.max_features = parse_opt(key, v)?,
            "bootstrap" => self.eval.forest.bootstrap = parse_bool(key, v)?,
            "ridge_lambda" => self.eval.ridge_lambda = parse(key, v)?,
            "tree_depth" => self.eval.tree_depth = parse(key, v)?,
            "test_fraction" => self.eval.test_fraction = parse(key, v)?,
            "metrics" => self.eval.metrics_mode = v.parse::<MetricsMode>()?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text over the defaults. Blank lines and
    /// `#` comments are ignored; unknown or repeated keys are errors.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key '{k}' repeated", n + 1)));
            }
            cfg.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Every field in the flat text format; `parse_text` inverts it.
    pub fn to_text(&self) -> String {
        let a = &self.agents;
        let f = &self.eval.forest;
        let hidden: Vec<String> = a.hidden.iter().map(|h| h.to_string()).collect();
        let agent1 = match a.agent1_reward {
            Agent1Reward::Prose => "prose",
            Agent1Reward::Formula => "formula",
        };
        let model = match self.eval.model {
            ModelKind::Forest => "forest",
            ModelKind::Ridge => "ridge",
            ModelKind::Tree => "tree",
        };
        let metrics = match self.eval.metrics_mode {
            MetricsMode::Mean => "mean",
            MetricsMode::RawSums => "paper_literal",
        };
        let rows: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("mode", self.mode.name().to_string()),
            ("operations", self.operations.names().join(",")),
            ("no_cluster", self.ablation.no_cluster.to_string()),
            ("euclidean_distance", self.ablation.euclidean_distance.to_string()),
            ("random_unary_group", self.ablation.random_unary_group.to_string()),
            ("random_binary_align", self.ablation.random_binary_align.to_string()),
            ("early_stop_patience", fmt_opt(&self.early_stop_patience)),
            ("cv_folds", fmt_opt(&self.cv_folds)),
            ("holdout", self.holdout.to_string()),
            ("mi_bins", self.mi.n_bins.to_string()),
            ("mi_epsilon", self.mi.epsilon.to_string()),
            ("mi_exclude_diagonal", self.mi.exclude_diagonal.to_string()),
            ("cluster_threshold", self.clustering.stop_threshold.to_string()),
            ("cluster_min_groups", self.clustering.min_groups.to_string()),
            ("top_k", self.generation.top_k.to_string()),
            ("size_tolerance", self.generation.size_tolerance.to_string()),
            ("dedup_tolerance", self.generation.dedup_tolerance.to_string()),
            ("center", self.generation.center.to_string()),
            ("dedup_monotone", self.generation.dedup_monotone.to_string()),
            ("hidden", hidden.join(",")),
            ("learning_rate", a.learning_rate.to_string()),
            ("gamma", a.gamma.to_string()),
            ("replay_capacity", a.replay_capacity.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("epsilon_start", a.exploration.start.to_string()),
            ("epsilon_end", a.exploration.end.to_string()),
            ("epsilon_decay_fraction", a.exploration.decay_fraction.to_string()),
            ("epsilon", fmt_opt(&a.epsilon_override)),
            ("agent1_reward", agent1.to_string()),
            ("target_sync", fmt_opt(&a.target_sync)),
            ("model", model.to_string()),
            ("n_trees", f.n_trees.to_string()),
            ("max_depth", f.max_depth.to_string()),
            ("min_samples_leaf", f.min_samples_leaf.to_string()),
            ("max_features", fmt_opt(&f.max_features)),
            ("bootstrap", f.bootstrap.to_string()),
            ("ridge_lambda", self.eval.ridge_lambda.to_string()),
            ("tree_depth", self.eval.tree_depth.to_string()),
            ("test_fraction", self.eval.test_fraction.to_string()),
            ("metrics", metrics.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the flat text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig {
            seed: 42,
            max_iterations: 7,
            holdout: true,
            cv_folds: Some(5),
            ..Default::default()
        };
        cfg.ablation.random_unary_group = true;
        cfg.agents.epsilon_override = Some(1.0);
        cfg.eval.metrics_mode = MetricsMode::RawSums;
        cfg.operations = OperationSet::from_names(&["mul", "sin"]).unwrap();
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(RunConfig::parse_text(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(RunConfig::parse_text("seed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::parse_text("seed = 1\nseed = 2\n").is_err());
        assert!(RunConfig::parse_text("seed 1\n").is_err());
        assert!(RunConfig::parse_text("mode = fast\n").is_err());
        let cfg = RunConfig::parse_text("# comment\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn ablation_requires_grfg_mode() {
        let mut cfg = RunConfig::parse_text("mode = rdg\nno_cluster = true\n").unwrap();
        assert!(cfg.validate().is_err());
        cfg.mode = Mode::Grfg;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn forest_seed_follows_run_seed() {
        let cfg = RunConfig {
            seed: 77,
            ..Default::default()
        };
        assert_eq!(cfg.eval_config().forest.seed, 77);
    }
}
