use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::eval::{Metrics, Score};

pub const REPORT_FORMAT: &str = "grfg-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    pub group1: f64,
    pub operation: f64,
    /// Present when the operation was binary.
    pub group2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub group1: Option<f64>,
    pub operation: Option<f64>,
    pub group2: Option<f64>,
}

/// One pass of the loop. Iteration 0 is the original descriptor set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Why the iteration was skipped, if it was.
    pub skipped: Option<String>,
    pub epsilon: Option<f64>,
    pub n_groups: Option<usize>,
    pub group1: Option<Vec<String>>,
    pub operation: Option<String>,
    pub group2: Option<Vec<String>>,
    /// Members transformed by a unary operation.
    pub unary_group: Option<Vec<String>>,
    /// Descriptors that survived de-duplication.
    pub generated: Vec<String>,
    /// Size of the scored set, before size control.
    pub n_scored: Option<usize>,
    /// Size after size control.
    pub n_descriptors: usize,
    pub utility: Option<f64>,
    pub v_a: Option<f64>,
    pub metrics: Option<Metrics>,
    pub rewards: Option<Rewards>,
    pub losses: Option<Losses>,
}

impl IterationRecord {
    pub(crate) fn skipped(iteration: usize, reason: String, epsilon: f64, n_descriptors: usize) -> Self {
        Self {
            iteration,
            skipped: Some(reason),
            epsilon: Some(epsilon),
            n_groups: None,
            group1: None,
            operation: None,
            group2: None,
            unary_group: None,
            generated: Vec::new(),
            n_scored: None,
            n_descriptors,
            utility: None,
            v_a: None,
            metrics: None,
            rewards: None,
            losses: None,
        }
    }

    pub(crate) fn baseline(iteration: usize, n: usize, utility: f64, score: &Score) -> Self {
        Self {
            skipped: None,
            epsilon: None,
            n_scored: Some(n),
            utility: Some(utility),
            v_a: Some(score.v_a),
            metrics: Some(score.metrics),
            ..Self::skipped(iteration, String::new(), 0.0, n)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub name: String,
    pub original: bool,
    pub depth: usize,
    pub leaves: Vec<String>,
    pub operations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub name: String,
    pub importance: f64,
    pub original: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// Descending by importance; ties keep column order.
    pub entries: Vec<ImportanceEntry>,
    /// Share of generated descriptors among the ten most important.
    pub generated_fraction_top10: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSet {
    pub iteration: usize,
    pub v_a: f64,
    pub metrics: Metrics,
    pub descriptors: Vec<ProvenanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalScores {
    pub original: Score,
    pub best: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub target: String,
    pub n_samples: usize,
    pub descriptors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset: DatasetSummary,
    pub split_hash: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_holdout: usize,
    pub size_limit: usize,
    pub early_stopped: bool,
    pub iterations: Vec<IterationRecord>,
    pub best: BestSet,
    pub importance: ImportanceTable,
    pub holdout: Option<FinalScores>,
    pub cross_validation: Option<FinalScores>,
    pub warnings: Vec<String>,
}

impl RunReport {
    /// Deterministic pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn original_score(&self) -> Option<&IterationRecord> {
        self.iterations.first()
    }

    /// Plain-text metric table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {}  seed {}  target {}", self.config.mode.name(), self.config.seed, self.dataset.target);
        let _ = writeln!(
            s,
            "rows {} (train {}, test {}, holdout {})  split {}",
            self.dataset.n_samples,
            self.n_train,
            self.n_test,
            self.n_holdout,
            &self.split_hash[..12.min(self.split_hash.len())]
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<22}{:>10}{:>10}{:>10}{:>8}", "set", "1-RAE", "1-MAE", "1-MSE", "size");
        let row = |s: &mut String, label: &str, m: &Metrics, size: usize| {
            let _ = writeln!(
                s,
                "{:<22}{:>10.4}{:>10.4}{:>10.4}{:>8}",
                label, m.one_minus_rae, m.one_minus_mae, m.one_minus_mse, size
            );
        };
        if let Some(org) = self.original_score() {
            if let Some(m) = &org.metrics {
                row(&mut s, "original (test)", m, self.dataset.descriptors.len());
            }
        }
        row(
            &mut s,
            &format!("best @{} (test)", self.best.iteration),
            &self.best.metrics,
            self.best.descriptors.len(),
        );
        if let Some(h) = &self.holdout {
            row(&mut s, "original (holdout)", &h.original.metrics, self.dataset.descriptors.len());
            row(&mut s, "best (holdout)", &h.best.metrics, self.best.descriptors.len());
        }
        if let Some(c) = &self.cross_validation {
            row(&mut s, "original (cv)", &c.original.metrics, self.dataset.descriptors.len());
            row(&mut s, "best (cv)", &c.best.metrics, self.best.descriptors.len());
        }
        let skipped = self.iterations.iter().filter(|r| r.skipped.is_some()).count();
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "iterations {} (skipped {}){}",
            self.iterations.len().saturating_sub(1),
            skipped,
            if self.early_stopped { ", stopped early" } else { "" }
        );
        let _ = writeln!(
            s,
            "top-10 generated fraction {:.2}",
            self.importance.generated_fraction_top10
        );
        for (i, e) in self.importance.entries.iter().take(10).enumerate() {
            let _ = writeln!(
                s,
                "{:>3}. {:.4}  {}{}",
                i + 1,
                e.importance,
                e.name,
                if e.original { "" } else { "  [generated]" }
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
