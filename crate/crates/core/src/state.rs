//! Fixed-width state vectors for the cascading agents.
//!
//! A descriptor set (or group) is summarised in two passes of the same
//! seven statistics `(count, std, min, max, Q1, Q2, Q3)`: first down each
//! column, giving a 7×m matrix, then along each row of that matrix, giving
//! 7×7. The result is flattened row-major to 49 values. In the first pass
//! `count` is the sample count; in the second it is the column count.
//!
//! Standard deviation is the population form. Quartiles interpolate
//! linearly between order statistics at position `q·(n−1)`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ops::{Operation, OperationSet};

pub const N_STATS: usize = 7;
pub const REP_LEN: usize = N_STATS * N_STATS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean: f64 = values.iter().map(|v| v / n).sum();
    // Rescale before squaring so wide-range descriptors stay finite.
    let scale = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if scale == 0.0 || !scale.is_finite() {
        return if scale.is_finite() { 0.0 } else { f64::MAX };
    }
    let var: f64 = values.iter().map(|v| ((v - mean) / scale).powi(2)).sum::<f64>() / n;
    scale * var.sqrt()
}

/// The seven summary statistics, with `count` supplied by the caller.
/// Every statistic is computed from the sorted values, so the result does
/// not depend on input order.
pub fn describe(values: &[f64], count: f64) -> [f64; N_STATS] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [
        count,
        population_std(&sorted),
        sorted[0],
        sorted[sorted.len() - 1],
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    ]
}

/// Two-pass 49-value summary of a set of equal-length columns.
pub fn rep_columns(columns: &[&[f64]]) -> Result<StateVector> {
    if columns.is_empty() {
        return Err(Error::Empty("no descriptors to represent"));
    }
    let n = columns[0].len();
    if n == 0 {
        return Err(Error::Empty("no samples to represent"));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch(c.len(), n));
    }
    let first: Vec<[f64; N_STATS]> = columns.iter().map(|c| describe(c, n as f64)).collect();
    let m = columns.len() as f64;
    let mut out = Vec::with_capacity(REP_LEN);
    let mut row = Vec::with_capacity(columns.len());
    for s in 0..N_STATS {
        row.clear();
        row.extend(first.iter().map(|st| st[s]));
        out.extend_from_slice(&describe(&row, m));
    }
    Ok(StateVector(out))
}

/// Representation of the whole descriptor set.
pub fn rep_descriptor_set(data: &Dataset) -> Result<StateVector> {
    let cols: Vec<&[f64]> = data.columns().iter().map(|c| c.values()).collect();
    rep_columns(&cols)
}

/// Representation of the columns at `members`.
pub fn rep_group(data: &Dataset, members: &[usize]) -> Result<StateVector> {
    let cols: Vec<&[f64]> = members.iter().map(|&i| data.columns()[i].values()).collect();
    rep_columns(&cols)
}

/// One-hot vector at the operation's stable index.
pub fn rep_operation(op: Operation, ops: &OperationSet) -> Result<StateVector> {
    let idx = ops
        .index_of(op)
        .ok_or_else(|| Error::OperationNotInSet(op.name().to_string()))?;
    let mut v = vec![0.0; ops.len()];
    v[idx] = 1.0;
    Ok(StateVector(v))
}

pub fn concat_states(parts: &[&StateVector]) -> StateVector {
    StateVector(parts.iter().flat_map(|p| p.0.iter().copied()).collect())
}
