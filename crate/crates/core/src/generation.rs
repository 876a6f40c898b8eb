//! Group-wise descriptor generation and size control.
//!
//! Binary operations cross the most dissimilar descriptor pairs between two
//! groups; unary operations transform every member of the more relevant
//! group. New columns then pass a de-duplication filter, and K-best
//! selection by MI to the target keeps the set within its size budget.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Descriptor};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::info::{group_relevance, MiCache};
use crate::ops::{BinaryOp, Operation, UnaryOp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Pairs kept when crossing two groups.
    pub top_k: usize,
    /// Maximum set size as a multiple of the original descriptor count.
    pub size_tolerance: f64,
    /// Largest elementwise gap at which two columns count as duplicates.
    pub dedup_tolerance: f64,
    /// Mean-center columns before the cosine similarity.
    pub center: bool,
    /// Also drop generated columns that order the samples exactly like a
    /// retained column (or exactly reversed), i.e. strictly monotone
    /// transforms of it.
    pub dedup_monotone: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            size_tolerance: 3.0,
            dedup_tolerance: 1e-12,
            center: true,
            dedup_monotone: true,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("generation top_k must be at least 1".into()));
        }
        if !(self.size_tolerance >= 1.0) || !self.size_tolerance.is_finite() {
            return Err(Error::Config("generation size_tolerance must be at least 1".into()));
        }
        if !(self.dedup_tolerance >= 0.0) {
            return Err(Error::Config("generation dedup_tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// `ceil(size_tolerance · n_original)`.
    pub fn size_limit(&self, n_original: usize) -> usize {
        (self.size_tolerance * n_original as f64).ceil() as usize
    }
}

/// A freshly generated column with the context it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub descriptor: Descriptor,
    pub operation: Operation,
    pub parents: Vec<String>,
    /// `|cos|` of the crossed pair, or the relevance of the transformed group.
    pub rank_score: f64,
}

fn check_groups(data: &Dataset, a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("descriptor group"));
    }
    let n = data.n_descriptors();
    if a.iter().chain(b).any(|&i| i >= n) {
        return Err(Error::InvalidInput("descriptor index out of range".into()));
    }
    if a.iter().any(|i| b.contains(i)) {
        return Err(Error::InvalidInput("descriptor groups overlap".into()));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn scaled(v: &[f64], center: bool) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = if center { v.iter().map(|x| x / n).sum() } else { 0.0 };
    let mut out: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let scale = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale > 0.0 && scale.is_finite() {
        out.iter_mut().for_each(|x| *x /= scale);
    }
    out
}

/// Cosine similarity; a zero-norm vector counts as fully similar.
pub fn cosine_similarity(a: &[f64], b: &[f64], center: bool) -> f64 {
    let (a, b) = (scaled(a, center), scaled(b, center));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn make_binary(data: &Dataset, op: BinaryOp, a: usize, b: usize, score: f64) -> Option<Generated> {
    let (fa, fb) = (&data.columns()[a], &data.columns()[b]);
    let values = op.apply_all(fa.values(), fb.values());
    if values.iter().any(|v| !v.is_finite()) || is_constant(&values) {
        return None;
    }
    let expr = Expr::binary(op, fa.expr().clone(), fb.expr().clone());
    Some(Generated {
        descriptor: Descriptor::new(expr, values).ok()?,
        operation: Operation::Binary(op),
        parents: vec![fa.name().to_string(), fb.name().to_string()],
        rank_score: score,
    })
}

/// Ranks every cross pair by `|cos|` ascending (stable, so ties keep
/// enumeration order) and applies `op` to the `top_k` least similar.
pub fn cross_groups_binary(
    data: &Dataset,
    c1: &[usize],
    c2: &[usize],
    op: BinaryOp,
    cfg: &GenerationConfig,
) -> Result<Vec<Generated>> {
    check_groups(data, c1, c2)?;
    let cols = data.columns();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(c1.len() * c2.len());
    for &a in c1 {
        for &b in c2 {
            let s = cosine_similarity(cols[a].values(), cols[b].values(), cfg.center).abs();
            pairs.push((a, b, s));
        }
    }
    pairs.sort_by(|x, y| x.2.total_cmp(&y.2));
    let out: Vec<Generated> = pairs
        .iter()
        .take(cfg.top_k)
        .filter_map(|&(a, b, s)| make_binary(data, op, a, b, s))
        .collect();
    if out.is_empty() {
        log::info!("crossing with {} produced only constant or non-finite columns", op.name());
    }
    Ok(out)
}

/// All descriptor pairs `(i, j)`, `i < j`, by `|cos|` descending; ties keep
/// enumeration order.
pub fn most_similar_pairs(data: &Dataset, k: usize, center: bool) -> Vec<(usize, usize, f64)> {
    let cols = data.columns();
    let mut pairs = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let s = cosine_similarity(cols[i].values(), cols[j].values(), center).abs();
            pairs.push((i, j, s));
        }
    }
    pairs.sort_by(|x, y| y.2.total_cmp(&x.2));
    pairs.truncate(k);
    pairs
}

/// Applies `op` to each listed pair, keeping the pair score.
pub fn apply_binary_pairs(data: &Dataset, pairs: &[(usize, usize, f64)], op: BinaryOp) -> Vec<Generated> {
    pairs
        .iter()
        .filter_map(|&(a, b, s)| make_binary(data, op, a, b, s))
        .collect()
}

/// Pairs the smaller group with an equally sized random sample of the
/// larger one, member by member.
pub fn align_groups_binary<R: Rng>(
    data: &Dataset,
    c1: &[usize],
    c2: &[usize],
    op: BinaryOp,
    center: bool,
    rng: &mut R,
) -> Result<Vec<Generated>> {
    check_groups(data, c1, c2)?;
    let (small, large, small_is_left) = if c1.len() <= c2.len() {
        (c1, c2, true)
    } else {
        (c2, c1, false)
    };
    let picked: Vec<usize> = sample(rng, large.len(), small.len())
        .into_iter()
        .map(|i| large[i])
        .collect();
    let cols = data.columns();
    Ok(small
        .iter()
        .zip(picked)
        .filter_map(|(&s, l)| {
            let (a, b) = if small_is_left { (s, l) } else { (l, s) };
            let score = cosine_similarity(cols[a].values(), cols[b].values(), center).abs();
            make_binary(data, op, a, b, score)
        })
        .collect())
}

/// Applies `op` to a whole group.
pub fn apply_unary_to(data: &Dataset, group: &[usize], op: UnaryOp, score: f64) -> Vec<Generated> {
    group
        .iter()
        .filter_map(|&i| {
            let f = &data.columns()[i];
            let values = op.apply_all(f.values());
            if values.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let expr = Expr::unary(op, f.expr().clone());
            Some(Generated {
                descriptor: Descriptor::new(expr, values).ok()?,
                operation: Operation::Unary(op),
                parents: vec![f.name().to_string()],
                rank_score: score,
            })
        })
        .collect()
}

/// Which group a unary operation was applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryTarget {
    First,
    Second,
}

/// Transforms every member of whichever of `c1`/`c2` is more relevant to
/// the target (ties go to `c1`).
pub fn apply_unary(
    data: &Dataset,
    c1: &[usize],
    c2: Option<&[usize]>,
    op: UnaryOp,
    mi: &MiCache,
) -> Result<(UnaryTarget, Vec<Generated>)> {
    let r1 = group_relevance(data, c1, mi)?;
    let (target, group, rel) = match c2 {
        Some(c2) => {
            let r2 = group_relevance(data, c2, mi)?;
            if r2 > r1 {
                (UnaryTarget::Second, c2, r2)
            } else {
                (UnaryTarget::First, c1, r1)
            }
        }
        None => (UnaryTarget::First, c1, r1),
    };
    Ok((target, apply_unary_to(data, group, op, rel)))
}

/// Dense ranks of `v`, flipped if needed so that a column and its exact
/// reversal share one key.
pub fn rank_key(v: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0u32; v.len()];
    let mut r = 0u32;
    for w in 0..order.len() {
        if w > 0 && v[order[w]] != v[order[w - 1]] {
            r += 1;
        }
        ranks[order[w]] = r;
    }
    let flipped: Vec<u32> = ranks.iter().map(|&x| r - x).collect();
    if flipped < ranks {
        flipped
    } else {
        ranks
    }
}

/// Appends generated columns that are finite, non-constant, and not
/// duplicates of any retained column. Existing columns are never dropped.
pub fn dedup_and_merge(
    prev: &Dataset,
    generated: Vec<Generated>,
    cfg: &GenerationConfig,
) -> Result<(Dataset, Vec<Generated>)> {
    let mut columns = prev.columns().to_vec();
    let mut kept = Vec::new();
    let mut keys: std::collections::HashSet<Vec<u32>> = if cfg.dedup_monotone {
        columns.iter().map(|c| rank_key(c.values())).collect()
    } else {
        Default::default()
    };
    'outer: for g in generated {
        let v = g.descriptor.values();
        if v.iter().any(|x| !x.is_finite()) || is_constant(v) {
            continue;
        }
        if cfg.dedup_monotone {
            let key = rank_key(v);
            if keys.contains(&key) {
                continue;
            }
            keys.insert(key);
        }
        for c in &columns {
            if c.name() == g.descriptor.name() {
                continue 'outer;
            }
            let dup = c
                .values()
                .iter()
                .zip(v)
                .all(|(a, b)| (a - b).abs() <= cfg.dedup_tolerance);
            if dup {
                continue 'outer;
            }
        }
        columns.push(g.descriptor.clone());
        kept.push(g);
    }
    Ok((prev.with_columns(columns)?, kept))
}

/// Keeps the `limit` columns with the highest MI to the target (ties to
/// the earlier column), preserving column order.
pub fn kbest_select(data: &Dataset, limit: usize, mi: &MiCache) -> Result<Dataset> {
    if limit == 0 {
        return Err(Error::Config("k-best limit must be at least 1".into()));
    }
    let n = data.n_descriptors();
    if n <= limit {
        return Ok(data.clone());
    }
    let scores: Vec<f64> = data.columns().iter().map(|c| mi.relevance(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..limit].to_vec();
    keep.sort_unstable();
    Ok(data.select(&keep))
}
