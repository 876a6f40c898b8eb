//! Histogram mutual information and the information-theoretic scores built
//! on it: group–group distance, set utility and group relevance.
//!
//! MI is the plug-in estimate (natural log) over the joint histogram of
//! two independently quantile-binned vectors. Sums are accumulated in
//! sorted order so every score is exactly symmetric in its arguments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Descriptor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiConfig {
    pub n_bins: usize,
    /// Added to pairwise redundancy in the group distance denominator.
    pub epsilon: f64,
    /// Drop the `i == j` terms from the utility's redundancy sum.
    pub exclude_diagonal: bool,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            n_bins: 16,
            epsilon: 1e-10,
            exclude_diagonal: false,
        }
    }
}

impl MiConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Config("mi n_bins must be at least 2".into()));
        }
        if self.n_bins > n_samples {
            return Err(Error::Config(format!(
                "mi n_bins ({}) exceeds the sample count ({n_samples})",
                self.n_bins
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("mi epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Equal-frequency bin index per sample.
///
/// A value's bin is `floor(n_bins * #{values strictly below it} / n)`, so
/// tied values always share a bin and a constant vector collapses to one.
pub fn quantile_bins(x: &[f64], n_bins: usize) -> Vec<u32> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut bins = vec![0u32; n];
    let mut start = 0;
    while start < n {
        let v = x[order[start]];
        let mut end = start + 1;
        while end < n && x[order[end]] == v {
            end += 1;
        }
        let bin = ((n_bins * start) / n).min(n_bins - 1) as u32;
        for &i in &order[start..end] {
            bins[i] = bin;
        }
        start = end;
    }
    bins
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Plug-in MI of two pre-binned vectors.
pub fn binned_mutual_information(a: &[u32], b: &[u32], n_bins: usize) -> f64 {
    let n = a.len();
    let mut joint = vec![0u32; n_bins * n_bins];
    let mut ma = vec![0u32; n_bins];
    let mut mb = vec![0u32; n_bins];
    for (&i, &j) in a.iter().zip(b) {
        joint[i as usize * n_bins + j as usize] += 1;
        ma[i as usize] += 1;
        mb[j as usize] += 1;
    }
    let nf = n as f64;
    let mut terms = Vec::new();
    for i in 0..n_bins {
        for j in 0..n_bins {
            let c = joint[i * n_bins + j];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let expected = ma[i] as f64 * mb[j] as f64;
            terms.push(c / nf * (c * nf / expected).ln());
        }
    }
    sorted_sum(terms).max(0.0)
}

/// MI in nats between two equal-length vectors.
pub fn mutual_information(x: &[f64], z: &[f64], cfg: &MiConfig) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch(x.len(), z.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("mutual information needs at least two samples".into()));
    }
    if cfg.n_bins < 2 {
        return Err(Error::Config("mi n_bins must be at least 2".into()));
    }
    let a = quantile_bins(x, cfg.n_bins);
    let b = quantile_bins(z, cfg.n_bins);
    Ok(binned_mutual_information(&a, &b, cfg.n_bins))
}

/// Memo of binned columns, MI-to-target and pairwise MI, keyed by
/// descriptor name. A name fixes a descriptor's values for a given raw
/// dataset, so one cache can serve a whole run.
pub struct MiCache {
    cfg: MiConfig,
    rows: Option<Vec<usize>>,
    target_bins: Vec<u32>,
    bins: Mutex<HashMap<String, Arc<Vec<u32>>>>,
    relevance: Mutex<HashMap<String, f64>>,
    pairs: Mutex<HashMap<(String, String), f64>>,
}

impl MiCache {
    pub fn new(target: &[f64], cfg: &MiConfig) -> Result<Self> {
        Self::build(target, None, cfg)
    }

    /// Estimates every quantity on the given rows only.
    pub fn with_rows(target: &[f64], rows: Vec<usize>, cfg: &MiConfig) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= target.len()) {
            return Err(Error::InvalidInput(format!("row {r} out of range")));
        }
        Self::build(target, Some(rows), cfg)
    }

    fn build(target: &[f64], rows: Option<Vec<usize>>, cfg: &MiConfig) -> Result<Self> {
        let target: Vec<f64> = match &rows {
            Some(r) => r.iter().map(|&i| target[i]).collect(),
            None => target.to_vec(),
        };
        cfg.validate(target.len())?;
        Ok(Self {
            cfg: cfg.clone(),
            rows,
            target_bins: quantile_bins(&target, cfg.n_bins),
            bins: Mutex::default(),
            relevance: Mutex::default(),
            pairs: Mutex::default(),
        })
    }

    pub fn for_dataset(data: &Dataset, cfg: &MiConfig) -> Result<Self> {
        Self::new(data.target(), cfg)
    }

    pub fn config(&self) -> &MiConfig {
        &self.cfg
    }

    fn bins_of(&self, d: &Descriptor) -> Arc<Vec<u32>> {
        if let Some(b) = self.bins.lock().unwrap().get(d.name()) {
            return Arc::clone(b);
        }
        let b = match &self.rows {
            Some(rows) => {
                let v: Vec<f64> = rows.iter().map(|&r| d.values()[r]).collect();
                quantile_bins(&v, self.cfg.n_bins)
            }
            None => quantile_bins(d.values(), self.cfg.n_bins),
        };
        let b = Arc::new(b);
        self.bins
            .lock()
            .unwrap()
            .entry(d.name().to_string())
            .or_insert(b)
            .clone()
    }

    /// MI(f, y).
    pub fn relevance(&self, d: &Descriptor) -> f64 {
        if let Some(&v) = self.relevance.lock().unwrap().get(d.name()) {
            return v;
        }
        let v = binned_mutual_information(&self.bins_of(d), &self.target_bins, self.cfg.n_bins);
        self.relevance.lock().unwrap().insert(d.name().to_string(), v);
        v
    }

    /// MI(f_i, f_j).
    pub fn pair(&self, a: &Descriptor, b: &Descriptor) -> f64 {
        let key = if a.name() <= b.name() {
            (a.name().to_string(), b.name().to_string())
        } else {
            (b.name().to_string(), a.name().to_string())
        };
        if let Some(&v) = self.pairs.lock().unwrap().get(&key) {
            return v;
        }
        let v = binned_mutual_information(&self.bins_of(a), &self.bins_of(b), self.cfg.n_bins);
        self.pairs.lock().unwrap().insert(key, v);
        v
    }
}

fn check_group(data: &Dataset, group: &[usize]) -> Result<()> {
    if group.is_empty() {
        return Err(Error::Empty("descriptor group"));
    }
    if let Some(&i) = group.iter().find(|&&i| i >= data.n_descriptors()) {
        return Err(Error::InvalidInput(format!("descriptor index {i} out of range")));
    }
    Ok(())
}

/// Average over cross pairs of `|MI(fi,y) − MI(fj,y)| / (MI(fi,fj) + ε)`.
pub fn group_distance(data: &Dataset, ci: &[usize], cj: &[usize], mi: &MiCache) -> Result<f64> {
    check_group(data, ci)?;
    check_group(data, cj)?;
    if ci.iter().any(|i| cj.contains(i)) {
        return Err(Error::InvalidInput("descriptor groups overlap".into()));
    }
    let cols = data.columns();
    let mut terms = Vec::with_capacity(ci.len() * cj.len());
    for &a in ci {
        for &b in cj {
            let (fa, fb) = (&cols[a], &cols[b]);
            let num = (mi.relevance(fa) - mi.relevance(fb)).abs();
            terms.push(num / (mi.pair(fa, fb) + mi.cfg.epsilon));
        }
    }
    Ok(sorted_sum(terms) / (ci.len() * cj.len()) as f64)
}

/// Set utility: mean relevance to the target minus mean pairwise
/// redundancy. The redundancy sum runs over all ordered pairs, diagonal
/// included unless `exclude_diagonal` is set.
pub fn set_utility(data: &Dataset, mi: &MiCache) -> Result<f64> {
    let m = data.n_descriptors();
    if m == 0 {
        return Err(Error::Empty("descriptor set"));
    }
    let cols = data.columns();
    let mut redundancy = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            if i == j && mi.cfg.exclude_diagonal {
                continue;
            }
            redundancy.push(mi.pair(&cols[i], &cols[j]));
        }
    }
    let relevance: Vec<f64> = cols.iter().map(|c| mi.relevance(c)).collect();
    let mf = m as f64;
    Ok(-sorted_sum(redundancy) / (mf * mf) + sorted_sum(relevance) / mf)
}

/// Mean MI between the group's descriptors and the target.
pub fn group_relevance(data: &Dataset, group: &[usize], mi: &MiCache) -> Result<f64> {
    check_group(data, group)?;
    let terms = group.iter().map(|&i| mi.relevance(&data.columns()[i])).collect();
    Ok(sorted_sum(terms) / group.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct Σ p·ln(p/(px·pz)) over an explicit contingency table.
    fn table_mi(table: &[&[f64]]) -> f64 {
        let total: f64 = table.iter().flat_map(|r| r.iter()).sum();
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / total).collect();
        let cols: Vec<f64> = (0..table[0].len())
            .map(|j| table.iter().map(|r| r[j]).sum::<f64>() / total)
            .collect();
        let mut s = 0.0;
        for (i, r) in table.iter().enumerate() {
            for (j, &c) in r.iter().enumerate() {
                if c > 0.0 {
                    let p = c / total;
                    s += p * (p / (rows[i] * cols[j])).ln();
                }
            }
        }
        s
    }

    fn cfg(n_bins: usize) -> MiConfig {
        MiConfig {
            n_bins,
            ..MiConfig::default()
        }
    }

    #[test]
    fn balanced_diagonal_is_ln_bins() {
        let x: Vec<f64> = (0..64).map(|i| (i % 8) as f64).collect();
        let got = mutual_information(&x, &x, &cfg(8)).unwrap();
        let row = |k: usize| -> Vec<f64> { (0..8).map(|j| if j == k { 8.0 } else { 0.0 }).collect() };
        let rows: Vec<Vec<f64>> = (0..8).map(row).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let oracle = table_mi(&refs);
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_fixtures() {
        let x = [1.0, 1.0, 2.0, 2.0];
        let indep = mutual_information(&x, &[1.0, 2.0, 1.0, 2.0], &cfg(2)).unwrap();
        assert_eq!(indep, 0.0);
        let dep = mutual_information(&x, &[10.0, 10.0, 20.0, 20.0], &cfg(2)).unwrap();
        let oracle = table_mi(&[&[2.0, 0.0], &[0.0, 2.0]]);
        assert!((dep - oracle).abs() < 1e-12);
        assert!((dep - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_has_zero_mi() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let c = vec![3.0; 50];
        assert_eq!(mutual_information(&x, &c, &cfg(16)).unwrap(), 0.0);
        assert!(matches!(
            mutual_information(&x, &c[..10], &cfg(16)),
            Err(Error::LengthMismatch(50, 10))
        ));
    }

    #[test]
    fn self_mi_is_binned_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..300).map(|_| rng.gen::<f64>()).collect();
        let bins = quantile_bins(&x, 7);
        let mut counts = [0f64; 7];
        bins.iter().for_each(|&b| counts[b as usize] += 1.0);
        let h: f64 = counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / 300.0) * (c / 300.0).ln())
            .sum();
        assert!((mutual_information(&x, &x, &cfg(7)).unwrap() - h).abs() < 1e-12);
    }

    fn fixture() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let f1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = f1.iter().map(|v| v * 2.0 + rng.gen_range(-0.3..0.3)).collect();
        let f3: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = f1.iter().zip(&f3).map(|(a, b)| a + 0.2 * b).collect();
        Dataset::from_columns(&["f1", "f2", "f3"], vec![f1, f2, f3], "y", y).unwrap()
    }

    #[test]
    fn group_distance_matches_double_loop() {
        let d = fixture();
        let c = cfg(8);
        let cache = MiCache::for_dataset(&d, &c).unwrap();
        let col = |i: usize| d.columns()[i].values();
        let rel = |i: usize| mutual_information(col(i), d.target(), &c).unwrap();
        let mut oracle = 0.0;
        for &a in &[0usize, 1] {
            for &b in &[2usize] {
                let red = mutual_information(col(a), col(b), &c).unwrap();
                oracle += (rel(a) - rel(b)).abs() / (red + c.epsilon);
            }
        }
        oracle /= 2.0;
        let got = group_distance(&d, &[0, 1], &[2], &cache).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert_eq!(got, group_distance(&d, &[2], &[0, 1], &cache).unwrap());

        let single = group_distance(&d, &[0], &[2], &cache).unwrap();
        let oracle = (rel(0) - rel(2)).abs() / (mutual_information(col(0), col(2), &c).unwrap() + 1e-10);
        assert!((single - oracle).abs() < 1e-12);
    }

    #[test]
    fn exact_copy_has_zero_distance() {
        let d = fixture();
        let v = d.columns()[0].values().to_vec();
        let mut cols = d.columns().to_vec();
        cols.push(Descriptor::raw("f1_copy", v).unwrap());
        let d = d.with_columns(cols).unwrap();
        let cache = MiCache::for_dataset(&d, &cfg(8)).unwrap();
        assert_eq!(group_distance(&d, &[0], &[3], &cache).unwrap(), 0.0);
        assert!(group_distance(&d, &[], &[3], &cache).is_err());
        assert!(group_distance(&d, &[0, 1], &[1], &cache).is_err());
    }

    #[test]
    fn utility_of_target_copy_is_zero() {
        let y: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let d = Dataset::from_columns(&["f"], vec![y.clone()], "y", y).unwrap();
        let cache = MiCache::for_dataset(&d, &cfg(2)).unwrap();
        assert!(set_utility(&d, &cache).unwrap().abs() < 1e-15);
        assert!(set_utility(&d.with_columns(vec![]).unwrap(), &cache).is_err());
    }

    #[test]
    fn utility_matches_direct_formula_and_permutation() {
        let d = fixture();
        let c = cfg(8);
        let cache = MiCache::for_dataset(&d, &c).unwrap();
        let cols = d.columns();
        let mut red = 0.0;
        let mut rel = 0.0;
        for a in cols {
            rel += mutual_information(a.values(), d.target(), &c).unwrap();
            for b in cols {
                red += mutual_information(a.values(), b.values(), &c).unwrap();
            }
        }
        let oracle = -red / 9.0 + rel / 3.0;
        let u = set_utility(&d, &cache).unwrap();
        assert!((u - oracle).abs() < 1e-12);
        assert_eq!(u, set_utility(&d.select(&[2, 0, 1]), &cache).unwrap());

        let no_diag = MiConfig {
            exclude_diagonal: true,
            ..c.clone()
        };
        let cache2 = MiCache::for_dataset(&d, &no_diag).unwrap();
        assert!(set_utility(&d, &cache2).unwrap() > u);
    }

    #[test]
    fn relevance_cases() {
        let d = fixture();
        let c = cfg(8);
        let cache = MiCache::for_dataset(&d, &c).unwrap();
        let r0 = mutual_information(d.columns()[0].values(), d.target(), &c).unwrap();
        assert_eq!(group_relevance(&d, &[0], &cache).unwrap(), r0);
        let oracle: f64 = (0..3)
            .map(|i| mutual_information(d.columns()[i].values(), d.target(), &c).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((group_relevance(&d, &[0, 1, 2], &cache).unwrap() - oracle).abs() < 1e-12);

        let mut cols = d.columns().to_vec();
        cols.push(Descriptor::raw("f1_copy", d.columns()[0].values().to_vec()).unwrap());
        let d2 = d.with_columns(cols).unwrap();
        let cache = MiCache::for_dataset(&d2, &c).unwrap();
        assert_eq!(group_relevance(&d2, &[0, 3], &cache).unwrap(), r0);
        assert!(group_relevance(&d2, &[], &cache).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MiConfig { n_bins: 1, ..Default::default() }.validate(10).is_err());
        assert!(MiConfig { n_bins: 16, ..Default::default() }.validate(10).is_err());
        assert!(MiConfig::default().validate(100).is_ok());
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_nonnegative(
            xs in prop::collection::vec(-100.0f64..100.0, 2..80),
            seed in 0u64..1000,
            n_bins in 2usize..10,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let zs: Vec<f64> = xs.iter().map(|x| if rng.gen_bool(0.5) { x * 0.5 } else { rng.gen_range(-3.0..3.0) }).collect();
            let c = cfg(n_bins);
            let a = mutual_information(&xs, &zs, &c).unwrap();
            let b = mutual_information(&zs, &xs, &c).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn duplicating_columns_never_raises_utility(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let m = rng.gen_range(1..4);
            let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let names: Vec<String> = (0..m).map(|i| format!("f{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let d = Dataset::from_columns(&refs, cols.clone(), "y", y.clone()).unwrap();
            let dup_names: Vec<String> = (0..2 * m).map(|i| format!("f{i}")).collect();
            let refs2: Vec<&str> = dup_names.iter().map(String::as_str).collect();
            let doubled: Vec<Vec<f64>> = cols.iter().chain(cols.iter()).cloned().collect();
            let d2 = Dataset::from_columns(&refs2, doubled, "y", y).unwrap();
            let c = cfg(4);
            let u1 = set_utility(&d, &MiCache::for_dataset(&d, &c).unwrap()).unwrap();
            let u2 = set_utility(&d2, &MiCache::for_dataset(&d2, &c).unwrap()).unwrap();
            prop_assert!(u2 <= u1 + 1e-12);
        }
    }

    #[test]
    fn row_restricted_cache_matches_subset_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..80).map(|_| rng.gen()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + 0.1 * rng.gen::<f64>()).collect();
        let rows: Vec<usize> = (0..80).filter(|r| r % 3 != 0).collect();
        let cfg = MiConfig { n_bins: 4, ..Default::default() };
        let cache = MiCache::with_rows(&y, rows.clone(), &cfg).unwrap();
        let d = Descriptor::raw("x", x.clone()).unwrap();
        let xs: Vec<f64> = rows.iter().map(|&r| x[r]).collect();
        let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        assert_eq!(cache.relevance(&d), mutual_information(&xs, &ys, &cfg).unwrap());
        assert!(MiCache::with_rows(&y, vec![80], &cfg).is_err());
    }
}
