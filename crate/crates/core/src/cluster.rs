//! Agglomerative descriptor grouping.
//!
//! Starts from singletons and repeatedly merges the closest pair of groups
//! until the closest pair is farther apart than `stop_threshold` or only
//! `min_groups` remain. Distances involving a freshly merged group are
//! recomputed from scratch.
//!
//! Ties on the minimum distance go to the pair whose identifiers (each
//! group's smallest member index) are lexicographically smallest.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::info::{group_distance, MiCache};
use crate::state::rep_group;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DescriptorGroup {
    members: Vec<usize>,
}

impl DescriptorGroup {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("descriptor group"));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { members })
    }

    pub fn singleton(i: usize) -> Self {
        Self { members: vec![i] }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Smallest member index; groups are ordered by it.
    pub fn id(&self) -> usize {
        self.members[0]
    }

    fn merged(&self, other: &Self) -> Self {
        let mut members: Vec<usize> = self.members.iter().chain(&other.members).copied().collect();
        members.sort_unstable();
        Self { members }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub stop_threshold: f64,
    pub min_groups: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            stop_threshold: 1.0,
            min_groups: 2,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_threshold > 0.0) || !self.stop_threshold.is_finite() {
            return Err(Error::Config("cluster stop_threshold must be positive".into()));
        }
        if self.min_groups < 2 {
            return Err(Error::Config("cluster min_groups must be at least 2".into()));
        }
        Ok(())
    }
}

/// How two groups are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Relevance gap over redundancy, averaged over cross pairs.
    Information,
    /// Euclidean distance between the groups' 49-value representations.
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub groups: Vec<DescriptorGroup>,
    pub merges: Vec<Merge>,
}

/// Generic agglomeration loop over `n` items with a caller-supplied group distance.
pub fn agglomerate<F>(n: usize, cfg: &ClusteringConfig, mut distance: F) -> Result<Clustering>
where
    F: FnMut(&DescriptorGroup, &DescriptorGroup) -> Result<f64>,
{
    let mut groups: Vec<DescriptorGroup> = (0..n).map(DescriptorGroup::singleton).collect();
    let mut merges = Vec::new();
    if n == 0 {
        return Ok(Clustering { groups, merges });
    }
    // dist[i][j] for i < j, indexed by current group position
    let mut dist: Vec<Vec<f64>> = vec![Vec::new(); n];
    for i in 0..n {
        dist[i] = vec![f64::NAN; n];
        for j in (i + 1)..n {
            dist[i][j] = distance(&groups[i], &groups[j])?;
        }
    }

    while groups.len() > cfg.min_groups {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let d = dist[i][j];
                if best.map_or(true, |(bd, _, _)| d.total_cmp(&bd).is_lt()) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((d, i, j)) = best else { break };
        if !(d <= cfg.stop_threshold) {
            break;
        }
        let merged = groups[i].merged(&groups[j]);
        merges.push(Merge {
            left: groups[i].members.clone(),
            right: groups[j].members.clone(),
            distance: d,
        });
        // j > i, remove j first
        groups.remove(j);
        dist.remove(j);
        for row in dist.iter_mut() {
            row.remove(j);
        }
        groups[i] = merged;
        // keep groups ordered by id; the merged id equals the old id at i
        for k in 0..groups.len() {
            if k == i {
                continue;
            }
            let (a, b) = if k < i { (k, i) } else { (i, k) };
            dist[a][b] = distance(&groups[a], &groups[b])?;
        }
    }
    Ok(Clustering { groups, merges })
}

/// Groups the descriptors of `data`.
pub fn m_cluster(data: &Dataset, cfg: &ClusteringConfig, mi: &MiCache) -> Result<Vec<DescriptorGroup>> {
    Ok(m_cluster_traced(data, cfg, mi, DistanceKind::Information)?.groups)
}

pub fn m_cluster_traced(
    data: &Dataset,
    cfg: &ClusteringConfig,
    mi: &MiCache,
    kind: DistanceKind,
) -> Result<Clustering> {
    let n = data.n_descriptors();
    if n == 0 {
        return Err(Error::Empty("descriptor set"));
    }
    if n == 1 {
        log::warn!("only one descriptor: a single group, binary crossing is impossible");
    }
    match kind {
        DistanceKind::Information => {
            agglomerate(n, cfg, |a, b| group_distance(data, a.members(), b.members(), mi))
        }
        DistanceKind::Euclidean => agglomerate(n, cfg, |a, b| {
            let ra = rep_group(data, a.members())?;
            let rb = rep_group(data, b.members())?;
            Ok(ra
                .as_slice()
                .iter()
                .zip(rb.as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt())
        }),
    }
}

/// Every descriptor in its own group.
pub fn singletons(n: usize) -> Vec<DescriptorGroup> {
    (0..n).map(DescriptorGroup::singleton).collect()
}

/// True when `groups` is a disjoint cover of `0..n`.
pub fn is_partition(groups: &[DescriptorGroup], n: usize) -> bool {
    let mut seen = vec![false; n];
    for g in groups {
        if g.is_empty() {
            return false;
        }
        for &i in g.members() {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Descriptor;
    use crate::info::MiConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn copies_fixture() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = f.iter().map(|v| v * 3.0 + rng.gen_range(-0.1..0.1)).collect();
        Dataset::new(
            vec![
                Descriptor::raw("f", f.clone()).unwrap(),
                Descriptor::raw("f_copy", f).unwrap(),
                Descriptor::raw("g", g).unwrap(),
            ],
            "y",
            y,
        )
        .unwrap()
    }

    #[test]
    fn copies_merge_before_independent_column() {
        let d = copies_fixture();
        let mi = MiCache::for_dataset(&d, &MiConfig::default()).unwrap();
        let d_copy = group_distance(&d, &[0], &[1], &mi).unwrap();
        let d_fg = group_distance(&d, &[0], &[2], &mi).unwrap();
        assert_eq!(d_copy, 0.0);
        assert!(d_fg > 0.0);
        let cfg = ClusteringConfig {
            stop_threshold: d_fg / 2.0,
            min_groups: 2,
        };
        let groups = m_cluster(&d, &cfg, &mi).unwrap();
        assert_eq!(groups, vec![DescriptorGroup::new(vec![0, 1]).unwrap(), DescriptorGroup::singleton(2)]);
    }

    #[test]
    fn zero_threshold_only_merges_zero_distance_pairs() {
        let d = copies_fixture();
        let mi = MiCache::for_dataset(&d, &MiConfig::default()).unwrap();
        let cfg = ClusteringConfig {
            stop_threshold: 0.0,
            min_groups: 1,
        };
        let c = m_cluster_traced(&d, &cfg, &mi, DistanceKind::Information).unwrap();
        assert_eq!(c.merges.len(), 1);
        assert_eq!(c.groups.len(), 2);

        let no_copy = d.select(&[0, 2]);
        let groups = m_cluster(&no_copy, &cfg, &mi).unwrap();
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn single_descriptor_is_one_group() {
        let d = copies_fixture().select(&[2]);
        let mi = MiCache::for_dataset(&d, &MiConfig::default()).unwrap();
        let groups = m_cluster(&d, &ClusteringConfig::default(), &mi).unwrap();
        assert_eq!(groups, vec![DescriptorGroup::singleton(0)]);
    }

    #[test]
    fn min_groups_floor_and_partition() {
        let d = copies_fixture();
        let mi = MiCache::for_dataset(&d, &MiConfig::default()).unwrap();
        let cfg = ClusteringConfig {
            stop_threshold: 1e12,
            min_groups: 2,
        };
        let c = m_cluster_traced(&d, &cfg, &mi, DistanceKind::Information).unwrap();
        assert_eq!(c.groups.len(), 2);
        assert!(is_partition(&c.groups, 3));
        let e = m_cluster_traced(&d, &cfg, &mi, DistanceKind::Euclidean).unwrap();
        assert!(is_partition(&e.groups, 3));
    }

    #[test]
    fn ties_follow_lexicographic_ids() {
        // all distances equal: first merge must be (0, 1), then ({0,1}, 2)
        let cfg = ClusteringConfig {
            stop_threshold: 10.0,
            min_groups: 2,
        };
        let c = agglomerate(4, &cfg, |_, _| Ok(1.0)).unwrap();
        assert_eq!(c.merges[0].left, vec![0]);
        assert_eq!(c.merges[0].right, vec![1]);
        assert_eq!(c.merges[1].left, vec![0, 1]);
        assert_eq!(c.merges[1].right, vec![2]);
    }

    #[test]
    fn partition_check() {
        let g = |v: Vec<usize>| DescriptorGroup::new(v).unwrap();
        assert!(is_partition(&[g(vec![0, 2]), g(vec![1])], 3));
        assert!(!is_partition(&[g(vec![0, 2]), g(vec![2])], 3));
        assert!(!is_partition(&[g(vec![0])], 2));
        assert!(DescriptorGroup::new(vec![]).is_err());
    }
}
