use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// A partition of `M` sequences into `K` labelled groups.
///
/// Labels are only meaningful up to permutation; use [`Clustering::same_partition`]
/// for comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(
                "labels",
                format!("label {bad} out of range for K = {k}"),
            ));
        }
        Ok(Self { labels, k })
    }

    /// Relabel so that clusters are numbered in order of first appearance.
    pub fn canonical(labels: &[usize], k: usize) -> Self {
        let mut map = vec![usize::MAX; labels.iter().copied().max().map_or(0, |m| m + 1).max(k)];
        let mut next = 0;
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            out.push(map[l]);
        }
        Self { labels: out, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }

    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    }

    pub fn nonempty_clusters(&self) -> usize {
        self.groups().iter().filter(|g| !g.is_empty()).count()
    }

    /// True when both label vectors induce the same co-membership relation
    /// on the indices not in `ignore`.
    pub fn same_partition_except(&self, other: &Clustering, ignore: &[usize]) -> bool {
        if self.labels.len() != other.labels.len() {
            return false;
        }
        let keep: Vec<usize> = (0..self.labels.len())
            .filter(|i| !ignore.contains(i))
            .collect();
        for (a, &i) in keep.iter().enumerate() {
            for &j in &keep[a + 1..] {
                let same_here = self.labels[i] == self.labels[j];
                let same_there = other.labels[i] == other.labels[j];
                if same_here != same_there {
                    return false;
                }
            }
        }
        true
    }

    pub fn same_partition(&self, other: &Clustering) -> bool {
        self.same_partition_except(other, &[])
    }
}
