//! Lloyd's K-Means with k-means++ seeding and restarts.

use crate::clustering::Clustering;
use crate::error::{invalid, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub clustering: Clustering,
    pub inertia: f64,
}

#[inline]
fn sq_dist(points: &DMatrix<f64>, i: usize, center: &[f64]) -> f64 {
    center
        .iter()
        .enumerate()
        .map(|(c, &v)| {
            let d = points[(i, c)] - v;
            d * d
        })
        .sum()
}

/// Cluster the rows of `points` into `k` groups.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(points, k, seed, &KMeansConfig::default()).map(|f| f.clustering)
}

pub fn kmeans_with(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    if n < k {
        return Err(invalid(
            "K",
            format!("cannot form {k} clusters from {n} points"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let centers = seed_plus_plus(points, k, &mut rng);
        let (labels, cost) = lloyd(points, centers, cfg.max_iter);
        // strict improvement keeps the earliest restart on ties
        if best.as_ref().map_or(true, |(_, c)| cost < *c) {
            best = Some((labels, cost));
        }
    }
    let (labels, inertia) = best.expect("at least one restart");
    Ok(KMeansFit {
        clustering: Clustering::canonical(&labels, k),
        inertia,
    })
}

fn seed_plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.nrows();
    let row = |i: usize| -> Vec<f64> { points.row(i).iter().copied().collect() };
    let mut centers = vec![row(rng.gen_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = row(pick);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(points, i, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &DMatrix<f64>, centers: &[Vec<f64>], labels: &mut [usize]) -> (bool, Vec<f64>) {
    let mut changed = false;
    let mut dists = vec![0.0; points.nrows()];
    for i in 0..points.nrows() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(points, i, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        dists[i] = best_d;
    }
    (changed, dists)
}

fn lloyd(points: &DMatrix<f64>, mut centers: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let (n, dim) = (points.nrows(), points.ncols());
    let k = centers.len();
    let mut labels = vec![usize::MAX; n];
    let (_, mut dists) = assign(points, &centers, &mut labels);
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for c in 0..dim {
                sums[labels[i]][c] += points[(i, c)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // re-seed an empty cluster at the worst-served point
                let far = argmax(&dists);
                centers[c] = points.row(far).iter().copied().collect();
                dists[far] = 0.0;
            }
        }
        let (changed, d) = assign(points, &centers, &mut labels);
        dists = d;
        if !changed {
            break;
        }
    }
    fill_empty(points, &mut labels, k, &centers);
    let cost = inertia(points, &labels, k);
    (labels, cost)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

// Coincident points can leave a cluster empty even after re-seeding; move the
// point farthest from its center out of a cluster that can spare one.
fn fill_empty(points: &DMatrix<f64>, labels: &mut [usize], k: usize, centers: &[Vec<f64>]) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut donor = None;
        let mut donor_d = -1.0;
        for i in 0..labels.len() {
            if counts[labels[i]] > 1 {
                let d = sq_dist(points, i, &centers[labels[i]]);
                if d > donor_d {
                    donor_d = d;
                    donor = Some(i);
                }
            }
        }
        match donor {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn inertia(points: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let dim = points.ncols();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for c in 0..dim {
            sums[l][c] += points[(i, c)];
        }
    }
    let centers: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n.max(1) as f64).collect())
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points, i, &centers[l]))
        .sum()
}
