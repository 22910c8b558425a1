//! Comparison methods sharing the MMD front end: fixed-sample-size spectral
//! clustering, and sequential K-medoids / single-linkage whose stopping
//! statistic is the minimum cross-cluster `d̂` (a surrogate for the tests of
//! the original methods).

use crate::clustering::Clustering;
use crate::error::{invalid, Result};
use crate::mmd::{KernelConfig, PairwiseDistanceState};
use crate::sequential::{
    default_max_t, distance_matrix, drive, exact_step, stopping_rule, threshold, SeqConfig,
    SeqResult, StepDecision, StepRecord, ThresholdForm,
};
use crate::stream::SampleStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    FssSpec,
    SeqKmed,
    SeqSlink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub k: usize,
    /// FSS only.
    pub t_fixed: usize,
    /// Sequential methods only.
    pub c: f64,
    /// FSS only.
    pub sigma_a: f64,
    pub kernel: KernelConfig,
    pub max_t: usize,
    pub seed: u64,
    pub threshold: ThresholdForm,
    pub keep_trace: bool,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, k: usize, c: f64) -> Self {
        Self {
            method,
            k,
            t_fixed: 1,
            c,
            sigma_a: 1.0,
            kernel: KernelConfig::default(),
            max_t: default_max_t(c),
            seed: 0,
            threshold: ThresholdForm::Ratio,
            keep_trace: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        match self.method {
            BaselineMethod::FssSpec => {
                if self.t_fixed == 0 {
                    return Err(invalid("t_fixed", "must be at least 1"));
                }
            }
            _ => {
                if !(self.c > 0.0 && self.c.is_finite()) {
                    return Err(invalid("C", format!("must be positive, got {}", self.c)));
                }
                if self.max_t == 0 {
                    return Err(invalid("max_t", "must be at least 1"));
                }
            }
        }
        self.kernel.validate()
    }

    fn as_seq(&self, c: f64) -> SeqConfig {
        SeqConfig {
            k: self.k,
            c,
            sigma_a: self.sigma_a,
            kernel: self.kernel,
            max_t: self.t_fixed,
            seed: self.seed,
            threshold: self.threshold,
            keep_trace: self.keep_trace,
        }
    }
}

pub fn run_baseline<S: SampleStream>(streams: &mut [S], cfg: &BaselineConfig) -> Result<SeqResult> {
    match cfg.method {
        BaselineMethod::FssSpec => run_fss_spec_result(streams, cfg),
        BaselineMethod::SeqKmed => run_seq_kmed(streams, cfg),
        BaselineMethod::SeqSlink => run_seq_slink(streams, cfg),
    }
}

/// Spectral clustering after exactly `t_fixed` samples per sequence.
pub fn run_fss_spec<S: SampleStream>(
    streams: &mut [S],
    k: usize,
    t_fixed: usize,
    sigma_a: f64,
    kernel: KernelConfig,
    seed: u64,
) -> Result<Clustering> {
    let mut cfg = BaselineConfig::new(BaselineMethod::FssSpec, k, 1.0);
    cfg.t_fixed = t_fixed;
    cfg.sigma_a = sigma_a;
    cfg.kernel = kernel;
    cfg.seed = seed;
    cfg.keep_trace = false;
    run_fss_spec_result(streams, &cfg).map(|r| r.clustering)
}

/// FSS-SPEC reported in the sequential result shape: `n = t_fixed`, one
/// dense decomposition charged, the final `Γ` as statistic.
pub fn run_fss_spec_result<S: SampleStream>(
    streams: &mut [S],
    cfg: &BaselineConfig,
) -> Result<SeqResult> {
    let mut cfg = cfg.clone();
    cfg.method = BaselineMethod::FssSpec;
    cfg.validate()?;
    // the threshold never matters here; C only feeds the trace
    let seq = cfg.as_seq(1.0);
    let t_fixed = cfg.t_fixed;
    drive(
        streams,
        cfg.k,
        cfg.kernel,
        t_fixed,
        cfg.keep_trace,
        |state, t| {
            if t < t_fixed {
                return Ok(placeholder(state.m(), t));
            }
            let mut d = exact_step(state, t, &seq)?;
            d.stop = true;
            d.threshold = None;
            d.record.threshold = None;
            Ok(d)
        },
    )
    .map(|mut r| {
        r.stopped_by_cap = false;
        r.trace.retain(|rec| rec.t == t_fixed);
        r
    })
}

fn placeholder(m: usize, t: usize) -> StepDecision {
    StepDecision {
        clustering: Clustering::canonical(&vec![0; m], 1),
        statistic: f64::NAN,
        threshold: None,
        stop: false,
        record: StepRecord {
            t,
            gamma: f64::NAN,
            threshold: None,
            ops: 0,
            exact: false,
            refreshed: false,
            verified: false,
            rank: None,
        },
    }
}

/// Minimum `d_ij` over pairs in different clusters; 0 when there is no such pair.
pub fn min_cross_distance(d: &DMatrix<f64>, clustering: &Clustering) -> f64 {
    let m = d.nrows();
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..m {
            if clustering.label(i) != clustering.label(j) {
                best = best.min(d[(i, j)]);
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// Partitioning around medoids: greedy build then best-improvement swaps.
/// Ties resolve to the lowest index. Returns `(medoids, labels)`.
pub fn pam(d: &DMatrix<f64>, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let m = d.nrows();
    if k == 0 || k > m {
        return Err(invalid("K", format!("must lie in [1, {m}], got {k}")));
    }
    let cost_of = |medoids: &[usize]| -> f64 {
        (0..m)
            .map(|i| {
                medoids
                    .iter()
                    .map(|&c| d[(i, c)])
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut best = None;
        let mut best_cost = f64::INFINITY;
        for c in 0..m {
            if medoids.contains(&c) {
                continue;
            }
            medoids.push(c);
            let cost = cost_of(&medoids);
            medoids.pop();
            if cost < best_cost {
                best_cost = cost;
                best = Some(c);
            }
        }
        medoids.push(best.expect("k ≤ m leaves a candidate"));
    }
    let mut cost = cost_of(&medoids);
    loop {
        let mut improvement = None;
        let mut best_cost = cost;
        for slot in 0..k {
            for o in (0..m).filter(|o| !medoids.contains(o)) {
                let mut trial = medoids.clone();
                trial[slot] = o;
                let c = cost_of(&trial);
                if c < best_cost - 1e-15 * best_cost.abs().max(1.0) {
                    best_cost = c;
                    improvement = Some((slot, o));
                }
            }
        }
        match improvement {
            Some((slot, o)) => {
                medoids[slot] = o;
                cost = best_cost;
            }
            None => break,
        }
    }
    let labels = (0..m)
        .map(|i| {
            if let Some(pos) = medoids.iter().position(|&c| c == i) {
                return pos;
            }
            (0..k).fold(0, |b, s| {
                if d[(i, medoids[s])] < d[(i, medoids[b])] {
                    s
                } else {
                    b
                }
            })
        })
        .collect();
    Ok((medoids, labels))
}

/// Single-linkage clustering cut at `k` clusters, via a minimum spanning tree
/// whose `k − 1` heaviest edges are removed. Returns the clustering and the
/// lightest removed edge (the single-linkage inter-cluster minimum).
pub fn single_linkage(d: &DMatrix<f64>, k: usize) -> Result<(Clustering, f64)> {
    let m = d.nrows();
    if k == 0 || k > m {
        return Err(invalid("K", format!("must lie in [1, {m}], got {k}")));
    }
    // Prim
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    let mut parent = vec![usize::MAX; m];
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(m - 1);
    best[0] = 0.0;
    for _ in 0..m {
        let mut u = usize::MAX;
        for v in 0..m {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            edges.push((best[u], parent[u], u));
        }
        for v in 0..m {
            if !in_tree[v] && d[(u, v)] < best[v] {
                best[v] = d[(u, v)];
                parent[v] = u;
            }
        }
    }
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| edges[b].0.total_cmp(&edges[a].0).then(a.cmp(&b)));
    let cut: Vec<usize> = order[..k - 1].to_vec();
    let min_cut = cut
        .iter()
        .map(|&e| edges[e].0)
        .fold(f64::INFINITY, f64::min);

    // union-find over the kept edges
    let mut root: Vec<usize> = (0..m).collect();
    fn find(root: &mut [usize], mut x: usize) -> usize {
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    for (e, &(_, a, b)) in edges.iter().enumerate() {
        if cut.contains(&e) {
            continue;
        }
        let (ra, rb) = (find(&mut root, a), find(&mut root, b));
        if ra != rb {
            root[ra.max(rb)] = ra.min(rb);
        }
    }
    let labels: Vec<usize> = (0..m).map(|i| find(&mut root, i)).collect();
    let clustering = Clustering::canonical(&labels, k);
    let stat = if k == 1 { 0.0 } else { min_cut };
    Ok((clustering, stat))
}

fn sequential_baseline<S, F>(
    streams: &mut [S],
    cfg: &BaselineConfig,
    mut cluster: F,
) -> Result<SeqResult>
where
    S: SampleStream,
    F: FnMut(&DMatrix<f64>) -> Result<(Clustering, f64)>,
{
    cfg.validate()?;
    drive(
        streams,
        cfg.k,
        cfg.kernel,
        cfg.max_t,
        cfg.keep_trace,
        |state: &PairwiseDistanceState, t| {
            let d = distance_matrix(state);
            let (clustering, stat) = cluster(&d)?;
            let thr = threshold(t, cfg.c, cfg.threshold);
            Ok(StepDecision {
                clustering,
                statistic: stat,
                threshold: thr,
                stop: stopping_rule(stat, t, cfg.c, cfg.threshold),
                record: StepRecord {
                    t,
                    gamma: stat,
                    threshold: thr,
                    ops: 0,
                    exact: false,
                    refreshed: false,
                    verified: false,
                    rank: None,
                },
            })
        },
    )
}

pub fn run_seq_kmed<S: SampleStream>(streams: &mut [S], cfg: &BaselineConfig) -> Result<SeqResult> {
    let k = cfg.k;
    sequential_baseline(streams, cfg, |d| {
        let (_, labels) = pam(d, k)?;
        let c = Clustering::canonical(&labels, k);
        let stat = min_cross_distance(d, &c);
        Ok((c, stat))
    })
}

pub fn run_seq_slink<S: SampleStream>(
    streams: &mut [S],
    cfg: &BaselineConfig,
) -> Result<SeqResult> {
    let k = cfg.k;
    sequential_baseline(streams, cfg, |d| single_linkage(d, k))
}
