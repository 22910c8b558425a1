//! SEQ-SPEC: sample every sequence once per step, refresh all pairwise MMD
//! estimates, recluster, and stop once the minimum cross-cluster distance
//! between spectral points clears `arcsin(C/√t)`.

use crate::clustering::Clustering;
use crate::error::{invalid, Error, Result};
use crate::mmd::{KernelConfig, PairwiseDistanceState};
use crate::seeds::step_seed;
use crate::spectral::{
    build_affinity, build_normalized, cluster_eigvecs, top_k_eigen, SpectralEmbedding,
};
use crate::stream::SampleStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// `arcsin(C/√t)`, undefined (never met) while `t < C²`.
    #[default]
    Arcsin,
    /// `C/√t`.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub k: usize,
    pub c: f64,
    pub sigma_a: f64,
    pub kernel: KernelConfig,
    pub max_t: usize,
    pub seed: u64,
    pub threshold: ThresholdForm,
    pub keep_trace: bool,
}

impl SeqConfig {
    pub fn new(k: usize, c: f64) -> Self {
        Self {
            k,
            c,
            sigma_a: 1.0,
            kernel: KernelConfig::default(),
            max_t: default_max_t(c),
            seed: 0,
            threshold: ThresholdForm::Arcsin,
            keep_trace: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("C", format!("must be positive, got {}", self.c)));
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            return Err(invalid(
                "sigma_a",
                format!("must be positive, got {}", self.sigma_a),
            ));
        }
        if self.max_t == 0 {
            return Err(invalid("max_t", "must be at least 1"));
        }
        self.kernel.validate()
    }
}

/// `10·⌈C²⌉ + 500`.
pub fn default_max_t(c: f64) -> usize {
    10 * min_stop_time(c) + 500
}

/// `⌈C²⌉`, the earliest step at which the arcsin threshold is defined.
pub fn min_stop_time(c: f64) -> usize {
    (c * c).ceil() as usize
}

/// Threshold at step `t`, or `None` while it is undefined.
pub fn threshold(t: usize, c: f64, form: ThresholdForm) -> Option<f64> {
    let tf = t as f64;
    match form {
        ThresholdForm::Arcsin => {
            if tf < c * c {
                None
            } else {
                Some((c / tf.sqrt()).min(1.0).asin())
            }
        }
        ThresholdForm::Ratio => Some(c / tf.sqrt()),
    }
}

pub fn stopping_rule(gamma: f64, t: usize, c: f64, form: ThresholdForm) -> bool {
    t >= 1 && threshold(t, c, form).is_some_and(|thr| gamma >= thr)
}

/// Minimum distance between spectral points in different clusters.
pub fn gamma_statistic(y: &DMatrix<f64>, clustering: &Clustering) -> Result<f64> {
    if clustering.nonempty_clusters() < 2 {
        return Err(Error::TooFewClusters);
    }
    let m = y.nrows();
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..m {
            if clustering.label(i) != clustering.label(j) {
                best = best.min((y.row(i) - y.row(j)).norm());
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub gamma: f64,
    pub threshold: Option<f64>,
    /// Operations charged to the eigen-solver cost model this step.
    pub ops: u64,
    /// The clustering came from an exact decomposition.
    pub exact: bool,
    /// IA only: an exact refresh was scheduled this step.
    pub refreshed: bool,
    /// IA only: an approximate stop triggered exact verification.
    pub verified: bool,
    /// IA only: rank of the low-rank approximation used.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqResult {
    /// Samples drawn per sequence.
    pub n: usize,
    pub clustering: Clustering,
    pub stopped_by_cap: bool,
    pub trace: Vec<StepRecord>,
    pub eigen_op_count: u64,
    /// Statistic value at the final step.
    pub final_statistic: f64,
}

/// What a method decided after absorbing step `t`.
pub(crate) struct StepDecision {
    pub clustering: Clustering,
    pub statistic: f64,
    pub threshold: Option<f64>,
    pub stop: bool,
    pub record: StepRecord,
}

/// Shared sampling loop: draws one sample per stream, feeds the MMD front end
/// and delegates clustering and the stop decision to `step`.
pub(crate) fn drive<S, F>(
    streams: &mut [S],
    k: usize,
    kernel: KernelConfig,
    max_t: usize,
    keep_trace: bool,
    mut step: F,
) -> Result<SeqResult>
where
    S: SampleStream,
    F: FnMut(&PairwiseDistanceState, usize) -> Result<StepDecision>,
{
    let m = streams.len();
    if m < 2 {
        return Err(invalid("M", "need at least two sequences"));
    }
    if k > m {
        return Err(invalid(
            "K",
            format!("cannot form {k} clusters from {m} sequences"),
        ));
    }
    let dim = streams[0].dim();
    let mut state = PairwiseDistanceState::new(m, dim, kernel)?;
    let mut trace = Vec::new();
    let mut ops = 0u64;
    let mut samples = Vec::with_capacity(m);
    for t in 1..=max_t {
        samples.clear();
        for (i, s) in streams.iter_mut().enumerate() {
            samples.push(
                s.next_sample()
                    .ok_or(Error::StreamExhausted { sequence: i, t })?,
            );
        }
        state.update(&samples)?;
        let d = step(&state, t)?;
        ops += d.record.ops;
        if keep_trace {
            trace.push(d.record);
        }
        if d.stop || t == max_t {
            return Ok(SeqResult {
                n: t,
                clustering: d.clustering,
                stopped_by_cap: !d.stop,
                trace,
                eigen_op_count: ops,
                final_statistic: d.statistic,
            });
        }
    }
    unreachable!("loop returns at t = max_t")
}

pub fn distance_matrix(state: &PairwiseDistanceState) -> DMatrix<f64> {
    DMatrix::from_row_slice(state.m(), state.m(), state.distances())
}

/// Spectral clustering of one step from a top-K eigenbasis, with the
/// zero-row fallback: rows go to the argmax of their raw `Z` entries and
/// `Γ` is reported as zero.
pub(crate) fn spectral_decision(
    values: Vec<f64>,
    z: DMatrix<f64>,
    seed: u64,
) -> Result<(Clustering, f64, Option<SpectralEmbedding>)> {
    let k = z.ncols();
    match cluster_eigvecs(values, z.clone(), seed) {
        Ok((clustering, emb)) => {
            let gamma = gamma_statistic(&emb.y, &clustering).unwrap_or(0.0);
            Ok((clustering, gamma, Some(emb)))
        }
        Err(Error::DegenerateRow { .. }) => {
            let labels: Vec<usize> = (0..z.nrows())
                .map(|i| {
                    let row = z.row(i);
                    (0..k).fold(0, |b, c| if row[c] > row[b] { c } else { b })
                })
                .collect();
            Ok((Clustering::canonical(&labels, k), 0.0, None))
        }
        Err(e) => Err(e),
    }
}

/// Exact SEQ-SPEC step: full decomposition of `L̂(t)`.
pub(crate) fn exact_step(
    state: &PairwiseDistanceState,
    t: usize,
    cfg: &SeqConfig,
) -> Result<StepDecision> {
    let m = state.m();
    let a = build_affinity(&distance_matrix(state), cfg.sigma_a)?;
    let l = build_normalized(&a)?;
    let (values, z) = top_k_eigen(&l, cfg.k)?;
    let (clustering, gamma, _) = spectral_decision(values, z, step_seed(cfg.seed, t))?;
    let thr = threshold(t, cfg.c, cfg.threshold);
    let stop = stopping_rule(gamma, t, cfg.c, cfg.threshold);
    Ok(StepDecision {
        clustering,
        statistic: gamma,
        threshold: thr,
        stop,
        record: StepRecord {
            t,
            gamma,
            threshold: thr,
            ops: dense_cost(m),
            exact: true,
            refreshed: false,
            verified: false,
            rank: None,
        },
    })
}

/// Cost-model charge for one dense decomposition: `M³`.
pub fn dense_cost(m: usize) -> u64 {
    (m as u64).pow(3)
}

pub fn run_seq_spec<S: SampleStream>(streams: &mut [S], cfg: &SeqConfig) -> Result<SeqResult> {
    cfg.validate()?;
    drive(
        streams,
        cfg.k,
        cfg.kernel,
        cfg.max_t,
        cfg.keep_trace,
        |state, t| exact_step(state, t, cfg),
    )
}
