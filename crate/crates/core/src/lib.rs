//! Sequential nonparametric clustering of data streams by the maximum mean
//! discrepancy between their distributions.
//!
//! Every step draws one sample from each sequence, refreshes the pairwise MMD
//! estimates, runs spectral clustering on the resulting affinity and stops
//! once the spectral points of different clusters are far enough apart for
//! the current sample size.

pub mod baselines;
pub mod bench;
pub mod clustering;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod incremental;
pub mod kmeans;
pub mod mmd;
pub mod seeds;
pub mod sequential;
pub mod spectral;
pub mod stream;

pub use baselines::{run_fss_spec, run_seq_kmed, run_seq_slink, BaselineConfig, BaselineMethod};
pub use bench::{
    partition_error, run_bench, BenchConfig, BenchRow, BenchSummary, Method, OutputFormat,
};
pub use clustering::Clustering;
pub use datagen::{gen_bridge_instance, gen_circle_instance, ingest_labeled, ProblemInstance};
pub use error::{Error, Result};
pub use incremental::{run_ia_seq_spec, IAConfig};
pub use mmd::{KernelConfig, PairwiseDistanceState};
pub use sequential::{run_seq_spec, SeqConfig, SeqResult, StepRecord, ThresholdForm};
pub use stream::SampleStream;
