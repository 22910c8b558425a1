//! Problem instances: the two synthetic layouts, a planted two-block layout
//! and labelled-data ingestion.

use crate::clustering::Clustering;
use crate::error::{invalid, Error, Result};
use crate::mmd::{gaussian_mmd, KernelConfig, PairwiseDistanceState};
use crate::spectral::spec_cluster;
use crate::stream::{stream_rng, ConstantStream, GaussianStream, PoolStream, SampleStream};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

/// Covariance scale of the circle layout.
pub const CIRCLE_COV_SCALE: f64 = 0.4;
/// Covariance scale used for the bridge layout.
pub const BRIDGE_COV_SCALE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceDist {
    /// `N(mean, variance · I)`; zero variance is a point mass.
    Gaussian { mean: Vec<f64>, variance: f64 },
    /// I.i.d. draws with replacement from a finite pool.
    Empirical { pool: Arc<Vec<Vec<f64>>> },
}

impl SequenceDist {
    pub fn dim(&self) -> usize {
        match self {
            SequenceDist::Gaussian { mean, .. } => mean.len(),
            SequenceDist::Empirical { pool } => pool.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    /// Labels fixed by construction.
    Planted,
    /// Labels of a labelled dataset.
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub name: String,
    pub m: usize,
    pub k: usize,
    pub dim: usize,
    pub dists: Vec<SequenceDist>,
    pub true_clustering: Clustering,
    /// Sequences whose assignment is ignored when scoring.
    pub free_set: Vec<usize>,
    pub truth_source: TruthSource,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        dists: Vec<SequenceDist>,
        true_clustering: Clustering,
        free_set: Vec<usize>,
        truth_source: TruthSource,
    ) -> Result<Self> {
        let m = dists.len();
        if m < 2 {
            return Err(invalid("M", "need at least two sequences"));
        }
        let dim = dists[0].dim();
        if dim == 0 {
            return Err(invalid("dim", "empty sample vectors"));
        }
        if let Some(bad) = dists.iter().find(|d| d.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        if true_clustering.len() != m {
            return Err(invalid(
                "true_clustering",
                format!("has {} labels for {m} sequences", true_clustering.len()),
            ));
        }
        if let Some(&f) = free_set.iter().find(|&&f| f >= m) {
            return Err(invalid("free_set", format!("index {f} out of range")));
        }
        Ok(Self {
            name: name.into(),
            m,
            k: true_clustering.k(),
            dim,
            dists,
            true_clustering,
            free_set,
            truth_source,
            seed: None,
        })
    }

    /// One independent stream per sequence; sequence `i` draws from RNG
    /// substream `i` of `seed`.
    pub fn streams(&self, seed: u64) -> Vec<Box<dyn SampleStream>> {
        self.dists
            .iter()
            .enumerate()
            .map(|(i, d)| -> Box<dyn SampleStream> {
                match d {
                    SequenceDist::Gaussian { mean, variance } if *variance == 0.0 => {
                        Box::new(ConstantStream(mean.clone()))
                    }
                    SequenceDist::Gaussian { mean, variance } => Box::new(GaussianStream::new(
                        mean.clone(),
                        *variance,
                        stream_rng(seed, i),
                    )),
                    SequenceDist::Empirical { pool } => {
                        Box::new(PoolStream::new(pool.clone(), stream_rng(seed, i)))
                    }
                }
            })
            .collect()
    }

    /// Population MMD matrix, available when every sequence is Gaussian.
    pub fn true_distances(&self, kernel: &KernelConfig) -> Option<DMatrix<f64>> {
        let params: Vec<(&[f64], f64)> = self
            .dists
            .iter()
            .map(|d| match d {
                SequenceDist::Gaussian { mean, variance } => Some((mean.as_slice(), *variance)),
                SequenceDist::Empirical { .. } => None,
            })
            .collect::<Option<_>>()?;
        let m = self.m;
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let v = gaussian_mmd(params[i].0, params[i].1, params[j].0, params[j].1, kernel);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        Some(d)
    }

    /// Population distances when available, otherwise MMD estimates after
    /// `samples` draws per sequence.
    pub fn reference_distances(
        &self,
        kernel: &KernelConfig,
        samples: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        if let Some(d) = self.true_distances(kernel) {
            return Ok(d);
        }
        if samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        let mut streams = self.streams(seed);
        let mut state = PairwiseDistanceState::new(self.m, self.dim, *kernel)?;
        for t in 1..=samples {
            let batch = streams
                .iter_mut()
                .enumerate()
                .map(|(i, s)| {
                    s.next_sample()
                        .ok_or(Error::StreamExhausted { sequence: i, t })
                })
                .collect::<Result<Vec<_>>>()?;
            state.update(&batch)?;
        }
        Ok(DMatrix::from_row_slice(self.m, self.m, state.distances()))
    }

    /// SPEC applied to the population distances.
    pub fn spectral_truth(
        &self,
        kernel: &KernelConfig,
        sigma_a: f64,
        seed: u64,
    ) -> Result<Clustering> {
        let d = self.true_distances(kernel).ok_or_else(|| {
            invalid(
                "instance",
                "no closed-form distances for empirical sequences",
            )
        })?;
        Ok(spec_cluster(&d, self.k, sigma_a, seed)?.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: ProblemInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })?;
        Self::new(
            inst.name,
            inst.dists,
            inst.true_clustering,
            inst.free_set,
            inst.truth_source,
        )
        .map(|mut v| {
            v.seed = inst.seed;
            v
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn ring(count: usize, radius: f64) -> impl Iterator<Item = Vec<f64>> {
    (0..count).map(move |k| {
        let a = 2.0 * PI * k as f64 / count as f64;
        vec![radius * a.cos(), radius * a.sin()]
    })
}

/// Ten means on the unit circle and twenty on the radius-2 circle, all with
/// covariance `cov_scale · I₂`; inner ring is cluster 0.
pub fn gen_circle_instance(cov_scale: f64) -> Result<ProblemInstance> {
    gen_circle_instance_sized(10, cov_scale)
}

/// Circle layout with `inner` means on the unit ring and `2·inner` on the
/// radius-2 ring.
pub fn gen_circle_instance_sized(inner: usize, cov_scale: f64) -> Result<ProblemInstance> {
    if !(cov_scale >= 0.0) {
        return Err(invalid("cov_scale", "must be nonnegative"));
    }
    if inner == 0 {
        return Err(invalid("inner", "must be at least 1"));
    }
    let dists: Vec<SequenceDist> = ring(inner, 1.0)
        .chain(ring(2 * inner, 2.0))
        .map(|mean| SequenceDist::Gaussian {
            mean,
            variance: cov_scale,
        })
        .collect();
    let labels = (0..3 * inner).map(|i| usize::from(i >= inner)).collect();
    let name = if inner == 10 {
        "circle".to_string()
    } else {
        format!("circle{}", 3 * inner)
    };
    ProblemInstance::new(
        name,
        dists,
        Clustering::new(labels, 2)?,
        Vec::new(),
        TruthSource::Planted,
    )
}

const BRIDGE_LEFT: [[f64; 2]; 12] = [
    [-0.96218932, -0.10454969],
    [-1.08261271, -0.48829348],
    [-0.64005852, 0.22883317],
    [-1.06508457, 0.15476132],
    [-0.94375787, -0.11076457],
    [-0.80448651, -0.06211131],
    [-1.06576478, -0.15842935],
    [-0.90900839, -0.01983961],
    [-0.89094226, -0.12143714],
    [-0.97463443, -0.17845481],
    [-0.83170701, 0.03760702],
    [-0.9338858, 0.08210078],
];

const BRIDGE_RIGHT: [[f64; 2]; 12] = [
    [0.7978485, 0.1566362],
    [1.41134056, -0.3276885],
    [0.65411771, -0.30096628],
    [1.16829178, 0.02574313],
    [1.21566849, 0.14448617],
    [1.04211436, 0.05680763],
    [0.9660479, 0.17369204],
    [0.77405681, -0.08437177],
    [1.04858777, 0.36028417],
    [0.84710718, -0.21581209],
    [0.88734256, 0.19385444],
    [0.9529989, 0.2648694],
];

/// Two 12-sequence clusters joined by six bridge sequences on `y = 0`.
/// Indices `24..30` are the bridge and form the free set.
pub fn gen_bridge_instance() -> Result<ProblemInstance> {
    gen_bridge_instance_with(BRIDGE_COV_SCALE)
}

pub fn gen_bridge_instance_with(cov_scale: f64) -> Result<ProblemInstance> {
    if !(cov_scale >= 0.0) {
        return Err(invalid("cov_scale", "must be nonnegative"));
    }
    let bridge = (0..6).map(|i| [-0.5 + 0.2 * i as f64, 0.0]);
    let means: Vec<[f64; 2]> = BRIDGE_LEFT
        .into_iter()
        .chain(BRIDGE_RIGHT)
        .chain(bridge)
        .collect();
    let dists = means
        .iter()
        .map(|m| SequenceDist::Gaussian {
            mean: m.to_vec(),
            variance: cov_scale,
        })
        .collect();
    let labels = means.iter().map(|m| usize::from(m[0] > 0.0)).collect();
    ProblemInstance::new(
        "bridge",
        dists,
        Clustering::new(labels, 2)?,
        (24..30).collect(),
        TruthSource::Planted,
    )
}

/// `sizes[c]` sequences per cluster; cluster `c` has mean `c · separation · e₁`.
pub fn gen_block_instance(
    sizes: &[usize],
    separation: f64,
    variance: f64,
    dim: usize,
) -> Result<ProblemInstance> {
    if sizes.is_empty() || dim == 0 {
        return Err(invalid(
            "sizes",
            "need at least one cluster and one dimension",
        ));
    }
    let mut dists = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        let mut mean = vec![0.0; dim];
        mean[0] = c as f64 * separation;
        for _ in 0..n {
            dists.push(SequenceDist::Gaussian {
                mean: mean.clone(),
                variance,
            });
            labels.push(c);
        }
    }
    ProblemInstance::new(
        "blocks",
        dists,
        Clustering::new(labels, sizes.len())?,
        Vec::new(),
        TruthSource::Planted,
    )
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parse `label, feature...` rows (comma or whitespace separated). A first
/// line whose features are not numeric is taken as a header.
pub fn parse_labeled(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        let parsed: std::result::Result<Vec<f64>, _> =
            fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let features = match parsed {
            Ok(v) if !v.is_empty() => v,
            _ if rows.is_empty() && dim.is_none() => {
                dim = Some(0);
                continue;
            }
            _ => {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: "expected a label followed by numeric features".into(),
                })
            }
        };
        match dim {
            Some(d) if d > 0 && d != features.len() => {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: format!("expected {d} features, found {}", features.len()),
                })
            }
            _ => dim = Some(features.len()),
        }
        rows.push((fields[0].to_string(), features));
    }
    Ok(rows)
}

/// Split every label's points into `splits` pools; each pool becomes one
/// sequence and each label one true cluster.
pub fn ingest_labeled_str(text: &str, splits: usize, seed: u64) -> Result<ProblemInstance> {
    if splits == 0 {
        return Err(invalid("splits_per_label", "must be at least 1"));
    }
    let rows = parse_labeled(text)?;
    let mut by_label: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (label, x) in rows {
        by_label.entry(label).or_default().push(x);
    }
    let mut labels: Vec<String> = by_label.keys().cloned().collect();
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists = Vec::new();
    let mut truth = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let mut points = by_label.remove(label).expect("label present");
        if points.len() < splits {
            return Err(invalid(
                "splits_per_label",
                format!(
                    "label {label} has {} points, fewer than {splits}",
                    points.len()
                ),
            ));
        }
        points.shuffle(&mut rng);
        let base = points.len() / splits;
        let extra = points.len() % splits;
        let mut it = points.into_iter();
        for s in 0..splits {
            let take = base + usize::from(s < extra);
            let pool: Vec<Vec<f64>> = it.by_ref().take(take).collect();
            dists.push(SequenceDist::Empirical {
                pool: Arc::new(pool),
            });
            truth.push(c);
        }
    }
    if labels.is_empty() {
        return Err(invalid("file", "no data rows"));
    }
    let k = labels.len();
    let mut inst = ProblemInstance::new(
        "labeled",
        dists,
        Clustering::new(truth, k)?,
        Vec::new(),
        TruthSource::Labels,
    )?;
    inst.seed = Some(seed);
    Ok(inst)
}

pub fn ingest_labeled(path: impl AsRef<Path>, splits: usize, seed: u64) -> Result<ProblemInstance> {
    ingest_labeled_str(&std::fs::read_to_string(path)?, splits, seed)
}
