//! Monte Carlo estimation of error probability and mean stopping time over a
//! grid of threshold constants, with eigen-cost accounting and CSV/JSON output.

use crate::baselines::{run_baseline, BaselineConfig, BaselineMethod};
use crate::clustering::Clustering;
use crate::datagen::ProblemInstance;
use crate::error::{invalid, Error, Result};
use crate::incremental::{run_ia_seq_spec, IAConfig};
use crate::mmd::KernelConfig;
use crate::seeds::derive_seed;
use crate::sequential::{
    default_max_t, min_stop_time, run_seq_spec, SeqConfig, SeqResult, ThresholdForm,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SeqSpec,
    IaSeqSpec,
    FssSpec,
    SeqKmed,
    SeqSlink,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SeqSpec,
        Method::IaSeqSpec,
        Method::FssSpec,
        Method::SeqKmed,
        Method::SeqSlink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SeqSpec => "seq-spec",
            Method::IaSeqSpec => "ia-seq-spec",
            Method::FssSpec => "fss-spec",
            Method::SeqKmed => "seq-kmed",
            Method::SeqSlink => "seq-slink",
        }
    }

    /// Stopping statistic is a raw-distance surrogate.
    pub fn is_surrogate(self) -> bool {
        matches!(self, Method::SeqKmed | Method::SeqSlink)
    }

    /// Default threshold form: arcsin for spectral methods, `C/√t` for the
    /// distance-domain baselines.
    pub fn default_threshold(self) -> ThresholdForm {
        if self.is_surrogate() {
            ThresholdForm::Ratio
        } else {
            ThresholdForm::Arcsin
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid("method", format!("unknown method '{s}'")))
    }
}

/// Error event: after removing `free_set`, `est` and `truth` differ as
/// unlabeled partitions.
pub fn partition_error(est: &Clustering, truth: &Clustering, free_set: &[usize]) -> bool {
    !est.same_partition_except(truth, free_set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub method: Method,
    pub k: usize,
    pub sigma_a: f64,
    pub kernel: KernelConfig,
    pub threshold: ThresholdForm,
    pub ia: IAConfig,
    /// `None` uses `10·⌈C²⌉ + 500` per grid value.
    pub max_t: Option<usize>,
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; 0 lets rayon decide. Results do not depend on it.
    pub jobs: usize,
}

impl BenchConfig {
    pub fn new(method: Method, k: usize) -> Self {
        Self {
            method,
            k,
            sigma_a: 1.0,
            kernel: KernelConfig::default(),
            threshold: method.default_threshold(),
            ia: IAConfig::default(),
            max_t: None,
            seed: 0,
            trials: 2000,
            jobs: 0,
        }
    }

    /// Configuration echoed into output metadata.
    pub fn metadata(&self, instance: &ProblemInstance) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("method".into(), self.method.name().into());
        m.insert("instance".into(), instance.name.clone());
        m.insert("M".into(), instance.m.to_string());
        m.insert("K".into(), self.k.to_string());
        m.insert("sigma_a".into(), self.sigma_a.to_string());
        m.insert("sigma_g".into(), self.kernel.bandwidth.to_string());
        m.insert(
            "threshold_form".into(),
            threshold_name(self.threshold).into(),
        );
        m.insert(
            "max_t".into(),
            self.max_t
                .map_or_else(|| "10*ceil(C^2)+500".to_string(), |t| t.to_string()),
        );
        m.insert("seed".into(), self.seed.to_string());
        m.insert("trials".into(), self.trials.to_string());
        m.insert(
            "statistic".into(),
            if self.method.is_surrogate() {
                "surrogate_min_cross_distance"
            } else {
                "spectral_gamma"
            }
            .into(),
        );
        if self.method == Method::IaSeqSpec {
            m.insert("p".into(), self.ia.p.to_string());
            m.insert("q".into(), self.ia.q.to_string());
            m.insert("R".into(), self.ia.r.to_string());
        }
        if self.method == Method::FssSpec {
            m.insert("grid".into(), "t_fixed".into());
        }
        m
    }
}

pub fn threshold_name(t: ThresholdForm) -> &'static str {
    match t {
        ThresholdForm::Arcsin => "arcsin",
        ThresholdForm::Ratio => "ratio",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n: usize,
    pub error: bool,
    pub capped: bool,
    pub ops: u64,
}

/// Run one method on fresh streams of `instance`. For FSS-SPEC `grid_value`
/// is the sample size, otherwise the threshold constant.
pub fn run_method(
    instance: &ProblemInstance,
    cfg: &BenchConfig,
    grid_value: f64,
    trial_seed: u64,
) -> Result<SeqResult> {
    run_method_traced(instance, cfg, grid_value, trial_seed, false)
}

pub fn run_method_traced(
    instance: &ProblemInstance,
    cfg: &BenchConfig,
    grid_value: f64,
    trial_seed: u64,
    keep_trace: bool,
) -> Result<SeqResult> {
    let mut streams = instance.streams(trial_seed);
    let algo_seed = derive_seed(trial_seed, u64::MAX, 0);
    let max_t = cfg.max_t.unwrap_or_else(|| default_max_t(grid_value));
    let seq = SeqConfig {
        k: cfg.k,
        c: grid_value,
        sigma_a: cfg.sigma_a,
        kernel: cfg.kernel,
        max_t,
        seed: algo_seed,
        threshold: cfg.threshold,
        keep_trace,
    };
    match cfg.method {
        Method::SeqSpec => run_seq_spec(&mut streams, &seq),
        Method::IaSeqSpec => run_ia_seq_spec(&mut streams, &seq, &cfg.ia),
        Method::FssSpec | Method::SeqKmed | Method::SeqSlink => {
            let method = match cfg.method {
                Method::FssSpec => BaselineMethod::FssSpec,
                Method::SeqKmed => BaselineMethod::SeqKmed,
                _ => BaselineMethod::SeqSlink,
            };
            let mut b = BaselineConfig::new(method, cfg.k, grid_value);
            if method == BaselineMethod::FssSpec {
                if !(grid_value >= 1.0 && grid_value.fract() == 0.0) {
                    return Err(invalid(
                        "t_fixed",
                        format!("grid value {grid_value} is not a sample size"),
                    ));
                }
                b.t_fixed = grid_value as usize;
                b.c = 1.0;
            }
            b.sigma_a = cfg.sigma_a;
            b.kernel = cfg.kernel;
            b.max_t = max_t;
            b.seed = algo_seed;
            b.threshold = cfg.threshold;
            b.keep_trace = keep_trace;
            run_baseline(&mut streams, &b)
        }
    }
}

pub fn run_trial(
    instance: &ProblemInstance,
    cfg: &BenchConfig,
    grid_value: f64,
    trial_seed: u64,
) -> Result<TrialOutcome> {
    let res = run_method(instance, cfg, grid_value, trial_seed)?;
    let error = res.stopped_by_cap
        || partition_error(
            &res.clustering,
            &instance.true_clustering,
            &instance.free_set,
        );
    Ok(TrialOutcome {
        n: res.n,
        error,
        capped: res.stopped_by_cap,
        ops: res.eigen_op_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub c: f64,
    pub trials: usize,
    pub mean_n: f64,
    /// Natural log of `error_count / trials`; `-inf` when no errors.
    pub ln_error_prob: f64,
    pub error_count: usize,
    /// Eigen-solver operations per sampling step.
    pub mean_eigen_ops: f64,
    /// Trials that hit `max_t` (already counted in `error_count`).
    pub capped: usize,
    /// `ln(3 / trials)`: one-sided 95% upper bound used when no errors occur.
    pub ln_error_upper: f64,
    /// Smallest stopping time among trials that were not capped.
    pub min_n: Option<usize>,
}

impl BenchRow {
    pub fn from_outcomes(c: f64, outcomes: &[TrialOutcome]) -> Self {
        let trials = outcomes.len();
        let total_n: u64 = outcomes.iter().map(|o| o.n as u64).sum();
        let total_ops: u128 = outcomes.iter().map(|o| o.ops as u128).sum();
        let error_count = outcomes.iter().filter(|o| o.error).count();
        let capped = outcomes.iter().filter(|o| o.capped).count();
        let ln_error_prob = if error_count == 0 {
            f64::NEG_INFINITY
        } else {
            (error_count as f64 / trials as f64).ln()
        };
        Self {
            c,
            trials,
            mean_n: if trials == 0 {
                f64::NAN
            } else {
                total_n as f64 / trials as f64
            },
            ln_error_prob,
            error_count,
            mean_eigen_ops: if total_n == 0 {
                0.0
            } else {
                total_ops as f64 / total_n as f64
            },
            capped,
            ln_error_upper: (3.0 / trials as f64).ln(),
            min_n: outcomes.iter().filter(|o| !o.capped).map(|o| o.n).min(),
        }
    }

    /// Non-capped trials that stopped before `⌈C²⌉` (arcsin form only).
    pub fn lower_bound_violated(&self) -> bool {
        self.min_n.is_some_and(|n| n < min_stop_time(self.c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<BenchRow>,
}

/// Parse `a:b:step` (inclusive of `b` up to rounding) or a comma list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid("c-grid", format!("'{s}' is not a number")))
    };
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => spec.split(',').map(num).collect(),
        3 => {
            let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || !(b >= a) {
                return Err(invalid(
                    "c-grid",
                    format!("need start ≤ end and step > 0 in '{spec}'"),
                ));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + step * i as f64).collect())
        }
        _ => Err(invalid(
            "c-grid",
            format!("expected a:b:step, got '{spec}'"),
        )),
    }
}

fn run_grid(instance: &ProblemInstance, cfg: &BenchConfig, grid: &[f64]) -> Result<Vec<BenchRow>> {
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    grid.iter()
        .enumerate()
        .map(|(ci, &c)| {
            let outcomes = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    run_trial(
                        instance,
                        cfg,
                        c,
                        derive_seed(cfg.seed, ci as u64, trial as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BenchRow::from_outcomes(c, &outcomes))
        })
        .collect()
}

pub fn run_bench(
    instance: &ProblemInstance,
    cfg: &BenchConfig,
    grid: &[f64],
) -> Result<BenchSummary> {
    if cfg.k != instance.k {
        return Err(invalid(
            "K",
            format!("instance has K = {}, got {}", instance.k, cfg.k),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let rows = pool.install(|| run_grid(instance, cfg, grid))?;
    Ok(BenchSummary {
        metadata: cfg.metadata(instance),
        rows,
    })
}

pub const CSV_HEADER: &str =
    "C,trials,mean_N,ln_error_prob,error_count,mean_eigen_ops,capped,ln_error_upper,min_N";

fn fmt_f64(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    match s {
        "-inf" => Ok(f64::NEG_INFINITY),
        "inf" => Ok(f64::INFINITY),
        "nan" => Ok(f64::NAN),
        _ => s.parse().map_err(|_| Error::Parse {
            line,
            reason: format!("'{s}' is not a number"),
        }),
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("'{s}' is not a count"),
    })
}

impl BenchSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.c),
                r.trials,
                fmt_f64(r.mean_n),
                fmt_f64(r.ln_error_prob),
                r.error_count,
                fmt_f64(r.mean_eigen_ops),
                r.capped,
                fmt_f64(r.ln_error_upper),
                r.min_n.map_or(String::new(), |n| n.to_string()),
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if let Some(meta) = raw.strip_prefix("# ") {
                let (k, v) = meta.split_once('=').ok_or(Error::Parse {
                    line,
                    reason: "metadata line without '='".into(),
                })?;
                metadata.insert(k.to_string(), v.to_string());
                continue;
            }
            if !seen_header {
                if raw != CSV_HEADER {
                    return Err(Error::Parse {
                        line,
                        reason: "unexpected header".into(),
                    });
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected 9 fields, got {}", f.len()),
                });
            }
            rows.push(BenchRow {
                c: parse_f64(f[0], line)?,
                trials: parse_usize(f[1], line)?,
                mean_n: parse_f64(f[2], line)?,
                ln_error_prob: parse_f64(f[3], line)?,
                error_count: parse_usize(f[4], line)?,
                mean_eigen_ops: parse_f64(f[5], line)?,
                capped: parse_usize(f[6], line)?,
                ln_error_upper: parse_f64(f[7], line)?,
                min_n: if f[8].is_empty() {
                    None
                } else {
                    Some(parse_usize(f[8], line)?)
                },
            });
        }
        if !seen_header {
            return Err(Error::Parse {
                line: text.lines().count(),
                reason: "missing header".into(),
            });
        }
        Ok(Self { metadata, rows })
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "C": json_f64(r.c),
                    "trials": r.trials,
                    "mean_N": json_f64(r.mean_n),
                    "ln_error_prob": json_f64(r.ln_error_prob),
                    "error_count": r.error_count,
                    "mean_eigen_ops": json_f64(r.mean_eigen_ops),
                    "capped": r.capped,
                    "ln_error_upper": json_f64(r.ln_error_upper),
                    "min_N": r.min_n,
                })
            })
            .collect();
        let doc = serde_json::json!({ "metadata": self.metadata, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("plain JSON values");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Parse { line: 0, reason };
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })?;
        let metadata: BTreeMap<String, String> =
            serde_json::from_value(doc["metadata"].clone()).map_err(|e| bad(e.to_string()))?;
        let arr = doc["rows"]
            .as_array()
            .ok_or_else(|| bad("missing rows".into()))?;
        let f = |v: &serde_json::Value, key: &str| -> Result<f64> {
            match &v[key] {
                serde_json::Value::Number(n) => {
                    n.as_f64().ok_or_else(|| bad(format!("{key} out of range")))
                }
                serde_json::Value::String(s) => parse_f64(s, 0),
                _ => Err(bad(format!("missing {key}"))),
            }
        };
        let u = |v: &serde_json::Value, key: &str| -> Result<usize> {
            v[key]
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let rows = arr
            .iter()
            .map(|v| {
                Ok(BenchRow {
                    c: f(v, "C")?,
                    trials: u(v, "trials")?,
                    mean_n: f(v, "mean_N")?,
                    ln_error_prob: f(v, "ln_error_prob")?,
                    error_count: u(v, "error_count")?,
                    mean_eigen_ops: f(v, "mean_eigen_ops")?,
                    capped: u(v, "capped")?,
                    ln_error_upper: f(v, "ln_error_upper")?,
                    min_n: v["min_N"].as_u64().map(|x| x as usize),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { metadata, rows })
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn emit(&self, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render(format))?;
        Ok(())
    }
}

fn json_f64(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::String(fmt_f64(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(invalid(
                "format",
                format!("expected csv or json, got '{s}'"),
            )),
        }
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            r[p] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
