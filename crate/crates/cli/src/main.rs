mod config;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seqspec::bench::{parse_grid, run_method_traced};
use seqspec::datagen::{gen_bridge_instance_with, gen_circle_instance_sized, CIRCLE_COV_SCALE};
use seqspec::diagnostics::diagnose;
use seqspec::sequential::min_stop_time;
use seqspec::spectral::{build_affinity, spec_cluster};
use seqspec::{
    ingest_labeled, partition_error, run_bench, BenchConfig, Error, IAConfig, KernelConfig, Method,
    OutputFormat, ProblemInstance, SeqResult, ThresholdForm,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Sequential spectral clustering of data sequences.
#[derive(Parser, Debug)]
#[command(name = "seqspec", version, args_override_self = true)]
#[command(
    after_help = "Any subcommand also accepts --config FILE: `key = value` lines mirroring the long flags. \
Flags given on the command line override the file."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a problem instance file (JSON).
    Generate(GenerateArgs),
    /// One run of a method; prints N, the partition and a Γ trace summary.
    Run(RunArgs),
    /// Monte Carlo error probability and mean stopping time over a grid.
    Bench(BenchArgs),
    /// Spectral and assumption diagnostics of an instance.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false)]
struct Source {
    /// Built-in instance.
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Labelled data file: `label, x1, x2, ...` per line.
    #[arg(long)]
    labeled: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct InstanceArgs {
    #[command(flatten)]
    source: Source,
    /// Sequences per label when ingesting --labeled data [default: 3].
    #[arg(long)]
    splits: Option<usize>,
    /// Inner-ring size of the circle instance; outer ring is twice as large [default: 10].
    #[arg(long)]
    circle_inner: Option<usize>,
    /// Per-sequence covariance scale of the built-in instances [default: 0.4].
    #[arg(long)]
    cov_scale: Option<f64>,
    /// `key = value` file mirroring the long flags; command-line flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Builtin {
    Circle,
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Threshold {
    Arcsin,
    Ratio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TextFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct GenerateArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// Seed for splitting labelled data into sequences.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AlgoArgs {
    /// seq-spec, ia-seq-spec, fss-spec, seq-kmed or seq-slink. bench accepts a
    /// comma-separated list together with an --out path containing {method}.
    #[arg(long, default_value = "seq-spec", value_parser = parse_method, value_delimiter = ',')]
    method: Vec<Method>,
    /// Number of clusters [default: the instance's K].
    #[arg(long)]
    k: Option<usize>,
    /// Affinity bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma_a: f64,
    /// Gaussian MMD kernel bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma_g: f64,
    /// ia-seq-spec block size [default: 4].
    #[arg(long)]
    p: Option<usize>,
    /// ia-seq-spec retained Frobenius mass fraction [default: 0.7].
    #[arg(long)]
    q: Option<f64>,
    /// ia-seq-spec exact refresh period [default: 50].
    #[arg(long)]
    r: Option<usize>,
    /// Sampling cap per run [default: 10*ceil(C^2)+500].
    #[arg(long)]
    max_t: Option<usize>,
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stopping threshold, arcsin(C/sqrt t) or C/sqrt t
    /// [default: arcsin for spectral methods, ratio for seq-kmed/seq-slink].
    #[arg(long, value_enum)]
    threshold_form: Option<Threshold>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct RunArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Threshold constant (not used by fss-spec).
    #[arg(long)]
    c: Option<f64>,
    /// fss-spec sample size.
    #[arg(long)]
    t_fixed: Option<usize>,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct BenchArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Threshold constants, `a:b:step` or a comma list (not used by fss-spec).
    #[arg(long)]
    c_grid: Option<String>,
    /// fss-spec sample sizes, `a:b:step` or a comma list.
    #[arg(long)]
    t_fixed: Option<String>,
    /// Trials per grid value.
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// Worker threads (0: all cores). Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct DiagnoseArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// Affinity bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma_a: f64,
    /// Gaussian MMD kernel bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma_g: f64,
    /// Samples per sequence used to estimate distances of empirical instances.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad or inconsistent arguments (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn load_instance(a: &InstanceArgs, seed: u64) -> Result<ProblemInstance> {
    if a.splits.is_some() && a.source.labeled.is_none() {
        return Err(usage("--splits only applies with --labeled"));
    }
    if a.source.builtin.is_none() && (a.circle_inner.is_some() || a.cov_scale.is_some()) {
        let flag = if a.circle_inner.is_some() {
            "--circle-inner"
        } else {
            "--cov-scale"
        };
        return Err(usage(format!("{flag} only applies with --builtin")));
    }
    let cov = a.cov_scale.unwrap_or(CIRCLE_COV_SCALE);
    match (a.source.builtin, &a.source.instance, &a.source.labeled) {
        (Some(Builtin::Circle), _, _) => Ok(gen_circle_instance_sized(
            a.circle_inner.unwrap_or(10),
            cov,
        )?),
        (Some(Builtin::Bridge), _, _) => {
            if a.circle_inner.is_some() {
                return Err(usage("--circle-inner only applies with --builtin circle"));
            }
            Ok(gen_bridge_instance_with(cov)?)
        }
        (None, Some(p), _) => ProblemInstance::load(p)
            .with_context(|| format!("--instance: cannot load {}", p.display())),
        (None, None, Some(p)) => ingest_labeled(p, a.splits.unwrap_or(3), seed)
            .with_context(|| format!("--labeled: {}", p.display())),
        (None, None, None) => Err(usage(
            "one of --builtin, --instance or --labeled is required",
        )),
    }
}

fn bench_config(a: &AlgoArgs, method: Method, instance: &ProblemInstance) -> Result<BenchConfig> {
    let ia = method == Method::IaSeqSpec;
    let any_ia = a.method.contains(&Method::IaSeqSpec);
    for (flag, set) in [
        ("--p", a.p.is_some()),
        ("--q", a.q.is_some()),
        ("--r", a.r.is_some()),
    ] {
        if set && !any_ia {
            return Err(usage(format!(
                "{flag} only applies to --method ia-seq-spec"
            )));
        }
    }
    let k = a.k.unwrap_or(instance.k);
    if k != instance.k {
        return Err(usage(format!(
            "--k {k} does not match the instance (K = {})",
            instance.k
        )));
    }
    let mut cfg = BenchConfig::new(method, k);
    cfg.sigma_a = a.sigma_a;
    cfg.kernel = KernelConfig::gaussian(a.sigma_g).map_err(|e| usage(format!("--sigma-g: {e}")))?;
    if !(a.sigma_a > 0.0 && a.sigma_a.is_finite()) {
        return Err(usage("--sigma-a must be positive"));
    }
    let defaults = IAConfig::default();
    cfg.ia = IAConfig {
        p: a.p.unwrap_or(defaults.p),
        q: a.q.unwrap_or(defaults.q),
        r: a.r.unwrap_or(defaults.r),
        ..defaults
    };
    if ia {
        cfg.ia
            .validate(instance.m)
            .map_err(|e| usage(format!("--p/--q/--r: {e}")))?;
    }
    if a.max_t == Some(0) {
        return Err(usage("--max-t must be at least 1"));
    }
    cfg.max_t = a.max_t;
    cfg.seed = a.seed;
    if let Some(t) = a.threshold_form {
        cfg.threshold = match t {
            Threshold::Arcsin => ThresholdForm::Arcsin,
            Threshold::Ratio => ThresholdForm::Ratio,
        };
    }
    Ok(cfg)
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("--out: cannot write {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let inst = load_instance(&a.source, a.seed)?;
    let mut text = inst.to_json();
    text.push('\n');
    write_out(a.out.as_deref(), &text)?;
    if let Some(p) = &a.out {
        eprintln!(
            "wrote {} (M = {}, K = {}) to {}",
            inst.name,
            inst.m,
            inst.k,
            p.display()
        );
    }
    Ok(())
}

fn groups_string(res: &SeqResult) -> String {
    res.clustering
        .groups()
        .iter()
        .map(|g| {
            format!(
                "{{{}}}",
                g.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn run_text(inst: &ProblemInstance, cfg: &BenchConfig, grid: f64, res: &SeqResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "instance   {} (M = {}, K = {})",
        inst.name, inst.m, inst.k
    );
    let _ = match cfg.method {
        Method::FssSpec => writeln!(s, "method     fss-spec  t_fixed = {grid}"),
        m => writeln!(
            s,
            "method     {m}  C = {grid}  threshold = {}",
            seqspec::bench::threshold_name(cfg.threshold)
        ),
    };
    let _ = writeln!(s, "N          {}", res.n);
    let _ = writeln!(s, "capped     {}", res.stopped_by_cap);
    let _ = writeln!(
        s,
        "labels     {}",
        res.clustering
            .labels()
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(s, "partition  {}", groups_string(res));
    let err = res.stopped_by_cap
        || partition_error(&res.clustering, &inst.true_clustering, &inst.free_set);
    let _ = writeln!(s, "error      {err}");
    let _ = writeln!(s, "eigen ops  {}", res.eigen_op_count);
    let tr = &res.trace;
    if !tr.is_empty() {
        let first_thr = tr.iter().find(|r| r.threshold.is_some()).map(|r| r.t);
        let max_g = tr.iter().map(|r| r.gamma).fold(f64::NEG_INFINITY, f64::max);
        let last = tr.last().expect("non-empty");
        let _ = writeln!(
            s,
            "gamma      steps = {}, threshold defined from t = {}, max = {max_g:.6}, final = {:.6} vs {}",
            tr.len(),
            first_thr.map_or("never".to_string(), |t| t.to_string()),
            last.gamma,
            last.threshold.map_or("undefined".to_string(), |v| format!("{v:.6}")),
        );
        let stride = (tr.len() / 10).max(1);
        for r in tr.iter().filter(|r| r.t % stride == 0 || r.t == last.t) {
            let _ = writeln!(
                s,
                "  t = {:>6}  gamma = {:.6}  threshold = {}",
                r.t,
                r.gamma,
                r.threshold.map_or("-".to_string(), |v| format!("{v:.6}"))
            );
        }
    }
    s
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let method = match a.algo.method.as_slice() {
        [m] => *m,
        _ => return Err(usage("run takes a single --method")),
    };
    let inst = load_instance(&a.source, a.algo.seed)?;
    let cfg = bench_config(&a.algo, method, &inst)?;
    let grid = if cfg.method == Method::FssSpec {
        if a.c.is_some() {
            return Err(usage(
                "--c does not apply to --method fss-spec; use --t-fixed",
            ));
        }
        a.t_fixed
            .ok_or_else(|| usage("--t-fixed is required for --method fss-spec"))? as f64
    } else {
        if a.t_fixed.is_some() {
            return Err(usage("--t-fixed only applies to --method fss-spec"));
        }
        a.c.ok_or_else(|| usage(format!("--c is required for --method {}", cfg.method)))?
    };
    let res = run_method_traced(&inst, &cfg, grid, a.algo.seed, true)?;
    let text = match a.format {
        TextFormat::Text => run_text(&inst, &cfg, grid, &res),
        TextFormat::Json => {
            let mut v = serde_json::to_value(&res)?;
            v["config"] = serde_json::to_value(cfg.metadata(&inst))?;
            v["grid_value"] = grid.into();
            let mut t = serde_json::to_string_pretty(&v)?;
            t.push('\n');
            t
        }
    };
    write_out(a.out.as_deref(), &text)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let methods = &a.algo.method;
    let has_fss = methods.contains(&Method::FssSpec);
    let has_seq = methods.iter().any(|m| *m != Method::FssSpec);
    if a.c_grid.is_some() && !has_seq {
        return Err(usage(
            "--c-grid does not apply to --method fss-spec; give sample sizes with --t-fixed",
        ));
    }
    if a.t_fixed.is_some() && !has_fss {
        return Err(usage("--t-fixed only applies to --method fss-spec"));
    }
    let c_grid = match (&a.c_grid, has_seq) {
        (Some(s), _) => parse_grid(s).map_err(|e| usage(format!("--c-grid: {e}")))?,
        (None, true) => return Err(usage("--c-grid is required for sequential methods")),
        (None, false) => Vec::new(),
    };
    let t_grid = match (&a.t_fixed, has_fss) {
        (Some(s), _) => parse_grid(s).map_err(|e| usage(format!("--t-fixed: {e}")))?,
        (None, true) => return Err(usage("--t-fixed is required for --method fss-spec")),
        (None, false) => Vec::new(),
    };
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if methods.len() > 1 {
        let ok = a
            .out
            .as_ref()
            .is_some_and(|p| p.to_string_lossy().contains("{method}"));
        if !ok {
            return Err(usage(
                "several methods need an --out path containing {method}",
            ));
        }
    }
    let format = match a.format {
        TableFormat::Csv => OutputFormat::Csv,
        TableFormat::Json => OutputFormat::Json,
    };
    let inst = load_instance(&a.source, a.algo.seed)?;
    let mut cfgs = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut cfg = bench_config(&a.algo, m, &inst)?;
        cfg.trials = a.trials;
        cfg.jobs = a.jobs;
        cfgs.push(cfg);
    }
    for cfg in &cfgs {
        let fss = cfg.method == Method::FssSpec;
        let summary = run_bench(&inst, cfg, if fss { &t_grid } else { &c_grid })?;
        let Some(out) = &a.out else {
            return write_out(None, &summary.render(format));
        };
        let p = PathBuf::from(out.to_string_lossy().replace("{method}", cfg.method.name()));
        summary.emit(format, &p)?;
        for r in &summary.rows {
            if !fss && r.min_n.is_some_and(|n| n < min_stop_time(r.c)) {
                eprintln!("warning: C = {} stopped below ceil(C^2)", r.c);
            }
            eprintln!(
                "{} C = {:<8} mean_N = {:<10.3} ln P = {:<9.4} errors = {}/{}",
                cfg.method, r.c, r.mean_n, r.ln_error_prob, r.error_count, r.trials
            );
        }
        eprintln!("wrote {} rows to {}", summary.rows.len(), p.display());
    }
    Ok(())
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let inst = load_instance(&a.source, a.seed)?;
    let kernel = KernelConfig::gaussian(a.sigma_g).map_err(|e| usage(format!("--sigma-g: {e}")))?;
    if !(a.sigma_a > 0.0 && a.sigma_a.is_finite()) {
        return Err(usage("--sigma-a must be positive"));
    }
    let d = inst.reference_distances(&kernel, a.samples, a.seed)?;
    let (spec, _) = spec_cluster(&d, inst.k, a.sigma_a, a.seed)?;
    let recovered = spec.same_partition_except(&inst.true_clustering, &inst.free_set);
    let diag = diagnose(
        &build_affinity(&d, a.sigma_a)?.into_matrix(),
        &inst.true_clustering,
    )?;
    let exact = inst.true_distances(&kernel).is_some();
    let text = match a.format {
        TextFormat::Json => {
            let mut v = serde_json::to_value(&diag)?;
            v["instance"] = inst.name.clone().into();
            v["sigma_a"] = a.sigma_a.into();
            v["sigma_g"] = a.sigma_g.into();
            v["distances"] = if exact { "closed_form" } else { "estimated" }.into();
            v["spec_recovers_truth"] = recovered.into();
            let mut t = serde_json::to_string_pretty(&v)?;
            t.push('\n');
            t
        }
        TextFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "instance        {} (M = {}, K = {})",
                inst.name, inst.m, inst.k
            );
            let _ = writeln!(
                s,
                "distances       {}",
                if exact {
                    "closed form".to_string()
                } else {
                    format!("estimated from {} samples", a.samples)
                }
            );
            let _ = writeln!(s, "spec = truth    {recovered}");
            for (i, c) in diag.conductance.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "h(D_{i})          {:.6}{}",
                    c.value,
                    if c.exact { "" } else { " (sampled)" }
                );
            }
            let _ = writeln!(s, "delta lower bd  {:.6}", diag.delta_lb);
            let _ = writeln!(s, "eps1            {:.6e}", diag.eps1);
            let _ = writeln!(s, "eps2            {:.6e}", diag.eps2);
            let _ = writeln!(s, "C (row mass)    {:.6}", diag.c_row);
            let _ = writeln!(s, "d_H             {:.6}", diag.d_h);
            let _ = writeln!(s, "d_L             {:.6}", diag.d_l);
            let _ = writeln!(s, "beta            {:.6e}", diag.beta);
            let _ = writeln!(s, "N/C^2 -> {:.6}", diag.stop_ratio);
            let top: Vec<String> = diag
                .eigenvalues
                .iter()
                .take(6)
                .map(|v| format!("{v:.6}"))
                .collect();
            let _ = writeln!(s, "top eigenvalues {}", top.join(" "));
            s
        }
    };
    write_out(a.out.as_deref(), &text)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Diagnose(a) => cmd_diagnose(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage_err = e.downcast_ref::<Usage>().is_some()
                || matches!(
                    e.downcast_ref::<Error>(),
                    Some(Error::InvalidParameter { .. })
                );
            ExitCode::from(if usage_err { 1 } else { 2 })
        }
    }
}
