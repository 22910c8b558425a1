//! Browser bindings: a single SEQ-SPEC run with its Γ trace, the affinity
//! spectrum of a built-in instance, and an exact vs incremental cost run.
//! Every function returns a JSON string.

use seqspec::bench::{run_method_traced, BenchConfig};
use seqspec::datagen::{gen_bridge_instance, gen_circle_instance, SequenceDist, CIRCLE_COV_SCALE};
use seqspec::diagnostics::{spectral_gap, spectral_separation, stop_ratio};
use seqspec::spectral::{build_affinity, build_normalized, dense_eigen, spec_cluster};
use seqspec::{partition_error, IAConfig, KernelConfig, Method, ProblemInstance, SeqResult};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn instance(name: &str) -> Result<ProblemInstance, String> {
    match name {
        "circle" => gen_circle_instance(CIRCLE_COV_SCALE),
        "bridge" => gen_bridge_instance(),
        other => return Err(format!("unknown instance '{other}'")),
    }
    .map_err(|e| e.to_string())
}

fn means(inst: &ProblemInstance) -> Vec<Vec<f64>> {
    inst.dists
        .iter()
        .map(|d| match d {
            SequenceDist::Gaussian { mean, .. } => mean.clone(),
            SequenceDist::Empirical { .. } => Vec::new(),
        })
        .collect()
}

fn config(
    method: Method,
    inst: &ProblemInstance,
    sigma_a: f64,
    sigma_g: f64,
) -> Result<BenchConfig, String> {
    let mut cfg = BenchConfig::new(method, inst.k);
    cfg.sigma_a = sigma_a;
    cfg.kernel = KernelConfig::gaussian(sigma_g).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn summary(inst: &ProblemInstance, res: &SeqResult) -> Value {
    let err = res.stopped_by_cap
        || partition_error(&res.clustering, &inst.true_clustering, &inst.free_set);
    json!({
        "n": res.n,
        "labels": res.clustering.labels(),
        "capped": res.stopped_by_cap,
        "error": err,
        "eigen_ops": res.eigen_op_count,
    })
}

fn finish(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error_message": e }))
        .to_string()
}

/// One SEQ-SPEC run: stopping time, labels, sequence means and the
/// per-step Γ and threshold.
#[wasm_bindgen]
pub fn run_seq_spec_demo(
    instance_name: &str,
    c: f64,
    sigma_a: f64,
    sigma_g: f64,
    seed: u32,
) -> String {
    finish((|| {
        let inst = instance(instance_name)?;
        let cfg = config(Method::SeqSpec, &inst, sigma_a, sigma_g)?;
        let res =
            run_method_traced(&inst, &cfg, c, seed as u64, true).map_err(|e| e.to_string())?;
        let mut v = summary(&inst, &res);
        v["means"] = json!(means(&inst));
        v["truth"] = json!(inst.true_clustering.labels());
        v["free"] = json!(inst.free_set);
        v["gamma"] = json!(res.trace.iter().map(|r| r.gamma).collect::<Vec<_>>());
        v["threshold"] = json!(res.trace.iter().map(|r| r.threshold).collect::<Vec<_>>());
        Ok(v)
    })())
}

/// Eigenvalues of the normalized affinity built from population distances,
/// with the separation quantities of the true partition.
#[wasm_bindgen]
pub fn affinity_spectrum(instance_name: &str, sigma_a: f64, sigma_g: f64) -> String {
    finish((|| {
        let inst = instance(instance_name)?;
        let kernel = KernelConfig::gaussian(sigma_g).map_err(|e| e.to_string())?;
        let d = inst
            .true_distances(&kernel)
            .ok_or("no closed-form distances")?;
        let a = build_affinity(&d, sigma_a).map_err(|e| e.to_string())?;
        let l = build_normalized(&a).map_err(|e| e.to_string())?;
        let (values, _) = dense_eigen(&l);
        let (spec, _) = spec_cluster(&d, inst.k, sigma_a, 0).map_err(|e| e.to_string())?;
        let sep = spectral_separation(a.matrix(), inst.k, &inst.true_clustering)
            .map_err(|e| e.to_string())?;
        Ok(json!({
            "eigenvalues": values,
            "gap": spectral_gap(&values, inst.k),
            "spec_labels": spec.labels(),
            "recovers_truth": spec.same_partition_except(&inst.true_clustering, &inst.free_set),
            "d_h": sep.d_h,
            "d_l": sep.d_l,
            "stop_ratio": stop_ratio(sep.d_h),
        }))
    })())
}

/// SEQ-SPEC and IA-SEQ-SPEC on the same streams; per-step eigen op counts.
#[wasm_bindgen]
pub fn cost_comparison(
    instance_name: &str,
    c: f64,
    sigma_a: f64,
    sigma_g: f64,
    p: u32,
    q: f64,
    r: u32,
    seed: u32,
) -> String {
    finish((|| {
        let inst = instance(instance_name)?;
        let mut out = json!({});
        for method in [Method::SeqSpec, Method::IaSeqSpec] {
            let mut cfg = config(method, &inst, sigma_a, sigma_g)?;
            cfg.ia = IAConfig {
                p: p as usize,
                q,
                r: r as usize,
                ..IAConfig::default()
            };
            cfg.ia.validate(inst.m).map_err(|e| e.to_string())?;
            let res =
                run_method_traced(&inst, &cfg, c, seed as u64, true).map_err(|e| e.to_string())?;
            let mut v = summary(&inst, &res);
            v["ops"] = json!(res.trace.iter().map(|s| s.ops).collect::<Vec<_>>());
            v["rank"] = json!(res.trace.iter().map(|s| s.rank).collect::<Vec<_>>());
            v["mean_ops"] = json!(res.eigen_op_count as f64 / res.n.max(1) as f64);
            out[method.name()] = v;
        }
        Ok(out)
    })())
}
