//! Measurable cluster-separation quantities of a true affinity matrix:
//! conductance, cross/within-cluster functionals, spectral distances and
//! gap, and the asymptotic stopping ratio.

use crate::clustering::Clustering;
use crate::error::{invalid, Error, Result};
use crate::spectral::{dense_eigen, normalize};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Clusters up to this size are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 20;
/// Random subsets drawn for larger clusters.
pub const SAMPLED_SUBSETS: usize = 100_000;
/// Eigenvalues closer than this are treated as one repeated value.
pub const EIGEN_GROUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductance {
    pub value: f64,
    /// `false` when the minimum was taken over sampled subsets only.
    pub exact: bool,
}

fn split_ratio(
    a: &DMatrix<f64>,
    members: &[usize],
    deg: &[f64],
    inside: impl Fn(usize) -> bool,
) -> f64 {
    let mut cut = 0.0;
    let (mut vol_in, mut vol_out) = (0.0, 0.0);
    for (pi, &i) in members.iter().enumerate() {
        if inside(pi) {
            vol_in += deg[pi];
            for (pj, &j) in members.iter().enumerate() {
                if !inside(pj) {
                    cut += a[(i, j)];
                }
            }
        } else {
            vol_out += deg[pi];
        }
    }
    let denom = vol_in.min(vol_out);
    if denom > 0.0 {
        cut / denom
    } else {
        0.0
    }
}

/// `h(D)`: the minimum over proper nonempty `I ⊂ D` of the cut weight
/// between `I` and `D∖I` divided by the smaller within-cluster volume.
pub fn conductance(a: &DMatrix<f64>, members: &[usize]) -> Result<Conductance> {
    let n = members.len();
    if n < 2 {
        return Err(invalid(
            "cluster",
            format!("conductance needs at least two members, got {n}"),
        ));
    }
    if let Some(&bad) = members.iter().find(|&&i| i >= a.nrows()) {
        return Err(invalid("cluster", format!("index {bad} out of range")));
    }
    let deg: Vec<f64> = members
        .iter()
        .map(|&i| members.iter().map(|&j| a[(i, j)]).sum())
        .collect();
    if n <= EXHAUSTIVE_LIMIT {
        // the last member stays outside I; complements give the same ratio
        let half = 1u64 << (n - 1);
        let value = (1..half)
            .into_par_iter()
            .map(|mask| split_ratio(a, members, &deg, |p| mask & (1 << p) != 0))
            .reduce(|| f64::INFINITY, f64::min);
        return Ok(Conductance { value, exact: true });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut value = f64::INFINITY;
    let mut inside = vec![false; n];
    for _ in 0..SAMPLED_SUBSETS {
        loop {
            for b in inside.iter_mut() {
                *b = rng.gen();
            }
            let c = inside.iter().filter(|&&b| b).count();
            if c > 0 && c < n {
                break;
            }
        }
        value = value.min(split_ratio(a, members, &deg, |p| inside[p]));
    }
    Ok(Conductance {
        value,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionQuantities {
    /// Largest cross-cluster sum of `A_ij² / (d_i d_j)` over ordered cluster pairs.
    pub eps1: f64,
    /// Largest product of a row's outgoing weight ratio with the square root
    /// of its cluster's normalized within-cluster mass.
    pub eps2: f64,
    /// Largest ratio of a cluster's mean within-degree to one member's.
    pub c_row: f64,
}

fn within_degrees(a: &DMatrix<f64>, truth: &Clustering) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            (0..a.nrows())
                .filter(|&j| truth.label(j) == truth.label(i))
                .map(|j| a[(i, j)])
                .sum()
        })
        .collect()
}

pub fn assumption_quantities(a: &DMatrix<f64>, truth: &Clustering) -> Result<AssumptionQuantities> {
    let m = a.nrows();
    if truth.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: truth.len(),
        });
    }
    let d = within_degrees(a, truth);
    let k = truth.k();
    let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };

    let mut pair = vec![0.0; k * k];
    for i in 0..m {
        for j in 0..m {
            let term = ratio(a[(i, j)] * a[(i, j)], d[i] * d[j]);
            pair[truth.label(i) * k + truth.label(j)] += term;
        }
    }
    let eps1 = (0..k)
        .flat_map(|x| (0..k).filter(move |&y| y != x).map(move |y| (x, y)))
        .map(|(x, y)| pair[x * k + y])
        .fold(0.0, f64::max);

    let mut eps2 = 0.0f64;
    let mut c_row = 0.0f64;
    for group in truth.groups() {
        if group.is_empty() {
            continue;
        }
        let c = truth.label(group[0]);
        let within = pair[c * k + c].sqrt();
        let vol: f64 = group.iter().map(|&i| d[i]).sum();
        for &i in &group {
            let out: f64 = (0..m)
                .filter(|&j| truth.label(j) != c)
                .map(|j| a[(i, j)])
                .sum();
            eps2 = eps2.max(ratio(out, d[i]) * within);
            c_row = c_row.max(ratio(vol, group.len() as f64 * d[i]));
        }
    }
    Ok(AssumptionQuantities { eps1, eps2, c_row })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSeparation {
    pub d_h: f64,
    pub d_l: f64,
    pub beta: f64,
    pub stop_ratio: f64,
    /// Descending spectrum of the normalized matrix.
    pub eigenvalues: Vec<f64>,
}

/// `1 / sin²(d_H)`, with `d_H` clamped to `π/2`.
pub fn stop_ratio(d_h: f64) -> f64 {
    let s = d_h.min(std::f64::consts::FRAC_PI_2).sin();
    1.0 / (s * s)
}

/// Smallest gap at the boundaries of the distinct-value groups among the top
/// `k` eigenvalues (descending input). Infinite when no boundary has a successor.
pub fn spectral_gap(values: &[f64], k: usize) -> f64 {
    let mut beta = f64::INFINITY;
    for b in 0..k.min(values.len()) {
        let Some(&next) = values.get(b + 1) else {
            break;
        };
        let gap = values[b] - next;
        if b + 1 == k || gap > EIGEN_GROUP_TOL {
            beta = beta.min(gap);
        }
    }
    beta
}

/// Spectral-domain distances of the exact pipeline on `a`. Distances come
/// from the projector onto the top-`k` eigenspace, so they do not depend on
/// the basis chosen inside a repeated eigenvalue.
pub fn spectral_separation(
    a: &DMatrix<f64>,
    k: usize,
    truth: &Clustering,
) -> Result<SpectralSeparation> {
    let m = a.nrows();
    if k < 2 || truth.nonempty_clusters() < 2 {
        return Err(Error::TooFewClusters);
    }
    if k > m || truth.len() != m {
        return Err(invalid("K", format!("incompatible with M = {m}")));
    }
    let l = normalize(a)?;
    let (values, vectors) = dense_eigen(&l);
    let z = vectors.columns(0, k);
    let p = &z * z.transpose();
    for i in 0..m {
        let n = p[(i, i)].max(0.0).sqrt();
        if n < crate::spectral::MIN_ROW_NORM {
            return Err(Error::DegenerateRow { row: i, norm: n });
        }
    }
    let dist = |i: usize, j: usize| {
        let cos = (p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()).clamp(-1.0, 1.0);
        (2.0 - 2.0 * cos).max(0.0).sqrt()
    };
    let (mut d_h, mut d_l) = (f64::INFINITY, 0.0f64);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = dist(i, j);
            if truth.label(i) == truth.label(j) {
                d_l = d_l.max(v);
            } else {
                d_h = d_h.min(v);
            }
        }
    }
    Ok(SpectralSeparation {
        d_h,
        d_l,
        beta: spectral_gap(&values, k),
        stop_ratio: stop_ratio(d_h),
        eigenvalues: values,
    })
}

/// Concentration bound `M² exp(−ε² t / 16B)` on `P[max |d̂ − d| > ε]`.
pub fn concentration_bound(m: usize, eps: f64, t: usize, bound: f64) -> f64 {
    (m * m) as f64 * (-eps * eps * t as f64 / (16.0 * bound)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDiagnostics {
    pub conductance: Vec<Conductance>,
    /// `min_k h(D_k)² / 2`.
    pub delta_lb: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub c_row: f64,
    pub d_h: f64,
    pub d_l: f64,
    pub beta: f64,
    pub stop_ratio: f64,
    pub eigenvalues: Vec<f64>,
}

pub fn diagnose(a: &DMatrix<f64>, truth: &Clustering) -> Result<InstanceDiagnostics> {
    let conductance = truth
        .groups()
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| conductance(a, g))
        .collect::<Result<Vec<_>>>()?;
    let delta_lb = conductance
        .iter()
        .map(|c| c.value * c.value / 2.0)
        .fold(f64::INFINITY, f64::min);
    let aq = assumption_quantities(a, truth)?;
    let sep = spectral_separation(a, truth.k(), truth)?;
    Ok(InstanceDiagnostics {
        conductance,
        delta_lb,
        eps1: aq.eps1,
        eps2: aq.eps2,
        c_row: aq.c_row,
        d_h: sep.d_h,
        d_l: sep.d_l,
        beta: sep.beta,
        stop_ratio: sep.stop_ratio,
        eigenvalues: sep.eigenvalues,
    })
}
