//! Gaussian kernel evaluation and streaming pairwise MMD estimates.
//!
//! Every sequence contributes one sample per step. After `t` steps the
//! state holds, for each unordered pair `(i, j)`, the biased estimate
//!
//! ```text
//! d̂_ij(t)² = (1/t²) Σ_{l,m ≤ t} [ k(x_l, x_m) + k(y_l, y_m) − 2 k(x_l, y_m) ]
//! ```
//!
//! maintained recursively: the accumulator `t² d̂_ij(t)²` grows by the new
//! row and column of the three Gram blocks when sample `t + 1` arrives.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Gaussian kernel `k(x, y) = exp(−‖x − y‖² / 2σ_g²)` with its supremum `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub bound: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: 1.0,
            bound: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn new(bandwidth: f64, bound: f64) -> Result<Self> {
        let cfg = Self { bandwidth, bound };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(bandwidth, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(invalid(
                "sigma_g",
                format!("must be positive, got {}", self.bandwidth),
            ));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(invalid(
                "bound",
                format!("must be positive, got {}", self.bound),
            ));
        }
        Ok(())
    }

    #[inline]
    fn neg_half_inv_var(&self) -> f64 {
        -0.5 / (self.bandwidth * self.bandwidth)
    }

    /// Kernel on two slices of equal length, without the dimension check.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (sq * self.neg_half_inv_var()).exp()
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(cfg.eval_unchecked(x, y))
}

/// `h(x₁, x₂, y₁, y₂) = k(x₁, x₂) + k(y₁, y₂) − 2k(x₁, y₂)`.
pub fn h_combine(
    x1: &[f64],
    x2: &[f64],
    y1: &[f64],
    y2: &[f64],
    cfg: &KernelConfig,
) -> Result<f64> {
    let d = x1.len();
    for v in [x2, y1, y2] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    Ok(cfg.eval_unchecked(x1, x2) + cfg.eval_unchecked(y1, y2) - 2.0 * cfg.eval_unchecked(x1, y2))
}

/// Population MMD between `N(μ₁, σ²I)` and `N(μ₂, σ²I)` under the Gaussian kernel.
///
/// Uses `E k(x, y) = (σ_g² / (σ_g² + 2σ²))^{d/2} exp(−‖μ₁ − μ₂‖² / 2(σ_g² + 2σ²))`.
pub fn gaussian_mmd_closed_form(
    mu1: &[f64],
    mu2: &[f64],
    variance: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    if mu1.len() != mu2.len() {
        return Err(Error::DimensionMismatch {
            expected: mu1.len(),
            got: mu2.len(),
        });
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(invalid(
            "variance",
            format!("must be positive, got {variance}"),
        ));
    }
    let within = gaussian_kernel_mean(mu1, variance, mu1, variance, cfg);
    let cross = gaussian_kernel_mean(mu1, variance, mu2, variance, cfg);
    Ok((2.0 * within - 2.0 * cross).max(0.0).sqrt())
}

/// `E k(x, y)` for independent `x ~ N(μ₁, v₁I)`, `y ~ N(μ₂, v₂I)`; zero
/// variance means a point mass.
pub(crate) fn gaussian_kernel_mean(
    mu1: &[f64],
    v1: f64,
    mu2: &[f64],
    v2: f64,
    cfg: &KernelConfig,
) -> f64 {
    let bw2 = cfg.bandwidth * cfg.bandwidth;
    let spread = bw2 + v1 + v2;
    let scale = (bw2 / spread).powf(mu1.len() as f64 / 2.0);
    let sq: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    scale * (-sq / (2.0 * spread)).exp()
}

/// Population MMD between two isotropic Gaussians with possibly different
/// variances (either may be zero).
pub fn gaussian_mmd(mu1: &[f64], v1: f64, mu2: &[f64], v2: f64, cfg: &KernelConfig) -> f64 {
    let sq = gaussian_kernel_mean(mu1, v1, mu1, v1, cfg)
        + gaussian_kernel_mean(mu2, v2, mu2, v2, cfg)
        - 2.0 * gaussian_kernel_mean(mu1, v1, mu2, v2, cfg);
    sq.max(0.0).sqrt()
}

/// Running MMD estimates for all `M(M−1)/2` sequence pairs.
///
/// Full sample histories are retained: the recursive update pairs the newest
/// sample of each sequence with every earlier sample of every other sequence.
#[derive(Debug, Clone)]
pub struct PairwiseDistanceState {
    m: usize,
    dim: usize,
    t: usize,
    kernel: KernelConfig,
    history: Vec<Vec<f64>>,
    // t² d̂², packed upper triangle (i < j)
    acc: Vec<f64>,
    // row-major M×M, symmetric, zero diagonal
    d_hat: Vec<f64>,
    gram: Vec<f64>,
}

impl PairwiseDistanceState {
    pub fn new(m: usize, dim: usize, kernel: KernelConfig) -> Result<Self> {
        kernel.validate()?;
        if m < 2 {
            return Err(invalid("M", "need at least two sequences"));
        }
        if dim == 0 {
            return Err(invalid("dim", "samples must have at least one coordinate"));
        }
        Ok(Self {
            m,
            dim,
            t: 0,
            kernel,
            history: vec![Vec::new(); m],
            acc: vec![0.0; m * (m - 1) / 2],
            d_hat: vec![0.0; m * m],
            gram: vec![0.0; m * m],
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Samples absorbed per sequence.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.d_hat[i * self.m + j]
    }

    /// Row-major `M × M` matrix of current estimates.
    pub fn distances(&self) -> &[f64] {
        &self.d_hat
    }

    /// The `l`-th sample (0-based) of sequence `i`.
    pub fn sample(&self, i: usize, l: usize) -> &[f64] {
        &self.history[i][l * self.dim..(l + 1) * self.dim]
    }

    #[inline]
    fn packed(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * (2 * self.m - i - 1) / 2 + (j - i - 1)
    }

    /// Absorb one new sample per sequence and advance `t` by one.
    pub fn update<S: AsRef<[f64]>>(&mut self, samples: &[S]) -> Result<()> {
        if samples.len() != self.m {
            return Err(Error::SampleCount {
                expected: self.m,
                got: samples.len(),
            });
        }
        for s in samples {
            if s.as_ref().len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: s.as_ref().len(),
                });
            }
        }
        for (h, s) in self.history.iter_mut().zip(samples) {
            h.extend_from_slice(s.as_ref());
        }
        let t = self.t;
        let new_t = t + 1;
        let (m, dim) = (self.m, self.dim);

        // gram[i][j] = Σ_{l ≤ t+1} k(x_{t+1}^{(i)}, x_l^{(j)})
        let f = self.kernel.neg_half_inv_var();
        for i in 0..m {
            let xi = samples[i].as_ref();
            for j in 0..m {
                let hist = &self.history[j];
                self.gram[i * m + j] = if dim == 2 {
                    let (a0, a1) = (xi[0], xi[1]);
                    hist.chunks_exact(2)
                        .map(|y| {
                            let (d0, d1) = (a0 - y[0], a1 - y[1]);
                            ((d0 * d0 + d1 * d1) * f).exp()
                        })
                        .sum()
                } else {
                    hist.chunks_exact(dim)
                        .map(|y| self.kernel.eval_unchecked(xi, y))
                        .sum()
                };
            }
        }

        let self_k: Vec<f64> = samples
            .iter()
            .map(|s| self.kernel.eval_unchecked(s.as_ref(), s.as_ref()))
            .collect();
        let denom = new_t as f64;
        for i in 0..m {
            let within_i = 2.0 * self.gram[i * m + i] - self_k[i];
            for j in (i + 1)..m {
                let within_j = 2.0 * self.gram[j * m + j] - self_k[j];
                let newest = self
                    .kernel
                    .eval_unchecked(samples[i].as_ref(), samples[j].as_ref());
                let cross = self.gram[i * m + j] + self.gram[j * m + i] - newest;
                let p = self.packed(i, j);
                self.acc[p] += within_i + within_j - 2.0 * cross;
                let d = self.acc[p].max(0.0).sqrt() / denom;
                self.d_hat[i * m + j] = d;
                self.d_hat[j * m + i] = d;
            }
        }
        self.t = new_t;
        Ok(())
    }
}

/// Functional form of [`PairwiseDistanceState::update`].
pub fn mmd_update<S: AsRef<[f64]>>(
    mut state: PairwiseDistanceState,
    new_samples: &[S],
) -> Result<PairwiseDistanceState> {
    state.update(new_samples)?;
    Ok(state)
}
