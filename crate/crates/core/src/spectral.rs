//! Exact spectral clustering of sequences from a pairwise distance matrix.
//!
//! distances → affinity `A` → `L = D^{-1/2} A D^{-1/2}` → top-K eigenvectors `Z`
//! → unit rows `Y` → K-Means on the rows of `Y`.

use crate::clustering::Clustering;
use crate::error::{invalid, Error, Result};
use crate::kmeans::kmeans;
use nalgebra::{DMatrix, SymmetricEigen};

/// Rows of `Z` shorter than this are treated as degenerate.
pub const MIN_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    matrix: DMatrix<f64>,
    sigma_a: f64,
}

impl AffinityMatrix {
    /// Wrap an externally built affinity, checking symmetry, the zero diagonal
    /// and nonnegativity.
    pub fn from_matrix(matrix: DMatrix<f64>, sigma_a: f64) -> Result<Self> {
        let m = matrix.nrows();
        if matrix.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: matrix.ncols(),
            });
        }
        for i in 0..m {
            if matrix[(i, i)] != 0.0 {
                return Err(invalid("affinity", format!("nonzero diagonal at {i}")));
            }
            for j in 0..m {
                let v = matrix[(i, j)];
                if !(v >= 0.0) || v != matrix[(j, i)] {
                    return Err(invalid(
                        "affinity",
                        format!("entry ({i}, {j}) not symmetric nonnegative"),
                    ));
                }
            }
        }
        Ok(Self { matrix, sigma_a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// Top-K eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `M × K`, orthonormal columns.
    pub z: DMatrix<f64>,
    /// `M × K`, unit rows.
    pub y: DMatrix<f64>,
}

#[inline]
pub(crate) fn affinity_entry(d: f64, sigma_a: f64) -> f64 {
    let r = d / sigma_a;
    (-0.5 * r * r).exp()
}

/// `A_ij = exp(−d_ij² / 2σ_a²)` off the diagonal, zero on it.
pub fn build_affinity(distances: &DMatrix<f64>, sigma_a: f64) -> Result<AffinityMatrix> {
    if !(sigma_a > 0.0 && sigma_a.is_finite()) {
        return Err(invalid(
            "sigma_a",
            format!("must be positive, got {sigma_a}"),
        ));
    }
    let m = distances.nrows();
    if distances.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: distances.ncols(),
        });
    }
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = affinity_entry(distances[(i, j)], sigma_a);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(AffinityMatrix { matrix: a, sigma_a })
}

/// Row sums of a square matrix.
pub fn degrees(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows()).map(|i| a.row(i).iter().sum()).collect()
}

/// `D^{-1/2} A D^{-1/2}` for a raw affinity matrix.
pub fn normalize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let deg = degrees(a);
    if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Internal(format!("degree of row {i} is {}", deg[i])));
    }
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let m = a.nrows();
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = a[(i, j)] * inv[i] * inv[j];
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
        l[(i, i)] = a[(i, i)] * inv[i] * inv[i];
    }
    Ok(l)
}

pub fn build_normalized(a: &AffinityMatrix) -> Result<DMatrix<f64>> {
    if a.m() < 2 {
        return Err(invalid("M", "need at least two sequences"));
    }
    normalize(&a.matrix)
}

/// Flip each column so its largest-magnitude entry is positive (first such
/// entry on exact ties).
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for c in 0..v.ncols() {
        let mut best = 0;
        for r in 1..v.nrows() {
            if v[(r, c)].abs() > v[(best, c)].abs() {
                best = r;
            }
        }
        if v[(best, c)] < 0.0 {
            v.column_mut(c).neg_mut();
        }
    }
}

/// Full eigendecomposition, eigenvalues descending, signs fixed.
pub fn dense_eigen(l: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(l.clone());
    let n = l.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal eigenvalues keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut vectors);
    (values, vectors)
}

/// Eigenpairs of the `k` largest eigenvalues of a symmetric matrix.
pub fn top_k_eigen(l: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = l.nrows();
    if k == 0 || k > m {
        return Err(invalid("K", format!("must lie in [1, {m}], got {k}")));
    }
    let (values, vectors) = dense_eigen(l);
    Ok((values[..k].to_vec(), vectors.columns(0, k).into_owned()))
}

/// Normalize each row of `Z` to unit length.
pub fn spectral_points(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut y = z.clone();
    for i in 0..z.nrows() {
        let norm = z.row(i).norm();
        if norm < MIN_ROW_NORM {
            return Err(Error::DegenerateRow { row: i, norm });
        }
        y.row_mut(i).unscale_mut(norm);
    }
    Ok(y)
}

/// Embedding and K-Means partition of an already normalized matrix.
pub fn cluster_normalized(
    l: &DMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<(Clustering, SpectralEmbedding)> {
    let (eigenvalues, z) = top_k_eigen(l, k)?;
    cluster_eigvecs(eigenvalues, z, seed)
}

/// Finish the pipeline from a given top-K eigenbasis.
pub fn cluster_eigvecs(
    eigenvalues: Vec<f64>,
    z: DMatrix<f64>,
    seed: u64,
) -> Result<(Clustering, SpectralEmbedding)> {
    let y = spectral_points(&z)?;
    let clustering = kmeans(&y, z.ncols(), seed)?;
    Ok((clustering, SpectralEmbedding { eigenvalues, z, y }))
}

/// The full SPEC pipeline on a distance matrix.
pub fn spec_cluster(
    distances: &DMatrix<f64>,
    k: usize,
    sigma_a: f64,
    seed: u64,
) -> Result<(Clustering, SpectralEmbedding)> {
    let a = build_affinity(distances, sigma_a)?;
    let l = build_normalized(&a)?;
    cluster_normalized(&l, k, seed)
}
