//! IA-SEQ-SPEC: approximate eigen-tracking of the normalized affinity.
//!
//! Each step only the `p × p` block of the affinity change with the largest
//! absolute mass is applied to a modified affinity `Ã`. The resulting change
//! `U` of the normalized matrix is zero outside the rows and columns of the
//! block, so the top eigenpairs can be updated from a rank-`l` approximation
//! of the previous matrix by a Rayleigh–Ritz step in a small subspace. An
//! exact decomposition is taken every `R` steps and before any stop.

use crate::error::{invalid, Error, Result};
use crate::mmd::PairwiseDistanceState;
use crate::seeds::step_seed;
use crate::sequential::{
    dense_cost, distance_matrix, drive, spectral_decision, stopping_rule, threshold, SeqConfig,
    SeqResult, StepDecision, StepRecord,
};
use crate::spectral::{build_affinity, dense_eigen, fix_signs, normalize};
use crate::stream::SampleStream;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Tolerance for the structural zero of `U` outside the touched block.
pub const STRUCTURAL_ZERO_TOL: f64 = 1e-12;
/// Directions shorter than this after orthogonalization are dropped.
const BASIS_DROP_TOL: f64 = 1e-10;
/// Residual of the projected update above which the step falls back to an
/// exact decomposition.
pub const PROJECTION_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockSearch {
    /// Best pair by exhaustive search, then greedy extension to `p` indices.
    #[default]
    ExhaustivePairs,
    /// The `p` indices with the largest absolute row sums.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IAConfig {
    pub p: usize,
    pub q: f64,
    pub r: usize,
    pub block_search: BlockSearch,
}

impl Default for IAConfig {
    fn default() -> Self {
        Self {
            p: 4,
            q: 0.7,
            r: 50,
            block_search: BlockSearch::ExhaustivePairs,
        }
    }
}

impl IAConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.p < 2 || self.p > m {
            return Err(invalid(
                "p",
                format!("must lie in [2, {m}], got {}", self.p),
            ));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(invalid("q", format!("must lie in (0, 1], got {}", self.q)));
        }
        if self.r == 0 {
            return Err(invalid("R", "must be at least 1"));
        }
        Ok(())
    }
}

fn block_mass(delta: &DMatrix<f64>, s: &[usize]) -> f64 {
    s.iter()
        .map(|&i| s.iter().map(|&j| delta[(i, j)].abs()).sum::<f64>())
        .sum()
}

/// Index set `S`, `|S| = p`, whose symmetric block of `Δ` has large absolute sum.
pub fn select_block(delta: &DMatrix<f64>, p: usize, strategy: BlockSearch) -> Result<Vec<usize>> {
    let m = delta.nrows();
    if p == 0 || p > m {
        return Err(invalid("p", format!("must lie in [1, {m}], got {p}")));
    }
    if p == m {
        return Ok((0..m).collect());
    }
    let mut chosen = match strategy {
        BlockSearch::Greedy => {
            let sums: Vec<f64> = (0..m)
                .map(|i| delta.row(i).iter().map(|v| v.abs()).sum())
                .collect();
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
            idx.truncate(p);
            idx
        }
        BlockSearch::ExhaustivePairs => {
            if p == 1 {
                let best = (0..m).fold(0, |b, i| {
                    if delta[(i, i)].abs() > delta[(b, b)].abs() {
                        i
                    } else {
                        b
                    }
                });
                vec![best]
            } else {
                let mut best = (0, 1);
                let mut best_mass = block_mass(delta, &[0, 1]);
                for i in 0..m {
                    for j in (i + 1)..m {
                        let mass = block_mass(delta, &[i, j]);
                        if mass > best_mass {
                            best_mass = mass;
                            best = (i, j);
                        }
                    }
                }
                let mut s = vec![best.0, best.1];
                while s.len() < p {
                    let mut pick = None;
                    let mut gain_best = f64::NEG_INFINITY;
                    for c in 0..m {
                        if s.contains(&c) {
                            continue;
                        }
                        let gain = delta[(c, c)].abs()
                            + s.iter()
                                .map(|&j| delta[(c, j)].abs() + delta[(j, c)].abs())
                                .sum::<f64>();
                        if gain > gain_best {
                            gain_best = gain;
                            pick = Some(c);
                        }
                    }
                    s.push(pick.expect("p < M leaves a candidate"));
                }
                s
            }
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// `Δ` restricted to `S × S`, zero elsewhere.
pub fn masked_delta(delta: &DMatrix<f64>, s: &[usize]) -> DMatrix<f64> {
    let m = delta.nrows();
    let mut out = DMatrix::zeros(m, m);
    for &i in s {
        for &j in s {
            out[(i, j)] = delta[(i, j)];
        }
    }
    out
}

/// `U = L(Ã_new) − L(Ã_old)`; with `touched = Some(S)` the entries outside
/// the rows and columns of `S` must vanish.
pub fn lagrange_delta(
    a_new: &DMatrix<f64>,
    a_old: &DMatrix<f64>,
    touched: Option<&[usize]>,
) -> Result<DMatrix<f64>> {
    let u = normalize(a_new)? - normalize(a_old)?;
    if let Some(s) = touched {
        check_structural_zero(&u, s)?;
    }
    Ok(u)
}

/// Smallest `l` whose leading eigenvalues carry at least a fraction `q` of the
/// total squared spectrum.
pub fn select_rank(eigenvalues: &[f64], q: f64) -> usize {
    let total: f64 = eigenvalues.iter().map(|v| v * v).sum();
    select_rank_with_total(eigenvalues, total, q)
}

/// As [`select_rank`] when only a leading part of the spectrum is known and
/// the total squared spectrum (`‖L‖_F²`) is supplied separately.
pub fn select_rank_with_total(leading: &[f64], total: f64, q: f64) -> usize {
    if leading.is_empty() {
        return 1;
    }
    if !(total > 0.0) {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in leading.iter().enumerate() {
        acc += v * v;
        if acc / total >= q {
            return i + 1;
        }
    }
    leading.len()
}

/// Cost-model charge of one incremental update: `(l² + p²)(l + p) + M p (l + p)`.
pub fn incremental_cost(m: usize, l: usize, p: usize) -> u64 {
    let (m, l, p) = (m as u64, l as u64, p as u64);
    (l * l + p * p) * (l + p) + m * p * (l + p)
}

#[derive(Debug, Clone)]
pub struct EigenUpdate {
    /// Descending.
    pub values: Vec<f64>,
    /// `M × b`, orthonormal columns; `b` is the subspace dimension.
    pub vectors: DMatrix<f64>,
    pub ops: u64,
    /// Norm of the part of the update not captured by the subspace.
    pub residual: f64,
}

fn push_direction(basis: &mut Vec<DVector<f64>>, mut v: DVector<f64>) {
    // two passes of classical Gram–Schmidt
    for _ in 0..2 {
        for b in basis.iter() {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
    }
    let n = v.norm();
    if n > BASIS_DROP_TOL {
        basis.push(v / n);
    }
}

/// Eigendecomposition of `Q Ω Qᵀ + U` for orthonormal `Q` (`M × l`) and an
/// update `U` supported on the rows and columns of `touched`.
///
/// The Ritz subspace is spanned by `Q`, the canonical vectors of `touched` and
/// the columns `U e_s`, `s ∈ touched`, which together contain the range of
/// `Q Ω Qᵀ + U`; dependent directions are dropped.
pub fn incremental_update(
    q: &DMatrix<f64>,
    omega: &[f64],
    u: &DMatrix<f64>,
    touched: &[usize],
) -> Result<EigenUpdate> {
    let m = q.nrows();
    let l = q.ncols();
    if omega.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: omega.len(),
        });
    }
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: u.nrows(),
        });
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(l + 2 * touched.len());
    for c in 0..l {
        basis.push(q.column(c).into_owned());
    }
    for &s in touched {
        let mut e = DVector::zeros(m);
        e[s] = 1.0;
        push_direction(&mut basis, e);
    }
    for &s in touched {
        push_direction(&mut basis, u.column(s).into_owned());
    }
    let h = DMatrix::from_columns(&basis);
    let b = h.ncols();

    // Hᵀ Q Ω Qᵀ H = diag(Ω, 0) because H starts with the columns of Q.
    let uh = u * &h;
    let mut small = h.transpose() * &uh;
    for (i, w) in omega.iter().enumerate() {
        small[(i, i)] += w;
    }
    small = (&small + small.transpose()) * 0.5;

    // part of U H outside span(H)
    let residual = (&uh - &h * (h.transpose() * &uh)).norm();

    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut w = DMatrix::zeros(b, b);
    for (dst, &src) in order.iter().enumerate() {
        w.set_column(dst, &eig.eigenvectors.column(src));
    }
    let mut vectors = h * w;
    fix_signs(&mut vectors);
    Ok(EigenUpdate {
        values,
        vectors,
        ops: incremental_cost(m, l, touched.len()),
        residual,
    })
}

/// Modified affinity, its normalized matrix and the tracked eigenpairs.
#[derive(Debug, Clone)]
pub struct IncrementalEigenState {
    pub a_tilde: DMatrix<f64>,
    pub l_prev: DMatrix<f64>,
    /// Descending eigenvalues currently tracked.
    pub values: Vec<f64>,
    /// Matching orthonormal eigenvectors (`M × values.len()`).
    pub vectors: DMatrix<f64>,
    /// Rank used at the last incremental update.
    pub rank: Option<usize>,
    pub steps_since_refresh: usize,
    pub op_count: u64,
}

impl IncrementalEigenState {
    /// Exact state for affinity `a`.
    pub fn exact(a: DMatrix<f64>) -> Result<Self> {
        let l = normalize(&a)?;
        let (values, vectors) = dense_eigen(&l);
        Ok(Self {
            a_tilde: a,
            l_prev: l,
            values,
            vectors,
            rank: None,
            steps_since_refresh: 0,
            op_count: 0,
        })
    }

    fn reset_to(&mut self, a: DMatrix<f64>) -> Result<()> {
        let ops = self.op_count;
        *self = Self::exact(a)?;
        self.op_count = ops + dense_cost(self.a_tilde.nrows());
        Ok(())
    }

    /// Apply one masked block update towards `a_hat` and refresh the
    /// tracked eigenpairs. Returns `(rank, ops)`.
    pub fn advance(
        &mut self,
        a_hat: &DMatrix<f64>,
        ia: &IAConfig,
        k: usize,
    ) -> Result<(usize, u64)> {
        let m = a_hat.nrows();
        let delta = a_hat - &self.a_tilde;
        let s = select_block(&delta, ia.p, ia.block_search)?;
        let mut a_new = self.a_tilde.clone();
        for &i in &s {
            for &j in &s {
                a_new[(i, j)] = a_hat[(i, j)];
            }
        }
        let l_new = normalize(&a_new)?;
        let u = &l_new - &self.l_prev;
        check_structural_zero(&u, &s)?;

        let total = self.l_prev.norm_squared();
        let rank = select_rank_with_total(&self.values, total, ia.q)
            .max(k)
            .min(self.values.len());
        let q = self.vectors.columns(0, rank).into_owned();
        let upd = incremental_update(&q, &self.values[..rank], &u, &s)?;
        let mut ops = upd.ops;
        if upd.residual > PROJECTION_RESIDUAL_TOL || upd.values.len() < k {
            let (values, vectors) = dense_eigen(&l_new);
            self.values = values;
            self.vectors = vectors;
            ops += dense_cost(m);
        } else {
            self.values = upd.values;
            self.vectors = upd.vectors;
        }
        self.a_tilde = a_new;
        self.l_prev = l_new;
        self.rank = Some(rank);
        self.steps_since_refresh += 1;
        self.op_count += ops;
        Ok((rank, ops))
    }
}

fn check_structural_zero(u: &DMatrix<f64>, s: &[usize]) -> Result<()> {
    let m = u.nrows();
    let mut inside = vec![false; m];
    for &i in s {
        inside[i] = true;
    }
    for i in 0..m {
        if inside[i] {
            continue;
        }
        for j in 0..m {
            if !inside[j] && u[(i, j)].abs() > STRUCTURAL_ZERO_TOL {
                return Err(Error::Internal(format!(
                    "U[{i}][{j}] = {:e} outside the touched block",
                    u[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

fn is_refresh_step(t: usize, r: usize) -> bool {
    t == 1 || t % r == 0
}

pub fn run_ia_seq_spec<S: SampleStream>(
    streams: &mut [S],
    cfg: &SeqConfig,
    ia: &IAConfig,
) -> Result<SeqResult> {
    cfg.validate()?;
    ia.validate(streams.len())?;
    let k = cfg.k;
    let mut eig: Option<IncrementalEigenState> = None;
    drive(
        streams,
        k,
        cfg.kernel,
        cfg.max_t,
        cfg.keep_trace,
        |state: &PairwiseDistanceState, t| {
            let m = state.m();
            let a_hat = build_affinity(&distance_matrix(state), cfg.sigma_a)?.into_matrix();
            let seed = step_seed(cfg.seed, t);
            let thr = threshold(t, cfg.c, cfg.threshold);
            let mut ops = 0;
            let refreshed = eig.is_none() || is_refresh_step(t, ia.r);
            let mut rank = None;
            match eig.as_mut() {
                Some(st) if !refreshed => {
                    let (l, o) = st.advance(&a_hat, ia, k)?;
                    rank = Some(l);
                    ops += o;
                }
                _ => {
                    eig = Some(IncrementalEigenState::exact(a_hat.clone())?);
                    ops += dense_cost(m);
                }
            }
            let st = eig.as_mut().expect("state initialized");
            let z = st.vectors.columns(0, k).into_owned();
            let (mut clustering, mut gamma, _) =
                spectral_decision(st.values[..k].to_vec(), z, seed)?;
            let mut stop = stopping_rule(gamma, t, cfg.c, cfg.threshold);
            let mut verified = false;
            let mut exact = refreshed;
            if stop && !refreshed {
                // confirm with an exact decomposition of L̂(t)
                verified = true;
                exact = true;
                st.reset_to(a_hat)?;
                ops += dense_cost(m);
                let z = st.vectors.columns(0, k).into_owned();
                let (c2, g2, _) = spectral_decision(st.values[..k].to_vec(), z, seed)?;
                clustering = c2;
                gamma = g2;
                stop = stopping_rule(gamma, t, cfg.c, cfg.threshold);
            }
            Ok(StepDecision {
                clustering,
                statistic: gamma,
                threshold: thr,
                stop,
                record: StepRecord {
                    t,
                    gamma,
                    threshold: thr,
                    ops,
                    exact,
                    refreshed,
                    verified,
                    rank,
                },
            })
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_normalized;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affinity(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let v = rng.gen_range(0.05..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    fn random_symmetric(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let v = rng.gen_range(-1.0..1.0);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        d
    }

    // exhaustive search over all p-subsets
    fn brute_best(delta: &DMatrix<f64>, p: usize) -> f64 {
        let m = delta.nrows();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != p {
                continue;
            }
            let s: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
            best = best.max(block_mass(delta, &s));
        }
        best
    }

    #[test]
    fn block_selection_edge_cases() {
        let d = DMatrix::zeros(6, 6);
        assert_eq!(
            select_block(&d, 6, BlockSearch::ExhaustivePairs).unwrap(),
            (0..6).collect::<Vec<_>>()
        );
        assert_eq!(
            select_block(&d, 3, BlockSearch::ExhaustivePairs).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(
            select_block(&d, 3, BlockSearch::Greedy).unwrap(),
            vec![0, 1, 2]
        );
        assert!(select_block(&d, 7, BlockSearch::Greedy).is_err());
    }

    #[test]
    fn dominant_entry_picks_its_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = random_symmetric(8, &mut rng) * 0.01;
        d[(2, 6)] = 5.0;
        d[(6, 2)] = 5.0;
        assert_eq!(
            select_block(&d, 2, BlockSearch::ExhaustivePairs).unwrap(),
            vec![2, 6]
        );
        assert_eq!(block_mass(&d, &[2, 6]), brute_best(&d, 2));
    }

    #[test]
    fn pair_search_is_optimal_for_p2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d = random_symmetric(7, &mut rng);
            let s = select_block(&d, 2, BlockSearch::ExhaustivePairs).unwrap();
            assert_eq!(block_mass(&d, &s), brute_best(&d, 2));
        }
    }

    #[test]
    fn mask_keeps_only_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_symmetric(6, &mut rng);
        assert_eq!(masked_delta(&d, &(0..6).collect::<Vec<_>>()), d);
        let md = masked_delta(&d, &[1, 4]);
        assert_eq!(md.iter().filter(|v| **v != 0.0).count(), 2);
        assert_eq!(md[(1, 4)], d[(1, 4)]);
        assert_eq!(md, md.transpose());
        assert!(md.iter().zip(d.iter()).all(|(a, b)| a.abs() <= b.abs()));
    }

    #[test]
    fn lagrange_delta_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_affinity(9, &mut rng);
        assert_eq!(
            lagrange_delta(&a, &a, Some(&[0, 1])).unwrap(),
            DMatrix::zeros(9, 9)
        );
        let target = random_affinity(9, &mut rng);
        let s = [2, 5, 7];
        let a_new = &a + masked_delta(&(&target - &a), &s);
        let u = lagrange_delta(&a_new, &a, Some(&s)).unwrap();
        let want = normalize(&a_new).unwrap() - normalize(&a).unwrap();
        assert!((&u - &want).amax() <= 1e-12);
        // a dense change violates the structure for a small S
        assert!(lagrange_delta(&target, &a, Some(&s)).is_err());
        assert!(lagrange_delta(&target, &a, None).is_ok());
    }

    #[test]
    fn rank_selection() {
        assert_eq!(select_rank(&[2.0, 1.0, 1.0], 0.7), 2);
        assert_eq!(select_rank(&[2.0, 1.0, 1.0], 1.0), 3);
        assert_eq!(select_rank(&[2.0, 1.0, 1.0], 1e-9), 1);
        assert_eq!(select_rank(&[0.0, 0.0], 0.5), 1);
        assert_eq!(select_rank(&[1.0, 0.5, 0.0, 0.0], 1.0), 2);
    }

    #[test]
    fn full_rank_update_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_affinity(12, &mut rng);
        let l0 = normalize(&a).unwrap();
        let (vals, vecs) = dense_eigen(&l0);
        let target = random_affinity(12, &mut rng);
        let all: Vec<usize> = (0..12).collect();
        let u = lagrange_delta(&target, &a, None).unwrap();
        let upd = incremental_update(&vecs, &vals, &u, &all).unwrap();
        let (want, _) = dense_eigen(&(&l0 + &u));
        assert_eq!(upd.values.len(), 12);
        for (x, y) in upd.values.iter().zip(&want) {
            assert!((x - y).abs() <= 1e-8);
        }
        assert!(
            (upd.vectors.transpose() * &upd.vectors - DMatrix::identity(12, 12)).amax() < 1e-10
        );
    }

    #[test]
    fn zero_update_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_affinity(10, &mut rng);
        let (vals, vecs) = dense_eigen(&normalize(&a).unwrap());
        let l = 3;
        let q = vecs.columns(0, l).into_owned();
        let upd = incremental_update(&q, &vals[..l], &DMatrix::zeros(10, 10), &[3, 8]).unwrap();
        for c in 0..l {
            assert!((upd.values[c] - vals[c]).abs() < 1e-10);
            assert!((upd.vectors.column(c) - q.column(c)).amax() < 1e-10);
        }
    }

    #[test]
    fn low_rank_error_within_weyl_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let m = 15;
            let a = random_affinity(m, &mut rng);
            let l0 = normalize(&a).unwrap();
            let (vals, vecs) = dense_eigen(&l0);
            let rank = 2 + trial % 4;
            let target = random_affinity(m, &mut rng);
            let s = select_block(&(&target - &a), 4, BlockSearch::ExhaustivePairs).unwrap();
            let a_new = &a + masked_delta(&(&target - &a), &s);
            let u = lagrange_delta(&a_new, &a, Some(&s)).unwrap();
            let q = vecs.columns(0, rank).into_owned();
            let upd = incremental_update(&q, &vals[..rank], &u, &s).unwrap();
            let approx = &q
                * DMatrix::from_diagonal(&DVector::from_row_slice(&vals[..rank]))
                * q.transpose();
            let discarded = (&l0 - &approx).symmetric_eigenvalues().amax();
            let (exact, _) = dense_eigen(&(&l0 + &u));
            for c in 0..rank {
                assert!((upd.values[c] - exact[c]).abs() <= discarded + 1e-10);
            }
            assert!(upd.residual < 1e-10);
        }
    }

    #[test]
    fn advance_tracks_modified_affinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a0 = random_affinity(10, &mut rng);
        let mut st = IncrementalEigenState::exact(a0).unwrap();
        let ia = IAConfig {
            p: 10,
            q: 1.0,
            r: 5,
            block_search: BlockSearch::ExhaustivePairs,
        };
        let target = random_affinity(10, &mut rng);
        st.advance(&target, &ia, 2).unwrap();
        assert_eq!(st.a_tilde, target);
        let l =
            build_normalized(&crate::spectral::AffinityMatrix::from_matrix(target, 1.0).unwrap())
                .unwrap();
        let (want, _) = dense_eigen(&l);
        for (x, y) in st.values.iter().zip(&want) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
