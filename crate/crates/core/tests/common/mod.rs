use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{TestCaseError, TestRunner};
use seqspec::bench::{BenchRow, BenchSummary};
use seqspec::datagen::gen_block_instance;
use seqspec::incremental::{incremental_update, lagrange_delta, IAConfig};
use seqspec::spectral::{build_affinity, build_normalized, dense_eigen, spec_cluster};
use seqspec::stream::ReplayStream;
use seqspec::{
    run_ia_seq_spec, run_seq_spec, Clustering, KernelConfig, PairwiseDistanceState, SeqConfig,
};
use std::collections::BTreeMap;

pub const CASES: u32 = 1000;

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

/// `(m, dim, t, samples[t][m][dim])`.
fn sample_block() -> impl Strategy<Value = (usize, usize, Vec<Vec<Vec<f64>>>)> {
    (2usize..6, 1usize..4, 1usize..7).prop_flat_map(|(m, dim, t)| {
        (
            Just(m),
            Just(dim),
            prop::collection::vec(
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), m),
                t,
            ),
        )
    })
}

fn distances(m: usize, dim: usize, steps: &[Vec<Vec<f64>>], bw: f64) -> DMatrix<f64> {
    let mut st = PairwiseDistanceState::new(m, dim, KernelConfig::gaussian(bw).unwrap()).unwrap();
    for s in steps {
        st.update(s).unwrap();
    }
    DMatrix::from_fn(m, m, |i, j| st.distance(i, j))
}

/// Symmetric, nonnegative, zero-diagonal `m × m`.
fn affinity(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(0.01f64..1.0, m * m).prop_map(move |v| {
        DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                0.0
            } else {
                v[i.min(j) * m + i.max(j)]
            }
        })
    })
}

fn symmetric(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, m * m)
        .prop_map(move |v| DMatrix::from_fn(m, m, |i, j| v[i.min(j) * m + i.max(j)]))
}

fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    (v.transpose() * v - DMatrix::identity(v.ncols(), v.ncols())).amax()
}

fn permutation(m: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..m).collect::<Vec<_>>()).prop_shuffle()
}

fn run<S: Strategy>(
    strategy: &S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    TestRunner::new(cfg())
        .run(strategy, test)
        .map_err(|e| e.to_string())
}

pub fn mmd_matrix_symmetric_zero_diagonal() -> Result<(), String> {
    run(&(sample_block(), 0.2f64..3.0), |((m, dim, steps), bw)| {
        let d = distances(m, dim, &steps, bw);
        for i in 0..m {
            prop_assert_eq!(d[(i, i)], 0.0);
            for j in 0..m {
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
                prop_assert!(d[(i, j)] >= 0.0);
            }
        }
        Ok(())
    })
}

pub fn mmd_permutation_equivariant() -> Result<(), String> {
    run(
        &sample_block().prop_flat_map(|(m, dim, s)| (Just(m), Just(dim), Just(s), permutation(m))),
        |(m, dim, steps, perm)| {
            let d = distances(m, dim, &steps, 1.0);
            let permuted: Vec<Vec<Vec<f64>>> = steps
                .iter()
                .map(|s| perm.iter().map(|&p| s[p].clone()).collect())
                .collect();
            let dp = distances(m, dim, &permuted, 1.0);
            for i in 0..m {
                for j in 0..m {
                    prop_assert!((dp[(i, j)] - d[(perm[i], perm[j])]).abs() <= 1e-12);
                }
            }
            Ok(())
        },
    )
}

pub fn affinity_and_normalized_symmetric() -> Result<(), String> {
    run(&(2usize..9, any::<u64>()), |(m, seed)| {
        let d = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                0.0
            } else {
                ((i.min(j) * 31 + i.max(j) * 17) as u64 ^ seed) as f64 % 7.0 / 3.0
            }
        });
        let a = build_affinity(&d, 1.0).unwrap();
        let l = build_normalized(&a).unwrap();
        prop_assert_eq!(a.matrix(), &a.matrix().transpose());
        prop_assert!((&l - l.transpose()).amax() <= 1e-15);
        for i in 0..m {
            prop_assert_eq!(a.matrix()[(i, i)], 0.0);
        }
        Ok(())
    })
}

pub fn dense_eigen_orthonormal_and_sorted() -> Result<(), String> {
    run(&(2usize..10).prop_flat_map(symmetric), |a| {
        let (vals, vecs) = dense_eigen(&a);
        prop_assert!(orthonormality_defect(&vecs) <= 1e-10);
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let recon =
            &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        let err = (recon - &a).amax();
        prop_assert!(err <= 1e-8, "reconstruction error {err:e}");
        Ok(())
    })
}

pub fn incremental_update_orthonormal() -> Result<(), String> {
    run(
        &(4usize..10).prop_flat_map(|m| {
            (
                symmetric(m),
                symmetric(m),
                prop::sample::subsequence((0..m).collect::<Vec<_>>(), 1..=3.min(m)),
                1usize..=m,
            )
        }),
        |(a, u_raw, s, l)| {
            let m = a.nrows();
            let (vals, vecs) = dense_eigen(&a);
            let q = vecs.columns(0, l).into_owned();
            let mut u = DMatrix::zeros(m, m);
            for &i in &s {
                for j in 0..m {
                    u[(i, j)] = u_raw[(i, j)];
                    u[(j, i)] = u_raw[(i, j)];
                }
            }
            let upd = incremental_update(&q, &vals[..l], &u, &s).unwrap();
            prop_assert!(orthonormality_defect(&upd.vectors) <= 1e-9);
            prop_assert!(upd.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(upd.values.len(), upd.vectors.ncols());
            Ok(())
        },
    )
}

pub fn lagrange_delta_structured_zero() -> Result<(), String> {
    run(
        &(3usize..9).prop_flat_map(|m| {
            (
                affinity(m),
                prop::sample::subsequence((0..m).collect::<Vec<_>>(), 2..=3.min(m)),
                prop::collection::vec(0.01f64..1.0, 9),
            )
        }),
        |(a, s, block)| {
            let m = a.nrows();
            let mut a_new = a.clone();
            for (x, &i) in s.iter().enumerate() {
                for (y, &j) in s.iter().enumerate() {
                    if i != j {
                        a_new[(i, j)] = block[x.min(y) * 3 + x.max(y)];
                    }
                }
            }
            let u = lagrange_delta(&a_new, &a, Some(&s)).unwrap();
            for i in (0..m).filter(|i| !s.contains(i)) {
                for j in (0..m).filter(|j| !s.contains(j)) {
                    prop_assert!(u[(i, j)].abs() <= 1e-12);
                }
            }
            Ok(())
        },
    )
}

pub fn spec_partition_permutation_equivariant() -> Result<(), String> {
    run(
        &(2usize..4, 2usize..4).prop_flat_map(|(a, b)| {
            (
                Just(vec![a, b]),
                permutation(a + b),
                prop::collection::vec(0.0f64..0.05, (a + b) * (a + b)),
                any::<u64>(),
            )
        }),
        |(sizes, perm, noise, seed)| {
            let m: usize = sizes.iter().sum();
            let labels: Vec<usize> = (0..m).map(|i| usize::from(i >= sizes[0])).collect();
            let d = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    0.0
                } else if labels[i] == labels[j] {
                    noise[i.min(j) * m + i.max(j)]
                } else {
                    3.0
                }
            });
            let dp = DMatrix::from_fn(m, m, |i, j| d[(perm[i], perm[j])]);
            let (c, _) = spec_cluster(&d, 2, 1.0, seed).unwrap();
            let (cp, _) = spec_cluster(&dp, 2, 1.0, seed).unwrap();
            let pulled: Vec<usize> = {
                let mut v = vec![0; m];
                for i in 0..m {
                    v[perm[i]] = cp.label(i);
                }
                v
            };
            prop_assert!(c.same_partition(&Clustering::new(pulled, 2).unwrap()));
            prop_assert!(c.same_partition(&Clustering::new(labels, 2).unwrap()));
            Ok(())
        },
    )
}

pub fn runs_are_deterministic() -> Result<(), String> {
    run(
        &(any::<u64>(), 1.0f64..2.5, 0.5f64..3.0),
        |(seed, c, sep)| {
            let inst = gen_block_instance(&[2, 2], sep, 1.0, 1).unwrap();
            let mut cfg = SeqConfig::new(2, c);
            cfg.seed = seed;
            let a = run_seq_spec(&mut inst.streams(seed), &cfg).unwrap();
            let b = run_seq_spec(&mut inst.streams(seed), &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            let ia = IAConfig {
                p: 2,
                ..IAConfig::default()
            };
            let x = run_ia_seq_spec(&mut inst.streams(seed), &cfg, &ia).unwrap();
            let y = run_ia_seq_spec(&mut inst.streams(seed), &cfg, &ia).unwrap();
            prop_assert_eq!(x, y);
            Ok(())
        },
    )
}

pub fn replayed_streams_match_live() -> Result<(), String> {
    run(&(any::<u64>(), 1.0f64..2.0), |(seed, c)| {
        let inst = gen_block_instance(&[2, 1], 2.0, 0.5, 2).unwrap();
        let mut cfg = SeqConfig::new(2, c);
        cfg.seed = seed;
        let live = run_seq_spec(&mut inst.streams(seed), &cfg).unwrap();
        let mut src = inst.streams(seed);
        let mut replay: Vec<ReplayStream> = src
            .iter_mut()
            .map(|s| ReplayStream::new((0..live.n).map(|_| s.next_sample().unwrap()).collect(), 2))
            .collect();
        prop_assert_eq!(run_seq_spec(&mut replay, &cfg).unwrap(), live);
        Ok(())
    })
}

pub fn bench_emit_round_trip() -> Result<(), String> {
    run(
        &(
            prop::collection::vec(
                (
                    -1e6f64..1e6,
                    1usize..100_000,
                    0.0f64..1e7,
                    prop::option::of(-20.0f64..0.0),
                    0usize..1000,
                    0.0f64..1e9,
                    0usize..50,
                    prop::option::of(1usize..10_000),
                ),
                0..6,
            ),
            prop::collection::btree_map("[a-z_]{1,8}", "[A-Za-z0-9.*^()+_-]{0,12}", 0..5),
        ),
        |(rows, meta)| {
            let rows: Vec<BenchRow> = rows
                .into_iter()
                .map(
                    |(c, trials, mean_n, lnp, errors, ops, capped, min_n)| BenchRow {
                        c,
                        trials,
                        mean_n,
                        ln_error_prob: lnp.unwrap_or(f64::NEG_INFINITY),
                        error_count: errors,
                        mean_eigen_ops: ops,
                        capped,
                        ln_error_upper: (3.0 / trials as f64).ln(),
                        min_n,
                    },
                )
                .collect();
            let s = BenchSummary {
                metadata: meta.into_iter().collect::<BTreeMap<_, _>>(),
                rows,
            };
            prop_assert_eq!(&BenchSummary::from_csv(&s.to_csv()).unwrap(), &s);
            prop_assert_eq!(&BenchSummary::from_json(&s.to_json()).unwrap(), &s);
            prop_assert_eq!(
                s.to_csv(),
                BenchSummary::from_csv(&s.to_csv()).unwrap().to_csv()
            );
            Ok(())
        },
    )
}

pub const ALL: &[(&str, fn() -> Result<(), String>)] = &[
    (
        "mmd_matrix_symmetric_zero_diagonal",
        mmd_matrix_symmetric_zero_diagonal,
    ),
    ("mmd_permutation_equivariant", mmd_permutation_equivariant),
    (
        "affinity_and_normalized_symmetric",
        affinity_and_normalized_symmetric,
    ),
    (
        "dense_eigen_orthonormal_and_sorted",
        dense_eigen_orthonormal_and_sorted,
    ),
    (
        "incremental_update_orthonormal",
        incremental_update_orthonormal,
    ),
    (
        "lagrange_delta_structured_zero",
        lagrange_delta_structured_zero,
    ),
    (
        "spec_partition_permutation_equivariant",
        spec_partition_permutation_equivariant,
    ),
    ("runs_are_deterministic", runs_are_deterministic),
    ("replayed_streams_match_live", replayed_streams_match_live),
    ("bench_emit_round_trip", bench_emit_round_trip),
];
