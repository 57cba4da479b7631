use faer::Mat;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qtreeff::frustration::{self, RowReductionSet};
use qtreeff::groundspace::{
    self, build_constraint, kernel_basis, leaf_level, materialize_dense, Budget, GrowOptions, KernelPath, Matrix,
};
use qtreeff::linalg::{self, TolPolicy};
use qtreeff::oracle::{self, OracleConfig};
use qtreeff::projectors::{pair_index, sample_haar_frame, Frame};
use qtreeff::recursion;
use qtreeff::{GammaLevel, Mode, TreeShape};

/// Independent entrywise construction of the dense constraint matrix:
/// row `(p, l, beta, rest)`, column `(i_parent, alpha^0..alpha^{k-1})`.
fn dense_by_definition(children: &[GammaLevel], frames: &[Frame]) -> Mat<f64> {
    let k = children.len();
    let d = children[0].d;
    let dc = children[0].dim;
    let b = children[0].block_rows();
    let r = frames[0].r();
    let rest_n = dc.pow((k - 1) as u32);
    let gam: Vec<Mat<f64>> = children.iter().map(|c| c.matrix.to_f64()).collect();
    let n_cols = d * dc.pow(k as u32);
    let mut c = Mat::<f64>::zeros(r * k * b * rest_n, n_cols);
    for col in 0..n_cols {
        let ip = col / dc.pow(k as u32);
        let mut alpha = vec![0; k];
        let mut x = col % dc.pow(k as u32);
        for slot in (0..k).rev() {
            alpha[slot] = x % dc;
            x /= dc;
        }
        for p in 0..r {
            for l in 0..k {
                let others: Vec<usize> = (0..k).filter(|&s| s != l).map(|s| alpha[s]).collect();
                let rest = others.iter().fold(0, |acc, &a| acc * dc + a);
                for beta in 0..b {
                    let v: f64 = (0..d)
                        .map(|ic| frames[l].columns()[(pair_index(d, ic, ip), p)] * gam[l][(ic * b + beta, alpha[l])])
                        .sum();
                    c[(((p * k + l) * b + beta) * rest_n + rest, col)] = v;
                }
            }
        }
    }
    c
}

fn random_invertible(n: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(
        n,
        n,
        |i, j| if i == j { 3.0 } else { 0.0 } + rng.random_range(-1.0..1.0),
    )
}

/// Small tree instances whose intermediate dense sizes stay modest.
fn small_tree() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (2usize..=4, 1usize..=2, 1usize..=3, any::<u64>())
        .prop_flat_map(|(d, k, depth, seed)| (Just(d), 1usize..=d * d, Just(k), Just(depth), Just(seed)))
        .prop_filter("dense sizes within test budget", |&(d, r, k, depth, _)| {
            let seq = recursion::dimension_sequence(d, r, k, depth).unwrap();
            (1..=depth).all(|n| {
                let prev = seq.predicted_usize(n - 1).unwrap_or(0);
                d.saturating_mul(prev.saturating_pow(k as u32)) <= 1200
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generic_instances_attain_predicted_dimensions((d, r, k, depth, seed) in small_tree()) {
        let tgs = groundspace::grow_tree(d, r, k, depth, seed, Mode::Numeric).unwrap();
        prop_assert!(tgs.complete());
        prop_assert!(tgs.matches_prediction(), "{:?} vs {:?}", tgs.observed, tgs.predicted.values);
        for rec in &tgs.levels {
            prop_assert!(rec.residual_ok(), "residual {} > {}", rec.max_residual, rec.residual_bound);
            prop_assert!(rec.max_gram_residual.unwrap_or(0.0) < 1e-10);
            prop_assert!(rec.ambiguities.is_empty());
            for dp in &rec.dual_path {
                prop_assert!(dp.agree(), "{dp:?}");
            }
        }
    }

    #[test]
    fn dense_matches_entrywise_definition(d in 2usize..=3, k in 1usize..=3, r in 1usize..=4, seed in any::<u64>()) {
        let r = r.min(d * d);
        let inner = groundspace::grow_tree(d, r, k, 2, seed, Mode::Numeric).unwrap();
        prop_assume!(inner.complete() && inner.observed[2] > 0 && inner.observed[2] <= 6);
        let children: Vec<GammaLevel> = (0..k).map(|_| inner.gammas[1][0].clone()).collect();
        let frames: Vec<Frame> = (0..k).map(|l| sample_haar_frame(d, r, seed ^ (l as u64 + 7)).unwrap()).collect();
        let op = build_constraint(&children, &frames).unwrap();
        let fast = materialize_dense(&op, &Budget::default()).unwrap().to_f64();
        let slow = dense_by_definition(&children, &frames);
        prop_assert_eq!(fast.shape(), slow.shape());
        let diff = Mat::from_fn(fast.nrows(), fast.ncols(), |i, j| fast[(i, j)] - slow[(i, j)]);
        prop_assert!(linalg::max_abs(diff.as_ref()) < 1e-12);
    }

    #[test]
    fn recombination_and_slot_order_keep_kernel_dimension(d in 2usize..=3, r in 1usize..=3, seed in any::<u64>()) {
        let k = 2;
        let g = groundspace::grow_tree(d, r, k, 2, seed, Mode::Numeric).unwrap();
        prop_assume!(g.complete() && g.observed[2] > 0 && g.observed[2] <= 8);
        let child = g.gammas[1][0].clone();
        let f: Vec<Frame> = (0..k).map(|l| sample_haar_frame(d, r, seed.wrapping_add(l as u64)).unwrap()).collect();
        let base = kernel_basis(&build_constraint(&[child.clone(), child.clone()], &f).unwrap(),
            &TolPolicy::default(), KernelPath::Structured, &Budget::default()).unwrap().gamma.dim;
        let a = Matrix::Numeric(random_invertible(child.dim, seed));
        let mixed = child.recombine(&a).unwrap();
        let rec = kernel_basis(&build_constraint(&[mixed.clone(), child.clone()], &f).unwrap(),
            &TolPolicy::default(), KernelPath::Structured, &Budget::default()).unwrap().gamma.dim;
        let swapped = kernel_basis(&build_constraint(&[child.clone(), mixed], &[f[1].clone(), f[0].clone()]).unwrap(),
            &TolPolicy::default(), KernelPath::Structured, &Budget::default()).unwrap().gamma.dim;
        prop_assert_eq!(base, rec);
        prop_assert_eq!(base, swapped);
    }

    #[test]
    fn gamma_is_dimension_ratio(d in 2usize..=7, k in 1usize..=3, r in 1usize..=12, n in 2usize..=9) {
        let seq = recursion::dimension_sequence(d, r, k, n).unwrap();
        let gam = recursion::gamma_sequence(d, r, k, n).unwrap();
        for (i, g) in gam.values.iter().enumerate() {
            let m = i + 1;
            if m >= seq.values.len() { break; }
            let prev = &seq.values[m - 1];
            if !prev.is_positive() { break; }
            let ratio = BigRational::new(seq.values[m].clone(), num_traits::pow(prev.clone(), k));
            prop_assert_eq!(g, &ratio);
        }
    }

    #[test]
    fn lower_bound_holds_below_threshold(d in 2usize..=8, k in 1usize..=3, r in 1usize..=16, n in 1usize..=10) {
        prop_assume!(recursion::within_threshold(d, r, k));
        let seq = recursion::dimension_sequence(d, r, k, n).unwrap();
        let lb = recursion::lower_bound_log2(d, r, k, n).unwrap();
        prop_assert!(recursion::log2_bigint(&seq.values[n]) >= lb - 1e-9);
    }

    #[test]
    fn row_reduction_preserves_column_space(rows_half in 1usize..=3, dim in 1usize..=5, seed in any::<u64>()) {
        let d = 2;
        let block = rows_half + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mat::from_fn(d * block, dim, |_, _| rng.random_range(-1.0..1.0));
        let g = GammaLevel::new(2, d, 1, block, Matrix::Numeric(m.clone())).unwrap();
        let e_prev = block;
        prop_assume!(dim <= e_prev);
        let s = frustration::select_set_s(dim, e_prev, d).unwrap();
        let out = frustration::row_reduce_on_set(&g, &s, &TolPolicy::default()).unwrap();
        prop_assert!(frustration::is_permutation_identity(&out, &s));
        let both = Mat::from_fn(m.nrows(), 2 * dim, |i, j| if j < dim { m[(i, j)] } else { out.matrix.to_f64()[(i, j - dim)] });
        prop_assert_eq!(linalg::rank(both.as_ref(), &TolPolicy::default()).unwrap().rank, dim);
    }
}

#[test]
fn gamma_bounded_below_and_monotone() {
    for d in 2..=6 {
        for k in 1..=2 {
            for r in 1..=d * d {
                if !recursion::within_threshold(d, r, k) {
                    continue;
                }
                let g = recursion::gamma_sequence(d, r, k, 30).unwrap();
                let root = g.limit_root.as_ref().unwrap();
                for w in g.values.windows(2) {
                    assert!(w[1] <= w[0]);
                }
                assert!(g.values.iter().all(|v| root.is_below_or_at(v)));
            }
        }
    }
}

#[test]
fn hamiltonian_is_psd_and_nullity_matches_chain() {
    for seed in 0..3 {
        let tgs = groundspace::grow_tree(2, 1, 1, 5, seed, Mode::Numeric).unwrap();
        let h = oracle::full_hamiltonian(&tgs.shape, &tgs.frames, &OracleConfig::default()).unwrap();
        let rep = oracle::nullity(&h, oracle::DEFAULT_NULLITY_TOL).unwrap();
        assert!(rep.psd_ok());
        assert_eq!(rep.nullity, 6);
        let states = oracle::reconstruct_states(&tgs, &OracleConfig::default()).unwrap();
        assert!(oracle::verify_annihilation(states.as_ref(), &tgs.shape, &tgs.frames) < 1e-10);
    }
}

#[test]
fn edge_rank_adds_over_disjoint_edges() {
    // A single edge has nullity d^2 - r on its two sites.
    let shape = TreeShape::new(3, 1, 2).unwrap();
    for r in 1..=9 {
        let frames = vec![sample_haar_frame(3, r, r as u64).unwrap()];
        let h = oracle::full_hamiltonian(&shape, &frames, &OracleConfig::default()).unwrap();
        assert_eq!(oracle::nullity(&h, oracle::DEFAULT_NULLITY_TOL).unwrap().nullity, 9 - r);
    }
}

#[test]
fn chains_die_monotonically_and_agree_before_onset() {
    for (d, r) in [(2, 2), (3, 3), (3, 4), (2, 3)] {
        for seed in 0..6 {
            let (run, tgs) = frustration::run_chain(d, r, seed, 8, &GrowOptions::default()).unwrap();
            assert!(run.monotone_death(), "{run:?}");
            for (n, &e) in run.e.iter().enumerate() {
                if let Some(dn) = tgs.predicted.predicted(n) {
                    if dn > BigInt::from(0) {
                        assert_eq!(BigInt::from(e), dn, "d={d} r={r} n={n}");
                    }
                }
            }
            assert!(run.frustration_index.is_some());
        }
    }
}

#[test]
fn witness_rank_never_exceeds_generic_rank() {
    for (d, r, k, level) in [(4, 2, 2, 2), (6, 3, 2, 2), (2, 1, 1, 3), (4, 1, 1, 3)] {
        let rep = frustration::verify_fullrank_appendix(d, r, k, level, &[3, 4], &GrowOptions::default()).unwrap();
        let w = rep.witness.as_ref().unwrap();
        for h in &rep.haar {
            assert!(w.rank <= h.rank, "{rep:?}");
        }
    }
}

#[test]
fn exact_and_numeric_growth_agree() {
    for (d, r, k, depth) in [(2, 1, 1, 4), (3, 2, 1, 3), (2, 1, 2, 2), (4, 2, 2, 2)] {
        let a = groundspace::grow_tree(d, r, k, depth, 11, Mode::Numeric).unwrap();
        let b = groundspace::grow_tree(d, r, k, depth, 11, Mode::Rational).unwrap();
        assert_eq!(a.observed, b.observed);
        assert!(b.levels.iter().all(|l| l.max_residual == 0.0));
    }
}

#[test]
fn leaf_pair_kernel_has_complementary_dimension() {
    let frames = [sample_haar_frame(3, 4, 9).unwrap()];
    let op = build_constraint(&[leaf_level(3)], &frames).unwrap();
    for path in [KernelPath::Dense, KernelPath::Structured] {
        let k = kernel_basis(&op, &TolPolicy::default(), path, &Budget::default()).unwrap();
        assert_eq!(k.gamma.dim, 5);
    }
}

#[test]
fn select_set_cardinality() {
    for e_prev in 1..8 {
        for e_n in 1..=3 * e_prev {
            let s = frustration::select_set_s(e_n, e_prev, 6).unwrap();
            assert_eq!(s.len(), e_n);
            let mut rows = s.rows();
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), e_n);
        }
    }
    let half = RowReductionSet::lower_half(4, 3);
    assert_eq!(half.len(), 6);
}
