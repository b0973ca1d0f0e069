use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use tracelab::chebyshev::{cheb_fit, gershgorin_interval, graph_distance, localized_filter_block, random_banded, SparsityGraph};
use tracelab::estimators::{bolt_variance_closed_form, SpectrumSummary};
use tracelab::lanczos::scalar_lanczos;
use tracelab::linop::make_dense;
use tracelab::probes::{draw_orthonormal, sample_index_set, sample_subblocks, IndexSet, ProbeDistribution, SubblockPolicy};
use tracelab::{RngStream, SpectralFn};

fn floyd_warshall(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn localized_block_is_exact_once_radius_covers_degree(
        seed in any::<u64>(), n in 12usize..40, bw in 1usize..3, m in 2usize..8, extra in 0usize..3,
    ) {
        let stream = RngStream::new(seed, 1);
        let a = random_banded(n, bw, &stream);
        let (lo, hi) = gershgorin_interval(&a);
        let filter = cheb_fit(&SpectralFn::Exp, lo, hi, m).unwrap();
        let s = sample_index_set(n, 3, &stream.fork(1)).unwrap();
        let local = localized_filter_block(&a, &filter, &s, m + extra).unwrap();
        prop_assert!(!local.truncated);
        let full = filter.eval_matrix(&a);
        let exact = full.select_rows(s.as_slice()).select_columns(s.as_slice());
        prop_assert!((&local.block - &exact).amax() < 1e-10 * full.amax().max(1.0));
    }

    #[test]
    fn clenshaw_matches_eigen_evaluation(seed in any::<u64>(), n in 3usize..20, m in 1usize..12) {
        let a = random_banded(n, 2, &RngStream::new(seed, 2));
        let (lo, hi) = gershgorin_interval(&a);
        let filter = cheb_fit(&SpectralFn::Exp, lo, hi, m).unwrap();
        let eig = SymmetricEigen::new(a.clone());
        let mapped = eig.eigenvalues.map(|x| filter.eval(x));
        let via_eig = &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose();
        prop_assert!((filter.eval_matrix(&a) - via_eig).amax() < 1e-10 * mapped.amax().max(1.0));
        for x in [lo, 0.5 * (lo + hi), hi] {
            prop_assert!((filter.eval(x) - filter.eval_direct(x)).abs() < 1e-10 * filter.eval(x).abs().max(1.0));
        }
    }

    #[test]
    fn bfs_distances_match_floyd_warshall(seed in any::<u64>(), n in 2usize..25, bw in 0usize..4) {
        let stream = RngStream::new(seed, 3);
        let mut a = random_banded(n, bw, &stream);
        // Random extra edges so the graph is not just a band.
        let extra = sample_index_set(n, n.min(2), &stream.fork(1)).unwrap();
        if extra.len() == 2 {
            let (i, j) = (extra.as_slice()[0], extra.as_slice()[1]);
            a[(i, j)] = 0.3;
            a[(j, i)] = 0.3;
        }
        let g = SparsityGraph::from_dense(&a);
        let fw = floyd_warshall(&a);
        for src in 0..n {
            let bfs = g.distances(&[src]);
            for v in 0..n {
                let expect = if fw[src][v] >= usize::MAX / 4 { usize::MAX } else { fw[src][v] };
                prop_assert_eq!(bfs[v], expect);
            }
        }
        let s = IndexSet::new(vec![0], n).unwrap();
        let ball = graph_distance(&g, &s, 1).unwrap();
        prop_assert!(ball.contains(0));
        prop_assert!(ball.iter().all(|v| fw[0][v] <= 1));
    }

    #[test]
    fn orthonormal_probes(seed in any::<u64>(), n in 1usize..40, frac in 0.0f64..1.0) {
        let b = 1 + ((n - 1) as f64 * frac) as usize;
        let v = draw_orthonormal(n, b, ProbeDistribution::Rademacher, &RngStream::new(seed, 4)).unwrap();
        let gram = v.matrix().tr_mul(v.matrix());
        prop_assert!((gram - DMatrix::<f64>::identity(b, b)).amax() < 1e-12);
    }

    #[test]
    fn lanczos_commutes_with_shift(seed in any::<u64>(), n in 3usize..25, c in -5.0f64..5.0) {
        let a = random_banded(n, 2, &RngStream::new(seed, 5));
        let v = DVector::from_fn(n, |i, _| 1.0 + (i as f64).cos()).normalize();
        let k = n.min(6);
        let base = scalar_lanczos(make_dense(a.clone()).unwrap().as_ref(), &v, k).unwrap();
        let shifted_a = &a + DMatrix::identity(n, n) * c;
        let shifted = scalar_lanczos(make_dense(shifted_a).unwrap().as_ref(), &v, k).unwrap();
        let dim = base.t().nrows();
        prop_assert_eq!(dim, shifted.t().nrows());
        let expect = base.t() + DMatrix::identity(dim, dim) * c;
        prop_assert!((shifted.t() - expect).amax() < 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn index_sets_are_sorted_distinct_and_sized(seed in any::<u64>(), n in 1usize..200, frac in 0.0f64..1.0) {
        let s = ((n as f64 * frac) as usize).max(1);
        let set = sample_index_set(n, s, &RngStream::new(seed, 6)).unwrap();
        prop_assert_eq!(set.len(), s);
        prop_assert!(set.as_slice().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(set.iter().all(|i| i < n));
        prop_assert_eq!(&set, &sample_index_set(n, s, &RngStream::new(seed, 6)).unwrap());
        prop_assert!(IndexSet::new(vec![0, 0], n.max(2)).is_err());
    }

    #[test]
    fn disjoint_blocks_do_not_overlap(seed in any::<u64>(), s in 1usize..6, t in 1usize..6) {
        let pool: Vec<usize> = (0..40).collect();
        let blocks = sample_subblocks(&pool, s, t, SubblockPolicy::Disjoint, &RngStream::new(seed, 7)).unwrap();
        prop_assert_eq!(blocks.len(), t);
        let mut all: Vec<usize> = blocks.iter().flat_map(|b| b.as_slice().to_vec()).collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), s * t);
    }

    #[test]
    fn closed_form_variance_is_nonnegative_and_vanishes_at_n(
        eigs in proptest::collection::vec(-3.0f64..3.0, 2..30), b_frac in 0.0f64..1.0,
    ) {
        let n = eigs.len();
        let spec = SpectrumSummary::new(eigs);
        let b = 1 + ((n - 1) as f64 * b_frac) as usize;
        let v = bolt_variance_closed_form(&spec, &SpectralFn::Identity, b).unwrap();
        prop_assert!(v >= -1e-12);
        prop_assert!(bolt_variance_closed_form(&spec, &SpectralFn::Identity, n).unwrap().abs() < 1e-10);
    }

    #[test]
    fn streams_are_reproducible_and_forks_differ(seed in any::<u64>(), e in any::<u64>(), i in 0u64..1000) {
        use rand::Rng;
        let s = RngStream::new(seed, e);
        let a: u64 = s.fork(i).rng().random();
        let b: u64 = s.fork(i).rng().random();
        let c: u64 = s.fork(i + 1).rng().random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}
