use nalgebra::{DMatrix, DVector};
use tracelab::divergence::ProxyKlConfig;
use tracelab::hodlr::{
    dense_proxy_kl, eig_span, factorize, hodlr_proxy_kl, hodlr_solve, peel_build,
    relative_frobenius_error, HodlrMatrix, PeelConfig,
};
use tracelab::linop::{make_dense, KernelFamily, KernelSpec};
use tracelab::probes::{draw_block, ProbeDistribution};
use tracelab::RngStream;

fn kernel(n: usize) -> KernelSpec {
    KernelSpec::equispaced(n, KernelFamily::OscExp { ell: 0.05, nu: 2.0 }).with_nugget(0.3)
}

fn gaussian(n: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    draw_block(n, cols, ProbeDistribution::Gaussian, &RngStream::new(seed, 4)).unwrap()
}

#[test]
fn solve_matches_dense_solve() {
    let a = kernel(64).matrix();
    let h = HodlrMatrix::from_dense(&a, 3, 64).unwrap();
    assert!(relative_frobenius_error(&h, &a) < 1e-12);
    let y = DVector::from_fn(64, |i, _| (i as f64 * 0.37).sin());
    let x = hodlr_solve(&h, &y).unwrap();
    let dense = a.clone().lu().solve(&y).unwrap();
    assert!((&x - &dense).norm() / dense.norm() < 1e-10);
}

#[test]
fn solve_then_apply_round_trips() {
    let a = kernel(128).matrix();
    let h = HodlrMatrix::from_dense(&a, 3, 6).unwrap();
    let f = factorize(&h).unwrap();
    let y = gaussian(128, 3, 1);
    let back = h.apply(&f.solve(&y).unwrap()).unwrap();
    assert!((&back - &y).norm() / y.norm() < 1e-10);
}

#[test]
fn apply_matches_dense_realization() {
    let a = kernel(128).matrix();
    let h = HodlrMatrix::from_dense(&a, 4, 5).unwrap();
    let x = gaussian(128, 4, 2);
    let fast = h.apply(&x).unwrap();
    let dense = h.to_dense() * &x;
    assert!((&fast - &dense).norm() / dense.norm() < 1e-12);
}

#[test]
fn apply_cost_and_storage_are_subquadratic() {
    let n = 512;
    let a = kernel(n).matrix();
    let (levels, rank) = (5, 4);
    let h = HodlrMatrix::from_dense(&a, levels, rank).unwrap();
    let leaf = n >> levels;
    let bound = 2 * n * leaf + 4 * n * rank * levels;
    assert!(h.stored_entries() <= bound, "{} > {bound}", h.stored_entries());
    assert!(h.stored_entries() < n * n / 4);
    h.reset_flops();
    h.apply(&DMatrix::zeros(n, 1)).unwrap();
    assert!(h.flops() > 0);
    assert!(h.flops() <= 4 * bound as u64);
}

#[test]
fn frobenius_error_decreases_with_rank() {
    let a = kernel(128).matrix();
    let errs: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&r| relative_frobenius_error(&HodlrMatrix::from_dense(&a, 3, r).unwrap(), &a))
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{errs:?}");
}

#[test]
fn rank_starved_approximation_widens_span() {
    let a = kernel(128).matrix();
    let good = HodlrMatrix::from_dense(&a, 3, 12).unwrap();
    let poor = HodlrMatrix::from_dense(&a, 3, 1).unwrap();
    let (gl, gh) = eig_span(&good, &a).unwrap();
    let (pl, ph) = eig_span(&poor, &a).unwrap();
    assert!(ph - pl > gh - gl);
    assert!(dense_proxy_kl(&poor, &a).unwrap() > dense_proxy_kl(&good, &a).unwrap());
}

#[test]
fn exact_representation_has_zero_proxy() {
    let a = kernel(64).matrix();
    let h = HodlrMatrix::from_dense(&a, 2, 32).unwrap();
    let (lo, hi) = eig_span(&h, &a).unwrap();
    assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
    assert!(dense_proxy_kl(&h, &a).unwrap().abs() < 1e-9);
    let res = hodlr_proxy_kl(&h, make_dense(a).unwrap(), &ProxyKlConfig::new(4, 16, 1, 8), &RngStream::new(3, 3))
        .unwrap();
    assert!(res.estimate.value.abs() < 1e-8);
    assert!(!res.fallback);
}

#[test]
fn full_block_proxy_matches_dense() {
    let a = kernel(64).matrix();
    let h = HodlrMatrix::from_dense(&a, 2, 1).unwrap();
    let dense = dense_proxy_kl(&h, &a).unwrap();
    let res = hodlr_proxy_kl(&h, make_dense(a).unwrap(), &ProxyKlConfig::new(1, 64, 1, 64), &RngStream::new(4, 4))
        .unwrap();
    assert!((res.estimate.value - dense).abs() <= 0.1 * dense, "{} vs {dense}", res.estimate.value);
}

#[test]
fn peeling_stays_within_matvec_budget() {
    let op = kernel(256).operator().unwrap();
    for levels in 1..=3 {
        let cfg = PeelConfig::new(levels, 3);
        op.counters().reset();
        let h = peel_build(op.as_ref(), &cfg, &RngStream::new(5, levels as u64)).unwrap();
        assert!(op.counters().matvecs() <= cfg.matvec_budget(256));
        assert_eq!(h.levels(), levels);
        assert!(h.ranks().iter().all(|&r| r <= 3));
        let a = kernel(256).matrix();
        let direct = HodlrMatrix::from_dense(&a, levels, 3).unwrap();
        assert!(relative_frobenius_error(&h, &a) < 5.0 * relative_frobenius_error(&direct, &a) + 1e-10);
    }
}

#[test]
fn invalid_partitions_are_rejected() {
    let a = kernel(30).matrix();
    assert!(HodlrMatrix::from_dense(&a, 2, 2).is_err());
}
