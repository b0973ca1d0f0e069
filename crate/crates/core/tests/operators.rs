use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use tracelab::linop::{
    dense_realization, make_dense, make_gram, make_sandwich, symmetry_defect, DenseOperator,
    KernelFamily, KernelSpec, LinearOperator, OperatorHandle,
};
use tracelab::probes::{draw_block, IndexSet, ProbeDistribution};
use tracelab::{RngStream, SpectralFn};

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let z = draw_block(n, n, ProbeDistribution::Gaussian, &RngStream::new(seed, 1)).unwrap();
    z.tr_mul(&z) / n as f64 + DMatrix::identity(n, n) * 0.2
}

#[test]
fn sandwich_of_identities_has_zero_kl() {
    let id: OperatorHandle = make_dense(DMatrix::identity(5, 5)).unwrap();
    let op = make_sandwich(id.clone(), id).unwrap();
    let a = dense_realization(op.as_ref()).unwrap();
    assert!(SpectralFn::KlLoss.trace_of_dense(&a).unwrap().abs() < 1e-14);
}

#[test]
fn whitening_by_inverse_factor_gives_unit_spectrum() {
    let sigma = random_spd(5, 2);
    let chol = Cholesky::new(sigma.clone()).unwrap();
    let l = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(5, 5))
        .unwrap()
        .transpose();
    let factor: OperatorHandle = Arc::new(DenseOperator::general(l).unwrap());
    let op = make_sandwich(factor, make_dense(sigma).unwrap()).unwrap();
    let eig = SymmetricEigen::new(dense_realization(op.as_ref()).unwrap()).eigenvalues;
    assert!(eig.iter().all(|x| (x - 1.0).abs() < 1e-10));
}

#[test]
fn sandwich_spectrum_matches_product() {
    let sigma = random_spd(6, 3);
    let l = DMatrix::from_fn(6, 6, |i, j| if i >= j { 1.0 + (i * 7 + j) as f64 * 0.1 } else { 0.0 });
    let factor: OperatorHandle = Arc::new(DenseOperator::general(l.clone()).unwrap());
    let op = make_sandwich(factor, make_dense(sigma.clone()).unwrap()).unwrap();
    let mut a = dense_realization(op.as_ref()).unwrap();
    a = (&a + a.transpose()) * 0.5;
    let mut s1: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    let mut s2: Vec<f64> = (&l * l.transpose() * &sigma)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .collect();
    s1.sort_by(f64::total_cmp);
    s2.sort_by(f64::total_cmp);
    for (x, y) in s1.iter().zip(&s2) {
        assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
    }
}

#[test]
fn principal_subblock_examples() {
    let d = make_dense(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]))).unwrap();
    let s = IndexSet::new(vec![0, 2], 4).unwrap();
    assert_eq!(
        d.principal_subblock(&s).unwrap(),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0])
    );
    assert_eq!(d.counters().entries(), 4);

    let m = random_spd(6, 4);
    let op = make_dense(m.clone()).unwrap();
    let s = IndexSet::new(vec![1, 3, 5], 6).unwrap();
    let got = op.principal_subblock(&s).unwrap();
    assert_eq!(got, m.select_rows(&[1, 3, 5]).select_columns(&[1, 3, 5]));
}

#[test]
fn gram_trace_is_frobenius_norm() {
    let g = make_gram(4, 8, 7).unwrap();
    let fro: f64 = (0..8).map(|j| g.column(j).norm_squared()).sum();
    assert!((g.exact_trace() - fro).abs() < 1e-12 * fro);
    let diag = g.diagonal(&IndexSet::full(8)).unwrap();
    assert!((diag.iter().sum::<f64>() - fro).abs() < 1e-12 * fro);
}

#[test]
fn gram_large_subblock_without_forming_a() {
    let g = make_gram(2048, 1_000_000, 11).unwrap();
    let s = tracelab::probes::sample_index_set(1_000_000, 64, &RngStream::new(5, 5)).unwrap();
    let a = g.principal_subblock(&s).unwrap();
    assert_eq!(a.shape(), (64, 64));
    assert_eq!(g.counters().entries(), 64 * 64);
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    assert!(eig.min() >= -1e-8 * eig.max());
    assert_eq!(a, g.principal_subblock(&s).unwrap());
}

#[test]
fn operators_are_symmetric_and_psd() {
    let rbf = KernelSpec::equispaced(200, KernelFamily::Rbf { sigma: 2.0 });
    let ops: Vec<OperatorHandle> = vec![
        rbf.operator().unwrap(),
        make_gram(30, 40, 3).unwrap(),
        make_sandwich(make_dense(random_spd(40, 8)).unwrap(), make_dense(random_spd(40, 9)).unwrap())
            .unwrap(),
    ];
    for op in &ops {
        let defect = symmetry_defect(op.as_ref(), 100, &RngStream::new(1, 2)).unwrap();
        assert!(defect <= 1e-10, "defect {defect:e}");
        let a = dense_realization(op.as_ref()).unwrap();
        let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5).eigenvalues;
        assert!(eig.min() >= -1e-8 * eig.amax());
    }
}

#[test]
fn counters_count_block_width() {
    let op = make_dense(DMatrix::identity(10, 10)).unwrap();
    for _ in 0..3 {
        op.apply(&DMatrix::zeros(10, 4)).unwrap();
    }
    assert_eq!(op.counters().matvecs(), 12);
    op.counters().reset();
    assert_eq!(op.counters().matvecs(), 0);
    assert!(op.apply(&DMatrix::zeros(9, 1)).is_err());
}
