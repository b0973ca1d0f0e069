use nalgebra::{DMatrix, SymmetricEigen};
use tracelab::divergence::{
    kl_exact, kl_slq, proxy_kl, w2_exact, w2_operator, w2_slq, GaussianPair, ProxyKlConfig,
};
use tracelab::linop::{dense_realization, make_dense, KernelFamily, KernelSpec};
use tracelab::probes::{draw_block, sample_index_set, ProbeDistribution};
use tracelab::wishart::sample_wishart;
use tracelab::{RngStream, SpectralFn, TraceError};

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let z = draw_block(n, n, ProbeDistribution::Gaussian, &RngStream::new(seed, 3)).unwrap();
    z.tr_mul(&z) / n as f64 + DMatrix::identity(n, n) * 0.3
}

fn sorted_eigs(a: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn kl_operator_is_similar_to_precision_product() {
    let (s1, s2) = (random_spd(12, 1), random_spd(12, 2));
    let pair = GaussianPair::new(s1.clone(), s2.clone()).unwrap();
    let a = dense_realization(pair.kl_operator().unwrap().as_ref()).unwrap();
    let a = (&a + a.transpose()) * 0.5;
    let mut prod: Vec<f64> = (s2.clone().try_inverse().unwrap() * &s1)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .collect();
    prod.sort_by(f64::total_cmp);
    for (x, y) in sorted_eigs(a.clone()).iter().zip(&prod) {
        assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
    }
    let kl = kl_exact(&s1, &s2).unwrap();
    let via_spec = 0.5 * SpectralFn::KlLoss.trace_of_dense(&a).unwrap();
    assert!((kl - via_spec).abs() < 1e-9 * kl.abs().max(1.0));
}

#[test]
fn kl_slq_converges_to_exact() {
    let (s1, s2) = (random_spd(30, 3), random_spd(30, 4));
    let exact = kl_exact(&s1, &s2).unwrap();
    let pair = GaussianPair::new(s1, s2).unwrap();
    let est = kl_slq(&pair, 200, 15, 5, &RngStream::new(3, 1)).unwrap();
    assert!((est.value - exact).abs() <= 4.0 * est.std_error() + 1e-8 * exact);
    assert!(kl_exact(&DMatrix::identity(4, 4), &DMatrix::identity(4, 4)).unwrap().abs() < 1e-15);
}

#[test]
fn w2_operator_spectrum_matches_product() {
    let (s1, s2) = (random_spd(10, 5), random_spd(10, 6));
    let c = dense_realization(w2_operator(&s1, &s2).unwrap().as_ref()).unwrap();
    let c = (&c + c.transpose()) * 0.5;
    let mut prod: Vec<f64> = (&s2 * &s1).complex_eigenvalues().iter().map(|c| c.re).collect();
    prod.sort_by(f64::total_cmp);
    for (x, y) in sorted_eigs(c).iter().zip(&prod) {
        assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
    }
}

#[test]
fn w2_exact_properties() {
    let s = random_spd(8, 7);
    assert!(w2_exact(&s, &s).unwrap().abs() < 1e-10);
    // Commuting diagonal case: sum of (sqrt a - sqrt b)^2.
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 9.0]));
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 9.0]));
    assert!((w2_exact(&a, &b).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn w2_slq_with_singular_second_covariance() {
    let s1 = random_spd(40, 8);
    let s2 = KernelSpec::equispaced(40, KernelFamily::Rbf { sigma: 2.0 }).matrix();
    let exact = w2_exact(&s1, &s2).unwrap();
    let est = w2_slq(&s1, &s2, 50, 12, 8, &RngStream::new(8, 1)).unwrap();
    assert!(est.value.is_finite());
    assert!((est.value - exact).abs() <= 4.0 * est.std_error() + 5e-2 * exact.abs());
}

#[test]
fn proxy_is_zero_on_identity() {
    let op = make_dense(DMatrix::identity(20, 20)).unwrap();
    let est = proxy_kl(op.as_ref(), &ProxyKlConfig::new(10, 5, 1, 5), &RngStream::new(9, 1)).unwrap();
    assert!(est.value.abs() < 1e-12);
}

#[test]
fn proxy_with_full_block_is_exact() {
    let (s1, s2) = (random_spd(16, 10), random_spd(16, 11));
    let exact = kl_exact(&s1, &s2).unwrap();
    let pair = GaussianPair::new(s1, s2).unwrap();
    let op = pair.kl_operator().unwrap();
    let est = proxy_kl(op.as_ref(), &ProxyKlConfig::new(1, 16, 1, 16), &RngStream::new(10, 1)).unwrap();
    assert!((est.value - exact).abs() < 1e-8 * exact);
}

#[test]
fn proxy_matches_subset_oracle() {
    let a = random_spd(24, 12) * 1.5;
    let op = make_dense(a.clone()).unwrap();
    let (n, s) = (24usize, 6usize);
    let oracle_stream = RngStream::new(12, 2);
    let draws = 4000;
    let oracle: f64 = (0..draws)
        .map(|i| {
            let set = sample_index_set(n, s, &oracle_stream.fork(i)).unwrap();
            let sub = a.select_rows(set.as_slice()).select_columns(set.as_slice());
            0.5 * (n as f64 / s as f64) * SpectralFn::KlLoss.trace_of_dense(&sub).unwrap()
        })
        .sum::<f64>()
        / draws as f64;
    let est = proxy_kl(op.as_ref(), &ProxyKlConfig::new(2000, s, 1, s), &RngStream::new(12, 3)).unwrap();
    assert!((est.value - oracle).abs() <= 4.0 * est.std_error() + 2e-2 * oracle.abs());
}

#[test]
fn proxy_on_wishart_respects_sample_count() {
    let w = sample_wishart(&DMatrix::identity(200, 200), 50, &RngStream::new(13, 1)).unwrap();
    let op = make_dense(w.sigma_tilde() / 50.0).unwrap();

    let ok = proxy_kl(op.as_ref(), &ProxyKlConfig::new(8, 50, 1, 10), &RngStream::new(13, 2)).unwrap();
    assert!(ok.value.is_finite());
    assert_eq!(ok.flags.singular_blocks, 0);

    let mut capped = ProxyKlConfig::new(8, 64, 1, 8);
    capped.sample_count = Some(50);
    assert_eq!(capped.effective_s(), 50);
    assert!(proxy_kl(op.as_ref(), &capped, &RngStream::new(13, 3)).unwrap().value.is_finite());

    let over = ProxyKlConfig::new(8, 64, 1, 8);
    match proxy_kl(op.as_ref(), &over, &RngStream::new(13, 4)) {
        Err(TraceError::AllBlocksSingular { blocks }) => assert_eq!(blocks, 8),
        other => panic!("expected every block singular, got {other:?}"),
    }
}
