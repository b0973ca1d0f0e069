//! Divergences between zero-mean Gaussians: KL, proxy KL over subblocks and
//! the squared Wasserstein-2 distance, each with a dense reference.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{invalid, Result, TraceError};
use crate::estimators::{bolt, subblock_slq, SubblockSlqConfig, TraceEstimate};
use crate::linop::{make_dense, make_sandwich, DenseOperator, LinearOperator, OperatorHandle};
use crate::probes::SubblockPolicy;
use crate::rng::RngStream;
use crate::spectral::SpectralFn;

fn eig_checked(a: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(TraceError::NonFinite(format!("eigenvalues of {what}")));
    }
    Ok(eig)
}

fn check_spd(eig: &SymmetricEigen<f64, nalgebra::Dyn>, what: &str) -> Result<()> {
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max) {
        return Err(TraceError::NotPositiveDefinite(format!(
            "{what} has eigenvalue {min:e} against max {max:e}"
        )));
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix, with round-off negatives set to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eig_checked(a, "matrix")?;
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * max {
        return Err(TraceError::NotPositiveDefinite(format!(
            "eigenvalue {min:e} against max {max:e}"
        )));
    }
    let mut scaled = eig.eigenvectors.clone();
    for (c, v) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(c).scale_mut(v.max(0.0).sqrt());
    }
    Ok(scaled * eig.eigenvectors.transpose())
}

fn dim_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TraceError::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(())
}

/// `KL(N(0, S1) || N(0, S2)) = 1/2 [tr(S2^-1 S1) + ln det S2 - ln det S1 - d]`.
pub fn kl_exact(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    dim_check(sigma1, sigma2)?;
    let e1 = eig_checked(sigma1, "Sigma1")?;
    let e2 = eig_checked(sigma2, "Sigma2")?;
    check_spd(&e1, "Sigma1")?;
    check_spd(&e2, "Sigma2")?;
    let chol = Cholesky::new(sigma2.clone())
        .ok_or_else(|| TraceError::NotPositiveDefinite("Sigma2".into()))?;
    let cross = chol.solve(sigma1).trace();
    let ld1: f64 = e1.eigenvalues.iter().map(|x| x.ln()).sum();
    let ld2: f64 = e2.eigenvalues.iter().map(|x| x.ln()).sum();
    Ok(0.5 * (cross + ld2 - ld1 - sigma1.nrows() as f64))
}

/// Two covariances together with a factor `L` of `Sigma2^-1 = L L^T`.
#[derive(Debug, Clone)]
pub struct GaussianPair {
    sigma1: DMatrix<f64>,
    sigma2: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl GaussianPair {
    /// Factors `Sigma2 = C C^T` and takes `L = C^-T`.
    pub fn new(sigma1: DMatrix<f64>, sigma2: DMatrix<f64>) -> Result<Self> {
        dim_check(&sigma1, &sigma2)?;
        let n = sigma2.nrows();
        let chol = Cholesky::new(sigma2.clone())
            .ok_or_else(|| TraceError::NotPositiveDefinite("Sigma2".into()))?;
        let c = chol.l();
        let c_inv = c
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| TraceError::NotPositiveDefinite("Sigma2 factor".into()))?;
        Ok(Self {
            sigma1,
            sigma2,
            l: c_inv.transpose(),
        })
    }

    pub fn sigma1(&self) -> &DMatrix<f64> {
        &self.sigma1
    }

    pub fn sigma2(&self) -> &DMatrix<f64> {
        &self.sigma2
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `A = L^T Sigma1 L`, whose spectrum is that of `Sigma2^-1 Sigma1`.
    pub fn kl_operator(&self) -> Result<OperatorHandle> {
        let factor: OperatorHandle = Arc::new(DenseOperator::general(self.l.clone())?);
        make_sandwich(factor, make_dense(self.sigma1.clone())?)
    }
}

fn halve(mut est: TraceEstimate) -> TraceEstimate {
    est.value *= 0.5;
    for x in &mut est.per_sample_values {
        *x *= 0.5;
    }
    est
}

/// `1/2` BOLT estimate of `tr f(L^T Sigma1 L)` with `f(x) = x - ln x - 1`.
pub fn kl_slq(
    pair: &GaussianPair,
    q: usize,
    k: usize,
    b: usize,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    let op = pair.kl_operator()?;
    bolt(op.as_ref(), &SpectralFn::KlLoss, q, k, b, stream).map(halve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyKlConfig {
    pub t: usize,
    pub s: usize,
    pub q: usize,
    /// Lanczos steps; `None` means `s`.
    pub k: Option<usize>,
    pub b: usize,
    /// Number of samples behind a Wishart-type operator; caps `s`.
    pub sample_count: Option<usize>,
    pub policy: SubblockPolicy,
    pub assume_full_rank: bool,
}

impl ProxyKlConfig {
    pub fn new(t: usize, s: usize, q: usize, b: usize) -> Self {
        Self {
            t,
            s,
            q,
            k: None,
            b,
            sample_count: None,
            policy: SubblockPolicy::Independent,
            assume_full_rank: false,
        }
    }

    /// Subblock size actually used.
    pub fn effective_s(&self) -> usize {
        match self.sample_count {
            Some(m) => self.s.min(m),
            None => self.s,
        }
    }
}

/// Proxy KL: `1/2` times the subblock SLQ estimate of `tr f(A)` with
/// `f(x) = x - ln x - 1`.
///
/// Each subblock contributes `(n/s) tr f(A_S)`, which is finite even when
/// `A` is singular as long as the sampled blocks are not. Singular blocks are
/// dropped and counted in `flags.singular_blocks`.
pub fn proxy_kl(op: &dyn LinearOperator, cfg: &ProxyKlConfig, stream: &RngStream) -> Result<TraceEstimate> {
    let s = cfg.effective_s();
    if s == 0 {
        return Err(invalid("s", "need s >= 1"));
    }
    let inner = SubblockSlqConfig {
        q: cfg.q,
        t: cfg.t,
        s,
        b: cfg.b.min(s),
        k: cfg.k,
        eps: None,
        policy: cfg.policy,
        assume_full_rank: cfg.assume_full_rank,
    };
    subblock_slq(op, &SpectralFn::KlLoss, &inner, stream).map(halve)
}

/// `W2^2 = tr(S1) + tr(S2) - 2 tr((S1^1/2 S2 S1^1/2)^1/2)` by dense eigendecompositions.
pub fn w2_exact(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    dim_check(sigma1, sigma2)?;
    let r = psd_sqrt(sigma1)?;
    psd_sqrt(sigma2)?;
    let mut inner = &r * sigma2 * &r;
    crate::linop::symmetrize_in_place(&mut inner);
    let tau: f64 = psd_sqrt(&inner)?.trace();
    Ok(sigma1.trace() + sigma2.trace() - 2.0 * tau)
}

/// A factor `R` with `Sigma1 = R^T R`: the transposed Cholesky factor, or the
/// symmetric square root when `Sigma1` is only semidefinite.
fn w2_factor(sigma1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match Cholesky::new(sigma1.clone()) {
        Some(chol) => Ok(chol.l()),
        None => psd_sqrt(sigma1),
    }
}

/// `C = R Sigma2 R^T` with `Sigma1 = R^T R`; `spec(C) = spec(Sigma2 Sigma1)`.
pub fn w2_operator(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<OperatorHandle> {
    dim_check(sigma1, sigma2)?;
    let factor: OperatorHandle = Arc::new(DenseOperator::general(w2_factor(sigma1)?)?);
    make_sandwich(factor, make_dense(sigma2.clone())?)
}

/// `W2^2` with `tr((Sigma1^1/2 Sigma2 Sigma1^1/2)^1/2)` estimated by BOLT
/// (`f = sqrt`) on `C = R Sigma2 R^T`. The trace term is read from the diagonals.
///
/// No inverse is formed, so a singular `Sigma2` is fine.
pub fn w2_slq(
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    q: usize,
    k: usize,
    b: usize,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    let op = w2_operator(sigma1, sigma2)?;
    let tr = sigma1.trace() + sigma2.trace();
    let mut est = bolt(op.as_ref(), &SpectralFn::Sqrt, q, k, b, stream)?;
    est.value = tr - 2.0 * est.value;
    for x in &mut est.per_sample_values {
        *x = tr - 2.0 * *x;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::dense_realization;
    use crate::probes::{draw_block, ProbeDistribution};

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let z = draw_block(n, n, ProbeDistribution::Gaussian, &RngStream::new(seed, 3)).unwrap();
        z.tr_mul(&z) / n as f64 + DMatrix::identity(n, n) * 0.3
    }

    #[test]
    fn kl_scalar() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let want = 0.5 * (2.0 - 2f64.ln() - 1.0);
        assert!((kl_exact(&a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn kl_identity_and_trace_form() {
        let s1 = random_spd(5, 1);
        let s2 = random_spd(5, 2);
        assert!(kl_exact(&s1, &s1).unwrap().abs() < 1e-12);
        let pair = GaussianPair::new(s1.clone(), s2.clone()).unwrap();
        let a = dense_realization(pair.kl_operator().unwrap().as_ref()).unwrap();
        let mut a = a;
        crate::linop::symmetrize_in_place(&mut a);
        let tr = SpectralFn::KlLoss.trace_of_dense(&a).unwrap();
        assert!((0.5 * tr - kl_exact(&s1, &s2).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn whitened_pair_is_identity() {
        let s = random_spd(5, 4);
        let pair = GaussianPair::new(s.clone(), s).unwrap();
        let a = dense_realization(pair.kl_operator().unwrap().as_ref()).unwrap();
        assert!((a - DMatrix::<f64>::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn kl_rejects_singular() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        assert!(kl_exact(&DMatrix::identity(2, 2), &s).is_err());
    }

    #[test]
    fn w2_scalar_and_identity() {
        let a = DMatrix::from_element(1, 1, 4.0);
        let b = DMatrix::from_element(1, 1, 9.0);
        assert!((w2_exact(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let i = DMatrix::<f64>::identity(4, 4);
        assert!(w2_exact(&i, &i).unwrap().abs() < 1e-12);
    }

    #[test]
    fn w2_slq_exact_regime() {
        let s1 = random_spd(8, 5);
        let s2 = random_spd(8, 6);
        let est = w2_slq(&s1, &s2, 1, 8, 8, &RngStream::new(7, 7)).unwrap();
        assert!((est.value - w2_exact(&s1, &s2).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn proxy_kl_identity() {
        let op = make_dense(DMatrix::identity(16, 16)).unwrap();
        let est = proxy_kl(op.as_ref(), &ProxyKlConfig::new(3, 4, 2, 2), &RngStream::new(1, 1)).unwrap();
        assert!(est.value.abs() < 1e-12);
    }

    #[test]
    fn proxy_kl_caps_block_size() {
        let mut cfg = ProxyKlConfig::new(3, 64, 1, 8);
        cfg.sample_count = Some(50);
        assert_eq!(cfg.effective_s(), 50);
    }
}
