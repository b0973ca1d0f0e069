//! Wishart sampling and the rank/eigenvalue diagnostics for its principal subblocks.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result, TraceError};
use crate::probes::{sample_index_set, IndexSet};
use crate::rng::RngStream;

/// `Sigma~ = sum_i u_i u_i^T = U U^T`, stored through its `n x m` factor `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartSample {
    factor: DMatrix<f64>,
}

impl WishartSample {
    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    pub fn m(&self) -> usize {
        self.factor.ncols()
    }

    /// The samples `u_1..u_m` as columns.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sigma_tilde(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// `Sigma~_S`, formed from the rows of `U` in `S`.
    pub fn subblock(&self, s: &IndexSet) -> DMatrix<f64> {
        let us = self.factor.select_rows(s.as_slice());
        &us * us.transpose()
    }

    /// Whether `Sigma~_S` has full rank `s`.
    pub fn subblock_full_rank(&self, s: &IndexSet) -> bool {
        factor_full_rank(&self.factor.select_rows(s.as_slice()))
    }
}

fn gaussian(rows: usize, cols: usize, stream: &RngStream) -> DMatrix<f64> {
    let mut rng = stream.rng();
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `U_S U_S^T` is numerically full rank when the smallest singular value of
/// the `s x m` factor exceeds `max(s, m) * eps * sigma_max`. With `s > m` the
/// rank is at most `m`, so the answer is no.
fn factor_full_rank(us: &DMatrix<f64>) -> bool {
    let (s, m) = us.shape();
    if s > m {
        return false;
    }
    let sv = us.singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > s.max(m) as f64 * f64::EPSILON * max
}

/// `m` samples `u_i = L g_i` with `Sigma = L L^T` and `g_i` standard normal.
pub fn sample_wishart(sigma: &DMatrix<f64>, m: usize, stream: &RngStream) -> Result<WishartSample> {
    if m == 0 {
        return Err(invalid("m", "need at least one sample"));
    }
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| TraceError::NotPositiveDefinite("Wishart scale matrix".into()))?;
    let g = gaussian(sigma.nrows(), m, stream);
    Ok(WishartSample {
        factor: chol.l() * g,
    })
}

/// Fraction of `trials` in which a random `s x s` principal subblock of a
/// `W(I_n, m)` sample is full rank.
pub fn subblock_rank_experiment(
    n: usize,
    m: usize,
    s: usize,
    trials: usize,
    stream: &RngStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if m == 0 {
        return Err(invalid("m", "need at least one sample"));
    }
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial = stream.fork(t as u64);
            let u = gaussian(n, m, &trial.fork(0));
            let set = sample_index_set(n, s, &trial.fork(1))?;
            Ok(factor_full_rank(&u.select_rows(set.as_slice())))
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / trials as f64)
}

/// Limiting density of `m * lambda_min` for the square Wishart `W(m, m)`:
/// `(1 + sqrt x) / (2 sqrt x) * exp(-(x/2 + sqrt x))`.
pub fn min_eig_density(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let r = x.sqrt();
    (1.0 + r) / (2.0 * r) * (-(0.5 * x + r)).exp()
}

/// CDF of [`min_eig_density`]: `1 - exp(-(x/2 + sqrt x))`.
pub fn min_eig_cdf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    1.0 - (-(0.5 * x + x.sqrt())).exp()
}

/// `draws` samples of `m * lambda_min(G G^T)` with `G` an `m x m` Gaussian.
pub fn scaled_min_eigs(m: usize, draws: usize, stream: &RngStream) -> Vec<f64> {
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let g = gaussian(m, m, &stream.fork(d as u64));
            m as f64 * g.singular_values().min().powi(2)
        })
        .collect()
}

/// Kolmogorov distance between the empirical CDF of `samples` and `cdf`.
pub fn sup_cdf_gap(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_is_chi_square() {
        let w = sample_wishart(&DMatrix::identity(1, 1), 1, &RngStream::new(1, 1)).unwrap();
        let g = w.factor()[(0, 0)];
        assert_eq!(w.sigma_tilde()[(0, 0)], g * g);
    }

    #[test]
    fn rank_equals_sample_count() {
        let w = sample_wishart(&DMatrix::identity(10, 10), 5, &RngStream::new(2, 2)).unwrap();
        assert_eq!(w.sigma_tilde().rank(1e-10 * 10.0), 5);
        let s5 = IndexSet::new(vec![0, 2, 4, 6, 8], 10).unwrap();
        let s6 = IndexSet::new(vec![0, 1, 2, 4, 6, 8], 10).unwrap();
        assert!(w.subblock_full_rank(&s5));
        assert!(!w.subblock_full_rank(&s6));
    }

    #[test]
    fn density_integrates_to_one() {
        assert!((min_eig_cdf(1e12) - 1.0).abs() < 1e-15);
        assert_eq!(min_eig_cdf(0.0), 0.0);
        let x: f64 = 1e-8;
        assert!((min_eig_density(x) * 2.0 * x.sqrt() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                let r = -1.0 + (1.0 - 2.0 * (1.0 - p).ln()).sqrt();
                r * r
            })
            .collect();
        assert!(sup_cdf_gap(&samples, min_eig_cdf) <= 0.5 / n as f64 + 1e-12);
    }
}
