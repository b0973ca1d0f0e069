//! Random probes: Rademacher/Gaussian blocks, Haar orthonormal blocks and
//! uniformly sampled index sets.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, TraceError};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeDistribution {
    Rademacher,
    #[default]
    Gaussian,
}

/// `n x b` matrix with i.i.d. entries from `dist`.
pub fn draw_block(
    n: usize,
    b: usize,
    dist: ProbeDistribution,
    stream: &RngStream,
) -> Result<DMatrix<f64>> {
    if b == 0 || b > n {
        return Err(invalid("b", format!("need 1 <= b <= n = {n}, got {b}")));
    }
    let mut rng = stream.rng();
    let z = match dist {
        ProbeDistribution::Gaussian => {
            DMatrix::from_fn(n, b, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
        ProbeDistribution::Rademacher => {
            DMatrix::from_fn(n, b, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
    };
    Ok(z)
}

/// An `n x b` block with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBlock {
    v: DMatrix<f64>,
}

impl ProbeBlock {
    /// Wraps a matrix the caller guarantees has orthonormal columns.
    pub fn from_orthonormal(v: DMatrix<f64>) -> Self {
        Self { v }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn block_size(&self) -> usize {
        self.v.ncols()
    }
}

/// Thin QR with the diagonal of `R` made positive.
///
/// With Gaussian input the result is Haar-distributed on the Stiefel manifold.
pub fn orthonormalize(z: DMatrix<f64>) -> Result<ProbeBlock> {
    let (n, b) = z.shape();
    if b == 0 || b > n {
        return Err(invalid("b", format!("need 1 <= b <= n = {n}, got {b}")));
    }
    let scale = z.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..b {
        let d = r[(c, c)];
        if !(d.abs() > 1e-12 * scale) {
            return Err(TraceError::RankDeficient { attempts: 1 });
        }
        if d < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    Ok(ProbeBlock { v: q })
}

/// Draws and orthonormalizes a block, redrawing up to three times on rank deficiency.
pub fn draw_orthonormal(
    n: usize,
    b: usize,
    dist: ProbeDistribution,
    stream: &RngStream,
) -> Result<ProbeBlock> {
    const REDRAWS: usize = 3;
    for attempt in 0..=REDRAWS {
        let s = if attempt == 0 {
            *stream
        } else {
            stream.fork(attempt as u64)
        };
        match orthonormalize(draw_block(n, b, dist, &s)?) {
            Ok(v) => return Ok(v),
            Err(TraceError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(TraceError::RankDeficient {
        attempts: REDRAWS + 1,
    })
}

/// A strictly increasing set of indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("indices", "must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(TraceError::IndexOutOfRange { index: last, n });
            }
        }
        Ok(Self { indices })
    }

    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        Self::new(indices, n)
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// First `s` entries of a Fisher-Yates shuffle of `0..n`, using a sparse swap
/// table so the cost is `O(s)` regardless of `n`.
fn partial_fisher_yates<R: Rng>(n: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * s);
    let mut out = Vec::with_capacity(s);
    for i in 0..s {
        let j = rng.random_range(i..n);
        let vi = *swapped.get(&i).unwrap_or(&i);
        let vj = *swapped.get(&j).unwrap_or(&j);
        swapped.insert(j, vi);
        out.push(vj);
    }
    out
}

/// A uniformly random `s`-subset of `0..n`, sorted.
pub fn sample_index_set(n: usize, s: usize, stream: &RngStream) -> Result<IndexSet> {
    if s == 0 || s > n {
        return Err(invalid("s", format!("need 1 <= s <= n = {n}, got {s}")));
    }
    let mut idx = partial_fisher_yates(n, s, &mut stream.rng());
    idx.sort_unstable();
    Ok(IndexSet::from_sorted_unchecked(idx))
}

/// How the `t` subblocks of a subblock estimator relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubblockPolicy {
    /// Each block is an independent uniform `s`-subset.
    #[default]
    Independent,
    /// Blocks are pairwise disjoint (one shuffle cut into `t` pieces).
    Disjoint,
}

/// `t` subsets of size `s` drawn from `pool` (sorted, distinct indices).
pub fn sample_subblocks(
    pool: &[usize],
    s: usize,
    t: usize,
    policy: SubblockPolicy,
    stream: &RngStream,
) -> Result<Vec<IndexSet>> {
    let p = pool.len();
    if s == 0 || s > p {
        return Err(invalid("s", format!("need 1 <= s <= {p}, got {s}")));
    }
    let to_set = |positions: &[usize]| {
        let mut idx: Vec<usize> = positions.iter().map(|&k| pool[k]).collect();
        idx.sort_unstable();
        IndexSet::from_sorted_unchecked(idx)
    };
    match policy {
        SubblockPolicy::Independent => Ok((0..t)
            .map(|i| {
                let positions = partial_fisher_yates(p, s, &mut stream.fork(i as u64).rng());
                to_set(&positions)
            })
            .collect()),
        SubblockPolicy::Disjoint => {
            if s * t > p {
                return Err(invalid(
                    "t",
                    format!("disjoint blocks need s * t <= {p}, got {}", s * t),
                ));
            }
            let positions = partial_fisher_yates(p, s * t, &mut stream.rng());
            Ok(positions.chunks(s).map(to_set).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_support() {
        let z = draw_block(4, 1, ProbeDistribution::Rademacher, &RngStream::new(1, 2)).unwrap();
        assert!(z.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn gaussian_mean_clt() {
        let z = draw_block(1000, 1, ProbeDistribution::Gaussian, &RngStream::new(9, 0)).unwrap();
        let mean = z.sum() / 1000.0;
        assert!(mean.abs() < 4.0 / 1000f64.sqrt());
    }

    #[test]
    fn draws_are_deterministic() {
        let s = RngStream::new(5, 5).with_trial(2);
        let a = draw_block(10, 3, ProbeDistribution::Gaussian, &s).unwrap();
        let b = draw_block(10, 3, ProbeDistribution::Gaussian, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn block_too_wide() {
        assert!(draw_block(3, 4, ProbeDistribution::Gaussian, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn diagonal_qr_gives_identity() {
        let z = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let v = orthonormalize(z).unwrap();
        assert!((v.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn orthonormal_input_is_kept() {
        let z = draw_block(8, 3, ProbeDistribution::Gaussian, &RngStream::new(3, 1)).unwrap();
        let v = orthonormalize(z).unwrap();
        let w = orthonormalize(v.matrix().clone()).unwrap();
        assert!((v.matrix() - w.matrix()).amax() < 1e-12);
    }

    #[test]
    fn orthonormality() {
        let v = draw_orthonormal(30, 7, ProbeDistribution::Rademacher, &RngStream::new(4, 4)).unwrap();
        let g = v.matrix().tr_mul(v.matrix());
        assert!((g - DMatrix::<f64>::identity(7, 7)).amax() < 1e-12);
        let full = draw_orthonormal(6, 6, ProbeDistribution::Gaussian, &RngStream::new(4, 5)).unwrap();
        let p = full.matrix() * full.matrix().transpose();
        assert!((p - DMatrix::<f64>::identity(6, 6)).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_rejected() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(
            orthonormalize(z).err().unwrap(),
            TraceError::RankDeficient { attempts: 1 }
        );
    }

    #[test]
    fn exhaustive_index_set() {
        let s = sample_index_set(5, 5, &RngStream::new(0, 0)).unwrap();
        assert_eq!(s.as_slice(), &[0, 1, 2, 3, 4]);
        assert!(sample_index_set(5, 6, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn large_index_set() {
        let s = sample_index_set(1_000_000, 64, &RngStream::new(11, 0)).unwrap();
        assert_eq!(s.len(), 64);
        assert!(s.as_slice().windows(2).all(|w| w[0] < w[1]));
        assert!(*s.as_slice().last().unwrap() < 1_000_000);
    }

    #[test]
    fn index_frequencies() {
        let draws = 100_000;
        let mut counts = [0usize; 4];
        let base = RngStream::new(21, 0);
        for t in 0..draws {
            let s = sample_index_set(4, 1, &base.with_trial(t)).unwrap();
            counts[s.as_slice()[0]] += 1;
        }
        let p: f64 = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn disjoint_blocks() {
        let pool: Vec<usize> = (0..40).collect();
        let blocks =
            sample_subblocks(&pool, 5, 8, SubblockPolicy::Disjoint, &RngStream::new(2, 2)).unwrap();
        let mut all: Vec<usize> = blocks.iter().flat_map(|b| b.iter()).collect();
        all.sort_unstable();
        assert_eq!(all, pool);
        assert!(sample_subblocks(&pool, 5, 9, SubblockPolicy::Disjoint, &RngStream::new(2, 2)).is_err());
    }

    #[test]
    fn index_set_validation() {
        assert!(IndexSet::new(vec![1, 1], 3).is_err());
        assert!(IndexSet::new(vec![2, 1], 3).is_err());
        assert!(IndexSet::new(vec![0, 3], 3).is_err());
        assert_eq!(IndexSet::from_unsorted(vec![2, 0], 3).unwrap().as_slice(), &[0, 2]);
    }
}
