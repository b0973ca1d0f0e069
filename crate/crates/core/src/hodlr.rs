//! Symmetric HODLR matrices: peeling construction from matvecs, fast apply,
//! Woodbury solve, and proxy-KL certification of a compressed operator.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, LU};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::divergence::{proxy_kl, ProxyKlConfig};
use crate::error::{invalid, Result, TraceError};
use crate::estimators::TraceEstimate;
use crate::linop::{make_sandwich, DenseOperator, LinearOperator, OperatorHandle};
use crate::rng::RngStream;
use crate::spectral::SpectralFn;

/// Off-diagonal coupling of one internal node: `A(alpha, beta) = U diag(S) W^T`,
/// with `A(beta, alpha)` its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCoupling {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl LowRankCoupling {
    fn zero(rows: usize, cols: usize) -> Self {
        Self {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            w: DMatrix::zeros(cols, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, sv) in self.s.iter().enumerate() {
            us.column_mut(c).scale_mut(*sv);
        }
        us * self.w.transpose()
    }
}

/// A balanced binary HODLR tree stored level by level.
///
/// Level `l` (1-based) has `2^(l-1)` internal nodes; node `i` covers a
/// contiguous range split into halves `alpha` (left) and `beta` (right).
/// The `2^levels` leaves are dense diagonal blocks.
#[derive(Debug)]
pub struct HodlrMatrix {
    n: usize,
    couplings: Vec<Vec<LowRankCoupling>>,
    leaves: Vec<DMatrix<f64>>,
    flops: AtomicU64,
}

impl Clone for HodlrMatrix {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            couplings: self.couplings.clone(),
            leaves: self.leaves.clone(),
            flops: AtomicU64::new(0),
        }
    }
}

fn check_partition(n: usize, levels: usize) -> Result<()> {
    if n == 0 || levels >= usize::BITS as usize || n % (1usize << levels) != 0 {
        return Err(invalid(
            "levels",
            format!("n = {n} must be a positive multiple of 2^{levels}"),
        ));
    }
    Ok(())
}

impl HodlrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.couplings.len()
    }

    pub fn couplings(&self, level: usize) -> &[LowRankCoupling] {
        &self.couplings[level - 1]
    }

    pub fn leaves(&self) -> &[DMatrix<f64>] {
        &self.leaves
    }

    pub fn leaf_size(&self) -> usize {
        self.n >> self.levels()
    }

    /// Maximum stored rank at each level.
    pub fn ranks(&self) -> Vec<usize> {
        self.couplings
            .iter()
            .map(|lvl| lvl.iter().map(|c| c.rank()).max().unwrap_or(0))
            .collect()
    }

    /// `(start, half)`: node `i` of `level` covers `start..start + 2 * half`.
    fn node_range(&self, level: usize, i: usize) -> (usize, usize) {
        let size = self.n >> (level - 1);
        (i * size, size / 2)
    }

    /// Stored scalars: leaf entries plus all factor entries.
    pub fn stored_entries(&self) -> usize {
        let leaf: usize = self.leaves.iter().map(|d| d.len()).sum();
        let factors: usize = self
            .couplings
            .iter()
            .flatten()
            .map(|c| c.u.len() + c.s.len() + c.w.len())
            .sum();
        leaf + factors
    }

    /// Multiply-adds performed by `apply` since construction or the last reset.
    pub fn flops(&self) -> u64 {
        self.flops.load(Ordering::Relaxed)
    }

    pub fn reset_flops(&self) {
        self.flops.store(0, Ordering::Relaxed);
    }

    fn add_offdiag(&self, x: &DMatrix<f64>, y: &mut DMatrix<f64>, upto: usize) -> u64 {
        let b = x.ncols();
        let mut flops = 0u64;
        for level in 1..=upto.min(self.levels()) {
            for (i, c) in self.couplings[level - 1].iter().enumerate() {
                let r = c.rank();
                if r == 0 {
                    continue;
                }
                let (start, half) = self.node_range(level, i);
                let xa = x.rows(start, half);
                let xb = x.rows(start + half, half);
                let mut tb = c.w.tr_mul(&xb);
                let mut ta = c.u.tr_mul(&xa);
                for k in 0..r {
                    tb.row_mut(k).scale_mut(c.s[k]);
                    ta.row_mut(k).scale_mut(c.s[k]);
                }
                let ya = &c.u * tb;
                let yb = &c.w * ta;
                let mut top = y.rows_mut(start, half);
                top += ya;
                let mut bottom = y.rows_mut(start + half, half);
                bottom += yb;
                flops += (4 * half * r * b + 2 * r * b) as u64;
            }
        }
        flops
    }

    fn apply_leaves(&self, x: &DMatrix<f64>, y: &mut DMatrix<f64>) -> u64 {
        let w = self.leaf_size();
        for (i, d) in self.leaves.iter().enumerate() {
            let yi = d * x.rows(i * w, w);
            y.rows_mut(i * w, w).copy_from(&yi);
        }
        (self.leaves.len() * w * w * x.ncols()) as u64
    }

    /// `H X`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(TraceError::DimensionMismatch {
                expected: self.n,
                found: x.nrows(),
            });
        }
        let mut y = DMatrix::zeros(self.n, x.ncols());
        let mut flops = self.apply_leaves(x, &mut y);
        flops += self.add_offdiag(x, &mut y, self.levels());
        self.flops.fetch_add(flops, Ordering::Relaxed);
        Ok(y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        let w = self.leaf_size();
        for (i, d) in self.leaves.iter().enumerate() {
            a.view_mut((i * w, i * w), (w, w)).copy_from(d);
        }
        for level in 1..=self.levels() {
            for (i, c) in self.couplings[level - 1].iter().enumerate() {
                let (start, half) = self.node_range(level, i);
                let blk = c.dense();
                a.view_mut((start, start + half), (half, half)).copy_from(&blk);
                a.view_mut((start + half, start), (half, half))
                    .copy_from(&blk.transpose());
            }
        }
        a
    }

    /// Compresses a dense symmetric matrix by truncated SVD of each off-diagonal block.
    pub fn from_dense(a: &DMatrix<f64>, levels: usize, rank: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(TraceError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        check_partition(n, levels)?;
        let couplings = (1..=levels)
            .map(|level| {
                let size = n >> (level - 1);
                let half = size / 2;
                (0..1usize << (level - 1))
                    .map(|i| {
                        let start = i * size;
                        let blk = a.view((start, start + half), (half, half)).into_owned();
                        truncate(&DMatrix::identity(half, half), &blk, rank)
                    })
                    .collect()
            })
            .collect();
        let w = n >> levels;
        let leaves = (0..1usize << levels)
            .map(|i| a.view((i * w, i * w), (w, w)).into_owned())
            .collect();
        Ok(Self {
            n,
            couplings,
            leaves,
            flops: AtomicU64::new(0),
        })
    }
}

/// Rank-`rank` factors of `Q M` from the SVD of the small matrix `M`.
fn truncate(q: &DMatrix<f64>, m: &DMatrix<f64>, rank: usize) -> LowRankCoupling {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let keep: Vec<usize> = order
        .into_iter()
        .take(rank)
        .filter(|&i| svd.singular_values[i] > 0.0)
        .collect();
    if keep.is_empty() {
        return LowRankCoupling::zero(q.nrows(), m.ncols());
    }
    LowRankCoupling {
        u: q * u.select_columns(&keep),
        s: DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i])),
        w: vt.select_rows(&keep).transpose(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeelConfig {
    pub levels: usize,
    pub rank: usize,
    pub oversample: usize,
    pub power_iterations: usize,
}

impl PeelConfig {
    pub fn new(levels: usize, rank: usize) -> Self {
        Self {
            levels,
            rank,
            oversample: 8,
            power_iterations: 1,
        }
    }

    /// Upper bound on source matvecs charged by [`peel_build`] for dimension `n`.
    pub fn matvec_budget(&self, n: usize) -> u64 {
        let p = (self.rank + self.oversample) as u64;
        let leaf = (n >> self.levels) as u64;
        self.levels as u64 * 2 * p * (1 + self.power_iterations as u64) * 2 + leaf
    }
}

fn orth(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Builds a symmetric HODLR approximation of `op` from matvecs alone.
///
/// Level by level, structured Gaussian probes supported on the right half of
/// every node are applied to the residual `A - H_coarse`; the rows of each
/// left half then sample `A(alpha, beta)`. The range is refined by power
/// iterations and the block is truncated to `rank` by an SVD. Leaves come from
/// applying the final residual to `leaf_size` interleaved coordinate vectors.
pub fn peel_build(op: &dyn LinearOperator, cfg: &PeelConfig, stream: &RngStream) -> Result<HodlrMatrix> {
    if !op.is_symmetric() {
        return Err(TraceError::NotSymmetric);
    }
    let n = op.dim();
    check_partition(n, cfg.levels)?;
    let mut h = HodlrMatrix {
        n,
        couplings: Vec::with_capacity(cfg.levels),
        leaves: Vec::new(),
        flops: AtomicU64::new(0),
    };

    // Residual apply: A X minus the coarser off-diagonal interactions already recovered.
    let residual = |h: &HodlrMatrix, x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut y = op.apply(x)?;
        let mut coarse = DMatrix::zeros(n, x.ncols());
        h.add_offdiag(x, &mut coarse, h.levels());
        y -= coarse;
        Ok(y)
    };

    for level in 1..=cfg.levels {
        let nodes = 1usize << (level - 1);
        let size = n >> (level - 1);
        let half = size / 2;
        let wanted = cfg.rank + cfg.oversample;
        let p = wanted.min(half);
        if p < wanted {
            log::warn!("level {level}: rank + oversample {wanted} exceeds block size {half}, using {p}");
        }
        let rank = cfg.rank.min(p);
        let alpha = |i: usize| i * size;
        let beta = |i: usize| i * size + half;

        let mut rng = stream.fork(level as u64).rng();
        let mut omega = DMatrix::zeros(n, p);
        for i in 0..nodes {
            for r in beta(i)..beta(i) + half {
                for c in 0..p {
                    omega[(r, c)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let y = residual(&h, &omega)?;
        let mut q: Vec<DMatrix<f64>> = (0..nodes)
            .map(|i| orth(y.rows(alpha(i), half).into_owned()))
            .collect();

        for _ in 0..cfg.power_iterations {
            let mut om = DMatrix::zeros(n, p);
            for (i, qi) in q.iter().enumerate() {
                om.rows_mut(alpha(i), half).copy_from(qi);
            }
            let y = residual(&h, &om)?;
            let pb: Vec<DMatrix<f64>> = (0..nodes)
                .map(|i| orth(y.rows(beta(i), half).into_owned()))
                .collect();
            let mut om = DMatrix::zeros(n, p);
            for (i, pi) in pb.iter().enumerate() {
                om.rows_mut(beta(i), half).copy_from(pi);
            }
            let y = residual(&h, &om)?;
            q = (0..nodes)
                .map(|i| orth(y.rows(alpha(i), half).into_owned()))
                .collect();
        }

        let mut om = DMatrix::zeros(n, p);
        for (i, qi) in q.iter().enumerate() {
            om.rows_mut(alpha(i), half).copy_from(qi);
        }
        let y = residual(&h, &om)?;
        let level_couplings: Vec<LowRankCoupling> = q
            .par_iter()
            .enumerate()
            .map(|(i, qi)| {
                let bt = y.rows(beta(i), half).transpose();
                truncate(qi, &bt, rank)
            })
            .collect();
        h.couplings.push(level_couplings);
    }

    let w = n >> cfg.levels;
    let mut e = DMatrix::zeros(n, w);
    for leaf in 0..1usize << cfg.levels {
        for j in 0..w {
            e[(leaf * w + j, j)] = 1.0;
        }
    }
    let y = residual(&h, &e)?;
    h.leaves = (0..1usize << cfg.levels)
        .map(|leaf| {
            let mut d = y.rows(leaf * w, w).into_owned();
            crate::linop::symmetrize_in_place(&mut d);
            d
        })
        .collect();
    Ok(h)
}

const MAX_CONDITION: f64 = 1e12;

fn condition(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

struct NodeFactor {
    /// `D^-1 Z` with `Z = blkdiag(U, W)`.
    dinv_z: DMatrix<f64>,
    /// LU of the capacitance `I + C Z^T D^-1 Z`.
    cap: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Hierarchical factorization of a [`HodlrMatrix`] for repeated solves.
pub struct HodlrFactor<'a> {
    h: &'a HodlrMatrix,
    leaves: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    nodes: Vec<Vec<NodeFactor>>,
}

/// Factors the leaves densely and every internal node through the Woodbury
/// identity `(D + Z C Z^T)^-1 = D^-1 - D^-1 Z (I + C Z^T D^-1 Z)^-1 C Z^T D^-1`.
///
/// A leaf or capacitance matrix with condition number above `1e12` is
/// reported as singular together with its level and block index (leaves are
/// level `levels + 1`).
pub fn factorize(h: &HodlrMatrix) -> Result<HodlrFactor<'_>> {
    let levels = h.levels();
    let leaves = h
        .leaves
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if condition(d) > MAX_CONDITION {
                return Err(TraceError::Singular {
                    what: "leaf",
                    level: levels + 1,
                    block: i,
                });
            }
            Ok(d.clone().lu())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f = HodlrFactor {
        h,
        leaves,
        nodes: (0..levels).map(|_| Vec::new()).collect(),
    };
    for level in (1..=levels).rev() {
        let mut facs = Vec::with_capacity(1 << (level - 1));
        for (i, c) in h.couplings[level - 1].iter().enumerate() {
            let (_, half) = h.node_range(level, i);
            let r = c.rank();
            let mut z = DMatrix::zeros(2 * half, 2 * r);
            z.view_mut((0, 0), (half, r)).copy_from(&c.u);
            z.view_mut((half, r), (half, r)).copy_from(&c.w);
            let mut dinv_z = DMatrix::zeros(2 * half, 2 * r);
            dinv_z
                .rows_mut(0, half)
                .copy_from(&f.solve_node(level + 1, 2 * i, z.rows(0, half).into_owned()));
            dinv_z
                .rows_mut(half, half)
                .copy_from(&f.solve_node(level + 1, 2 * i + 1, z.rows(half, half).into_owned()));
            let ztdz = z.tr_mul(&dinv_z);
            let cap = DMatrix::<f64>::identity(2 * r, 2 * r) + apply_c(&c.s, &ztdz);
            if condition(&cap) > MAX_CONDITION {
                return Err(TraceError::Singular {
                    what: "capacitance",
                    level,
                    block: i,
                });
            }
            facs.push(NodeFactor {
                dinv_z,
                cap: cap.lu(),
            });
        }
        f.nodes[level - 1] = facs;
    }
    Ok(f)
}

/// `C X` with `C = [[0, S], [S, 0]]`.
fn apply_c(s: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let r = s.len();
    let mut out = DMatrix::zeros(2 * r, x.ncols());
    for k in 0..r {
        out.row_mut(k).copy_from(&(x.row(r + k) * s[k]));
        out.row_mut(r + k).copy_from(&(x.row(k) * s[k]));
    }
    out
}

impl HodlrFactor<'_> {
    fn solve_node(&self, level: usize, i: usize, y: DMatrix<f64>) -> DMatrix<f64> {
        if level > self.h.levels() {
            return self.leaves[i].solve(&y).expect("leaf conditioning checked");
        }
        let half = y.nrows() / 2;
        let nf = &self.nodes[level - 1][i];
        let c = &self.h.couplings[level - 1][i];
        let r = c.rank();
        let mut x0 = DMatrix::zeros(y.nrows(), y.ncols());
        x0.rows_mut(0, half)
            .copy_from(&self.solve_node(level + 1, 2 * i, y.rows(0, half).into_owned()));
        x0.rows_mut(half, half)
            .copy_from(&self.solve_node(level + 1, 2 * i + 1, y.rows(half, half).into_owned()));
        if r == 0 {
            return x0;
        }
        let mut t = DMatrix::zeros(2 * r, y.ncols());
        t.rows_mut(0, r).copy_from(&c.u.tr_mul(&x0.rows(0, half)));
        t.rows_mut(r, r).copy_from(&c.w.tr_mul(&x0.rows(half, half)));
        let z = nf
            .cap
            .solve(&apply_c(&c.s, &t))
            .expect("capacitance conditioning checked");
        x0 - &nf.dinv_z * z
    }

    /// `H^-1 Y`.
    pub fn solve(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.h.n {
            return Err(TraceError::DimensionMismatch {
                expected: self.h.n,
                found: y.nrows(),
            });
        }
        let x = self.solve_node(1, 0, y.clone());
        if cfg!(debug_assertions) {
            let res = (self.h.apply(&x)? - y).norm();
            if res > 1e-8 * y.norm() {
                log::warn!("HODLR solve residual {res:e} against |y| = {:e}", y.norm());
            }
        }
        Ok(x)
    }
}

/// `H^-1 y` for a single right-hand side.
pub fn hodlr_solve(h: &HodlrMatrix, y: &DVector<f64>) -> Result<DVector<f64>> {
    let x = factorize(h)?.solve(&DMatrix::from_column_slice(y.len(), 1, y.as_slice()))?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// A matrix `W` with `W^T H W = I`: the inverse transposed Cholesky factor of
/// `dense(H)`, or `V diag(max(l, floor))^-1/2` from its eigendecomposition
/// when `H` is not positive definite. The flag reports the fallback.
pub fn whitening_factor(h: &HodlrMatrix) -> Result<(DMatrix<f64>, bool)> {
    let n = h.n;
    let mut hd = h.to_dense();
    crate::linop::symmetrize_in_place(&mut hd);
    if let Some(chol) = Cholesky::new(hd.clone()) {
        let linv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| TraceError::NotPositiveDefinite("HODLR factor".into()))?;
        return Ok((linv.transpose(), false));
    }
    log::warn!("HODLR reconstruction is not positive definite; clamping its spectrum");
    let eig = SymmetricEigen::new(hd);
    let floor = 1e-12 * eig.eigenvalues.amax();
    let mut w = eig.eigenvectors.clone();
    for (c, l) in eig.eigenvalues.iter().enumerate() {
        w.column_mut(c).scale_mut(1.0 / l.max(floor).sqrt());
    }
    Ok((w, true))
}

/// `B_sym = W^T A W`, similar to `H^-1 A`, as a matrix-free operator.
pub fn whitened_operator(h: &HodlrMatrix, op: OperatorHandle) -> Result<(OperatorHandle, bool)> {
    if op.dim() != h.n {
        return Err(TraceError::DimensionMismatch {
            expected: h.n,
            found: op.dim(),
        });
    }
    let (w, fallback) = whitening_factor(h)?;
    let factor: OperatorHandle = Arc::new(DenseOperator::general(w)?);
    Ok((make_sandwich(factor, op)?, fallback))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodlrProxyKl {
    pub estimate: TraceEstimate,
    /// `H` was not positive definite and its spectrum was clamped.
    pub fallback: bool,
}

/// Proxy KL of `A` against its HODLR approximation `H`: subblock SLQ with
/// `f(x) = x - ln x - 1` on `B_sym`, whose subblocks are extracted by
/// `s` applies each.
pub fn hodlr_proxy_kl(
    h: &HodlrMatrix,
    op: OperatorHandle,
    cfg: &ProxyKlConfig,
    stream: &RngStream,
) -> Result<HodlrProxyKl> {
    let (b, fallback) = whitened_operator(h, op)?;
    let mut cfg = cfg.clone();
    cfg.assume_full_rank = true;
    let estimate = proxy_kl(b.as_ref(), &cfg, stream)?;
    Ok(HodlrProxyKl { estimate, fallback })
}

/// Dense `B_sym` for diagnostics at desk scale.
pub fn whitened_dense(h: &HodlrMatrix, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != h.n {
        return Err(TraceError::DimensionMismatch {
            expected: h.n,
            found: a.nrows(),
        });
    }
    let (w, _) = whitening_factor(h)?;
    let mut b = w.transpose() * a * &w;
    crate::linop::symmetrize_in_place(&mut b);
    Ok(b)
}

/// `1/2 tr f(B_sym)` by dense eigendecomposition.
pub fn dense_proxy_kl(h: &HodlrMatrix, a: &DMatrix<f64>) -> Result<f64> {
    Ok(0.5 * SpectralFn::KlLoss.trace_of_dense(&whitened_dense(h, a)?)?)
}

/// Extreme eigenvalues of `B_sym`.
pub fn eig_span(h: &HodlrMatrix, a: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = SymmetricEigen::new(whitened_dense(h, a)?).eigenvalues;
    Ok((eig.min(), eig.max()))
}

/// `||dense(H) - A||_F / ||A||_F`.
pub fn relative_frobenius_error(h: &HodlrMatrix, a: &DMatrix<f64>) -> f64 {
    (h.to_dense() - a).norm() / a.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::make_dense;

    #[test]
    fn identity_apply_and_solve() {
        let h = HodlrMatrix::from_dense(&DMatrix::identity(16, 16), 2, 2).unwrap();
        let x = DMatrix::from_fn(16, 2, |i, j| (i + 3 * j) as f64);
        assert_eq!(h.apply(&x).unwrap(), x);
        let y = DVector::from_fn(16, |i, _| i as f64 - 4.0);
        assert!((hodlr_solve(&h, &y).unwrap() - &y).amax() < 1e-14);
    }

    #[test]
    fn block_diagonal_peel() {
        let mut a = DMatrix::zeros(8, 8);
        for i in 0..4 {
            a[(i, i)] = 2.0 + i as f64;
            a[(i + 4, i + 4)] = 1.0;
        }
        a[(0, 1)] = 0.5;
        a[(1, 0)] = 0.5;
        let op = make_dense(a.clone()).unwrap();
        let h = peel_build(op.as_ref(), &PeelConfig::new(1, 1), &RngStream::new(1, 1)).unwrap();
        assert!(h.couplings(1)[0].s.iter().all(|&s| s.abs() < 1e-12));
        assert!((h.to_dense() - a).amax() < 1e-12);
    }

    #[test]
    fn rank_one_coupling_is_exact() {
        let u = DVector::from_fn(4, |i, _| 1.0 + i as f64);
        let w = DVector::from_fn(4, |i, _| 0.5 - i as f64);
        let mut a = DMatrix::<f64>::identity(8, 8) * 10.0;
        let blk = &u * w.transpose();
        a.view_mut((0, 4), (4, 4)).copy_from(&blk);
        a.view_mut((4, 0), (4, 4)).copy_from(&blk.transpose());
        let op = make_dense(a.clone()).unwrap();
        let h = peel_build(op.as_ref(), &PeelConfig::new(1, 1), &RngStream::new(2, 2)).unwrap();
        assert!((h.to_dense() - a).amax() < 1e-10);
    }

    #[test]
    fn odd_partition_rejected() {
        let op = make_dense(DMatrix::identity(6, 6)).unwrap();
        assert!(peel_build(op.as_ref(), &PeelConfig::new(2, 1), &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn singular_leaf_reported() {
        let h = HodlrMatrix::from_dense(&DMatrix::zeros(8, 8), 1, 1).unwrap();
        match factorize(&h) {
            Err(TraceError::Singular { what, level, block }) => {
                assert_eq!((what, level, block), ("leaf", 2, 0));
            }
            _ => panic!("expected a singular leaf"),
        }
    }
}
