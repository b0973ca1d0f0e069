//! Block Lanczos with full reorthogonalization and the associated Gauss
//! quadrature for block quadratic forms `tr(V^T f(A) V)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result, TraceError};
use crate::linop::LinearOperator;
use crate::probes::ProbeBlock;
use crate::spectral::SpectralFn;

/// Relative threshold (against the running `||A||` estimate) below which a
/// residual direction is treated as dead.
const BREAKDOWN_TOL: f64 = 1e-12;

/// The (block-)tridiagonal matrix produced by Lanczos and its eigendecomposition.
#[derive(Debug, Clone)]
pub struct JacobiMatrix {
    t: DMatrix<f64>,
    block_size: usize,
    block_widths: Vec<usize>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    early_breakdown: bool,
    matvecs: usize,
}

impl JacobiMatrix {
    fn from_t(
        t: DMatrix<f64>,
        block_widths: Vec<usize>,
        early_breakdown: bool,
        matvecs: usize,
    ) -> Self {
        let eig = SymmetricEigen::new(t.clone());
        Self {
            block_size: block_widths[0],
            t,
            block_widths,
            eigvals: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
            early_breakdown,
            matvecs,
        }
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Lanczos steps actually taken.
    pub fn steps(&self) -> usize {
        self.block_widths.len()
    }

    /// Width of each basis block; later blocks shrink after deflation.
    pub fn block_widths(&self) -> &[usize] {
        &self.block_widths
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn early_breakdown(&self) -> bool {
        self.early_breakdown
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// `w_j = sum_{r < b} U_{rj}^2`; sums to `b`.
    pub fn weights(&self) -> Vec<f64> {
        let b = self.block_size;
        (0..self.eigvecs.ncols())
            .map(|j| (0..b).map(|r| self.eigvecs[(r, j)].powi(2)).sum())
            .collect()
    }

    /// `max |T - U diag(mu) U^T|`.
    pub fn reconstruction_error(&self) -> f64 {
        let mut scaled = self.eigvecs.clone();
        for (c, mu) in self.eigvals.iter().enumerate() {
            scaled.column_mut(c).scale_mut(*mu);
        }
        (&self.t - scaled * self.eigvecs.transpose()).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub clamped: bool,
}

/// `eta = sum_j w_j f(mu_j)`, the Gauss estimate of `tr(V0^T f(A) V0)`.
pub fn quadrature(j: &JacobiMatrix, f: &SpectralFn) -> Result<Quadrature> {
    let (fvals, clamped) = f.eval_nodes(j.eigvals.as_slice())?;
    let value = j.weights().iter().zip(&fvals).map(|(w, fv)| w * fv).sum();
    Ok(Quadrature { value, clamped })
}

fn check_inputs(op: &dyn LinearOperator, n: usize, k: usize) -> Result<()> {
    if !op.is_symmetric() {
        return Err(TraceError::NotSymmetric);
    }
    if n != op.dim() {
        return Err(TraceError::DimensionMismatch {
            expected: op.dim(),
            found: n,
        });
    }
    if k == 0 {
        return Err(invalid("k", "need at least one Lanczos step"));
    }
    Ok(())
}

/// Subtracts the projection of `w` onto every block in `basis`.
fn project_out(w: &mut DMatrix<f64>, basis: &[DMatrix<f64>]) {
    for q in basis {
        let c = q.tr_mul(w);
        w.gemm(-1.0, q, &c, 1.0);
    }
}

/// Orthonormalizes the columns of `w` by twice-iterated Gram-Schmidt, dropping
/// directions whose norm falls below `tol`. Returns `(Q, B)` with `w ~ Q B`;
/// `B` has one row per kept column and a positive entry on each kept pivot.
fn deflated_qr(
    w: &DMatrix<f64>,
    basis: &[DMatrix<f64>],
    tol: f64,
    max_new: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, b) = w.shape();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    for c in 0..b {
        let mut v: DVector<f64> = w.column(c).into_owned();
        let mut r = vec![0.0; kept.len()];
        for _ in 0..2 {
            for q in basis {
                let proj = q.tr_mul(&v);
                v.gemv(-1.0, q, &proj, 1.0);
            }
            for (i, q) in kept.iter().enumerate() {
                let p = q.dot(&v);
                v.axpy(-p, q, 1.0);
                r[i] += p;
            }
        }
        let nu = v.norm();
        if nu > tol && kept.len() < max_new {
            r.push(nu);
            kept.push(v / nu);
        }
        coeffs.push(r);
    }
    let r = kept.len();
    let q = if r == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&kept)
    };
    let mut bmat = DMatrix::zeros(r, b);
    for (c, col) in coeffs.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            bmat[(i, c)] = *v;
        }
    }
    (q, bmat)
}

fn assemble(diag: &[DMatrix<f64>], off: &[DMatrix<f64>]) -> (DMatrix<f64>, Vec<usize>) {
    let widths: Vec<usize> = diag.iter().map(|d| d.nrows()).collect();
    let total: usize = widths.iter().sum();
    let mut t = DMatrix::zeros(total, total);
    let mut offset = 0;
    for (j, a) in diag.iter().enumerate() {
        let wj = widths[j];
        t.view_mut((offset, offset), (wj, wj)).copy_from(a);
        if let Some(bj) = off.get(j) {
            let wn = bj.nrows();
            t.view_mut((offset + wj, offset), (wn, wj)).copy_from(bj);
            t.view_mut((offset, offset + wj), (wj, wn))
                .copy_from(&bj.transpose());
        }
        offset += wj;
    }
    (t, widths)
}

/// Block Lanczos from `v0` for up to `k` steps.
///
/// Every new block is reorthogonalized twice against the whole basis. When a
/// residual block loses rank the dead directions are dropped and the
/// recursion continues with the narrower block; if nothing survives (or the
/// basis already spans the space) the run stops early.
pub fn block_lanczos(op: &dyn LinearOperator, v0: &ProbeBlock, k: usize) -> Result<JacobiMatrix> {
    block_lanczos_with_basis(op, v0, k).map(|(j, _)| j)
}

/// As [`block_lanczos`], also returning the concatenated basis `Q`.
pub fn block_lanczos_with_basis(
    op: &dyn LinearOperator,
    v0: &ProbeBlock,
    k: usize,
) -> Result<(JacobiMatrix, DMatrix<f64>)> {
    let n = v0.n();
    check_inputs(op, n, k)?;
    let mut blocks: Vec<DMatrix<f64>> = vec![v0.matrix().clone()];
    let mut diag: Vec<DMatrix<f64>> = Vec::new();
    let mut off: Vec<DMatrix<f64>> = Vec::new();
    let mut norm_est: f64 = 0.0;
    let mut matvecs = 0;
    let mut early = false;
    let mut dim = v0.block_size();

    for j in 0..k {
        let q = &blocks[j];
        let mut w = op.apply(q)?;
        matvecs += q.ncols();
        norm_est = w
            .column_iter()
            .map(|c| c.norm())
            .fold(norm_est, f64::max);
        let mut a = q.tr_mul(&w);
        crate::linop::symmetrize_in_place(&mut a);
        w.gemm(-1.0, q, &a, 1.0);
        if j > 0 {
            w.gemm(-1.0, &blocks[j - 1], &off[j - 1].transpose(), 1.0);
        }
        project_out(&mut w, &blocks);
        project_out(&mut w, &blocks);
        diag.push(a);
        if j + 1 == k {
            break;
        }
        let (q_next, b_next) = deflated_qr(&w, &blocks, BREAKDOWN_TOL * norm_est, n - dim);
        if q_next.ncols() == 0 {
            early = true;
            break;
        }
        dim += q_next.ncols();
        off.push(b_next);
        blocks.push(q_next);
    }

    let (t, widths) = assemble(&diag, &off);
    let basis = DMatrix::from_columns(
        &blocks
            .iter()
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
            .collect::<Vec<_>>(),
    );
    Ok((JacobiMatrix::from_t(t, widths, early, matvecs), basis))
}

/// Three-term Lanczos from a unit vector, with full reorthogonalization.
pub fn scalar_lanczos(op: &dyn LinearOperator, v: &DVector<f64>, k: usize) -> Result<JacobiMatrix> {
    scalar_lanczos_with_basis(op, v, k).map(|(j, _)| j)
}

fn scalar_lanczos_with_basis(
    op: &dyn LinearOperator,
    v: &DVector<f64>,
    k: usize,
) -> Result<(JacobiMatrix, DMatrix<f64>)> {
    let n = v.len();
    check_inputs(op, n, k)?;
    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut norm_est: f64 = 0.0;
    let mut early = false;

    for j in 0..k {
        let qj = DMatrix::from_column_slice(n, 1, basis[j].as_slice());
        let w = op.apply(&qj)?;
        let mut w = DVector::from_column_slice(w.as_slice());
        norm_est = norm_est.max(w.norm());
        let a = basis[j].dot(&w);
        w.axpy(-a, &basis[j], 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &basis[j - 1], 1.0);
        }
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&w);
                w.axpy(-p, q, 1.0);
            }
        }
        alpha.push(a);
        if j + 1 == k {
            break;
        }
        let b = w.norm();
        if !(b > BREAKDOWN_TOL * norm_est) || basis.len() == n {
            early = true;
            break;
        }
        beta.push(b);
        basis.push(w / b);
    }

    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for (i, a) in alpha.iter().enumerate() {
        t[(i, i)] = *a;
    }
    for i in 0..m.saturating_sub(1) {
        t[(i + 1, i)] = beta[i];
        t[(i, i + 1)] = beta[i];
    }
    let q = DMatrix::from_columns(&basis[..m]);
    Ok((JacobiMatrix::from_t(t, vec![1; m], early, m), q))
}

/// Approximates `f(A) x` by `|x| Q f(T) e_1` from `k` scalar Lanczos steps.
///
/// Exact when `f` is a polynomial of degree below the number of steps taken.
pub fn lanczos_function_action(
    op: &dyn LinearOperator,
    x: &DVector<f64>,
    k: usize,
    f: &SpectralFn,
) -> Result<FunctionAction> {
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(FunctionAction {
            value: DVector::zeros(x.len()),
            matvecs: 0,
            clamped: false,
        });
    }
    let (j, q) = scalar_lanczos_with_basis(op, &(x / norm), k)?;
    let (fvals, clamped) = f.eval_nodes(j.eigvals.as_slice())?;
    let u = &j.eigvecs;
    let coeff = DVector::from_iterator(
        fvals.len(),
        fvals.iter().enumerate().map(|(c, fv)| fv * u[(0, c)]),
    );
    let ft_e1 = u * coeff;
    Ok(FunctionAction {
        value: (q * ft_e1) * norm,
        matvecs: j.matvecs,
        clamped,
    })
}

#[derive(Debug, Clone)]
pub struct FunctionAction {
    pub value: DVector<f64>,
    pub matvecs: usize,
    pub clamped: bool,
}
