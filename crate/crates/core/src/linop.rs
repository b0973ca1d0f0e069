//! Matrix-free linear operators.
//!
//! Every estimator in the crate talks to an [`OperatorHandle`], a shared
//! [`LinearOperator`] trait object. Implementations provide a raw block apply
//! and, optionally, raw entry access; the provided methods on the trait do the
//! bounds checks and bump the [`AccessCounters`] so that matvec and entry
//! budgets can be read back after an experiment.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result, TraceError};
use crate::probes::IndexSet;
use crate::rng::{seed_bytes, RngStream};

pub type OperatorHandle = Arc<dyn LinearOperator>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub block_apply: bool,
    pub entry_access: bool,
    pub subblock_extract: bool,
}

impl Capabilities {
    pub const APPLY_ONLY: Self = Self {
        block_apply: true,
        entry_access: false,
        subblock_extract: false,
    };
    pub const APPLY_AND_EXTRACT: Self = Self {
        block_apply: true,
        entry_access: false,
        subblock_extract: true,
    };
    pub const ALL: Self = Self {
        block_apply: true,
        entry_access: true,
        subblock_extract: true,
    };
}

/// Monotone counters of single-vector applies and individual entry reads.
#[derive(Debug, Default)]
pub struct AccessCounters {
    matvecs: AtomicU64,
    entries: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub matvecs: u64,
    pub entries: u64,
}

impl CounterSnapshot {
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            matvecs: self.matvecs - earlier.matvecs,
            entries: self.entries - earlier.entries,
        }
    }
}

impl AccessCounters {
    pub fn add_matvecs(&self, count: u64) {
        self.matvecs.fetch_add(count, Ordering::Relaxed);
    }

    pub fn add_entries(&self, count: u64) {
        self.entries.fetch_add(count, Ordering::Relaxed);
    }

    pub fn matvecs(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn entries(&self) -> u64 {
        self.entries.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            matvecs: self.matvecs(),
            entries: self.entries(),
        }
    }

    pub fn reset(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
        self.entries.store(0, Ordering::Relaxed);
    }
}

/// A square linear operator accessed through block applies and, when
/// supported, entry reads.
///
/// Implementors supply the `*_raw` methods. Callers should use the provided
/// methods (`apply`, `entry`, `diagonal`, `principal_subblock`), which check
/// dimensions and charge the counters.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn counters(&self) -> &AccessCounters;

    fn is_symmetric(&self) -> bool {
        true
    }

    /// `A * x` for an `n x b` block, without bookkeeping.
    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// `A^T * x`; defaults to `apply_raw` for symmetric operators.
    fn apply_transpose_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_raw(x)
    }

    fn entry_raw(&self, _i: usize, _j: usize) -> Option<f64> {
        None
    }

    fn subblock_raw(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        let s = idx.len();
        let mut out = DMatrix::zeros(s, s);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self.entry_raw(i, j)?;
            }
        }
        Some(out)
    }

    fn diagonal_raw(&self, idx: &[usize]) -> Option<Vec<f64>> {
        idx.iter().map(|&i| self.entry_raw(i, i)).collect()
    }

    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(TraceError::DimensionMismatch {
                expected: self.dim(),
                found: x.nrows(),
            });
        }
        self.counters().add_matvecs(x.ncols() as u64);
        Ok(self.apply_raw(x))
    }

    fn apply_transpose(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(TraceError::DimensionMismatch {
                expected: self.dim(),
                found: x.nrows(),
            });
        }
        self.counters().add_matvecs(x.ncols() as u64);
        Ok(self.apply_transpose_raw(x))
    }

    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.dim();
        for index in [i, j] {
            if index >= n {
                return Err(TraceError::IndexOutOfRange { index, n });
            }
        }
        if !self.capabilities().entry_access {
            return Err(TraceError::CapabilityMissing("entry access"));
        }
        let value = self
            .entry_raw(i, j)
            .ok_or(TraceError::CapabilityMissing("entry access"))?;
        self.counters().add_entries(1);
        Ok(value)
    }

    /// Diagonal entries `A_ii` for `i` in `s`; one entry read per index.
    fn diagonal(&self, s: &IndexSet) -> Result<Vec<f64>> {
        check_indices(s, self.dim())?;
        let caps = self.capabilities();
        if caps.entry_access {
            let d = self
                .diagonal_raw(s.as_slice())
                .ok_or(TraceError::CapabilityMissing("entry access"))?;
            self.counters().add_entries(s.len() as u64);
            Ok(d)
        } else if caps.subblock_extract {
            let y = self.apply(&coordinate_block(self.dim(), s.as_slice()))?;
            Ok(s.iter().enumerate().map(|(c, i)| y[(i, c)]).collect())
        } else {
            Err(TraceError::CapabilityMissing("diagonal access"))
        }
    }

    /// The principal subblock `A(S, S)`.
    ///
    /// Operators with entry access charge `s^2` entry reads; apply-only
    /// operators that allow extraction charge `s` matvecs instead.
    fn principal_subblock(&self, s: &IndexSet) -> Result<DMatrix<f64>> {
        check_indices(s, self.dim())?;
        let caps = self.capabilities();
        if caps.entry_access {
            let block = self
                .subblock_raw(s.as_slice())
                .ok_or(TraceError::CapabilityMissing("entry access"))?;
            self.counters().add_entries((s.len() * s.len()) as u64);
            Ok(block)
        } else if caps.subblock_extract {
            let y = self.apply(&coordinate_block(self.dim(), s.as_slice()))?;
            let mut block = y.select_rows(s.as_slice());
            symmetrize_in_place(&mut block);
            Ok(block)
        } else {
            Err(TraceError::CapabilityMissing("subblock extraction"))
        }
    }
}

fn check_indices(s: &IndexSet, n: usize) -> Result<()> {
    match s.as_slice().last() {
        Some(&last) if last >= n => Err(TraceError::IndexOutOfRange { index: last, n }),
        _ => Ok(()),
    }
}

/// The `n x s` matrix whose columns are the coordinate vectors `e_i`, `i in idx`.
pub fn coordinate_block(n: usize, idx: &[usize]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        e[(i, c)] = 1.0;
    }
    e
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Dense matrix stored in memory.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    symmetric: bool,
    counters: AccessCounters,
}

impl DenseOperator {
    /// A general (not necessarily symmetric) square matrix, e.g. a triangular factor.
    pub fn general(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(TraceError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Ok(Self {
            matrix,
            symmetric: false,
            counters: AccessCounters::default(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    fn apply_transpose_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.matrix.tr_mul(x)
    }

    fn entry_raw(&self, i: usize, j: usize) -> Option<f64> {
        Some(self.matrix[(i, j)])
    }

    fn subblock_raw(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        Some(self.matrix.select_rows(idx).select_columns(idx))
    }
}

/// Wraps a symmetric matrix as an operator.
///
/// The input is replaced by `(M + M^T) / 2`; a warning is logged when the
/// relative asymmetry exceeds `1e-12`.
pub fn make_dense(mut matrix: DMatrix<f64>) -> Result<OperatorHandle> {
    if !matrix.is_square() {
        return Err(TraceError::NotSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let asym = (&matrix - matrix.transpose()).amax() / scale;
    if asym > 1e-12 {
        log::warn!("symmetrizing input with relative asymmetry {asym:.3e}");
    }
    symmetrize_in_place(&mut matrix);
    Ok(Arc::new(DenseOperator {
        matrix,
        symmetric: true,
        counters: AccessCounters::default(),
    }))
}

/// `A = B^T B` for a Gaussian `B` (`m x n`) whose columns are regenerated on demand.
///
/// Column `j` is drawn from ChaCha8 stream `j` of a seed derived from
/// `column_seed`, so it is bit-identical no matter when or how often it is
/// requested. The entry counter charges logical reads of `A`, not of `B`.
pub struct GramOperator {
    rows: usize,
    n: usize,
    column_seed: u64,
    counters: AccessCounters,
}

const GRAM_DOMAIN: u64 = 0x6772_616d;

impl GramOperator {
    pub fn new(rows: usize, n: usize, column_seed: u64) -> Result<Self> {
        if rows == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        Ok(Self {
            rows,
            n,
            column_seed,
            counters: AccessCounters::default(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Regenerates column `j` of `B`.
    pub fn column(&self, j: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        self.fill_column(j, out.as_mut_slice());
        out
    }

    fn fill_column(&self, j: usize, buf: &mut [f64]) {
        let mut rng = ChaCha8Rng::from_seed(seed_bytes(self.column_seed, GRAM_DOMAIN));
        rng.set_stream(j as u64);
        for v in buf.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn column_norm_sq(&self, j: usize, buf: &mut [f64]) -> f64 {
        self.fill_column(j, buf);
        buf.iter().map(|v| v * v).sum()
    }

    /// `tr(A) = ||B||_F^2`, regenerating every column. Not charged to the counters.
    pub fn exact_trace(&self) -> f64 {
        const CHUNK: usize = 4096;
        let chunks = self.n.div_ceil(CHUNK);
        let partials: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut buf = vec![0.0; self.rows];
                let end = ((c + 1) * CHUNK).min(self.n);
                (c * CHUNK..end)
                    .map(|j| self.column_norm_sq(j, &mut buf))
                    .sum::<f64>()
            })
            .collect();
        partials.iter().sum()
    }
}

impl LinearOperator for GramOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let b = x.ncols();
        let mut bx = DMatrix::<f64>::zeros(self.rows, b);
        let mut col = DVector::zeros(self.rows);
        for j in 0..self.n {
            self.fill_column(j, col.as_mut_slice());
            for c in 0..b {
                let xj = x[(j, c)];
                if xj != 0.0 {
                    bx.column_mut(c).axpy(xj, &col, 1.0);
                }
            }
        }
        let mut out = DMatrix::zeros(self.n, b);
        for j in 0..self.n {
            self.fill_column(j, col.as_mut_slice());
            for c in 0..b {
                out[(j, c)] = col.dot(&bx.column(c));
            }
        }
        out
    }

    fn entry_raw(&self, i: usize, j: usize) -> Option<f64> {
        let bi = self.column(i);
        if i == j {
            return Some(bi.norm_squared());
        }
        Some(bi.dot(&self.column(j)))
    }

    fn subblock_raw(&self, idx: &[usize]) -> Option<DMatrix<f64>> {
        let mut cols = DMatrix::zeros(self.rows, idx.len());
        for (c, &j) in idx.iter().enumerate() {
            self.fill_column(j, cols.column_mut(c).as_mut_slice());
        }
        Some(cols.tr_mul(&cols))
    }

    fn diagonal_raw(&self, idx: &[usize]) -> Option<Vec<f64>> {
        let mut buf = vec![0.0; self.rows];
        Some(
            idx.iter()
                .map(|&j| self.column_norm_sq(j, &mut buf))
                .collect(),
        )
    }
}

pub fn make_gram(m: usize, n: usize, seed: u64) -> Result<Arc<GramOperator>> {
    Ok(Arc::new(GramOperator::new(m, n, seed)?))
}

/// `A = L^T Sigma L`, applied as three successive products.
pub struct SandwichOperator {
    factor: OperatorHandle,
    inner: OperatorHandle,
    counters: AccessCounters,
}

impl LinearOperator for SandwichOperator {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::APPLY_AND_EXTRACT
    }

    fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let lx = self.factor.apply_raw(x);
        let slx = self.inner.apply_raw(&lx);
        self.factor.apply_transpose_raw(&slx)
    }
}

pub fn make_sandwich(factor: OperatorHandle, sigma: OperatorHandle) -> Result<OperatorHandle> {
    if factor.dim() != sigma.dim() {
        return Err(TraceError::DimensionMismatch {
            expected: sigma.dim(),
            found: factor.dim(),
        });
    }
    if !sigma.is_symmetric() {
        return Err(TraceError::NotSymmetric);
    }
    Ok(Arc::new(SandwichOperator {
        factor,
        inner: sigma,
        counters: AccessCounters::default(),
    }))
}

type BlockFn = dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync;

/// An operator known only through a closure; no entry access or extraction.
pub struct FnOperator {
    n: usize,
    f: Box<BlockFn>,
    symmetric: bool,
    counters: AccessCounters,
}

impl FnOperator {
    pub fn new(
        n: usize,
        symmetric: bool,
        f: impl Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            f: Box::new(f),
            symmetric,
            counters: AccessCounters::default(),
        }
    }
}

impl LinearOperator for FnOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::APPLY_ONLY
    }

    fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (self.f)(x)
    }
}

/// Materializes an operator by applying it to the identity (charges `n` matvecs).
pub fn dense_realization(op: &dyn LinearOperator) -> Result<DMatrix<f64>> {
    op.apply(&DMatrix::identity(op.dim(), op.dim()))
}

/// Largest `|x^T A y - y^T A x| / (|x| |y| |A|_est)` over random Gaussian pairs.
pub fn symmetry_defect(op: &dyn LinearOperator, pairs: usize, stream: &RngStream) -> Result<f64> {
    let n = op.dim();
    let mut rng = stream.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ax = op.apply(&x)?;
        let ay = op.apply(&y)?;
        let norm_est = (ax.norm() / x.norm()).max(ay.norm() / y.norm());
        if norm_est == 0.0 {
            continue;
        }
        let defect = (x.dot(&ay) - y.dot(&ax)).abs() / (x.norm() * y.norm() * norm_est);
        worst = worst.max(defect);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `exp(-|x-y|^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
    /// `exp(-|x-y| / ell) cos(2 pi nu |x-y|)`
    OscExp { ell: f64, nu: f64 },
}

impl KernelFamily {
    pub fn eval(&self, distance: f64) -> f64 {
        match *self {
            KernelFamily::Rbf { sigma } => (-distance * distance / (2.0 * sigma * sigma)).exp(),
            KernelFamily::OscExp { ell, nu } => {
                (-distance / ell).exp() * (2.0 * std::f64::consts::PI * nu * distance).cos()
            }
        }
    }
}

/// A stationary kernel on 1-D points, with an optional diagonal nugget.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub points: Vec<f64>,
    pub family: KernelFamily,
    pub nugget: f64,
}

impl KernelSpec {
    /// `n` equispaced points on `[0, 1]`.
    pub fn equispaced(n: usize, family: KernelFamily) -> Self {
        let points = if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        Self {
            points,
            family,
            nugget: 0.0,
        }
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.points.len();
        DMatrix::from_fn(n, n, |i, j| {
            let k = self.family.eval((self.points[i] - self.points[j]).abs());
            if i == j {
                k + self.nugget
            } else {
                k
            }
        })
    }

    pub fn operator(&self) -> Result<OperatorHandle> {
        make_dense(self.matrix())
    }
}
