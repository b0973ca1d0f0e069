//! Python bindings: operators, the trace estimators, the Gaussian divergences,
//! HODLR construction and the Wishart rank experiment.
//!
//! Matrices cross the boundary as lists of rows (numpy arrays are accepted).
//! Randomness is specified by `(seed, experiment)` pairs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use tracelab::divergence::{self, GaussianPair, ProxyKlConfig};
use tracelab::estimators::{self, SpectrumSummary, SubblockSlqConfig};
use tracelab::hodlr::{self, HodlrMatrix, PeelConfig};
use tracelab::linop::{self, KernelFamily, KernelSpec, OperatorHandle};
use tracelab::probes::{IndexSet, SubblockPolicy};
use tracelab::{RngStream, SpectralFn, TraceError};

fn py_err(e: TraceError) -> PyErr {
    match e {
        TraceError::InvalidParameter { .. }
        | TraceError::DimensionMismatch { .. }
        | TraceError::NotSquare { .. }
        | TraceError::IndexOutOfRange { .. }
        | TraceError::CapabilityMissing(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn spectral(name: &str) -> PyResult<SpectralFn> {
    SpectralFn::from_name(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown function `{name}`; expected identity, square, exp, sqrt, log or kl"
        ))
    })
}

fn policy(disjoint: bool) -> SubblockPolicy {
    if disjoint {
        SubblockPolicy::Disjoint
    } else {
        SubblockPolicy::Independent
    }
}

/// A symmetric linear operator with access counters.
#[pyclass(name = "Operator", module = "tracelab", frozen)]
struct PyOperator {
    inner: OperatorHandle,
}

#[pymethods]
impl PyOperator {
    /// Wraps a dense symmetric matrix.
    #[staticmethod]
    fn dense(a: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: linop::make_dense(matrix(a)?).map_err(py_err)?,
        })
    }

    /// `B^T B` for an implicit `m x n` Gaussian `B` whose columns are regenerated on demand.
    #[staticmethod]
    fn gram(m: usize, n: usize, seed: u64) -> PyResult<Self> {
        let g = linop::make_gram(m, n, seed).map_err(py_err)?;
        Ok(Self { inner: g })
    }

    /// Kernel matrix on `n` equispaced points in `[0, 1]`. `family` is `rbf`
    /// (uses `sigma`) or `osc_exp` (uses `ell` and `nu`).
    #[staticmethod]
    #[pyo3(signature = (n, family, sigma=2.0, ell=0.05, nu=2.0, nugget=0.0))]
    fn kernel(n: usize, family: &str, sigma: f64, ell: f64, nu: f64, nugget: f64) -> PyResult<Self> {
        let fam = match family {
            "rbf" => KernelFamily::Rbf { sigma },
            "osc_exp" => KernelFamily::OscExp { ell, nu },
            other => return Err(PyValueError::new_err(format!("unknown kernel family `{other}`"))),
        };
        let inner = KernelSpec::equispaced(n, fam)
            .with_nugget(nugget)
            .operator()
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Products with the columns of `x` (an `n x b` matrix).
    fn apply(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        let op = self.inner.clone();
        let y = py.detach(move || op.apply(&x)).map_err(py_err)?;
        Ok(rows(&y))
    }

    fn subblock(&self, indices: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let set = IndexSet::from_unsorted(indices, self.inner.dim()).map_err(py_err)?;
        Ok(rows(&self.inner.principal_subblock(&set).map_err(py_err)?))
    }

    #[getter]
    fn matvecs(&self) -> u64 {
        self.inner.counters().matvecs()
    }

    #[getter]
    fn entries(&self) -> u64 {
        self.inner.counters().entries()
    }

    fn reset_counters(&self) {
        self.inner.counters().reset();
    }

    fn __repr__(&self) -> String {
        format!("Operator(dim={})", self.inner.dim())
    }
}

/// Result of a stochastic trace estimate.
#[pyclass(name = "TraceEstimate", module = "tracelab", frozen, get_all)]
struct PyTraceEstimate {
    value: f64,
    std_error: f64,
    per_sample_values: Vec<f64>,
    q_effective: usize,
    matvecs_used: u64,
    entries_used: u64,
    clamped_nodes: bool,
    early_breakdown: bool,
    singular_blocks: usize,
}

#[pymethods]
impl PyTraceEstimate {
    fn __repr__(&self) -> String {
        format!(
            "TraceEstimate(value={}, std_error={}, matvecs_used={})",
            self.value, self.std_error, self.matvecs_used
        )
    }
}

impl From<estimators::TraceEstimate> for PyTraceEstimate {
    fn from(e: estimators::TraceEstimate) -> Self {
        Self {
            value: e.value,
            std_error: e.std_error(),
            q_effective: e.q_effective,
            matvecs_used: e.matvecs_used,
            entries_used: e.entries_used,
            clamped_nodes: e.flags.clamped_nodes,
            early_breakdown: e.flags.early_breakdown,
            singular_blocks: e.flags.singular_blocks,
            per_sample_values: e.per_sample_values,
        }
    }
}

fn finish(r: tracelab::Result<estimators::TraceEstimate>) -> PyResult<PyTraceEstimate> {
    r.map(Into::into).map_err(py_err)
}

/// Hutchinson SLQ with `q` Rademacher probes and `k` Lanczos steps each.
#[pyfunction]
#[pyo3(signature = (op, f, q, k, seed=0, experiment=0))]
fn hutchinson_slq(py: Python<'_>, op: &PyOperator, f: &str, q: usize, k: usize, seed: u64, experiment: u64) -> PyResult<PyTraceEstimate> {
    let (f, op) = (spectral(f)?, op.inner.clone());
    finish(py.detach(move || estimators::hutchinson_slq(op.as_ref(), &f, q, k, &RngStream::new(seed, experiment))))
}

/// BOLT: `q` orthonormal `n x b` probe blocks, `k` block Lanczos steps each.
#[pyfunction]
#[pyo3(signature = (op, f, q, k, b, seed=0, experiment=0))]
#[allow(clippy::too_many_arguments)]
fn bolt(py: Python<'_>, op: &PyOperator, f: &str, q: usize, k: usize, b: usize, seed: u64, experiment: u64) -> PyResult<PyTraceEstimate> {
    let (f, op) = (spectral(f)?, op.inner.clone());
    finish(py.detach(move || estimators::bolt(op.as_ref(), &f, q, k, b, &RngStream::new(seed, experiment))))
}

/// Hutch++ with a total of `m` probes and `k`-step Lanczos f-actions.
#[pyfunction]
#[pyo3(signature = (op, f, m, k, seed=0, experiment=0))]
fn hutchpp(py: Python<'_>, op: &PyOperator, f: &str, m: usize, k: usize, seed: u64, experiment: u64) -> PyResult<PyTraceEstimate> {
    let (f, op) = (spectral(f)?, op.inner.clone());
    finish(py.detach(move || estimators::hutchpp(op.as_ref(), &f, m, k, &RngStream::new(seed, experiment))))
}

/// Subblock SLQ over `t` principal subblocks of size `s`.
#[pyfunction]
#[pyo3(signature = (op, f, q, t, s, b, k=None, disjoint=false, seed=0, experiment=0))]
#[allow(clippy::too_many_arguments)]
fn subblock_slq(
    py: Python<'_>,
    op: &PyOperator,
    f: &str,
    q: usize,
    t: usize,
    s: usize,
    b: usize,
    k: Option<usize>,
    disjoint: bool,
    seed: u64,
    experiment: u64,
) -> PyResult<PyTraceEstimate> {
    let (f, op) = (spectral(f)?, op.inner.clone());
    let mut cfg = SubblockSlqConfig::new(q, t, s, b);
    cfg.k = k;
    cfg.policy = policy(disjoint);
    finish(py.detach(move || estimators::subblock_slq(op.as_ref(), &f, &cfg, &RngStream::new(seed, experiment))))
}

/// `tr(A)` from the diagonals of `t` random `s`-subsets.
#[pyfunction]
#[pyo3(signature = (op, s, t, disjoint=false, seed=0, experiment=0))]
fn subblock_trace(py: Python<'_>, op: &PyOperator, s: usize, t: usize, disjoint: bool, seed: u64, experiment: u64) -> PyResult<PyTraceEstimate> {
    let op = op.inner.clone();
    finish(py.detach(move || {
        estimators::subblock_trace_estimate(op.as_ref(), s, t, policy(disjoint), &RngStream::new(seed, experiment))
    }))
}

/// Variance of one BOLT sample with block width `b`, from the eigenvalues of `A`.
#[pyfunction]
#[pyo3(signature = (eigenvalues, f, b))]
fn bolt_variance(eigenvalues: Vec<f64>, f: &str, b: usize) -> PyResult<f64> {
    estimators::bolt_variance_closed_form(&SpectrumSummary::new(eigenvalues), &spectral(f)?, b).map_err(py_err)
}

/// `KL(N(0, S1) || N(0, S2))` by dense eigendecomposition.
#[pyfunction]
fn kl_exact(sigma1: Vec<Vec<f64>>, sigma2: Vec<Vec<f64>>) -> PyResult<f64> {
    divergence::kl_exact(&matrix(sigma1)?, &matrix(sigma2)?).map_err(py_err)
}

/// KL estimated by BOLT on the whitened operator.
#[pyfunction]
#[pyo3(signature = (sigma1, sigma2, q, k, b, seed=0, experiment=0))]
#[allow(clippy::too_many_arguments)]
fn kl_slq(
    py: Python<'_>,
    sigma1: Vec<Vec<f64>>,
    sigma2: Vec<Vec<f64>>,
    q: usize,
    k: usize,
    b: usize,
    seed: u64,
    experiment: u64,
) -> PyResult<PyTraceEstimate> {
    let pair = GaussianPair::new(matrix(sigma1)?, matrix(sigma2)?).map_err(py_err)?;
    finish(py.detach(move || divergence::kl_slq(&pair, q, k, b, &RngStream::new(seed, experiment))))
}

/// Squared Wasserstein-2 distance by dense eigendecomposition.
#[pyfunction]
fn w2_exact(sigma1: Vec<Vec<f64>>, sigma2: Vec<Vec<f64>>) -> PyResult<f64> {
    divergence::w2_exact(&matrix(sigma1)?, &matrix(sigma2)?).map_err(py_err)
}

/// Squared Wasserstein-2 distance with the square-root trace estimated by BOLT.
#[pyfunction]
#[pyo3(signature = (sigma1, sigma2, q, k, b, seed=0, experiment=0))]
#[allow(clippy::too_many_arguments)]
fn w2_slq(
    py: Python<'_>,
    sigma1: Vec<Vec<f64>>,
    sigma2: Vec<Vec<f64>>,
    q: usize,
    k: usize,
    b: usize,
    seed: u64,
    experiment: u64,
) -> PyResult<PyTraceEstimate> {
    let (s1, s2) = (matrix(sigma1)?, matrix(sigma2)?);
    finish(py.detach(move || divergence::w2_slq(&s1, &s2, q, k, b, &RngStream::new(seed, experiment))))
}

/// Proxy KL of a (possibly singular) whitened operator from `t` subblocks of size `s`.
#[pyfunction]
#[pyo3(signature = (op, t, s, q=1, b=None, sample_count=None, seed=0, experiment=0))]
#[allow(clippy::too_many_arguments)]
fn proxy_kl(
    py: Python<'_>,
    op: &PyOperator,
    t: usize,
    s: usize,
    q: usize,
    b: Option<usize>,
    sample_count: Option<usize>,
    seed: u64,
    experiment: u64,
) -> PyResult<PyTraceEstimate> {
    let op = op.inner.clone();
    let mut cfg = ProxyKlConfig::new(t, s, q, b.unwrap_or(s));
    cfg.sample_count = sample_count;
    finish(py.detach(move || divergence::proxy_kl(op.as_ref(), &cfg, &RngStream::new(seed, experiment))))
}

/// Symmetric HODLR matrix.
#[pyclass(name = "Hodlr", module = "tracelab", frozen)]
struct PyHodlr {
    inner: Arc<HodlrMatrix>,
}

#[pymethods]
impl PyHodlr {
    /// Truncated-SVD compression of a dense symmetric matrix.
    #[staticmethod]
    fn from_dense(a: Vec<Vec<f64>>, levels: usize, rank: usize) -> PyResult<Self> {
        let h = HodlrMatrix::from_dense(&matrix(a)?, levels, rank).map_err(py_err)?;
        Ok(Self { inner: Arc::new(h) })
    }

    /// Builds the approximation from products with `op` only.
    #[staticmethod]
    #[pyo3(signature = (op, levels, rank, seed=0, experiment=0))]
    fn peel(py: Python<'_>, op: &PyOperator, levels: usize, rank: usize, seed: u64, experiment: u64) -> PyResult<Self> {
        let op = op.inner.clone();
        let cfg = PeelConfig::new(levels, rank);
        let h = py
            .detach(move || hodlr::peel_build(op.as_ref(), &cfg, &RngStream::new(seed, experiment)))
            .map_err(py_err)?;
        Ok(Self { inner: Arc::new(h) })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels()
    }

    #[getter]
    fn ranks(&self) -> Vec<usize> {
        self.inner.ranks()
    }

    #[getter]
    fn stored_entries(&self) -> usize {
        self.inner.stored_entries()
    }

    fn apply(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.apply(&matrix(x)?).map_err(py_err)?))
    }

    fn solve(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = hodlr::hodlr_solve(&self.inner, &DVector::from_vec(y)).map_err(py_err)?;
        Ok(x.iter().copied().collect())
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.to_dense())
    }

    fn relative_error(&self, a: Vec<Vec<f64>>) -> PyResult<f64> {
        Ok(hodlr::relative_frobenius_error(&self.inner, &matrix(a)?))
    }

    /// Proxy KL between `op` and this approximation.
    #[pyo3(signature = (op, t, s, q=1, b=None, seed=0, experiment=0))]
    #[allow(clippy::too_many_arguments)]
    fn proxy_kl(
        &self,
        py: Python<'_>,
        op: &PyOperator,
        t: usize,
        s: usize,
        q: usize,
        b: Option<usize>,
        seed: u64,
        experiment: u64,
    ) -> PyResult<PyTraceEstimate> {
        let (h, op) = (self.inner.clone(), op.inner.clone());
        let cfg = ProxyKlConfig::new(t, s, q, b.unwrap_or(s));
        let r = py
            .detach(move || hodlr::hodlr_proxy_kl(&h, op, &cfg, &RngStream::new(seed, experiment)))
            .map_err(py_err)?;
        Ok(r.estimate.into())
    }
}

/// Fraction of trials in which a random `s x s` subblock of `W(I_n, m)` is full rank.
#[pyfunction]
#[pyo3(signature = (n, m, s, trials, seed=0, experiment=0))]
fn wishart_full_rank_fraction(py: Python<'_>, n: usize, m: usize, s: usize, trials: usize, seed: u64, experiment: u64) -> PyResult<f64> {
    py.detach(move || tracelab::wishart::subblock_rank_experiment(n, m, s, trials, &RngStream::new(seed, experiment)))
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "tracelab")]
fn tracelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", tracelab::VERSION)?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyTraceEstimate>()?;
    m.add_class::<PyHodlr>()?;
    m.add_function(wrap_pyfunction!(hutchinson_slq, m)?)?;
    m.add_function(wrap_pyfunction!(bolt, m)?)?;
    m.add_function(wrap_pyfunction!(hutchpp, m)?)?;
    m.add_function(wrap_pyfunction!(subblock_slq, m)?)?;
    m.add_function(wrap_pyfunction!(subblock_trace, m)?)?;
    m.add_function(wrap_pyfunction!(bolt_variance, m)?)?;
    m.add_function(wrap_pyfunction!(kl_exact, m)?)?;
    m.add_function(wrap_pyfunction!(kl_slq, m)?)?;
    m.add_function(wrap_pyfunction!(w2_exact, m)?)?;
    m.add_function(wrap_pyfunction!(w2_slq, m)?)?;
    m.add_function(wrap_pyfunction!(proxy_kl, m)?)?;
    m.add_function(wrap_pyfunction!(wishart_full_rank_fraction, m)?)?;
    Ok(())
}
