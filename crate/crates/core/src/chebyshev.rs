//! Chebyshev approximation of spectral functions and exact localization of
//! polynomial filters on graph-sparse matrices.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Result, TraceError};
use crate::probes::IndexSet;
use crate::rng::RngStream;
use crate::spectral::SpectralFn;

const SUP_GRID: usize = 10_000;

/// `p(x) = sum_k c_k T_k(t)` with `t` the affine map of `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebFilter {
    coeffs: Vec<f64>,
    lo: f64,
    hi: f64,
    sup_error: f64,
}

impl ChebFilter {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Max `|f - p|` over an equispaced grid of 10^4 points.
    pub fn sup_error(&self) -> f64 {
        self.sup_error
    }

    fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - (self.hi + self.lo)) / (self.hi - self.lo)
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = c + 2.0 * t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + t * b1 - b2
    }

    /// Direct sum with `T_k(t) = cos(k acos t)`.
    pub fn eval_direct(&self, x: f64) -> f64 {
        let theta = self.to_unit(x).clamp(-1.0, 1.0).acos();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * (k as f64 * theta).cos())
            .sum()
    }

    /// `p(A)` by the matrix Clenshaw recurrence.
    pub fn eval_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let t = (a * 2.0 - &id * (self.hi + self.lo)) / (self.hi - self.lo);
        let mut b1 = DMatrix::zeros(n, n);
        let mut b2 = DMatrix::zeros(n, n);
        for &c in self.coeffs[1..].iter().rev() {
            let b0 = &id * c + (&t * &b1) * 2.0 - &b2;
            b2 = b1;
            b1 = b0;
        }
        &id * self.coeffs[0] + &t * b1 - b2
    }
}

/// Degree-`m` interpolant of `f` at the `m + 1` Chebyshev points of `[lo, hi]`.
pub fn cheb_fit(f: &SpectralFn, lo: f64, hi: f64, m: usize) -> Result<ChebFilter> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("interval", format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let np = m + 1;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let thetas: Vec<f64> = (0..np).map(|j| PI * (j as f64 + 0.5) / np as f64).collect();
    let fx: Vec<f64> = thetas.iter().map(|th| f.eval(mid + half * th.cos())).collect();
    if fx.iter().any(|v| !v.is_finite()) {
        return Err(TraceError::NonFinite(format!("{f:?} on [{lo}, {hi}]")));
    }
    let coeffs: Vec<f64> = (0..np)
        .map(|k| {
            let s: f64 = fx
                .iter()
                .zip(&thetas)
                .map(|(v, th)| v * (k as f64 * th).cos())
                .sum();
            let c = 2.0 * s / np as f64;
            if k == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect();
    let mut filter = ChebFilter {
        coeffs,
        lo,
        hi,
        sup_error: 0.0,
    };
    let mut sup: f64 = 0.0;
    for i in 0..SUP_GRID {
        let x = lo + (hi - lo) * i as f64 / (SUP_GRID - 1) as f64;
        let fv = f.eval(x);
        if !fv.is_finite() {
            return Err(TraceError::NonFinite(format!("{f:?} at {x}")));
        }
        sup = sup.max((fv - filter.eval(x)).abs());
    }
    filter.sup_error = sup;
    Ok(filter)
}

/// Gershgorin enclosure of the spectrum, widened by 5% of its width on each side.
pub fn gershgorin_interval(a: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.nrows() {
        let radius: f64 = (0..a.ncols())
            .filter(|&j| j != i)
            .map(|j| a[(i, j)].abs())
            .sum();
        lo = lo.min(a[(i, i)] - radius);
        hi = hi.max(a[(i, i)] + radius);
    }
    let width = hi - lo;
    let pad = if width > 0.0 {
        0.05 * width
    } else {
        0.05 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

/// Adjacency lists of the graph with an edge `i - j` whenever `A_ij != 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityGraph {
    adj: Vec<Vec<usize>>,
}

impl SparsityGraph {
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let adj = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0))
                    .collect()
            })
            .collect();
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Hop distances from the set `sources`; `usize::MAX` marks unreachable vertices.
    pub fn distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// `S_r = {v : dist(v, S) <= r}`.
pub fn graph_distance(graph: &SparsityGraph, s: &IndexSet, r: usize) -> Result<IndexSet> {
    if let Some(&last) = s.as_slice().last() {
        if last >= graph.n() {
            return Err(TraceError::IndexOutOfRange {
                index: last,
                n: graph.n(),
            });
        }
    }
    let dist = graph.distances(s.as_slice());
    let ball = (0..graph.n()).filter(|&v| dist[v] <= r).collect();
    IndexSet::new(ball, graph.n())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedBlock {
    /// `[p(A_{S_r})]_{S,S}`.
    pub block: DMatrix<f64>,
    /// The buffered index set `S_r`.
    pub buffer: IndexSet,
    /// `r` is smaller than the filter degree, so the block is only approximate.
    pub truncated: bool,
}

/// Evaluates the filter on the buffered subblock `A_{S_r}` and returns its `S x S` part.
///
/// When `r >= m` this equals `[p(A)]_{S,S}`: every walk of length at most `m`
/// between vertices of `S` stays inside `S_r`.
pub fn localized_filter_block(
    a: &DMatrix<f64>,
    filter: &ChebFilter,
    s: &IndexSet,
    r: usize,
) -> Result<LocalizedBlock> {
    if !a.is_square() {
        return Err(TraceError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let graph = SparsityGraph::from_dense(a);
    let buffer = graph_distance(&graph, s, r)?;
    let sub = a
        .select_rows(buffer.as_slice())
        .select_columns(buffer.as_slice());
    let p = filter.eval_matrix(&sub);
    let pos: Vec<usize> = s
        .iter()
        .map(|i| buffer.as_slice().binary_search(&i).expect("S is inside its ball"))
        .collect();
    let truncated = r < filter.degree();
    if truncated {
        log::debug!("buffer radius {r} below filter degree {}", filter.degree());
    }
    Ok(LocalizedBlock {
        block: p.select_rows(&pos).select_columns(&pos),
        buffer,
        truncated,
    })
}

fn principal(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    a.select_rows(idx).select_columns(idx)
}

/// `|tr(f(A)_S) - tr(f(A_S))|` from dense evaluations.
pub fn localization_trace_gap(a: &DMatrix<f64>, f: &SpectralFn, s: &IndexSet) -> Result<f64> {
    let fa = f.apply_dense(a)?;
    let lhs = principal(&fa, s.as_slice()).trace();
    let rhs = f.trace_of_dense(&principal(a, s.as_slice()))?;
    Ok((lhs - rhs).abs())
}

/// `|tr(f(A)_S) - tr([f(A_{S_r})]_{S,S})|`, the gap when the block is taken
/// from the radius-`r` buffer around `S` instead of `S` alone.
pub fn buffered_trace_gap(
    a: &DMatrix<f64>,
    f: &SpectralFn,
    s: &IndexSet,
    r: usize,
) -> Result<f64> {
    let graph = SparsityGraph::from_dense(a);
    let buffer = graph_distance(&graph, s, r)?;
    let fa = f.apply_dense(a)?;
    let lhs = principal(&fa, s.as_slice()).trace();
    let fb = f.apply_dense(&principal(a, buffer.as_slice()))?;
    let rhs: f64 = s
        .iter()
        .map(|i| {
            let p = buffer.as_slice().binary_search(&i).expect("S is inside its ball");
            fb[(p, p)]
        })
        .sum();
    Ok((lhs - rhs).abs())
}

/// Symmetric matrix with `bandwidth` nonzero off-diagonals on each side,
/// diagonal in `[1, 2]` and off-diagonal entries in `[-0.5, 0.5]`.
pub fn random_banded(n: usize, bandwidth: usize, stream: &RngStream) -> DMatrix<f64> {
    let mut rng = stream.rng();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = rng.random_range(1.0..2.0);
        for j in (i + 1)..n.min(i + bandwidth + 1) {
            let v = rng.random_range(-0.5..0.5);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}
