//! Trace estimators for `tr f(A)` and the closed-form variance calculators
//! used to check them.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, Result, TraceError};
use crate::lanczos::{block_lanczos, lanczos_function_action, quadrature, scalar_lanczos};
use crate::linop::{make_dense, AccessCounters, Capabilities, CounterSnapshot, LinearOperator};
use crate::probes::{
    draw_block, draw_orthonormal, sample_subblocks, IndexSet, ProbeDistribution, SubblockPolicy,
};
use crate::rng::RngStream;
use crate::spectral::{Domain, SpectralFn};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateFlags {
    /// Some Ritz value was raised to the domain floor of `f`.
    pub clamped_nodes: bool,
    /// Some Lanczos run stopped before `k` steps.
    pub early_breakdown: bool,
    /// Subblocks dropped because `f` was undefined on their spectrum.
    pub singular_blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimate {
    pub value: f64,
    /// The scaled per-sample estimates; `value` is their mean.
    pub per_sample_values: Vec<f64>,
    pub q_effective: usize,
    pub matvecs_used: u64,
    pub entries_used: u64,
    pub flags: EstimateFlags,
}

impl TraceEstimate {
    fn from_samples(samples: Vec<f64>, used: CounterSnapshot, flags: EstimateFlags) -> Self {
        let value = mean(&samples);
        Self {
            value,
            q_effective: samples.len(),
            per_sample_values: samples,
            matvecs_used: used.matvecs,
            entries_used: used.entries,
            flags,
        }
    }

    /// Unbiased sample variance of `per_sample_values`.
    pub fn sample_variance(&self) -> f64 {
        sample_variance(&self.per_sample_values)
    }

    /// Standard error of `value`.
    pub fn std_error(&self) -> f64 {
        if self.q_effective < 2 {
            return 0.0;
        }
        (self.sample_variance() / self.q_effective as f64).sqrt()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Eigenvalues sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    eigvals: Vec<f64>,
}

impl SpectrumSummary {
    pub fn new(mut eigvals: Vec<f64>) -> Self {
        eigvals.sort_by(|a, b| b.total_cmp(a));
        Self { eigvals }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        Self::new(SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect())
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn n(&self) -> usize {
        self.eigvals.len()
    }

    fn f_values(&self, f: &SpectralFn) -> Vec<f64> {
        self.eigvals.iter().map(|&x| f.eval(x)).collect()
    }
}

struct Tracker<'a> {
    op: &'a dyn LinearOperator,
    start: CounterSnapshot,
}

impl<'a> Tracker<'a> {
    fn new(op: &'a dyn LinearOperator) -> Self {
        Self {
            op,
            start: op.counters().snapshot(),
        }
    }

    fn used(&self) -> CounterSnapshot {
        self.op.counters().snapshot().since(&self.start)
    }
}

struct Sample {
    x: f64,
    clamped: bool,
    early: bool,
}

fn fold_flags(samples: &[Sample]) -> (Vec<f64>, EstimateFlags) {
    let flags = EstimateFlags {
        clamped_nodes: samples.iter().any(|s| s.clamped),
        early_breakdown: samples.iter().any(|s| s.early),
        singular_blocks: 0,
    };
    (samples.iter().map(|s| s.x).collect(), flags)
}

fn check_q(q: usize) -> Result<()> {
    if q == 0 {
        return Err(invalid("q", "need at least one sample"));
    }
    Ok(())
}

/// Hutchinson SLQ: Rademacher probes normalized to unit length, `k` scalar
/// Lanczos steps each; sample `i` is `n * eta_i`.
pub fn hutchinson_slq(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    q: usize,
    k: usize,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    check_q(q)?;
    let n = op.dim();
    let tracker = Tracker::new(op);
    let samples: Vec<Sample> = (0..q)
        .into_par_iter()
        .map(|i| {
            let z = draw_block(n, 1, ProbeDistribution::Rademacher, &stream.fork(i as u64))?;
            let v = z.column(0).normalize();
            let j = scalar_lanczos(op, &v, k)?;
            let quad = quadrature(&j, f)?;
            Ok(Sample {
                x: n as f64 * quad.value,
                clamped: quad.clamped,
                early: j.early_breakdown(),
            })
        })
        .collect::<Result<_>>()?;
    let (xs, flags) = fold_flags(&samples);
    Ok(TraceEstimate::from_samples(xs, tracker.used(), flags))
}

/// BOLT with Gaussian (Haar) probes.
///
/// Sample `i` is `X(V_i) = (n / b) * eta_i` where `eta_i` is the block Gauss
/// quadrature of `tr(V_i^T f(A) V_i)` from `k` block Lanczos steps.
pub fn bolt(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    q: usize,
    k: usize,
    b: usize,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    bolt_with_distribution(op, f, q, k, b, ProbeDistribution::Gaussian, stream)
}

pub fn bolt_with_distribution(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    q: usize,
    k: usize,
    b: usize,
    dist: ProbeDistribution,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    check_q(q)?;
    let n = op.dim();
    if b == 0 || b > n {
        return Err(invalid("b", format!("need 1 <= b <= n = {n}, got {b}")));
    }
    let tracker = Tracker::new(op);
    let scale = n as f64 / b as f64;
    let samples: Vec<Sample> = (0..q)
        .into_par_iter()
        .map(|i| {
            let v = draw_orthonormal(n, b, dist, &stream.fork(i as u64))?;
            let j = block_lanczos(op, &v, k)?;
            let quad = quadrature(&j, f)?;
            Ok(Sample {
                x: scale * quad.value,
                clamped: quad.clamped,
                early: j.early_breakdown(),
            })
        })
        .collect::<Result<_>>()?;
    let (xs, flags) = fold_flags(&samples);
    Ok(TraceEstimate::from_samples(xs, tracker.used(), flags))
}

/// `f(A) X` column by column; a plain apply for the identity, `k`-step
/// Lanczos otherwise.
fn f_action(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    x: &DMatrix<f64>,
    k: usize,
) -> Result<(DMatrix<f64>, bool)> {
    if matches!(f, SpectralFn::Identity) {
        return Ok((op.apply(x)?, false));
    }
    let cols: Vec<_> = (0..x.ncols())
        .into_par_iter()
        .map(|c| lanczos_function_action(op, &x.column(c).into_owned(), k, f))
        .collect::<Result<_>>()?;
    let clamped = cols.iter().any(|a| a.clamped);
    let out = DMatrix::from_columns(&cols.into_iter().map(|a| a.value).collect::<Vec<_>>());
    Ok((out, clamped))
}

/// Hutch++ with `m` f-actions: a sketch of width `floor(m/3)`, its exact
/// projected trace, and `floor(m/3)` Gaussian probes of the deflated residual.
///
/// Sample `i` is `tr(Q^T F Q) + p_i^T F p_i`, so `value` averages the residual
/// probes with weight `1/g`.
pub fn hutchpp(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    m: usize,
    k: usize,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    if m < 3 {
        return Err(invalid("m", format!("Hutch++ needs m >= 3, got {m}")));
    }
    let n = op.dim();
    let s = (m / 3).min(n);
    let g = m / 3;
    let tracker = Tracker::new(op);
    let sketch = draw_block(n, s, ProbeDistribution::Gaussian, &stream.fork(0))?;
    let (y, c1) = f_action(op, f, &sketch, k)?;
    let q = y.qr().q();
    let (fq, c2) = f_action(op, f, &q, k)?;
    let head = q.tr_mul(&fq).trace();
    let probes = draw_block(n, g, ProbeDistribution::Gaussian, &stream.fork(1))?;
    let p = &probes - &q * q.tr_mul(&probes);
    let (fp, c3) = f_action(op, f, &p, k)?;
    let xs: Vec<f64> = (0..g)
        .map(|i| head + p.column(i).dot(&fp.column(i)))
        .collect();
    let flags = EstimateFlags {
        clamped_nodes: c1 || c2 || c3,
        ..Default::default()
    };
    Ok(TraceEstimate::from_samples(xs, tracker.used(), flags))
}

/// `X(S) = (n / s) tr(A_S)` from `s` diagonal reads.
pub fn subblock_trace(op: &dyn LinearOperator, s: &IndexSet) -> Result<f64> {
    if s.is_empty() {
        return Err(invalid("S", "empty index set"));
    }
    let d = op.diagonal(s)?;
    Ok(op.dim() as f64 / s.len() as f64 * d.iter().sum::<f64>())
}

/// Averages `subblock_trace` over `t` random subsets of size `s`.
pub fn subblock_trace_estimate(
    op: &dyn LinearOperator,
    s: usize,
    t: usize,
    policy: SubblockPolicy,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    check_q(t)?;
    let pool: Vec<usize> = (0..op.dim()).collect();
    let tracker = Tracker::new(op);
    let blocks = sample_subblocks(&pool, s, t, policy, stream)?;
    let xs: Vec<f64> = blocks
        .par_iter()
        .map(|set| subblock_trace(op, set))
        .collect::<Result<_>>()?;
    Ok(TraceEstimate::from_samples(
        xs,
        tracker.used(),
        EstimateFlags::default(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubblockSlqConfig {
    /// Probes per subblock.
    pub q: usize,
    /// Number of subblocks.
    pub t: usize,
    /// Subblock size.
    pub s: usize,
    /// Probe block width, `b <= s`.
    pub b: usize,
    /// Lanczos steps; `None` means `s`.
    pub k: Option<usize>,
    /// Diagonal threshold for `r_eff`; `None` means `1e-10 * max A_ii`.
    pub eps: Option<f64>,
    pub policy: SubblockPolicy,
    /// Skip the diagonal scan and take `r_eff = n`.
    pub assume_full_rank: bool,
}

impl SubblockSlqConfig {
    pub fn new(q: usize, t: usize, s: usize, b: usize) -> Self {
        Self {
            q,
            t,
            s,
            b,
            k: None,
            eps: None,
            policy: SubblockPolicy::Independent,
            assume_full_rank: false,
        }
    }
}

/// `P A P^T` restricted to the coordinates in `idx`, applied matrix-free.
struct Restricted<'a> {
    op: &'a dyn LinearOperator,
    idx: Vec<usize>,
    counters: AccessCounters,
}

impl LinearOperator for Restricted<'_> {
    fn dim(&self) -> usize {
        self.idx.len()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::APPLY_ONLY
    }

    fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    fn is_symmetric(&self) -> bool {
        self.op.is_symmetric()
    }

    fn apply_raw(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.op.dim(), x.ncols());
        for (r, &i) in self.idx.iter().enumerate() {
            full.row_mut(i).copy_from(&x.row(r));
        }
        self.op.counters().add_matvecs(x.ncols() as u64);
        self.op.apply_raw(&full).select_rows(&self.idx)
    }
}

/// Indices with `A_ii > eps` (all indices when the diagonal is unavailable
/// or `assume_full_rank` is set).
fn effective_pool(op: &dyn LinearOperator, cfg: &SubblockSlqConfig) -> Result<Vec<usize>> {
    let n = op.dim();
    let caps = op.capabilities();
    if cfg.assume_full_rank || !(caps.entry_access || caps.subblock_extract) {
        return Ok((0..n).collect());
    }
    let d = op.diagonal(&IndexSet::full(n))?;
    let eps = cfg
        .eps
        .unwrap_or_else(|| 1e-10 * d.iter().copied().fold(0.0, f64::max));
    Ok((0..n).filter(|&i| d[i] > eps).collect())
}

/// Subblock SLQ over `t` principal subblocks of size `s`.
///
/// Each block `A_S` is estimated with BOLT (`q` probes of width `b`, `k`
/// steps) rescaled so it targets `tr f(A_S)`; the result is
/// `(r_eff / (t s)) sum_i eta_i`. With `t = 1` or `r_eff <= s` the call
/// reduces to BOLT on `A` restricted to its effective support. Blocks whose
/// spectrum leaves the domain of `f` (for `f` defined on positive reals, any
/// Ritz value at or below the clamp floor) are dropped and counted in
/// `flags.singular_blocks`.
pub fn subblock_slq(
    op: &dyn LinearOperator,
    f: &SpectralFn,
    cfg: &SubblockSlqConfig,
    stream: &RngStream,
) -> Result<TraceEstimate> {
    if let Some(eps) = cfg.eps {
        if !(eps >= 0.0) {
            return Err(invalid("eps", format!("must be non-negative, got {eps}")));
        }
    }
    if cfg.s == 0 {
        return Err(invalid("s", "need s >= 1"));
    }
    if cfg.b == 0 || cfg.b > cfg.s {
        return Err(invalid("b", format!("need 1 <= b <= s = {}, got {}", cfg.s, cfg.b)));
    }
    check_q(cfg.q)?;
    check_q(cfg.t)?;
    let tracker = Tracker::new(op);
    let pool = effective_pool(op, cfg)?;
    let r_eff = pool.len();
    let k = cfg.k.unwrap_or(cfg.s);
    if r_eff == 0 {
        return Ok(TraceEstimate::from_samples(
            vec![0.0],
            tracker.used(),
            EstimateFlags::default(),
        ));
    }

    if cfg.t == 1 || r_eff <= cfg.s {
        let b = cfg.b.min(r_eff);
        let inner = if r_eff == op.dim() {
            bolt(op, f, cfg.q, k, b, &stream.fork(1))?
        } else {
            let restricted = Restricted {
                op,
                idx: pool,
                counters: AccessCounters::default(),
            };
            bolt(&restricted, f, cfg.q, k, b, &stream.fork(1))?
        };
        let used = tracker.used();
        return Ok(TraceEstimate {
            matvecs_used: used.matvecs,
            entries_used: used.entries,
            ..inner
        });
    }

    let blocks = sample_subblocks(&pool, cfg.s, cfg.t, cfg.policy, &stream.fork(0))?;
    let scale = r_eff as f64 / cfg.s as f64;
    let positive = f.domain() == Domain::Positive;
    let results: Vec<Option<TraceEstimate>> = blocks
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let a_s = make_dense(op.principal_subblock(set)?)?;
            match bolt(a_s.as_ref(), f, cfg.q, k, cfg.b, &stream.fork(2 + i as u64)) {
                Ok(est) if positive && est.flags.clamped_nodes => Ok(None),
                Ok(est) => Ok(Some(est)),
                Err(TraceError::Domain { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let singular = results.iter().filter(|r| r.is_none()).count();
    if singular == results.len() {
        return Err(TraceError::AllBlocksSingular { blocks: singular });
    }
    if singular > 0 {
        log::warn!("{singular} of {} subblocks were singular and were dropped", results.len());
    }
    let kept: Vec<&TraceEstimate> = results.iter().flatten().collect();
    let flags = EstimateFlags {
        clamped_nodes: kept.iter().any(|e| e.flags.clamped_nodes),
        early_breakdown: kept.iter().any(|e| e.flags.early_breakdown),
        singular_blocks: singular,
    };
    let xs = kept.iter().map(|e| scale * e.value).collect();
    Ok(TraceEstimate::from_samples(xs, tracker.used(), flags))
}

/// `Var[X(V)]` for Haar `V` of width `b`:
/// `2n / (b(n+2)) * (1 - (b-1)/(n-1)) * (sum f^2 - (sum f)^2 / n)`.
pub fn bolt_variance_closed_form(spec: &SpectrumSummary, f: &SpectralFn, b: usize) -> Result<f64> {
    let n = spec.n();
    if b == 0 || b > n {
        return Err(invalid("b", format!("need 1 <= b <= n = {n}, got {b}")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let (n, bf) = (n as f64, b as f64);
    let fv = spec.f_values(f);
    let sum: f64 = fv.iter().sum();
    let sum_sq: f64 = fv.iter().map(|x| x * x).sum();
    let spread = (sum_sq - sum * sum / n).max(0.0);
    Ok(2.0 * n / (bf * (n + 2.0)) * (1.0 - (bf - 1.0) / (n - 1.0)) * spread)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalCovariance {
    /// `Var[v^T f(A) v]` for `v` uniform on the unit sphere.
    pub scalar_variance: f64,
    /// `Cov(v_i^T f(A) v_i, v_j^T f(A) v_j)` for two orthonormal columns.
    pub pairwise_covariance: f64,
}

pub fn orthonormal_covariance(spec: &SpectrumSummary, f: &SpectralFn) -> Result<OrthonormalCovariance> {
    let n = spec.n();
    if n < 2 {
        return Err(invalid("n", "covariance needs n >= 2"));
    }
    let nf = n as f64;
    let fv = spec.f_values(f);
    let sum: f64 = fv.iter().sum();
    let sum_sq: f64 = fv.iter().map(|x| x * x).sum();
    let var = (2.0 / (nf * (nf + 2.0)) * sum_sq - 2.0 / (nf * nf * (nf + 2.0)) * sum * sum).max(0.0);
    Ok(OrthonormalCovariance {
        scalar_variance: var,
        pairwise_covariance: -var / (nf - 1.0),
    })
}

/// Tail energy `sum_{i > k} lambda_i^2` with eigenvalues ordered by magnitude.
fn tail_energy(spec: &SpectrumSummary, k: usize) -> f64 {
    let mut sq: Vec<f64> = spec.eigvals.iter().map(|x| x * x).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    sq.iter().skip(k).sum()
}

/// `(6/m) ||A - A_k||_F^2` with `k = floor(m/3)`.
pub fn hutchpp_variance_lower_bound(spec: &SpectrumSummary, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid("m", "need m >= 1"));
    }
    Ok(6.0 / m as f64 * tail_energy(spec, m / 3))
}

/// Closed-form BOLT variance (width `b`) divided by the Hutch++ lower bound
/// (budget `m`); `+inf` when the Hutch++ tail vanishes.
pub fn variance_ratio(spec: &SpectrumSummary, b: usize, m: usize) -> Result<f64> {
    let n = spec.n();
    if b == 0 || b > n {
        return Err(invalid("b", format!("need 1 <= b <= n = {n}, got {b}")));
    }
    if m == 0 {
        return Err(invalid("m", "need m >= 1"));
    }
    let tail = tail_energy(spec, m / 3);
    if tail == 0.0 {
        return Ok(f64::INFINITY);
    }
    let (nf, bf, mf) = (n as f64, b as f64, m as f64);
    let shrink = if n == 1 { 0.0 } else { 1.0 - (bf - 1.0) / (nf - 1.0) };
    let sum: f64 = spec.eigvals.iter().sum();
    let sum_sq: f64 = spec.eigvals.iter().map(|x| x * x).sum();
    let spread = (sum_sq - sum * sum / nf).max(0.0);
    Ok(mf * nf / (3.0 * bf * (nf + 2.0)) * shrink * spread / tail)
}

/// Hoeffding half-width `(l_max - l_min) sqrt(ln(2/delta) / (2q))`.
pub fn hoeffding_epsilon(l_min: f64, l_max: f64, q: usize, delta: f64) -> Result<f64> {
    if q == 0 {
        return Err(invalid("q", "need q >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("need 0 < delta < 1, got {delta}")));
    }
    if l_max < l_min {
        return Err(invalid("l_max", "must be at least l_min"));
    }
    Ok((l_max - l_min) * ((2.0 / delta).ln() / (2.0 * q as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::make_dense;

    fn diag(d: &[f64]) -> crate::linop::OperatorHandle {
        make_dense(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))).unwrap()
    }

    #[test]
    fn hutchinson_identity_is_exact() {
        let op = make_dense(DMatrix::identity(7, 7)).unwrap();
        let est = hutchinson_slq(op.as_ref(), &SpectralFn::Identity, 5, 3, &RngStream::new(1, 1)).unwrap();
        assert!((est.value - 7.0).abs() < 1e-12);
        assert_eq!(est.q_effective, 5);
    }

    #[test]
    fn bolt_full_width_is_exact() {
        let op = diag(&[1.0, 2.0, 3.0, 4.0]);
        let est = bolt(op.as_ref(), &SpectralFn::Identity, 3, 1, 4, &RngStream::new(2, 2)).unwrap();
        assert!((est.value - 10.0).abs() < 1e-12);
        assert_eq!(est.matvecs_used, 12);
    }

    #[test]
    fn subblock_trace_direct() {
        let op = diag(&[1.0, 2.0, 3.0, 4.0]);
        let s = IndexSet::new(vec![0, 2], 4).unwrap();
        assert_eq!(subblock_trace(op.as_ref(), &s).unwrap(), 8.0);
        assert_eq!(op.counters().entries(), 2);
    }

    #[test]
    fn hutchpp_rank_one_exact() {
        let u = nalgebra::DVector::from_fn(10, |i, _| i as f64 + 1.0);
        let op = make_dense(&u * u.transpose()).unwrap();
        let est = hutchpp(op.as_ref(), &SpectralFn::Identity, 6, 1, &RngStream::new(3, 3)).unwrap();
        assert!((est.value - u.norm_squared()).abs() < 1e-9 * u.norm_squared());
    }

    #[test]
    fn closed_forms() {
        let flat = SpectrumSummary::new(vec![1.0; 1000]);
        assert!((hutchpp_variance_lower_bound(&flat, 30).unwrap() - 198.0).abs() < 1e-9);
        assert_eq!(variance_ratio(&flat, 10, 30).unwrap(), 0.0);
        assert_eq!(bolt_variance_closed_form(&flat, &SpectralFn::Identity, 3).unwrap(), 0.0);
        let spec = SpectrumSummary::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(bolt_variance_closed_form(&spec, &SpectralFn::Identity, 3).unwrap(), 0.0);
        let rank = SpectrumSummary::new(vec![5.0, 0.0, 0.0]);
        assert_eq!(variance_ratio(&rank, 1, 3).unwrap(), f64::INFINITY);
        let e = hoeffding_epsilon(0.0, 1.0, 200, 0.05).unwrap();
        assert!((e - (40f64.ln() / 400.0).sqrt()).abs() < 1e-15);
        let e4 = hoeffding_epsilon(0.0, 1.0, 800, 0.05).unwrap();
        assert!((e / e4 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_tail() {
        let spec = SpectrumSummary::new((1..=20).map(|i| 0.5f64.powi(i)).collect());
        let want: f64 = (3..=20).map(|i| 0.25f64.powi(i)).sum();
        assert!((hutchpp_variance_lower_bound(&spec, 6).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn subblock_slq_kl_of_identity_is_zero() {
        let op = make_dense(DMatrix::identity(12, 12)).unwrap();
        let cfg = SubblockSlqConfig::new(2, 3, 4, 2);
        let est = subblock_slq(op.as_ref(), &SpectralFn::KlLoss, &cfg, &RngStream::new(4, 4)).unwrap();
        assert!(est.value.abs() < 1e-12);
    }

    #[test]
    fn subblock_slq_delegates_on_low_rank_support() {
        let op = diag(&[0.0, 2.0, 0.0, 3.0, 0.0, 0.0]);
        let cfg = SubblockSlqConfig::new(1, 4, 2, 2);
        let est = subblock_slq(op.as_ref(), &SpectralFn::Identity, &cfg, &RngStream::new(5, 5)).unwrap();
        assert!((est.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn subblock_slq_validation() {
        let op = diag(&[1.0, 2.0]);
        let mut cfg = SubblockSlqConfig::new(1, 2, 1, 2);
        assert!(subblock_slq(op.as_ref(), &SpectralFn::Identity, &cfg, &RngStream::new(0, 0)).is_err());
        cfg.b = 1;
        cfg.eps = Some(-1.0);
        assert!(subblock_slq(op.as_ref(), &SpectralFn::Identity, &cfg, &RngStream::new(0, 0)).is_err());
    }
}
