//! The experiments. Each returns a table, the plot drawn from it and the
//! operator access totals.

use clap::Args;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracelab::chebyshev::{
    buffered_trace_gap, cheb_fit, gershgorin_interval, localized_filter_block, random_banded,
};
use tracelab::divergence::{kl_exact, kl_slq, w2_exact, w2_slq, GaussianPair, ProxyKlConfig};
use tracelab::estimators::{bolt, bolt_variance_closed_form, hutchinson_slq, hutchpp, subblock_trace_estimate, SpectrumSummary};
use tracelab::hodlr::{dense_proxy_kl, eig_span, hodlr_proxy_kl, peel_build, relative_frobenius_error, PeelConfig};
use tracelab::linop::{make_dense, make_gram, FnOperator, KernelFamily, KernelSpec, LinearOperator};
use tracelab::probes::{draw_block, sample_index_set, ProbeDistribution, SubblockPolicy};
use tracelab::wishart::{min_eig_cdf, scaled_min_eigs, subblock_rank_experiment, sup_cdf_gap};
use tracelab::{RngStream, SpectralFn};

use crate::output::{Cell, PlotSpec, Table};
use crate::{check, finish, CliError, Counters};

pub struct Outcome {
    pub table: Table,
    pub plot: PlotSpec,
    pub counters: Counters,
    /// Additional CSV files written next to the main one.
    pub extra: Vec<(String, Table)>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn kernel_pair(n: usize, sigma: f64, nugget1: f64, nugget2: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let spec = KernelSpec::equispaced(n, KernelFamily::Rbf { sigma });
    (spec.clone().with_nugget(nugget1).matrix(), spec.with_nugget(nugget2).matrix())
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConvergenceParams {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// RBF length scale of both covariances.
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub nugget1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub nugget2: f64,
    /// Lanczos steps per probe.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Repetitions averaged per budget.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![60usize, 120, 240, 480, 960])]
    pub budgets: Vec<usize>,
}

impl ConvergenceParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.n >= 2, "n", "must be at least 2");
        check(&mut p, self.sigma > 0.0, "sigma", "must be positive");
        check(&mut p, self.nugget1 > 0.0 && self.nugget2 > 0.0, "nugget1/nugget2", "must be positive");
        check(&mut p, self.k >= 1, "k", "must be at least 1");
        check(&mut p, self.reps >= 1, "reps", "must be at least 1");
        check(&mut p, !self.budgets.is_empty(), "budgets", "must not be empty");
        for &b in &self.budgets {
            check(&mut p, b >= 3 * self.k, "budgets", "each budget must allow three Lanczos runs (>= 3k)");
            check(&mut p, b / self.k <= self.n, "budgets", "budget / k must not exceed n");
        }
        p
    }
}

pub fn convergence(p: &ConvergenceParams, seed: u64) -> Result<Outcome, CliError> {
    let (s1, s2) = kernel_pair(p.n, p.sigma, p.nugget1, p.nugget2);
    let exact = kl_exact(&s1, &s2)?;
    let pair = GaussianPair::new(s1, s2)?;
    let op = pair.kl_operator()?;
    let f = SpectralFn::KlLoss;
    let mut table = Table::new(&["budget", "hutchinson", "bolt", "hutchpp"]);
    let mut counters = Counters::default();
    for &budget in &p.budgets {
        let width = budget / p.k;
        let runs: Vec<[(f64, u64); 3]> = (0..p.reps)
            .into_par_iter()
            .map(|r| {
                let s = RngStream::new(seed, 1).fork(budget as u64).fork(r as u64);
                let h = hutchinson_slq(op.as_ref(), &f, width, p.k, &s.fork(0))?;
                let b = kl_slq(&pair, 1, p.k, width, &s.fork(1))?;
                let pp = hutchpp(op.as_ref(), &f, width, p.k, &s.fork(2))?;
                let rel = |v: f64| (v - exact).abs() / exact;
                Ok([
                    (rel(0.5 * h.value), h.matvecs_used),
                    (rel(b.value), b.matvecs_used),
                    (rel(0.5 * pp.value), pp.matvecs_used),
                ])
            })
            .collect::<Result<_, tracelab::TraceError>>()?;
        let mut row: Vec<Cell> = vec![budget.into()];
        for m in 0..3 {
            let errs: Vec<f64> = runs.iter().map(|r| r[m].0).collect();
            row.push(mean(&errs).into());
            counters.matvecs += runs.iter().map(|r| r[m].1).sum::<u64>();
        }
        table.push(row);
    }
    let plot = PlotSpec::new("KL relative error vs matvecs", "budget", &["hutchinson", "bolt", "hutchpp"])
        .log_x()
        .log_y();
    Ok(finish(table, plot, counters))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FlatSpectrumParams {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 150)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![30usize, 60, 120, 240])]
    pub budgets: Vec<usize>,
}

impl FlatSpectrumParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.n >= 2, "n", "must be at least 2");
        check(&mut p, self.trials >= 1, "trials", "must be at least 1");
        check(&mut p, !self.budgets.is_empty(), "budgets", "must not be empty");
        for &b in &self.budgets {
            check(&mut p, b >= 9, "budgets", "each budget must be at least 9");
            check(&mut p, b / 2 <= self.n, "budgets", "budget / 2 must not exceed n");
        }
        p
    }
}

/// BOLT runs two block Lanczos steps (`b = budget / 2`) and Hutch++ uses
/// `m = budget / 3` probes with three-step f-actions; both are exact in `k`
/// for `f(x) = x^2`, so only the probing error is compared.
pub fn flat_spectrum(p: &FlatSpectrumParams, seed: u64) -> Result<Outcome, CliError> {
    let mut rng = RngStream::new(seed, 2).rng();
    let d: Vec<f64> = (0..p.n).map(|_| rng.random_range(1.0..2.0)).collect();
    let exact: f64 = d.iter().map(|x| x * x).sum();
    let diag = DVector::from_vec(d);
    let op = FnOperator::new(p.n, true, move |x: &DMatrix<f64>| {
        let mut y = x.clone();
        for (i, di) in diag.iter().enumerate() {
            y.row_mut(i).scale_mut(*di);
        }
        y
    });
    let f = SpectralFn::Square;
    let mut table = Table::new(&["budget", "bolt_median", "hutchpp_median", "bolt_p90", "hutchpp_p90"]);
    let mut counters = Counters::default();
    for &budget in &p.budgets {
        let runs: Vec<(f64, f64, u64)> = (0..p.trials)
            .into_par_iter()
            .map(|t| {
                let s = RngStream::new(seed, 3).fork(budget as u64).fork(t as u64);
                let x = bolt(&op, &f, 1, 2, budget / 2, &s.fork(0))?;
                let y = hutchpp(&op, &f, budget / 3, 3, &s.fork(1))?;
                Ok((
                    (x.value - exact).abs() / exact,
                    (y.value - exact).abs() / exact,
                    x.matvecs_used + y.matvecs_used,
                ))
            })
            .collect::<Result<_, tracelab::TraceError>>()?;
        let eb: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let eh: Vec<f64> = runs.iter().map(|r| r.1).collect();
        counters.matvecs += runs.iter().map(|r| r.2).sum::<u64>();
        table.push(vec![
            budget.into(),
            quantile(&eb, 0.5).into(),
            quantile(&eh, 0.5).into(),
            quantile(&eb, 0.9).into(),
            quantile(&eh, 0.9).into(),
        ]);
    }
    let plot = PlotSpec::new("tr diag(d)^2: median relative error", "budget", &["bolt_median", "hutchpp_median"])
        .log_x()
        .log_y();
    Ok(finish(table, plot, counters))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TraceRecoveryParams {
    /// Rows of the Gram factor.
    #[arg(long, default_value_t = 2048)]
    pub m: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Subblock size.
    #[arg(long, default_value_t = 64)]
    pub s: usize,
    /// Largest number of subblocks `t`.
    #[arg(long, default_value_t = 1562)]
    pub blocks: usize,
}

impl TraceRecoveryParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.m >= 1, "m", "must be at least 1");
        check(&mut p, self.s >= 1 && self.s <= self.n, "s", "must lie in 1..=n");
        check(&mut p, self.blocks >= 1, "blocks", "must be at least 1");
        p
    }
}

fn block_grid(max: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = std::iter::successors(Some(1usize), |&t| t.checked_mul(10))
        .flat_map(|d| [d, 2 * d, 5 * d])
        .take_while(|&t| t < max)
        .collect();
    grid.push(max);
    grid
}

/// One run with `blocks` independent subblocks; row `t` reports the estimate
/// formed from the first `t`. `emp_std` is the standard error relative to the trace.
pub fn trace_recovery(p: &TraceRecoveryParams, seed: u64) -> Result<Outcome, CliError> {
    let op = make_gram(p.m, p.n, seed)?;
    let est = subblock_trace_estimate(op.as_ref(), p.s, p.blocks, SubblockPolicy::Independent, &RngStream::new(seed, 4))?;
    let exact = op.exact_trace();
    let mut table = Table::new(&["t", "st/n", "rel_error", "emp_std"]);
    for t in block_grid(p.blocks) {
        let xs = &est.per_sample_values[..t];
        let value = mean(xs);
        table.push(vec![
            t.into(),
            ((p.s * t) as f64 / p.n as f64).into(),
            ((value - exact).abs() / exact).into(),
            (sample_std(xs) / (t as f64).sqrt() / exact).into(),
        ]);
    }
    let counters = Counters {
        matvecs: op.counters().matvecs(),
        entries: op.counters().entries(),
    };
    let plot = PlotSpec::new("Trace recovery vs sampling ratio", "st/n", &["rel_error", "emp_std"])
        .log_x()
        .log_y();
    Ok(finish(table, plot, counters))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LocalizationParams {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Off-diagonals on each side of the banded test matrix.
    #[arg(long, default_value_t = 1)]
    pub bandwidth: usize,
    /// Chebyshev degree of the exp filter.
    #[arg(long, default_value_t = 8)]
    pub degree: usize,
    /// Index sets per radius.
    #[arg(long, default_value_t = 100)]
    pub sets: usize,
    /// Size of each index set.
    #[arg(long, default_value_t = 10)]
    pub size: usize,
    #[arg(long, default_value_t = 10)]
    pub r_max: usize,
}

impl LocalizationParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.n >= 2, "n", "must be at least 2");
        check(&mut p, self.degree >= 1, "degree", "must be at least 1");
        check(&mut p, self.sets >= 1, "sets", "must be at least 1");
        check(&mut p, self.size >= 1 && self.size <= self.n, "size", "must lie in 1..=n");
        p
    }
}

/// `identity_residual` is the largest entry of `[p(A_{S_r})]_{S,S} - [p(A)]_{S,S}`
/// over all sets; `trace_gap` the mean of `|tr f(A)_S - tr [f(A_{S_r})]_{S,S}|`
/// for `f = exp`, next to the `2 s eps` bound.
pub fn localization(p: &LocalizationParams, seed: u64) -> Result<Outcome, CliError> {
    let a = random_banded(p.n, p.bandwidth, &RngStream::new(seed, 5));
    let (lo, hi) = gershgorin_interval(&a);
    let filter = cheb_fit(&SpectralFn::Exp, lo, hi, p.degree)?;
    let dense = filter.eval_matrix(&a);
    let sets = (0..p.sets)
        .map(|i| sample_index_set(p.n, p.size, &RngStream::new(seed, 6).fork(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let bound = 2.0 * p.size as f64 * filter.sup_error();
    let mut table = Table::new(&["r", "identity_residual", "trace_gap", "bound"]);
    for r in 0..=p.r_max {
        let rows: Vec<(f64, f64)> = sets
            .par_iter()
            .map(|s| {
                let blk = localized_filter_block(&a, &filter, s, r)?;
                let want = dense.select_rows(s.as_slice()).select_columns(s.as_slice());
                let gap = buffered_trace_gap(&a, &SpectralFn::Exp, s, r)?;
                Ok(((blk.block - want).amax(), gap))
            })
            .collect::<Result<_, tracelab::TraceError>>()?;
        let residual = rows.iter().map(|x| x.0).fold(0.0, f64::max);
        let gaps: Vec<f64> = rows.iter().map(|x| x.1).collect();
        table.push(vec![r.into(), residual.into(), mean(&gaps).into(), bound.into()]);
    }
    let plot = PlotSpec::new("Localization residual vs buffer radius", "r", &["identity_residual", "trace_gap", "bound"]).log_y();
    Ok(finish(table, plot, Counters::default()))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct WishartParams {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Number of samples behind the Wishart matrix.
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub s_max: usize,
    /// Trials per subblock size.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Draws of the scaled minimum eigenvalue of W(m, m).
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
}

impl WishartParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.m >= 1, "m", "must be at least 1");
        check(&mut p, self.s_max >= 1 && self.s_max <= self.n, "s_max", "must lie in 1..=n");
        check(&mut p, self.trials >= 1, "trials", "must be at least 1");
        check(&mut p, self.draws >= 2, "draws", "must be at least 2");
        check(&mut p, self.bins >= 1, "bins", "must be at least 1");
        p
    }
}

/// Full-rank sweep over `s = 1..=s_max` in `wishart.csv`; the histogram of
/// `m lambda_min(W(m, m))` against its limiting density in `wishart_min_eig.csv`.
pub fn wishart(p: &WishartParams, seed: u64) -> Result<Outcome, CliError> {
    let mut table = Table::new(&["s", "full_rank_fraction"]);
    for s in 1..=p.s_max {
        let frac = subblock_rank_experiment(p.n, p.m, s, p.trials, &RngStream::new(seed, 7).fork(s as u64))?;
        table.push(vec![s.into(), frac.into()]);
    }
    let draws = scaled_min_eigs(p.m, p.draws, &RngStream::new(seed, 8));
    let gap = sup_cdf_gap(&draws, min_eig_cdf);
    log::info!("sup CDF gap of the scaled min eigenvalue: {gap:.4}");
    let top = quantile(&draws, 0.99);
    let width = top / p.bins as f64;
    let mut hist = Table::new(&["bin_lo", "bin_hi", "empirical_density", "limit_density", "sup_cdf_gap"]);
    for i in 0..p.bins {
        let (lo, hi) = (i as f64 * width, (i + 1) as f64 * width);
        let count = draws.iter().filter(|&&x| x >= lo && x < hi).count();
        let limit = (min_eig_cdf(hi) - min_eig_cdf(lo)) / width;
        hist.push(vec![
            lo.into(),
            hi.into(),
            (count as f64 / (p.draws as f64 * width)).into(),
            limit.into(),
            gap.into(),
        ]);
    }
    let plot = PlotSpec::new("Probability that the subblock is full rank", "s", &["full_rank_fraction"]);
    let mut out = finish(table, plot, Counters::default());
    out.extra.push(("wishart_min_eig.csv".into(), hist));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct HodlrParams {
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Correlation length of the oscillatory exponential kernel.
    #[arg(long, default_value_t = 0.05)]
    pub ell: f64,
    /// Oscillation frequency of the kernel.
    #[arg(long, default_value_t = 2.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.3)]
    pub nugget: f64,
    /// Off-diagonal rank of every coupling.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2])]
    pub levels: Vec<usize>,
    /// Subblocks for the proxy KL.
    #[arg(long, default_value_t = 32)]
    pub t: usize,
    /// Subblock size for the proxy KL.
    #[arg(long, default_value_t = 128)]
    pub s: usize,
}

impl HodlrParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, self.ell > 0.0, "ell", "must be positive");
        check(&mut p, self.nugget >= 0.0, "nugget", "must be non-negative");
        check(&mut p, self.rank >= 1, "rank", "must be at least 1");
        check(&mut p, !self.levels.is_empty(), "levels", "must not be empty");
        for &l in &self.levels {
            check(&mut p, l >= 1 && l < 32 && self.n % (1 << l) == 0, "levels", "n must be a multiple of 2^levels");
        }
        check(&mut p, self.t >= 1, "t", "must be at least 1");
        check(&mut p, self.s >= 1 && self.s <= self.n, "s", "must lie in 1..=n");
        p
    }
}

pub fn hodlr(p: &HodlrParams, seed: u64) -> Result<Outcome, CliError> {
    let kernel = KernelSpec::equispaced(p.n, KernelFamily::OscExp { ell: p.ell, nu: p.nu }).with_nugget(p.nugget);
    let a = kernel.matrix();
    let mut table = Table::new(&[
        "levels", "rank", "frob_error", "eig_min", "eig_max", "d_proxy", "d_dense", "peel_matvecs",
    ]);
    let mut counters = Counters::default();
    for &levels in &p.levels {
        let op = kernel.operator()?;
        let cfg = PeelConfig::new(levels, p.rank);
        let h = peel_build(op.as_ref(), &cfg, &RngStream::new(seed, 9).fork(levels as u64))?;
        let peel = op.counters().matvecs();
        let (lo, hi) = eig_span(&h, &a)?;
        let pk = ProxyKlConfig::new(p.t, p.s, 1, p.s);
        let proxy = hodlr_proxy_kl(&h, op.clone(), &pk, &RngStream::new(seed, 10).fork(levels as u64))?;
        if proxy.fallback {
            log::warn!("HODLR approximation at {levels} levels is not positive definite");
        }
        counters.matvecs += peel;
        table.push(vec![
            levels.into(),
            p.rank.into(),
            relative_frobenius_error(&h, &a).into(),
            lo.into(),
            hi.into(),
            proxy.estimate.value.into(),
            dense_proxy_kl(&h, &a)?.into(),
            peel.into(),
        ]);
    }
    let plot = PlotSpec::new("HODLR error and proxy KL", "levels", &["frob_error", "d_proxy", "d_dense"]).log_y();
    Ok(finish(table, plot, counters))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VarianceCheckParams {
    #[arg(long, value_delimiter = ',', default_values_t = vec![8usize, 16, 32])]
    pub ns: Vec<usize>,
    /// BOLT samples per (n, b) cell.
    #[arg(long, default_value_t = 20_000)]
    pub draws: usize,
}

impl VarianceCheckParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, !self.ns.is_empty(), "ns", "must not be empty");
        check(&mut p, self.ns.iter().all(|&n| n >= 2), "ns", "every n must be at least 2");
        check(&mut p, self.draws >= 2, "draws", "must be at least 2");
        p
    }
}

/// Block widths `b = 1, 2, 4, ...` below `n` on a random SPD matrix per `n`.
pub fn variance_check(p: &VarianceCheckParams, seed: u64) -> Result<Outcome, CliError> {
    let mut table = Table::new(&["n", "b", "closed_form", "empirical", "rel_dev"]);
    let mut counters = Counters::default();
    for &n in &p.ns {
        let z = draw_block(n, n, ProbeDistribution::Gaussian, &RngStream::new(seed, 11).fork(n as u64))?;
        let a = z.tr_mul(&z) / n as f64 + DMatrix::identity(n, n) * 0.1;
        let spec = SpectrumSummary::from_dense(&a);
        let op = make_dense(a)?;
        let mut b = 1;
        while b < n {
            let est = bolt(op.as_ref(), &SpectralFn::Identity, p.draws, 1, b, &RngStream::new(seed, 12).fork(n as u64).fork(b as u64))?;
            let cf = bolt_variance_closed_form(&spec, &SpectralFn::Identity, b)?;
            let emp = est.sample_variance();
            counters.matvecs += est.matvecs_used;
            table.push(vec![n.into(), b.into(), cf.into(), emp.into(), (emp / cf - 1.0).abs().into()]);
            b *= 2;
        }
    }
    let plot = PlotSpec::new("BOLT variance: closed form and empirical", "b", &["closed_form", "empirical"])
        .log_x()
        .log_y();
    Ok(finish(table, plot, counters))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DemoParams {
    #[arg(long, value_delimiter = ',', default_values_t = vec![50usize, 100, 200])]
    pub ns: Vec<usize>,
    /// BOLT samples.
    #[arg(long, default_value_t = 9)]
    pub q: usize,
    /// Lanczos steps.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Block width as a fraction of n.
    #[arg(long, default_value_t = 0.5)]
    pub b_frac: f64,
}

impl DemoParams {
    pub(crate) fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        check(&mut p, !self.ns.is_empty(), "ns", "must not be empty");
        check(&mut p, self.ns.iter().all(|&n| n >= 2), "ns", "every n must be at least 2");
        check(&mut p, self.q >= 1, "q", "must be at least 1");
        check(&mut p, self.k >= 1, "k", "must be at least 1");
        check(&mut p, self.b_frac > 0.0 && self.b_frac <= 1.0, "b_frac", "must lie in (0, 1]");
        p
    }

    fn width(&self, n: usize) -> usize {
        ((n as f64 * self.b_frac).round() as usize).clamp(1, n)
    }
}

fn demo_table() -> Table {
    Table::new(&["n", "b", "exact", "estimate", "rel_error", "std_error", "matvecs"])
}

fn demo_plot(title: &str) -> PlotSpec {
    PlotSpec::new(title, "n", &["rel_error"]).log_y()
}

/// `W2^2` between an oscillatory exponential covariance and a singular RBF covariance.
pub fn w2_demo(p: &DemoParams, seed: u64) -> Result<Outcome, CliError> {
    let mut table = demo_table();
    let mut counters = Counters::default();
    for &n in &p.ns {
        let s1 = KernelSpec::equispaced(n, KernelFamily::OscExp { ell: 0.005, nu: 5.0 }).matrix();
        let s2 = KernelSpec::equispaced(n, KernelFamily::Rbf { sigma: 2.0 }).matrix();
        let exact = w2_exact(&s1, &s2)?;
        let b = p.width(n);
        let est = w2_slq(&s1, &s2, p.q, p.k, b, &RngStream::new(seed, 13).fork(n as u64))?;
        counters.matvecs += est.matvecs_used;
        table.push(vec![
            n.into(),
            b.into(),
            exact.into(),
            est.value.into(),
            ((est.value - exact).abs() / exact.abs()).into(),
            est.std_error().into(),
            est.matvecs_used.into(),
        ]);
    }
    Ok(finish(table, demo_plot("W2 relative error"), counters))
}

/// KL between two RBF covariances that differ in their nugget.
pub fn kl_demo(p: &DemoParams, seed: u64) -> Result<Outcome, CliError> {
    let mut table = demo_table();
    let mut counters = Counters::default();
    for &n in &p.ns {
        let (s1, s2) = kernel_pair(n, 2.0, 0.2, 0.1);
        let exact = kl_exact(&s1, &s2)?;
        let pair = GaussianPair::new(s1, s2)?;
        let b = p.width(n);
        let est = kl_slq(&pair, p.q, p.k, b, &RngStream::new(seed, 14).fork(n as u64))?;
        counters.matvecs += est.matvecs_used;
        table.push(vec![
            n.into(),
            b.into(),
            exact.into(),
            est.value.into(),
            ((est.value - exact).abs() / exact.abs()).into(),
            est.std_error().into(),
            est.matvecs_used.into(),
        ]);
    }
    Ok(finish(table, demo_plot("KL relative error"), counters))
}
