//! Numerical checks of the analytic properties of centred and uniform KeRF:
//! kernel integral identities and bounds, bias bounds for Lipschitz
//! functions, and the empirical risk trend in `n`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{dyadic_index, infinite_kerf_predict, ln_factorial, uniform_factor, AnalyticKernel, KernelFamily};
use crate::quad::midpoint_nodes;
use crate::report::BoundReport;
use crate::rng::{derive_seed, RandomSource};
use crate::tree::{random_partition, suggest_level, LevelPolicy, TreeSpec};

/// Fraction of the bound margin allowed for quadrature error.
pub const QUADRATURE_BUDGET: f64 = 0.01;

/// `∫_0^1 K^cc_k(x, z) dz` in one dimension, by summing the widths of the
/// level-`k` dyadic cells connected to `x`. Always `2^{-k}`.
pub fn centred_integral_identity(x: f64, k: u32) -> f64 {
    let cells = 1u64 << k;
    let width = 1.0 / cells as f64;
    let home = dyadic_index(x, k);
    (1..=cells)
        .filter(|&j| j as f64 == home)
        .map(|_| width)
        .sum()
}

/// Tabulated quadrature of `∫_0^1 K^uf_k(0, |z − x|)·w(|z − x|) dz` split at `x`.
fn lifted_integral(x: f64, k: u32, panels: usize, weight: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for len in [x, 1.0 - x] {
        let (nodes, h) = midpoint_nodes(0.0, len, panels);
        total += nodes.iter().map(|&u| uniform_factor(k, u) * weight(u)).sum::<f64>() * h;
    }
    total
}

/// Refine by doubling until the change between resolutions, divided by 3,
/// is within `QUADRATURE_BUDGET` of the margin reported by `margin`.
///
/// Returns `(value, error, panels, converged)`.
fn refine(
    start: usize,
    cap: usize,
    eval: impl Fn(usize) -> f64,
    margin: impl Fn(f64) -> f64,
) -> (f64, f64, usize, bool) {
    let mut n = start.max(1);
    let mut coarse = eval(n);
    loop {
        let fine = eval(2 * n);
        let err = (fine - coarse).abs() / 3.0;
        n *= 2;
        let budget = QUADRATURE_BUDGET * margin(fine).max(0.0);
        if err <= budget || err == 0.0 {
            return (fine, err, n, true);
        }
        if n >= cap {
            return (fine, err, n, false);
        }
        coarse = fine;
    }
}

/// `∫_0^1 K^uf_k(0, |z − x|) dz` with an error estimate.
pub fn uniform_integral(x: f64, k: u32, panels: usize) -> (f64, f64) {
    let coarse = lifted_integral(x, k, panels, |_| 1.0);
    let fine = lifted_integral(x, k, 2 * panels, |_| 1.0);
    (fine, (fine - coarse).abs() / 3.0)
}

/// `(1/2)^{k+1} ≤ ∫_0^1 K^uf_k(0, |z − x|) dz ≤ (1/2)^{k−1}`.
///
/// `observed` is the integral and `bound` the upper limit; `satisfied`
/// requires both sides, each within the quadrature error estimate.
pub fn uniform_integral_bounds(x: f64, k: u32, panels: usize) -> BoundReport {
    let lower = 0.5f64.powi(k as i32 + 1);
    let upper = 0.5f64.powi(k as i32 - 1);
    let (value, err, used, converged) = refine(
        panels,
        panels << 8,
        |p| lifted_integral(x, k, p, |_| 1.0),
        |v| (v - lower).min(upper - v),
    );
    let mut r = BoundReport::check("uniform-integral-bounds", value, upper, err);
    r.satisfied = r.satisfied && value >= lower - err;
    r.with("lower", lower)
        .with("x", x)
        .with("k", k)
        .with("panels", used)
        .with("quadrature_error", err)
        .with("converged", converged)
}

/// `∫ K^uf_k(0,|z−x|)·|z−x| dz ≤ (2/3)^{k+1} ∫ K^uf_k(0,|z−x|) dz`.
pub fn uniform_moment_bound(x: f64, k: u32, panels: usize) -> BoundReport {
    let factor = (2.0f64 / 3.0).powi(k as i32 + 1);
    let eval_pair = |p: usize| {
        (
            lifted_integral(x, k, p, |u| u),
            lifted_integral(x, k, p, |_| 1.0),
        )
    };
    let (value, err, used, converged) = refine(
        panels,
        panels << 8,
        |p| {
            let (m, i) = eval_pair(p);
            m - factor * i
        },
        |v| -v,
    );
    let (moment, integral) = eval_pair(used);
    let mut r = BoundReport::check("uniform-moment-bound", moment, factor * integral, err);
    r.satisfied = value <= err;
    r.with("x", x)
        .with("k", k)
        .with("panels", used)
        .with("quadrature_error", err)
        .with("converged", converged)
}

/// A test function with its Lipschitz constant for the L1 norm.
#[derive(Clone, Copy)]
pub struct LipschitzFn<'a> {
    pub f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub lipschitz: f64,
}

/// Compositions of `k` into `d` nonnegative parts with their multinomial
/// probabilities under equal cell probabilities `1/d`.
pub fn compositions(k: u32, d: usize) -> Vec<(Vec<u32>, f64)> {
    fn rec(j: usize, left: u32, d: usize, parts: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if j + 1 == d {
            parts.push(left);
            out.push(parts.clone());
            parts.pop();
            return;
        }
        for t in 0..=left {
            parts.push(t);
            rec(j + 1, left - t, d, parts, out);
            parts.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, d, &mut Vec::with_capacity(d), &mut out);
    out.into_iter()
        .map(|c| {
            let ln_w = ln_factorial(k)
                - c.iter().map(|&t| ln_factorial(t)).sum::<f64>()
                - f64::from(k) * (d as f64).ln();
            (c, ln_w.exp())
        })
        .collect()
}

fn grid_points(d: usize, res: usize) -> Vec<Vec<f64>> {
    let total = res.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let i = idx % res;
                    idx /= res;
                    i as f64 / (res - 1) as f64
                })
                .collect()
        })
        .collect()
}

fn check_grid(res: usize) -> Result<()> {
    if res < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {res} is too coarse; need at least 2 points per axis"
        )));
    }
    Ok(())
}

/// Kernel-weighted average of `f` around `x` under the centred kernel,
/// integrating `f` over each dyadic box with `panels` midpoints per axis.
pub fn centred_smoothed(f: &LipschitzFn, x: &[f64], comps: &[(Vec<u32>, f64)], panels: usize) -> f64 {
    let d = x.len();
    let (mut num, mut den) = (0.0, 0.0);
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for (c, w) in comps {
        let mut vol = 1.0;
        for j in 0..d {
            let width = 0.5f64.powi(c[j] as i32);
            let i = dyadic_index(x[j], c[j]);
            lo[j] = (i - 1.0) * width;
            hi[j] = i * width;
            vol *= width;
        }
        let mean = crate::quad::box_mean(f.f, &lo, &hi, panels);
        num += w * vol * mean;
        den += w * vol;
    }
    num / den
}

/// Largest `|∫K^cc_k f / ∫K^cc_k − f(x)|` over a `grid_res^d` grid, checked
/// against `L·d·(1 − 1/(2d))^k`.
pub fn bias_gap_centred(f: &LipschitzFn, k: u32, d: usize, grid_res: usize) -> Result<BoundReport> {
    if d == 0 || d > 3 || k > 8 {
        return Err(Error::InvalidParameter(format!(
            "centred bias check supports d ≤ 3 and k ≤ 8, got d = {d}, k = {k}"
        )));
    }
    check_grid(grid_res)?;
    let bound = f.lipschitz * d as f64 * (1.0 - 1.0 / (2.0 * d as f64)).powi(k as i32);
    let comps = compositions(k, d);
    let grid = grid_points(d, grid_res);
    let sup_gap = |panels: usize| {
        grid.par_iter()
            .map(|x| (centred_smoothed(f, x, &comps, panels) - (f.f)(x)).abs())
            .reduce(|| 0.0, f64::max)
    };
    let cap = if d == 3 { 32 } else { 256 };
    let (observed, err, panels, converged) = refine(1, cap, sup_gap, |v| bound - v);
    if !converged {
        return Err(Error::InvalidParameter(format!(
            "quadrature did not reach the error budget at {panels} panels per axis"
        )));
    }
    Ok(BoundReport::check("centred-bias", observed, bound, err)
        .with("d", d)
        .with("k", k)
        .with("L", f.lipschitz)
        .with("grid", grid_res)
        .with("panels", panels)
        .with("quadrature_error", err))
}

/// Midpoint nodes, their weights, and `F(t, |z − x|)` for `t = 0..=k`.
type Axis = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// Kernel-weighted average of `f` around `x` under the lifted uniform kernel,
/// by tensor midpoint quadrature split at `x` along every axis.
pub fn uniform_smoothed(f: &LipschitzFn, x: &[f64], comps: &[(Vec<u32>, f64)], k: u32, panels: usize) -> f64 {
    let d = x.len();
    let axes: Vec<Axis> = x
        .iter()
        .map(|&xj| {
            let mut nodes = Vec::with_capacity(2 * panels);
            let mut weights = Vec::with_capacity(2 * panels);
            for (a, b) in [(0.0, xj), (xj, 1.0)] {
                let (ns, h) = midpoint_nodes(a, b, panels);
                weights.extend(std::iter::repeat_n(h, ns.len()));
                nodes.extend(ns);
            }
            let table: Vec<Vec<f64>> = (0..=k)
                .map(|t| nodes.iter().map(|&z| uniform_factor(t, (z - xj).abs())).collect())
                .collect();
            (nodes, weights, table)
        })
        .collect();
    let sizes: Vec<usize> = axes.iter().map(|a| a.0.len()).collect();
    let total: usize = sizes.iter().product();
    let (mut num, mut den) = (0.0, 0.0);
    let mut z = vec![0.0; d];
    let mut idx = vec![0usize; d];
    for flat in 0..total {
        let mut r = flat;
        let mut w = 1.0;
        for j in 0..d {
            idx[j] = r % sizes[j];
            r /= sizes[j];
            z[j] = axes[j].0[idx[j]];
            w *= axes[j].1[idx[j]];
        }
        let kval: f64 = comps
            .iter()
            .map(|(c, p)| p * (0..d).map(|j| axes[j].2[c[j] as usize][idx[j]]).product::<f64>())
            .sum();
        num += w * kval * (f.f)(&z);
        den += w * kval;
    }
    num / den
}

/// Largest `|∫K f / ∫K − f(x)|` under the lifted uniform kernel over a
/// `grid_res^d` grid, checked against `L·d·2^{2d+1}/3·(1 − 1/(3d))^k`.
pub fn bias_gap_uniform(
    f: &LipschitzFn,
    k: u32,
    d: usize,
    grid_res: usize,
    quad_res: usize,
) -> Result<BoundReport> {
    if d == 0 || d > 2 || k > 8 {
        return Err(Error::InvalidParameter(format!(
            "uniform bias check supports d ≤ 2 and k ≤ 8, got d = {d}, k = {k}"
        )));
    }
    check_grid(grid_res)?;
    let df = d as f64;
    let bound = f.lipschitz * df * 2f64.powi(2 * d as i32 + 1) / 3.0 * (1.0 - 1.0 / (3.0 * df)).powi(k as i32);
    let comps = compositions(k, d);
    let grid = grid_points(d, grid_res);
    let sup_gap = |panels: usize| {
        grid.par_iter()
            .map(|x| (uniform_smoothed(f, x, &comps, k, panels) - (f.f)(x)).abs())
            .reduce(|| 0.0, f64::max)
    };
    let cap = if d == 1 { 1 << 14 } else { 512 };
    let (observed, err, panels, converged) = refine(quad_res, cap, sup_gap, |v| bound - v);
    if !converged {
        return Err(Error::InvalidParameter(format!(
            "quadrature did not reach the error budget at {panels} panels"
        )));
    }
    Ok(BoundReport::check("uniform-bias", observed, bound, err)
        .with("d", d)
        .with("k", k)
        .with("L", f.lipschitz)
        .with("grid", grid_res)
        .with("panels", panels)
        .with("quadrature_error", err))
}

/// Flags `(family, d, k)` pairs where a bias gap grew with `k`. Expected
/// behaviour, not a guarantee; callers treat hits as warnings.
pub fn bias_monotonicity_warnings(reports: &[BoundReport]) -> Vec<String> {
    let mut out = Vec::new();
    for w in reports.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let same = a.claim_id == b.claim_id && a.context.get("d") == b.context.get("d");
        if same && b.observed > a.observed + 1e-12 {
            out.push(format!(
                "{} gap increased from k={} to k={}: {} -> {}",
                a.claim_id, a.context["k"], b.context["k"], a.observed, b.observed
            ));
        }
    }
    out
}

/// Empirical connection frequencies of each `(x, z)` pair over `trees`
/// independent data-free partitions (centred or uniform); tree `j` uses
/// stream `j`, and every pair is checked against the same trees.
pub fn monte_carlo_connections(
    spec: &TreeSpec,
    pairs: &[(Vec<f64>, Vec<f64>)],
    trees: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let Some((x0, _)) = pairs.first() else {
        return Ok(Vec::new());
    };
    let d = x0.len();
    if pairs.iter().any(|(x, z)| x.len() != d || z.len() != d) {
        return Err(Error::InvalidParameter("all pairs must share one dimension".into()));
    }
    if trees == 0 {
        return Err(Error::InvalidParameter("need at least one tree".into()));
    }
    random_partition(spec, d, &mut RandomSource::new(seed, 0))?;
    let hits = (0..trees)
        .into_par_iter()
        .fold(
            || vec![0u64; pairs.len()],
            |mut acc, j| {
                let t = random_partition(spec, d, &mut RandomSource::new(seed, j as u64))
                    .expect("spec validated above");
                for (h, (x, z)) in acc.iter_mut().zip(pairs) {
                    *h += u64::from(t.locate(x) == t.locate(z));
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; pairs.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hits.into_iter().map(|h| h as f64 / trees as f64).collect())
}

/// Settings for the risk-versus-`n` trend of infinite KeRF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCheckConfig {
    pub family: KernelFamily,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub sigma: f64,
    pub queries: Vec<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub level: u32,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub family: KernelFamily,
    pub d: usize,
    pub rows: Vec<RateRow>,
    /// Whether the estimated risk never increases along the `n` grid.
    pub nonincreasing: bool,
}

/// Estimate `E[(m̃_∞(x) − m(x))²]` at fixed queries for every `n` in the
/// grid, averaging over `trials` independent samples of
/// `Y = m(X) + σ·ε`, `X` uniform on `[0,1]^d`.
///
/// The level at each `n` comes from [`suggest_level`] in the rate mode of
/// the family.
pub fn rate_envelope_check(cfg: &RateCheckConfig, m: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<RateReport> {
    if cfg.n_grid.is_empty() || cfg.trials == 0 || cfg.queries.is_empty() {
        return Err(Error::InvalidParameter("rate check needs n values, trials and queries".into()));
    }
    if cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n grid must be increasing".into()));
    }
    let policy = match cfg.family {
        KernelFamily::Centred => LevelPolicy::CentredRate,
        KernelFamily::Uniform => LevelPolicy::UniformRate,
    };
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let level = suggest_level(n, cfg.d, policy);
        let kernel = AnalyticKernel::new(cfg.family, level, cfg.d);
        let errs: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<f64> {
                let mut rng = RandomSource::new(derive_seed(cfg.seed, gi as u64), t as u64);
                let mut pts = Vec::with_capacity(n * cfg.d);
                let mut ys = Vec::with_capacity(n);
                for _ in 0..n {
                    let x: Vec<f64> = (0..cfg.d).map(|_| rng.random::<f64>()).collect();
                    let e: f64 = rng.sample(StandardNormal);
                    ys.push(m(&x) + cfg.sigma * e);
                    pts.extend(x);
                }
                let data = Dataset::new(cfg.d, pts, ys)?;
                Ok(cfg
                    .queries
                    .iter()
                    .map(|q| (infinite_kerf_predict(&data, q, &kernel) - m(q)).powi(2))
                    .sum::<f64>()
                    / cfg.queries.len() as f64)
            })
            .collect::<Result<_>>()?;
        rows.push(RateRow {
            n,
            level,
            risk: errs.iter().sum::<f64>() / errs.len() as f64,
        });
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].risk <= w[0].risk);
    Ok(RateReport {
        family: cfg.family,
        d: cfg.d,
        rows,
        nonincreasing,
    })
}
