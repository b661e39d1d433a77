//! Closed-form connection functions of infinite centred and uniform forests.
//!
//! Both kernels are multinomial mixtures over the way `k` cuts are shared
//! among `d` axes:
//!
//! ```text
//! K(x, z) = Σ_{k_1+…+k_d = k}  k! / (k_1!…k_d!) · d^{-k} · Π_j g_j(k_j)
//! ```
//!
//! where `g_j(t)` is the probability that `t` cuts along axis `j` leave the
//! two points connected. The naive sum has `C(k+d-1, d-1)` terms. Because the
//! summand factorizes per axis, the same value is a convolution of the
//! sequences `g_j(t)/t!`, computed here in `O(d·k²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Connection function of the centred forest of level `k`.
    Centred,
    /// Translation-invariant lift `K_k^uf(0, |z − x|)` of the uniform forest kernel.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Sum over every composition of `k` into `d` parts.
    NaiveEnumeration,
    /// Per-axis convolution.
    #[default]
    DpConvolution,
}

/// A fully specified analytic kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticKernel {
    pub family: KernelFamily,
    pub level: u32,
    pub dim: usize,
    #[serde(default)]
    pub strategy: Strategy,
}

impl AnalyticKernel {
    pub fn new(family: KernelFamily, level: u32, dim: usize) -> Self {
        Self {
            family,
            level,
            dim,
            strategy: Strategy::DpConvolution,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(z.len(), self.dim);
        match self.family {
            KernelFamily::Centred => centred_kernel(x, z, self.level, self.strategy),
            KernelFamily::Uniform => uniform_kernel_lifted(x, z, self.level, self.strategy),
        }
    }
}

const SMALL_FACTORIAL_MAX: u32 = 20;

/// `ln(n!)`; exact products up to 20!, summed logarithms above.
pub fn ln_factorial(n: u32) -> f64 {
    if n <= SMALL_FACTORIAL_MAX {
        (1..=n).map(f64::from).product::<f64>().ln()
    } else {
        (1..=SMALL_FACTORIAL_MAX).map(f64::from).product::<f64>().ln()
            + (SMALL_FACTORIAL_MAX + 1..=n).map(|i| f64::from(i).ln()).sum::<f64>()
    }
}

fn inverse_factorials(k: u32) -> Vec<f64> {
    let mut v = Vec::with_capacity(k as usize + 1);
    let mut f = 1.0;
    v.push(1.0);
    for t in 1..=k {
        f /= f64::from(t);
        v.push(f);
    }
    v
}

/// `k! / d^k`, in log space above 20!.
fn multinomial_scale(k: u32, d: usize) -> f64 {
    let d = d as f64;
    if k <= SMALL_FACTORIAL_MAX {
        (1..=k).map(f64::from).product::<f64>() / d.powi(k as i32)
    } else {
        (ln_factorial(k) - f64::from(k) * d.ln()).exp()
    }
}

/// Multinomial mixture computed by convolving `g_j(t)/t!` across axes.
///
/// `g(j, t)` is the per-axis weight for `t` cuts on axis `j`.
pub fn multinomial_mix_dp(k: u32, d: usize, mut g: impl FnMut(usize, u32) -> f64) -> f64 {
    let kk = k as usize;
    let inv = inverse_factorials(k);
    let mut acc: Vec<f64> = (0..=k).map(|t| g(0, t) * inv[t as usize]).collect();
    let mut next = vec![0.0; kk + 1];
    let mut w = vec![0.0; kk + 1];
    for j in 1..d {
        for t in 0..=k {
            w[t as usize] = g(j, t) * inv[t as usize];
        }
        for t in 0..=kk {
            next[t] = (0..=t).map(|s| acc[s] * w[t - s]).sum();
        }
        std::mem::swap(&mut acc, &mut next);
    }
    acc[kk] * multinomial_scale(k, d)
}

/// The same mixture by explicit enumeration of compositions.
pub fn multinomial_mix_naive(k: u32, d: usize, mut g: impl FnMut(usize, u32) -> f64) -> f64 {
    fn rec(
        j: usize,
        left: u32,
        d: usize,
        k: u32,
        parts: &mut Vec<u32>,
        g: &mut dyn FnMut(usize, u32) -> f64,
        total: &mut f64,
    ) {
        if j == d - 1 {
            parts.push(left);
            let ln_coef = ln_factorial(k)
                - parts.iter().map(|&p| ln_factorial(p)).sum::<f64>()
                - f64::from(k) * (d as f64).ln();
            let prod: f64 = parts.iter().enumerate().map(|(a, &t)| g(a, t)).product();
            *total += ln_coef.exp() * prod;
            parts.pop();
            return;
        }
        for t in 0..=left {
            parts.push(t);
            rec(j + 1, left - t, d, k, parts, g, total);
            parts.pop();
        }
    }
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(d);
    rec(0, k, d, k, &mut parts, &mut g, &mut total);
    total
}

/// Index of the level-`t` dyadic cell holding `c`: `⌈2^t c⌉`, with 0 in cell 1.
pub fn dyadic_index(c: f64, t: u32) -> f64 {
    let v = (c * 2f64.powi(t as i32)).ceil();
    if v == 0.0 {
        1.0
    } else {
        v
    }
}

/// Largest `t` with `⌈2^t x⌉ = ⌈2^t z⌉`; `None` when `x == z` (always connected).
///
/// Cells are nested, so the indicator is true exactly for `t ≤ s`.
pub fn centred_threshold(x: f64, z: f64) -> Option<u32> {
    if x == z {
        return None;
    }
    Some(threshold_capped(x, z, 1023))
}

fn threshold_capped(x: f64, z: f64, cap: u32) -> u32 {
    if x == z {
        return cap;
    }
    let (mut a, mut b) = (x, z);
    for t in 1..=cap {
        a *= 2.0;
        b *= 2.0;
        let ia = if a == 0.0 { 1.0 } else { a.ceil() };
        let ib = if b == 0.0 { 1.0 } else { b.ceil() };
        if ia != ib {
            return t - 1;
        }
    }
    cap
}

/// Connection function of the infinite centred forest of level `k`.
pub fn centred_kernel(x: &[f64], z: &[f64], k: u32, strategy: Strategy) -> f64 {
    let d = x.len();
    if k == 0 {
        return 1.0;
    }
    let v = match strategy {
        Strategy::DpConvolution => {
            let s: Vec<u32> = x.iter().zip(z).map(|(&a, &b)| threshold_capped(a, b, k)).collect();
            multinomial_mix_dp(k, d, |j, t| if t <= s[j] { 1.0 } else { 0.0 })
        }
        Strategy::NaiveEnumeration => multinomial_mix_naive(k, d, |j, t| {
            if dyadic_index(x[j], t) == dyadic_index(z[j], t) {
                1.0
            } else {
                0.0
            }
        }),
    };
    v.clamp(0.0, 1.0)
}

/// `1 − u·Σ_{j<t} (−ln u)^j / j!`, the probability that `t` uniform cuts of
/// `[0,1]` leave `0` and `u` connected.
///
/// Equals the regularized lower incomplete gamma `P(t, −ln u)`. Evaluated by
/// Poisson-term recurrence: the upper tail when `−ln u < t` (avoids
/// cancellation for `u` near 1), one minus the head otherwise.
pub fn uniform_factor(t: u32, u: f64) -> f64 {
    if t == 0 || u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let lambda = -u.ln();
    if lambda < f64::from(t) {
        let mut term = (f64::from(t) * lambda.ln() - lambda - ln_factorial(t)).exp();
        let mut sum = 0.0;
        let mut j = t;
        while term > 1e-18 * sum || j < t + 2 {
            sum += term;
            j += 1;
            term *= lambda / f64::from(j);
            if term == 0.0 {
                break;
            }
        }
        sum.min(1.0)
    } else {
        let mut term = u;
        let mut head = 0.0;
        for j in 0..t {
            head += term;
            term *= lambda / f64::from(j + 1);
        }
        (1.0 - head).clamp(0.0, 1.0)
    }
}

/// The same factor written exactly as the finite series, without any
/// stabilization. Used by the naive evaluator.
pub fn uniform_factor_series(t: u32, u: f64) -> f64 {
    if t == 0 || u <= 0.0 {
        return 1.0;
    }
    let l = -u.ln();
    let mut s = 0.0;
    let mut pow = 1.0;
    let mut fact = 1.0;
    for j in 0..t {
        if j > 0 {
            pow *= l;
            fact *= f64::from(j);
        }
        s += pow / fact;
    }
    1.0 - u * s
}

/// `K_k^uf(0, x)`: connection probability of the origin and `x` in the
/// infinite uniform forest of level `k`.
pub fn uniform_kernel_origin(x: &[f64], k: u32, strategy: Strategy) -> f64 {
    let d = x.len();
    if k == 0 {
        return 1.0;
    }
    let v = match strategy {
        Strategy::DpConvolution => multinomial_mix_dp(k, d, |j, t| uniform_factor(t, x[j])),
        Strategy::NaiveEnumeration => {
            multinomial_mix_naive(k, d, |j, t| uniform_factor_series(t, x[j]))
        }
    };
    v.clamp(0.0, 1.0)
}

/// Translation-invariant uniform kernel `K_k^uf(0, |z − x|)`.
pub fn uniform_kernel_lifted(x: &[f64], z: &[f64], k: u32, strategy: Strategy) -> f64 {
    let diff: Vec<f64> = x.iter().zip(z).map(|(a, b)| (a - b).abs()).collect();
    uniform_kernel_origin(&diff, k, strategy)
}

/// Exact one-dimensional uniform connection function for one or two cuts.
///
/// With `a = min(x,z)`, `b = max(x,z)`:
/// `K_1 = 1 − (b − a)` and `K_2 = 1 − (b − a) + (b − a)·ln(b·(1 − a))`.
/// For `a < b` both `b > 0` and `1 − a > 0`, so the logarithm is finite.
pub fn uniform_kernel_exact_1d(x: f64, z: f64, k: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidParameter(format!(
            "points ({x}, {z}) must lie in [0,1]"
        )));
    }
    let (a, b) = if x <= z { (x, z) } else { (z, x) };
    let gap = b - a;
    match k {
        1 => Ok(1.0 - gap),
        2 => {
            if gap == 0.0 {
                return Ok(1.0);
            }
            Ok((1.0 - gap + gap * (b * (1.0 - a)).ln()).clamp(0.0, 1.0))
        }
        _ => Err(Error::InvalidParameter(format!(
            "closed form only known for one or two cuts, got k = {k}"
        ))),
    }
}

/// Kernel-weighted average of the responses; 0 when no sample has weight.
pub fn infinite_kerf_predict(data: &Dataset, x: &[f64], kernel: &AnalyticKernel) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, xi) in data.points().enumerate() {
        let w = kernel.eval(x, xi);
        num += w * data.response(i);
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Parallel [`infinite_kerf_predict`] over many queries; output order matches input.
pub fn infinite_kerf_predict_many(data: &Dataset, queries: &[Vec<f64>], kernel: &AnalyticKernel) -> Vec<f64> {
    queries
        .par_iter()
        .map(|q| infinite_kerf_predict(data, q, kernel))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use rand::Rng;

    const BOTH: [Strategy; 2] = [Strategy::DpConvolution, Strategy::NaiveEnumeration];

    fn rand_point(rng: &mut RandomSource, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn level_zero_is_one() {
        for s in BOTH {
            assert_eq!(centred_kernel(&[0.1, 0.9], &[0.8, 0.2], 0, s), 1.0);
            assert_eq!(uniform_kernel_origin(&[0.7, 0.9], 0, s), 1.0);
        }
    }

    #[test]
    fn centred_two_split_directions() {
        for s in BOTH {
            let v = centred_kernel(&[0.25, 0.25], &[0.75, 0.25], 1, s);
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(centred_threshold(0.3, 0.3), None);
        assert_eq!(centred_threshold(0.25, 0.75), Some(0));
        assert_eq!(centred_threshold(0.0, 0.5), Some(1));
        assert_eq!(centred_threshold(0.1, 0.2), Some(2));
    }

    #[test]
    fn threshold_matches_loop() {
        let mut rng = RandomSource::new(3, 0);
        for _ in 0..1000 {
            let (x, z) = (rng.random::<f64>(), rng.random::<f64>());
            let s = centred_threshold(x, z).unwrap();
            for t in 0..=60 {
                let same = dyadic_index(x, t) == dyadic_index(z, t);
                assert_eq!(same, t <= s, "x={x} z={z} t={t} s={s}");
            }
        }
    }

    #[test]
    fn uniform_one_cut_is_one_minus_x() {
        for s in BOTH {
            for x in [0.0, 0.1, 0.5, 0.93, 1.0] {
                assert!((uniform_kernel_origin(&[x], 1, s) - (1.0 - x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_factor_limits() {
        assert_eq!(uniform_factor(0, 1.0), 1.0);
        assert_eq!(uniform_factor(3, 0.0), 1.0);
        assert_eq!(uniform_factor(3, 1.0), 0.0);
        assert_eq!(uniform_factor(0, 0.4), 1.0);
    }

    #[test]
    fn uniform_factor_is_lower_incomplete_gamma() {
        let mut rng = RandomSource::new(8, 0);
        for _ in 0..2000 {
            let u: f64 = rng.random::<f64>().max(1e-300);
            let t = rng.random_range(1..40u32);
            let oracle = statrs::function::gamma::gamma_lr(f64::from(t), -u.ln());
            assert!((uniform_factor(t, u) - oracle).abs() < 1e-12, "t={t} u={u}");
        }
    }

    #[test]
    fn uniform_factor_near_one_keeps_relative_accuracy() {
        // P(t, λ) ≈ λ^t / t! for small λ.
        let u: f64 = 1.0 - 1e-9;
        let lambda = -u.ln();
        let approx = lambda.powi(3) / 6.0;
        let v = uniform_factor(3, u);
        assert!(((v - approx) / approx).abs() < 1e-6);
    }

    #[test]
    fn exact_1d_forms() {
        assert_eq!(uniform_kernel_exact_1d(0.3, 0.3, 2).unwrap(), 1.0);
        assert!((uniform_kernel_exact_1d(0.2, 0.7, 1).unwrap() - 0.5).abs() < 1e-15);
        let v = uniform_kernel_exact_1d(0.25, 0.75, 2).unwrap();
        assert!((v - (0.5 + 0.5 * 0.5625_f64.ln())).abs() < 1e-15);
        assert_eq!(
            uniform_kernel_exact_1d(0.25, 0.75, 2).unwrap(),
            uniform_kernel_exact_1d(0.75, 0.25, 2).unwrap()
        );
        assert!(uniform_kernel_exact_1d(0.2, 0.3, 3).is_err());
        assert!(uniform_kernel_exact_1d(0.0, 1.0, 2).unwrap() >= 0.0);
    }

    #[test]
    fn exact_1d_matches_origin_form() {
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let a = uniform_kernel_origin(&[x], 2, Strategy::DpConvolution);
            let b = uniform_kernel_exact_1d(0.0, x, 2).unwrap();
            assert!((a - b).abs() < 1e-10, "x={x}: {a} vs {b}");
            let c = uniform_kernel_origin(&[x], 1, Strategy::DpConvolution);
            assert!((c - (1.0 - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn lifted_is_translation_invariant() {
        let x = [0.2, 0.4];
        let z = [0.5, 0.3];
        let base = uniform_kernel_lifted(&x, &z, 4, Strategy::DpConvolution);
        let xs = [0.4, 0.55];
        let zs = [0.7, 0.45];
        let shifted = uniform_kernel_lifted(&xs, &zs, 4, Strategy::DpConvolution);
        assert!((base - shifted).abs() < 1e-14);
        assert_eq!(uniform_kernel_lifted(&x, &x, 4, Strategy::DpConvolution), 1.0);
        for (a, b) in [(0.1, 0.6), (0.9, 0.2)] {
            let v = uniform_kernel_lifted(&[a], &[b], 1, Strategy::DpConvolution);
            assert!((v - (1.0 - (a - b).abs())).abs() < 1e-15);
        }
    }

    #[test]
    fn dp_matches_naive_on_small_grid() {
        let mut rng = RandomSource::new(21, 0);
        for d in 1..=4 {
            for k in 0..=8 {
                for _ in 0..20 {
                    let x = rand_point(&mut rng, d);
                    let z = rand_point(&mut rng, d);
                    let a = centred_kernel(&x, &z, k, Strategy::DpConvolution);
                    let b = centred_kernel(&x, &z, k, Strategy::NaiveEnumeration);
                    assert!((a - b).abs() < 1e-10);
                    let a = uniform_kernel_lifted(&x, &z, k, Strategy::DpConvolution);
                    let b = uniform_kernel_lifted(&x, &z, k, Strategy::NaiveEnumeration);
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn large_level_uses_log_space() {
        let x = [0.5; 3];
        let v = centred_kernel(&x, &x, 40, Strategy::DpConvolution);
        assert!((v - 1.0).abs() < 1e-10);
        let y = [0.51; 3];
        let w = uniform_kernel_lifted(&x, &y, 40, Strategy::DpConvolution);
        assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn infinite_kerf_conventions() {
        let data = Dataset::new(2, vec![0.1, 0.1, 0.2, 0.15, 0.9, 0.9], vec![1.0, 3.0, 100.0]).unwrap();
        let k = AnalyticKernel::new(KernelFamily::Centred, 2, 2);
        // (0.05, 0.05) shares the level-2 dyadic cell [0,.25]² with the first two samples only.
        let v = infinite_kerf_predict(&data, &[0.05, 0.05], &k);
        let manual = {
            let w: Vec<f64> = data.points().map(|p| k.eval(&[0.05, 0.05], p)).collect();
            (w[0] * 1.0 + w[1] * 3.0 + w[2] * 100.0) / (w[0] + w[1] + w[2])
        };
        assert!((v - manual).abs() < 1e-14);

        let one = Dataset::new(2, vec![0.3, 0.3], vec![7.0]).unwrap();
        assert_eq!(infinite_kerf_predict(&one, &[0.31, 0.29], &k), 7.0);
        assert_eq!(infinite_kerf_predict(&one, &[0.9, 0.9], &k), 0.0);
    }

    #[test]
    fn same_dyadic_cell_gives_plain_mean() {
        let data = Dataset::new(2, vec![0.51, 0.52, 0.55, 0.6, 0.61, 0.58], vec![1.0, 2.0, 6.0]).unwrap();
        let k = AnalyticKernel::new(KernelFamily::Centred, 3, 2);
        let v = infinite_kerf_predict(&data, &[0.53, 0.54], &k);
        assert!((v - 3.0).abs() < 1e-14);
    }
}
