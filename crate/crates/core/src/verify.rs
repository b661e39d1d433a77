//! Batteries of bound checks run by the `verify` command.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::experiment::{convergence_curve, ConvergenceSpec};
use crate::forest::{Forest, ForestConfig};
use crate::kernel::{
    centred_kernel, multinomial_mix_dp, multinomial_mix_naive, uniform_kernel_exact_1d, KernelFamily, Strategy,
};
use crate::report::BoundReport;
use crate::rng::RandomSource;
use crate::theory::{
    bias_gap_centred, bias_gap_uniform, centred_integral_identity, monte_carlo_connections, uniform_integral_bounds,
    uniform_moment_bound, LipschitzFn,
};
use crate::tree::TreeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Kernel integral identity, kernel integral and moment bounds, DP = enumeration.
    Identities,
    /// Bias bounds and the forest/KeRF proximity bound.
    Bounds,
    /// Monte Carlo connection frequencies against exact kernels.
    Convergence,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Grid points per axis for the bias checks.
    pub bias_grid: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { bias_grid: 50, seed: 0 }
    }
}

/// Integral identity for `k ≤ 10` at 100 random points (and both ends).
pub fn identity_checks(seed: u64) -> Vec<BoundReport> {
    let mut rng = RandomSource::new(seed, 0);
    let mut xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    xs.extend([0.0, 1.0]);
    (0..=10u32)
        .flat_map(|k| {
            xs.iter().map(move |&x| {
                BoundReport::equality("centred-integral-identity", centred_integral_identity(x, k), 0.5f64.powi(k as i32))
                    .with("x", x)
                    .with("k", k)
            })
        })
        .collect()
}

/// Both kernel integral bounds and the moment bound on an `(x, k ≤ 6)` grid.
pub fn lemma_checks() -> Vec<BoundReport> {
    let cases: Vec<(f64, u32)> = (0..=10)
        .flat_map(|i| (1..=6).map(move |k| (f64::from(i) / 10.0, k)))
        .collect();
    cases
        .par_iter()
        .flat_map_iter(|&(x, k)| [uniform_integral_bounds(x, k, 1000), uniform_moment_bound(x, k, 1000)])
        .collect()
}

/// DP and composition enumeration agree on every `(d ≤ 4, k ≤ 8)`.
pub fn strategy_checks(seed: u64, pairs: usize) -> Vec<BoundReport> {
    let mut out = Vec::new();
    for d in 1..=4usize {
        for k in 0..=8u32 {
            let mut rng = RandomSource::new(seed, (d * 16) as u64 + u64::from(k));
            let mut worst = 0.0f64;
            for _ in 0..pairs {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let z: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let dp = centred_kernel(&x, &z, k, Strategy::DpConvolution);
                let naive = centred_kernel(&x, &z, k, Strategy::NaiveEnumeration);
                worst = worst.max((dp - naive).abs());
                let g = |j: usize, t: u32| ((x[j] - z[j]).abs() + 0.1).powi(t as i32);
                worst = worst.max((multinomial_mix_dp(k, d, g) - multinomial_mix_naive(k, d, g)).abs());
            }
            out.push(BoundReport::check("kernel-dp-equals-enumeration", worst, 1e-10, 0.0).with("d", d).with("k", k));
        }
    }
    out
}

fn sum_fn(z: &[f64]) -> f64 {
    z.iter().sum()
}

/// Bias bounds for `f(x) = Σ x_ℓ` on `d ∈ {1,2}`, `k ∈ {1..6}`.
pub fn bias_checks(grid: usize) -> Result<Vec<BoundReport>> {
    let f = LipschitzFn { f: &sum_fn, lipschitz: 1.0 };
    let mut out = Vec::new();
    for d in 1..=2 {
        for k in 1..=6 {
            out.push(bias_gap_centred(&f, k, d, grid)?);
        }
        for k in 1..=6 {
            out.push(bias_gap_uniform(&f, k, d, grid, 32)?);
        }
    }
    Ok(out)
}

/// Fully grown Breiman forest: forest and KeRF agree; with leaf sizes in
/// `[1, 5]` and nonnegative responses the ratio gap stays within `(b − a)/a`.
pub fn proximity_checks(seed: u64) -> Result<Vec<BoundReport>> {
    let mut rng = RandomSource::new(seed, 3);
    let n = 300;
    let d = 3;
    let pts: Vec<f64> = (0..n * d).map(|_| rng.random()).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
    let data = Dataset::new(d, pts, ys)?;
    let queries: Vec<Vec<f64>> = (0..200).map(|_| (0..d).map(|_| rng.random()).collect()).collect();

    let grown = Forest::fit(&ForestConfig::new(TreeSpec::breiman_default(), 50, seed), &data)?;
    let gap = queries
        .iter()
        .map(|q| (grown.predict(q) - grown.kerf_predict(q)).abs())
        .fold(0.0, f64::max);
    let mut out = vec![BoundReport::check("fully-grown-forest-equals-kerf", gap, 0.0, 1e-12)];

    let spec = TreeSpec::Breiman {
        min_samples_split: 6,
        max_features: 0.333,
        min_leaf: 1,
    };
    let shallow = Forest::fit(&ForestConfig::new(spec, 50, seed), &data)?;
    out.extend(queries.iter().map(|q| shallow.proximity_report(q)));
    Ok(out)
}

/// Monte Carlo connection frequencies against the exact kernels: one and
/// two uniform cuts in one dimension, and a level-5 centred forest in three.
pub fn convergence_checks(seed: u64) -> Result<Vec<BoundReport>> {
    let mut rng = RandomSource::new(seed, 5);
    let mut out = Vec::new();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20).map(|_| (vec![rng.random()], vec![rng.random()])).collect();
    for (k, trees, tol) in [(1u32, 100_000usize, 0.01), (2, 1_000_000, 0.005)] {
        let freq = monte_carlo_connections(&TreeSpec::Uniform { level: k }, &pairs, trees, seed)?;
        let worst = pairs
            .iter()
            .zip(&freq)
            .map(|((x, z), p)| Ok((uniform_kernel_exact_1d(x[0], z[0], k)? - p).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(
            BoundReport::check("uniform-kernel-one-dimension", worst, tol, 0.0)
                .with("k", k)
                .with("trees", trees),
        );
    }

    let d = 3;
    let m = 10_000;
    let data = Dataset::new(d, vec![0.5; d], vec![0.0])?;
    let forest = Forest::fit(&ForestConfig::new(TreeSpec::Centred { level: 5 }, m, seed), &data)?;
    let worst = (0..50)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let z: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            (forest.empirical_connection(&x, &z) - centred_kernel(&x, &z, 5, Strategy::DpConvolution)).abs()
        })
        .fold(0.0, f64::max);
    out.push(
        BoundReport::check("centred-connection-convergence", worst, 4.0 / (m as f64).sqrt(), 0.0)
            .with("d", d)
            .with("k", 5)
            .with("trees", m),
    );

    let table = convergence_curve(&ConvergenceSpec {
        model: 1,
        n: 20,
        d: 2,
        family: KernelFamily::Centred,
        m_grid: vec![10_000],
        level: Some(3),
        seed,
        train_fraction: 0.8,
    })?;
    out.push(
        BoundReport::check(
            "finite-kerf-approaches-infinite",
            (table.rows[0].risk - table.infinite_risk).abs(),
            0.05,
            0.0,
        )
        .with("trees", 10_000),
    );
    Ok(out)
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Identities | Suite::All) {
        out.extend(identity_checks(opts.seed));
        out.extend(lemma_checks());
        out.extend(strategy_checks(opts.seed, 50));
    }
    if matches!(suite, Suite::Bounds | Suite::All) {
        out.extend(bias_checks(opts.bias_grid)?);
        out.extend(proximity_checks(opts.seed)?);
    }
    if matches!(suite, Suite::Convergence | Suite::All) {
        out.extend(convergence_checks(opts.seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_pass() {
        let r = run_suite(Suite::Identities, &VerifyOptions::default()).unwrap();
        assert!(r.len() > 1000);
        for rep in &r {
            assert!(rep.satisfied, "{rep:?}");
        }
    }

    #[test]
    fn proximity_pass() {
        for rep in proximity_checks(2).unwrap() {
            assert!(rep.satisfied, "{rep:?}");
        }
    }

    #[test]
    fn coarse_bias_pass() {
        for rep in bias_checks(6).unwrap() {
            assert!(rep.satisfied, "{rep:?}");
        }
    }
}
