//! Forests of partition trees: averaged predictions, KeRF pooling and the
//! empirical connection function.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{infinite_kerf_predict, AnalyticKernel, KernelFamily};
use crate::report::BoundReport;
use crate::rng::RandomSource;
use crate::tree::{build_tree_on, PartitionTree, TreeKind, TreeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree: TreeSpec,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(tree: TreeSpec, n_trees: usize, seed: u64) -> Self {
        Self {
            tree,
            n_trees,
            bootstrap: false,
            seed,
        }
    }

    pub fn with_bootstrap(mut self, on: bool) -> Self {
        self.bootstrap = on;
        self
    }
}

/// How a forest turns its trees into a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictMode {
    /// Average of the tree predictions.
    Forest,
    /// Pooled mean over every (tree, sample-in-cell) incidence.
    Kerf,
    /// Kernel average with the exact infinite-forest connection function.
    KerfInfinite,
}

/// `M` trees grown on one training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub training: Dataset,
    pub trees: Vec<PartitionTree>,
    /// Per tree, how many times each training sample was drawn (bootstrap only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicities: Option<Vec<Vec<u32>>>,
}

impl Forest {
    /// Grow `n_trees` trees in parallel; tree `j` draws from stream `j`.
    pub fn fit(config: &ForestConfig, data: &Dataset) -> Result<Self> {
        if config.n_trees == 0 {
            return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
        }
        config.tree.validate()?;
        let n = data.len();
        let grown: Vec<(PartitionTree, Option<Vec<u32>>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|j| {
                let mut rng = RandomSource::new(config.seed, j as u64);
                let (samples, mult) = if config.bootstrap {
                    let mut mult = vec![0u32; n];
                    let samples: Vec<u32> = (0..n)
                        .map(|_| {
                            let i = rng.random_range(0..n);
                            mult[i] += 1;
                            i as u32
                        })
                        .collect();
                    (samples, Some(mult))
                } else {
                    ((0..n as u32).collect(), None)
                };
                build_tree_on(&config.tree, data, samples, &mut rng).map(|t| (t, mult))
            })
            .collect::<Result<_>>()?;
        let (trees, mults): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
        let multiplicities = if config.bootstrap {
            Some(mults.into_iter().map(Option::unwrap_or_default).collect())
        } else {
            None
        };
        Ok(Self {
            config: *config,
            training: data.clone(),
            trees,
            multiplicities,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    pub fn kind(&self) -> TreeKind {
        self.config.tree.kind()
    }

    /// The forest made of the first `m` trees.
    pub fn subforest(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.trees.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot take {m} of {} trees",
                self.trees.len()
            )));
        }
        Ok(Self {
            config: ForestConfig {
                n_trees: m,
                ..self.config
            },
            training: self.training.clone(),
            trees: self.trees[..m].to_vec(),
            multiplicities: self.multiplicities.as_ref().map(|v| v[..m].to_vec()),
        })
    }

    /// Finite forest estimate: mean of the tree predictions (empty cells give 0).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        s / self.trees.len() as f64
    }

    /// Finite KeRF estimate: `Σ_j S_j(x) / Σ_j N_j(x)`, or 0 if `x` shares a
    /// cell with no sample in any tree.
    pub fn kerf_predict(&self, x: &[f64]) -> f64 {
        let (mut sum, mut count) = (0.0, 0u64);
        for t in &self.trees {
            let leaf = t.leaf_at(x);
            sum += leaf.sum;
            count += u64::from(leaf.count);
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Fraction of trees in which `x` and `z` fall in the same cell.
    pub fn empirical_connection(&self, x: &[f64], z: &[f64]) -> f64 {
        let hits = self.trees.iter().filter(|t| t.locate(x) == t.locate(z)).count();
        hits as f64 / self.trees.len() as f64
    }

    /// KeRF estimate written as a kernel average over the training points.
    ///
    /// Each training point is weighted by the fraction of trees whose cell
    /// containing `x` also contains it (times its bootstrap multiplicity, when
    /// bootstrapping). Leaf statistics are not used.
    pub fn kerf_predict_via_kernel(&self, x: &[f64]) -> f64 {
        let x_leaves: Vec<usize> = self.trees.iter().map(|t| t.locate(x)).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for (i, xi) in self.training.points().enumerate() {
            let mut w = 0u64;
            for (j, t) in self.trees.iter().enumerate() {
                let mult = match &self.multiplicities {
                    Some(m) => u64::from(m[j][i]),
                    None => 1,
                };
                if mult > 0 && t.locate(xi) == x_leaves[j] {
                    w += mult;
                }
            }
            let w = w as f64 / self.trees.len() as f64;
            num += w * self.training.response(i);
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Exact connection function of the infinite forest behind this one.
    ///
    /// Only centred and uniform trees have one; the uniform case is the
    /// translation-invariant lift.
    pub fn infinite_kernel(&self) -> Result<AnalyticKernel> {
        let family = match self.config.tree {
            TreeSpec::Centred { .. } => KernelFamily::Centred,
            TreeSpec::Uniform { .. } => KernelFamily::Uniform,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "{} trees depend on the data and have no closed-form connection function",
                    self.kind()
                )))
            }
        };
        let level = self.config.tree.level().unwrap_or(0);
        Ok(AnalyticKernel::new(family, level, self.dim()))
    }

    pub fn predict_with(&self, mode: PredictMode, x: &[f64]) -> Result<f64> {
        Ok(match mode {
            PredictMode::Forest => self.predict(x),
            PredictMode::Kerf => self.kerf_predict(x),
            PredictMode::KerfInfinite => infinite_kerf_predict(&self.training, x, &self.infinite_kernel()?),
        })
    }

    /// Parallel batch prediction; output order matches `queries`.
    pub fn predict_many(&self, mode: PredictMode, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(q) = queries.iter().find(|q| q.len() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.len(),
            });
        }
        if mode == PredictMode::KerfInfinite {
            self.infinite_kernel()?;
        }
        queries.par_iter().map(|q| self.predict_with(mode, q)).collect()
    }

    /// Compare forest and KeRF predictions at `x` against `(b − a)/a`, where
    /// `a` and `b` are the smallest and largest cell counts around `x`.
    ///
    /// The ratio gap uses `0/0 = 1`. The bound is only claimed for
    /// nonnegative responses and `a ≥ 1`; otherwise `satisfied` is still
    /// computed but `context.applicable` is false.
    pub fn proximity_report(&self, x: &[f64]) -> BoundReport {
        let counts: Vec<u32> = self.trees.iter().map(|t| t.leaf_count(x)).collect();
        let a = counts.iter().copied().min().unwrap_or(0);
        let b = counts.iter().copied().max().unwrap_or(0);
        let bound = if a == 0 {
            f64::INFINITY
        } else {
            f64::from(b - a) / f64::from(a)
        };
        let m = self.predict(x);
        let mk = self.kerf_predict(x);
        let observed = if mk == 0.0 {
            if m == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (m / mk - 1.0).abs()
        };
        let nonneg = self.training.responses().iter().all(|&y| y >= 0.0);
        BoundReport::check("forest-kerf-proximity", observed, bound, 1e-12)
            .with("a_n", a)
            .with("b_n", b)
            .with("responses_nonnegative", nonneg)
            .with("applicable", nonneg && a >= 1)
            .with("n_trees", self.trees.len())
    }
}
