//! Simulation studies on the synthetic regression models: finite forests
//! against their KeRF counterparts, and finite KeRF against its infinite limit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{empirical_risk, split_train_test, Dataset};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig};
use crate::kernel::{infinite_kerf_predict_many, AnalyticKernel, KernelFamily};
use crate::models::SyntheticModel;
use crate::rng::{derive_seed, RandomSource};
use crate::tree::{suggest_level, LevelPolicy, TreeKind, TreeSpec};

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
/// Largest `d·k` accepted for infinite-KeRF estimators by default.
pub const DEFAULT_INFINITE_BUDGET: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    BreimanRf,
    BreimanKerf,
    CentredRf,
    CentredKerf,
    UniformRf,
    UniformKerf,
    CentredKerfInfinite,
    UniformKerfInfinite,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::BreimanRf,
        Estimator::BreimanKerf,
        Estimator::CentredRf,
        Estimator::CentredKerf,
        Estimator::UniformRf,
        Estimator::UniformKerf,
        Estimator::CentredKerfInfinite,
        Estimator::UniformKerfInfinite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::BreimanRf => "breiman-rf",
            Estimator::BreimanKerf => "breiman-kerf",
            Estimator::CentredRf => "centred-rf",
            Estimator::CentredKerf => "centred-kerf",
            Estimator::UniformRf => "uniform-rf",
            Estimator::UniformKerf => "uniform-kerf",
            Estimator::CentredKerfInfinite => "centred-kerf-infinite",
            Estimator::UniformKerfInfinite => "uniform-kerf-infinite",
        }
    }

    pub fn kind(self) -> TreeKind {
        match self {
            Estimator::BreimanRf | Estimator::BreimanKerf => TreeKind::Breiman,
            Estimator::CentredRf | Estimator::CentredKerf | Estimator::CentredKerfInfinite => TreeKind::Centred,
            Estimator::UniformRf | Estimator::UniformKerf | Estimator::UniformKerfInfinite => TreeKind::Uniform,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Estimator::CentredKerfInfinite | Estimator::UniformKerfInfinite)
    }

    pub fn is_kerf(self) -> bool {
        !matches!(self, Estimator::BreimanRf | Estimator::CentredRf | Estimator::UniformRf)
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_trees() -> usize {
    DEFAULT_TREES
}
fn default_repetitions() -> usize {
    1
}
fn default_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}
fn default_budget() -> u32 {
    DEFAULT_INFINITE_BUDGET
}
fn default_policy() -> LevelPolicy {
    LevelPolicy::Experiment
}
fn default_breiman() -> TreeSpec {
    TreeSpec::breiman_default()
}

/// One simulation study. Optional fields fall back to the defaults above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: u8,
    pub n: usize,
    pub d: usize,
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_trees")]
    pub trees: usize,
    /// Fixed tree level; when absent it follows `level_policy` on the training size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default = "default_policy")]
    pub level_policy: LevelPolicy,
    #[serde(default)]
    pub bootstrap: bool,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_budget")]
    pub infinite_budget: u32,
    #[serde(default = "default_breiman")]
    pub breiman: TreeSpec,
    /// Include wall-clock timings in the report (makes it non-reproducible).
    #[serde(default)]
    pub record_timings: bool,
}

impl ExperimentSpec {
    pub fn new(model: u8, n: usize, d: usize, estimators: Vec<Estimator>) -> Self {
        Self {
            model,
            n,
            d,
            estimators,
            trees: DEFAULT_TREES,
            level: None,
            level_policy: LevelPolicy::Experiment,
            bootstrap: false,
            repetitions: 1,
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            infinite_budget: DEFAULT_INFINITE_BUDGET,
            breiman: TreeSpec::breiman_default(),
            record_timings: false,
        }
    }

    /// Desk-scale version of a published setup: the model's own `d`, `n`
    /// divided by `2^shrink`, and every finite estimator.
    ///
    /// Names are `model-1` to `model-8`.
    pub fn preset(name: &str, shrink: u32) -> Result<Self> {
        let id = name
            .strip_prefix("model-")
            .and_then(|s| s.parse::<u8>().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset `{name}`; expected model-1 to model-8")))?;
        let base = SyntheticModel::standard(id)?;
        let n = base.n.checked_shr(shrink).unwrap_or(0);
        if n < 2 {
            return Err(Error::InvalidParameter(format!("shrinking n = {} by 2^{shrink} leaves too few samples", base.n)));
        }
        let finite = Estimator::ALL.iter().copied().filter(|e| !e.is_infinite()).collect();
        Ok(Self::new(id, n, base.d, finite))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn n_train(&self) -> usize {
        ((self.train_fraction * self.n as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// Tree level of the non-adaptive forests and infinite kernels.
    pub fn tree_level(&self) -> u32 {
        self.level
            .unwrap_or_else(|| suggest_level(self.n_train().max(1), self.d, self.level_policy))
    }

    pub fn validate(&self) -> Result<()> {
        SyntheticModel::with_size(self.model, self.n, self.d)?;
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
        }
        if self.trees == 0 && self.estimators.iter().any(|e| !e.is_infinite()) {
            return Err(Error::InvalidParameter("finite forests need at least one tree".into()));
        }
        if self.breiman.kind() != TreeKind::Breiman {
            return Err(Error::InvalidParameter("the breiman table must describe a breiman tree".into()));
        }
        self.breiman.validate()?;
        let k = self.tree_level();
        for e in self.estimators.iter().filter(|e| e.is_infinite()) {
            let cost = self.d as u64 * u64::from(k);
            if cost > u64::from(self.infinite_budget) {
                return Err(Error::Infeasible {
                    estimator: e.name().into(),
                    reason: format!(
                        "d·k = {}·{} = {cost} exceeds the infinite-kernel budget {}",
                        self.d, k, self.infinite_budget
                    ),
                });
            }
        }
        Ok(())
    }

    fn tree_spec(&self, kind: TreeKind) -> TreeSpec {
        let level = self.tree_level();
        match kind {
            TreeKind::Centred => TreeSpec::Centred { level },
            TreeKind::Uniform => TreeSpec::Uniform { level },
            TreeKind::Median => TreeSpec::Median { level },
            TreeKind::Breiman => self.breiman,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: Estimator,
    /// Test-set risk of each repetition, in repetition order.
    pub risks: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over repetitions (0 for a single one).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: ExperimentSpec,
    pub level: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub results: Vec<EstimatorResult>,
    /// Total seconds per estimator; a shared forest is charged to the first
    /// estimator that uses it. Only present when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn result(&self, e: Estimator) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.estimator == e)
    }

    /// Long-format table `repetition,estimator,risk`.
    pub fn write_risks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["repetition", "estimator", "risk"])?;
        for r in &self.results {
            for (i, risk) in r.risks.iter().enumerate() {
                w.write_record([i.to_string(), r.estimator.to_string(), risk.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn kind_tag(kind: TreeKind) -> u64 {
    match kind {
        TreeKind::Centred => 1,
        TreeKind::Uniform => 2,
        TreeKind::Median => 3,
        TreeKind::Breiman => 4,
    }
}

fn family_of(kind: TreeKind) -> KernelFamily {
    match kind {
        TreeKind::Uniform => KernelFamily::Uniform,
        _ => KernelFamily::Centred,
    }
}

/// Fresh data and split for repetition `rep`.
fn repetition_data(spec: &ExperimentSpec, rep: usize) -> Result<(Dataset, Dataset)> {
    let seed = derive_seed(spec.seed, rep as u64);
    let model = SyntheticModel::with_size(spec.model, spec.n, spec.d)?;
    let data = model.generate(&mut RandomSource::new(seed, 0))?;
    split_train_test(&data, spec.train_fraction, &mut RandomSource::new(seed, 1))
}

type RepOutcome = (Vec<f64>, Vec<f64>);

fn run_repetition(spec: &ExperimentSpec, rep: usize) -> Result<RepOutcome> {
    let (train, test) = repetition_data(spec, rep)?;
    let seed = derive_seed(spec.seed, rep as u64);
    let queries: Vec<Vec<f64>> = test.points().map(<[f64]>::to_vec).collect();
    let mut forests: BTreeMap<u64, Forest> = BTreeMap::new();
    let mut risks = Vec::with_capacity(spec.estimators.len());
    let mut secs = Vec::with_capacity(spec.estimators.len());
    for &e in &spec.estimators {
        let start = Instant::now();
        let preds = if e.is_infinite() {
            let kernel = AnalyticKernel::new(family_of(e.kind()), spec.tree_level(), spec.d);
            infinite_kerf_predict_many(&train, &queries, &kernel)
        } else {
            let tag = kind_tag(e.kind());
            let forest = match forests.entry(tag) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let config = ForestConfig::new(spec.tree_spec(e.kind()), spec.trees, derive_seed(seed, 16 + tag))
                        .with_bootstrap(spec.bootstrap);
                    v.insert(Forest::fit(&config, &train)?)
                }
            };
            if e.is_kerf() {
                queries.par_iter().map(|q| forest.kerf_predict(q)).collect()
            } else {
                queries.par_iter().map(|q| forest.predict(q)).collect()
            }
        };
        secs.push(start.elapsed().as_secs_f64());
        risks.push(empirical_risk(&preds, test.responses())?);
    }
    Ok((risks, secs))
}

/// Run every repetition: regenerate the data, split, fit, and score on the
/// held-out part. Deterministic in `spec` (timings aside).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let outcomes: Vec<RepOutcome> = (0..spec.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(spec, r))
        .collect::<Result<_>>()?;
    let n_train = spec.n_train();
    let results = spec
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let risks: Vec<f64> = outcomes.iter().map(|o| o.0[i]).collect();
            let (mean, std) = mean_std(&risks);
            EstimatorResult {
                estimator: e,
                risks,
                mean,
                std,
            }
        })
        .collect();
    let timings = spec.record_timings.then(|| {
        spec.estimators
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name().to_owned(), outcomes.iter().map(|o| o.1[i]).sum()))
            .collect()
    });
    Ok(RunReport {
        spec: spec.clone(),
        level: spec.tree_level(),
        n_train,
        n_test: spec.n - n_train,
        results,
        timings,
    })
}

/// Finite KeRF at increasing forest sizes against infinite KeRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub model: u8,
    pub n: usize,
    pub d: usize,
    pub family: KernelFamily,
    pub m_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub level: u32,
    pub rows: Vec<ConvergenceRow>,
    pub infinite_risk: f64,
}

impl ConvergenceTable {
    /// `m,risk,infinite_risk`, one row per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "risk", "infinite_risk"])?;
        for r in &self.rows {
            w.write_record([r.m.to_string(), r.risk.to_string(), self.infinite_risk.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Test-set risk of finite KeRF built from the first `M` trees of one
/// forest, for each `M` in the grid, and of infinite KeRF on the same split.
pub fn convergence_curve(spec: &ConvergenceSpec) -> Result<ConvergenceTable> {
    let model = SyntheticModel::with_size(spec.model, spec.n, spec.d)?;
    if spec.m_grid.is_empty() || spec.m_grid[0] == 0 || spec.m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("M grid must be nonempty, positive and increasing".into()));
    }
    let data = model.generate(&mut RandomSource::new(spec.seed, 0))?;
    let (train, test) = split_train_test(&data, spec.train_fraction, &mut RandomSource::new(spec.seed, 1))?;
    let level = spec
        .level
        .unwrap_or_else(|| suggest_level(train.len(), spec.d, LevelPolicy::Experiment));
    let tree = match spec.family {
        KernelFamily::Centred => TreeSpec::Centred { level },
        KernelFamily::Uniform => TreeSpec::Uniform { level },
    };
    let max_m = *spec.m_grid.last().expect("grid is nonempty");
    let forest = Forest::fit(&ForestConfig::new(tree, max_m, derive_seed(spec.seed, 2)), &train)?;
    let queries: Vec<Vec<f64>> = test.points().map(<[f64]>::to_vec).collect();
    let rows = spec
        .m_grid
        .iter()
        .map(|&m| {
            let sub = forest.subforest(m)?;
            let preds: Vec<f64> = queries.par_iter().map(|q| sub.kerf_predict(q)).collect();
            Ok(ConvergenceRow {
                m,
                risk: empirical_risk(&preds, test.responses())?,
            })
        })
        .collect::<Result<_>>()?;
    let kernel = AnalyticKernel::new(spec.family, level, spec.d);
    let infinite = infinite_kerf_predict_many(&train, &queries, &kernel);
    Ok(ConvergenceTable {
        level,
        rows,
        infinite_risk: empirical_risk(&infinite, test.responses())?,
    })
}
