//! Randomized binary partitions of `[0,1]^d`.
//!
//! Cells follow a half-open convention: along every axis a cell is `]a, b]`,
//! except cells touching 0 which are `[0, b]`. A point equal to a split
//! position therefore goes to the left child.

use rand::distr::Open01;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Tree family together with its growth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeSpec {
    /// Split a uniformly chosen axis at the cell midpoint, `level` times.
    Centred { level: u32 },
    /// Split a uniformly chosen axis at a uniform position, `level` times.
    Uniform { level: u32 },
    /// Split a uniformly chosen axis at the empirical median of the cell.
    Median { level: u32 },
    /// CART growth: variance-minimizing splits over a random feature subset.
    Breiman {
        min_samples_split: usize,
        max_features: f64,
        min_leaf: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Centred,
    Uniform,
    Median,
    Breiman,
}

impl TreeKind {
    /// Construction does not look at the training sample.
    pub fn is_data_independent(self) -> bool {
        matches!(self, TreeKind::Centred | TreeKind::Uniform)
    }
}

impl std::fmt::Display for TreeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TreeKind::Centred => "centred",
            TreeKind::Uniform => "uniform",
            TreeKind::Median => "median",
            TreeKind::Breiman => "breiman",
        };
        f.write_str(s)
    }
}

impl TreeSpec {
    /// Default Breiman settings: fully grown, a third of the features per node.
    pub fn breiman_default() -> Self {
        TreeSpec::Breiman {
            min_samples_split: 2,
            max_features: 0.333,
            min_leaf: 1,
        }
    }

    pub fn kind(&self) -> TreeKind {
        match self {
            TreeSpec::Centred { .. } => TreeKind::Centred,
            TreeSpec::Uniform { .. } => TreeKind::Uniform,
            TreeSpec::Median { .. } => TreeKind::Median,
            TreeSpec::Breiman { .. } => TreeKind::Breiman,
        }
    }

    pub fn level(&self) -> Option<u32> {
        match *self {
            TreeSpec::Centred { level } | TreeSpec::Uniform { level } | TreeSpec::Median { level } => {
                Some(level)
            }
            TreeSpec::Breiman { .. } => None,
        }
    }

    /// Build a spec from a signed level, rejecting negative values.
    pub fn with_level(kind: TreeKind, level: i64) -> Result<Self> {
        let level = u32::try_from(level)
            .map_err(|_| Error::InvalidParameter(format!("tree level must be ≥ 0, got {level}")))?;
        Ok(match kind {
            TreeKind::Centred => TreeSpec::Centred { level },
            TreeKind::Uniform => TreeSpec::Uniform { level },
            TreeKind::Median => TreeSpec::Median { level },
            TreeKind::Breiman => {
                return Err(Error::InvalidParameter("breiman trees have no level".into()))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let TreeSpec::Breiman {
            min_samples_split,
            max_features,
            min_leaf,
        } = *self
        {
            if min_samples_split < 2 {
                return Err(Error::InvalidParameter(format!(
                    "min-samples-split must be ≥ 2, got {min_samples_split}"
                )));
            }
            if !(max_features > 0.0 && max_features <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "max-features must lie in (0,1], got {max_features}"
                )));
            }
            if min_leaf == 0 {
                return Err(Error::InvalidParameter("min-leaf must be ≥ 1".into()));
            }
        }
        Ok(())
    }
}

/// An axis-aligned cell with the half-open convention described above.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cell {
    pub fn unit(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    /// Whether side `j` is closed at its lower end (`[0, b]`).
    pub fn closed_below(&self, j: usize) -> bool {
        self.lower[j] == 0.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &c)| {
            let above = c > self.lower[j] || (self.closed_below(j) && c == 0.0);
            above && c <= self.upper[j]
        })
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        dim: u32,
        pos: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

/// Statistics of the training samples that fell in a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Number of samples, counted with bootstrap multiplicity.
    pub count: u32,
    pub sum: f64,
    /// `sum / count`, or 0 for an empty leaf.
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<u32>,
}

impl Leaf {
    fn from_samples(samples: Vec<u32>, data: Option<&Dataset>) -> Self {
        let sum: f64 = match data {
            Some(d) => samples.iter().map(|&i| d.response(i as usize)).sum(),
            None => 0.0,
        };
        let count = samples.len() as u32;
        let mean = if count == 0 { 0.0 } else { sum / count as f64 };
        Leaf {
            count,
            sum,
            mean,
            samples,
        }
    }
}

/// One realization of a randomized tree, with leaf statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub spec: TreeSpec,
    pub dim: usize,
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
}

struct Pending {
    node: usize,
    cell: Cell,
    samples: Vec<u32>,
    depth: u32,
}

enum Decision {
    Split { dim: usize, pos: f64 },
    Leaf,
}

/// Grow a tree on every sample of `data`.
pub fn build_tree(spec: &TreeSpec, data: &Dataset, rng: &mut RandomSource) -> Result<PartitionTree> {
    let all: Vec<u32> = (0..data.len() as u32).collect();
    build_tree_on(spec, data, all, rng)
}

/// Grow a tree on the given sample indices (repeats allowed, e.g. a bootstrap draw).
pub fn build_tree_on(
    spec: &TreeSpec,
    data: &Dataset,
    samples: Vec<u32>,
    rng: &mut RandomSource,
) -> Result<PartitionTree> {
    spec.validate()?;
    if samples.iter().any(|&i| i as usize >= data.len()) {
        return Err(Error::InvalidParameter("sample index out of range".into()));
    }
    if samples.is_empty() && matches!(spec.kind(), TreeKind::Median | TreeKind::Breiman) {
        return Err(Error::InvalidData(format!(
            "{} trees need a nonempty sample",
            spec.kind()
        )));
    }
    Ok(grow(spec, data.dim(), Some(data), samples, rng))
}

/// Draw a data-free partition (centred or uniform only). Leaves are empty.
pub fn random_partition(spec: &TreeSpec, dim: usize, rng: &mut RandomSource) -> Result<PartitionTree> {
    if !spec.kind().is_data_independent() {
        return Err(Error::InvalidParameter(format!(
            "{} trees depend on the data",
            spec.kind()
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
    }
    Ok(grow(spec, dim, None, Vec::new(), rng))
}

fn grow(
    spec: &TreeSpec,
    dim: usize,
    data: Option<&Dataset>,
    samples: Vec<u32>,
    rng: &mut RandomSource,
) -> PartitionTree {
    let mut nodes = vec![Node::Leaf { leaf: 0 }];
    let mut leaves = Vec::new();
    let mut stack = vec![Pending {
        node: 0,
        cell: Cell::unit(dim),
        samples,
        depth: 0,
    }];
    while let Some(p) = stack.pop() {
        match decide(spec, data, &p, rng) {
            Decision::Leaf => {
                nodes[p.node] = Node::Leaf {
                    leaf: leaves.len() as u32,
                };
                leaves.push(Leaf::from_samples(p.samples, data));
            }
            Decision::Split { dim: j, pos } => {
                let (left_s, right_s) = match data {
                    Some(d) => p
                        .samples
                        .iter()
                        .partition(|&&i| d.point(i as usize)[j] <= pos),
                    None => (Vec::new(), Vec::new()),
                };
                let left = nodes.len();
                nodes.push(Node::Leaf { leaf: 0 });
                nodes.push(Node::Leaf { leaf: 0 });
                nodes[p.node] = Node::Split {
                    dim: j as u32,
                    pos,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                let mut lcell = p.cell.clone();
                lcell.upper[j] = pos;
                let mut rcell = p.cell;
                rcell.lower[j] = pos;
                // Right is pushed first so the left subtree is grown (and numbered) first.
                stack.push(Pending {
                    node: left + 1,
                    cell: rcell,
                    samples: right_s,
                    depth: p.depth + 1,
                });
                stack.push(Pending {
                    node: left,
                    cell: lcell,
                    samples: left_s,
                    depth: p.depth + 1,
                });
            }
        }
    }
    PartitionTree {
        spec: *spec,
        dim,
        nodes,
        leaves,
    }
}

fn midpoint(cell: &Cell, j: usize) -> f64 {
    0.5 * (cell.lower[j] + cell.upper[j])
}

fn decide(spec: &TreeSpec, data: Option<&Dataset>, p: &Pending, rng: &mut RandomSource) -> Decision {
    let d = p.cell.lower.len();
    match *spec {
        TreeSpec::Centred { level } => {
            if p.depth >= level {
                return Decision::Leaf;
            }
            let j = rng.random_range(0..d);
            Decision::Split {
                dim: j,
                pos: midpoint(&p.cell, j),
            }
        }
        TreeSpec::Uniform { level } => {
            if p.depth >= level {
                return Decision::Leaf;
            }
            let j = rng.random_range(0..d);
            let (lo, hi) = (p.cell.lower[j], p.cell.upper[j]);
            let u: f64 = rng.sample(Open01);
            let mut pos = lo + u * (hi - lo);
            if !(pos > lo && pos < hi) {
                pos = midpoint(&p.cell, j);
            }
            Decision::Split { dim: j, pos }
        }
        TreeSpec::Median { level } => {
            if p.depth >= level {
                return Decision::Leaf;
            }
            let j = rng.random_range(0..d);
            let pos = data
                .and_then(|data| median_split(data, &p.samples, j))
                .filter(|&m| m > p.cell.lower[j] && m < p.cell.upper[j])
                .unwrap_or_else(|| midpoint(&p.cell, j));
            Decision::Split { dim: j, pos }
        }
        TreeSpec::Breiman {
            min_samples_split,
            max_features,
            min_leaf,
        } => {
            let data = match data {
                Some(data) => data,
                None => return Decision::Leaf,
            };
            if p.samples.len() < min_samples_split || is_pure(data, &p.samples) {
                return Decision::Leaf;
            }
            let mtry = ((max_features * d as f64).ceil() as usize).clamp(1, d);
            let mut drawn: Vec<usize> = sample_indices(rng, d, mtry).into_vec();
            drawn.sort_unstable();
            let best = best_split(data, &p.samples, &drawn, min_leaf).or_else(|| {
                // None of the drawn features can split this node; keep looking
                // through the rest.
                let rest: Vec<usize> = (0..d).filter(|j| drawn.binary_search(j).is_err()).collect();
                best_split(data, &p.samples, &rest, min_leaf)
            });
            match best {
                Some((dim, pos)) => Decision::Split { dim, pos },
                None => Decision::Leaf,
            }
        }
    }
}

fn median_split(data: &Dataset, samples: &[u32], j: usize) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut v: Vec<f64> = samples.iter().map(|&i| data.point(i as usize)[j]).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    })
}

fn is_pure(data: &Dataset, samples: &[u32]) -> bool {
    let y0 = data.response(samples[0] as usize);
    samples.iter().all(|&i| data.response(i as usize) == y0)
}

/// Best variance-reducing split over `dims`.
///
/// Maximizes `S_l²/n_l + S_r²/n_r`, which is equivalent to minimizing the
/// summed within-child squared error. Ties go to the lowest dimension, then
/// the smallest position.
fn best_split(data: &Dataset, samples: &[u32], dims: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = samples.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = samples.iter().map(|&i| data.response(i as usize)).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &j in dims {
        pairs.clear();
        pairs.extend(
            samples
                .iter()
                .map(|&i| (data.point(i as usize)[j], data.response(i as usize))),
        );
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += pairs[k].1;
            let n_left = k + 1;
            let (a, b) = (pairs[k].0, pairs[k + 1].0);
            if a == b || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
            let mut pos = 0.5 * (a + b);
            if pos >= b {
                pos = a;
            }
            let better = match best {
                None => true,
                Some((s, bj, bp)) => {
                    score > s || (score == s && (j < bj || (j == bj && pos < bp)))
                }
            };
            if better {
                best = Some((score, j, pos));
            }
        }
    }
    best.map(|(_, j, pos)| (j, pos))
}

impl PartitionTree {
    pub fn kind(&self) -> TreeKind {
        self.spec.kind()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Index of the leaf whose cell contains `x`.
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { leaf } => return leaf as usize,
                Node::Split {
                    dim, pos, left, right,
                } => {
                    node = if x[dim as usize] <= pos { left } else { right } as usize;
                }
            }
        }
    }

    pub fn leaf_at(&self, x: &[f64]) -> &Leaf {
        &self.leaves[self.locate(x)]
    }

    /// Mean response of the cell containing `x` (0 for an empty cell).
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_at(x).mean
    }

    /// Number of training samples in the cell containing `x`.
    pub fn leaf_count(&self, x: &[f64]) -> u32 {
        self.leaf_at(x).count
    }

    /// Geometry of every leaf, indexed by leaf id.
    pub fn leaf_cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell::unit(self.dim); self.leaves.len()];
        let mut stack = vec![(0usize, Cell::unit(self.dim))];
        while let Some((node, cell)) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { leaf } => cells[leaf as usize] = cell,
                Node::Split {
                    dim, pos, left, right,
                } => {
                    let mut l = cell.clone();
                    l.upper[dim as usize] = pos;
                    let mut r = cell;
                    r.lower[dim as usize] = pos;
                    stack.push((left as usize, l));
                    stack.push((right as usize, r));
                }
            }
        }
        cells
    }

    /// Depth of every leaf, indexed by leaf id.
    pub fn leaf_depths(&self) -> Vec<u32> {
        let mut depths = vec![0; self.leaves.len()];
        let mut stack = vec![(0usize, 0u32)];
        while let Some((node, depth)) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { leaf } => depths[leaf as usize] = depth,
                Node::Split { left, right, .. } => {
                    stack.push((left as usize, depth + 1));
                    stack.push((right as usize, depth + 1));
                }
            }
        }
        depths
    }

    /// Split structure only (dimension and position of every node).
    pub fn shape(&self) -> Vec<Option<(u32, f64)>> {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Split { dim, pos, .. } => Some((dim, pos)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

/// How to choose the level of a non-adaptive tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelPolicy {
    /// `⌊log₂ n⌋`, about one sample per leaf.
    Experiment,
    /// Bias/variance-balancing level for centred kernels.
    CentredRate,
    /// Bias/variance-balancing level for uniform kernels.
    UniformRate,
}

/// Suggested tree level for `n` samples in dimension `d`; never below 1.
///
/// The rate policies use `log(n/(log n)²) / (log 2 + c/d)` with `c = 3`
/// (centred) or `c = 2` (uniform), rounded up; the additive constant in
/// front of it is unknown and dropped. Rate levels are capped at
/// `⌊log₂ n⌋` so that `n / 2^k ≥ 1`.
pub fn suggest_level(n: usize, d: usize, mode: LevelPolicy) -> u32 {
    let n = n.max(2) as f64;
    let d = d.max(1) as f64;
    let k = match mode {
        LevelPolicy::Experiment => n.log2().floor(),
        LevelPolicy::CentredRate => (n / n.ln().powi(2)).ln() / (2f64.ln() + 3.0 / d),
        LevelPolicy::UniformRate => (n / n.ln().powi(2)).ln() / (2f64.ln() + 2.0 / d),
    };
    let k = match mode {
        LevelPolicy::Experiment => k,
        _ => k.ceil().min(n.log2().floor()),
    };
    if k.is_finite() && k >= 1.0 {
        k as u32
    } else {
        1
    }
}
