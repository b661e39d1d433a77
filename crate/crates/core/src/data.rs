//! Labelled samples on the unit hypercube, train/test splitting and risk.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// `n` points of `[0,1]^d` with one real response each.
///
/// Points are stored row-major in a single buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    responses: Vec<f64>,
}

/// Check that every coordinate lies in `[0,1]`.
pub fn check_unit_point(x: &[f64]) -> Result<()> {
    match x.iter().position(|c| !(0.0..=1.0).contains(c)) {
        Some(j) => Err(Error::InvalidData(format!(
            "coordinate {j} = {} lies outside [0,1]",
            x[j]
        ))),
        None => Ok(()),
    }
}

impl Dataset {
    /// Build from a row-major point buffer.
    pub fn new(dim: usize, points: Vec<f64>, responses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("dimension must be at least 1".into()));
        }
        if responses.is_empty() {
            return Err(Error::InvalidData("dataset must hold at least one sample".into()));
        }
        if points.len() != dim * responses.len() {
            return Err(Error::InvalidData(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                points.len(),
                responses.len()
            )));
        }
        for (i, row) in points.chunks_exact(dim).enumerate() {
            check_unit_point(row).map_err(|e| Error::InvalidData(format!("point {i}: {e}")))?;
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidData(format!("response {i} is not finite")));
        }
        Ok(Self {
            dim,
            points,
            responses,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(dim, rows.concat(), responses)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            points.extend_from_slice(self.point(i));
            responses.push(self.responses[i]);
        }
        Self::new(self.dim, points, responses)
    }
}

/// Shuffle and cut into a training part of `⌈fraction·n⌉` rows and a test part.
pub fn split_train_test(
    data: &Dataset,
    fraction: f64,
    rng: &mut RandomSource,
) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::CannotSplit(format!("need at least 2 samples, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0,1), got {fraction}"
        )));
    }
    // Guard the ceiling against representation error (0.8 * 10 = 8.000…01).
    let n_train = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::CannotSplit(format!(
            "fraction {fraction} of {n} samples leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (train, test) = idx.split_at(n_train);
    Ok((data.subset(train)?, data.subset(test)?))
}

/// Mean squared difference between predictions and targets.
pub fn empirical_risk(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidData("risk of an empty sample".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn line(n: usize) -> Dataset {
        let pts: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let ys = pts.clone();
        Dataset::new(1, pts, ys).unwrap()
    }

    #[test]
    fn rejects_out_of_cube() {
        assert!(Dataset::new(1, vec![1.5], vec![0.0]).is_err());
        assert!(Dataset::new(2, vec![0.1, -0.1], vec![0.0]).is_err());
        assert!(Dataset::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn split_sizes() {
        let mut rng = RandomSource::new(1, 0);
        let (tr, te) = split_train_test(&line(10), 0.8, &mut rng).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
    }

    #[test]
    fn split_disjoint_and_complete() {
        let mut rng = RandomSource::new(9, 0);
        let (tr, te) = split_train_test(&line(37), 0.8, &mut rng).unwrap();
        let mut all: Vec<f64> = tr.responses().iter().chain(te.responses()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, line(37).responses());
    }

    #[test]
    fn split_degenerate() {
        let mut rng = RandomSource::new(1, 0);
        assert!(matches!(
            split_train_test(&line(1), 0.5, &mut rng),
            Err(Error::CannotSplit(_))
        ));
        assert!(matches!(
            split_train_test(&line(3), 0.99, &mut rng),
            Err(Error::CannotSplit(_))
        ));
    }

    #[test]
    fn split_deterministic() {
        let a = split_train_test(&line(50), 0.8, &mut RandomSource::new(3, 0)).unwrap();
        let b = split_train_test(&line(50), 0.8, &mut RandomSource::new(3, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn risk_small_cases() {
        assert_eq!(empirical_risk(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(empirical_risk(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(
            empirical_risk(&[0.0], &[1.0, 1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn risk_matches_compensated_accumulation() {
        let mut rng = RandomSource::new(5, 0);
        let p: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let t: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        // Kahan-summed oracle, accumulated in a different order.
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for i in (0..p.len()).rev() {
            let y = (p[i] - t[i]).powi(2) - c;
            let tmp = s + y;
            c = (tmp - s) - y;
            s = tmp;
        }
        let oracle = s / p.len() as f64;
        assert!((empirical_risk(&p, &t).unwrap() - oracle).abs() < 1e-12);
    }
}
