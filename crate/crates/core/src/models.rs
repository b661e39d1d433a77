//! The eight synthetic regression benchmarks.
//!
//! Covariates are uniform on `[0,1]^d` and every formula is written in the
//! recentred coordinates `x̃ = 2(x − 0.5)`. Gaussian noise terms `N(0, 0.5)`
//! are read as variance 0.5.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RandomSource;

pub const NOISE_VARIANCE: f64 = 0.5;

/// Threshold of the Gaussian indicator in model 6.
pub const MODEL6_THRESHOLD: f64 = 1.25;

/// One of the benchmark models with its sample size and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub id: u8,
    pub n: usize,
    pub d: usize,
}

impl SyntheticModel {
    /// The model with its published `(n, d)`.
    pub fn standard(id: u8) -> Result<Self> {
        let (n, d) = match id {
            1 => (800, 50),
            2 => (600, 100),
            3 => (600, 100),
            4 => (600, 100),
            5 => (700, 20),
            6 => (500, 30),
            7 => (600, 300),
            8 => (500, 1000),
            _ => return Err(Error::InvalidModel(format!("unknown model id {id}"))),
        };
        Ok(Self { id, n, d })
    }

    pub fn with_size(id: u8, n: usize, d: usize) -> Result<Self> {
        let m = Self { id, n, d };
        m.validate()?;
        Ok(m)
    }

    /// Largest coordinate index (1-based) the formula reads.
    pub fn min_dim(&self) -> usize {
        match self.id {
            1 => 2,
            2 => 10,
            3 | 4 => 4,
            5 | 6 => 10,
            7 => 8,
            8 => 6,
            _ => usize::MAX,
        }
    }

    pub fn has_gaussian_noise(&self) -> bool {
        matches!(self.id, 2..=5 | 7)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.id) {
            return Err(Error::InvalidModel(format!("unknown model id {}", self.id)));
        }
        if self.n == 0 {
            return Err(Error::InvalidModel("sample size must be positive".into()));
        }
        if self.d < self.min_dim() {
            return Err(Error::InvalidModel(format!(
                "model {} reads coordinate {} but d = {}",
                self.id,
                self.min_dim(),
                self.d
            )));
        }
        Ok(())
    }

    /// Noise-free part of the response at `x ∈ [0,1]^d`.
    ///
    /// For model 6 this is the sum of the ten sign indicators; the Gaussian
    /// indicator is treated as the noise term.
    pub fn signal(&self, x: &[f64]) -> f64 {
        let t = |i: usize| 2.0 * (x[i - 1] - 0.5);
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self.id {
            1 => t(1).powi(2) + (-t(2).powi(2)).exp(),
            2 => t(1) * t(2) + t(3).powi(2) - t(4) * t(7) + t(8) * t(10) - t(6).powi(2),
            3 => -(2.0 * t(1)).sin() + t(2).powi(2) + t(3) - (-t(4)).exp(),
            4 => {
                let s3 = (2.0 * PI * t(3)).sin();
                let a4 = 2.0 * PI * t(4);
                t(1) + (2.0 * t(2) - 1.0).powi(2)
                    + s3 / (2.0 - s3)
                    + a4.sin()
                    + 2.0 * a4.cos()
                    + 3.0 * a4.sin().powi(2)
                    + 4.0 * a4.cos().powi(2)
            }
            5 => {
                ind(t(1) > 0.0)
                    + t(2).powi(3)
                    + ind(t(4) + t(6) - t(8) - t(9) > 1.0 + t(10))
                    + (-t(2).powi(2)).exp()
            }
            6 => (1..=10).map(|k| ind(t(k).powi(3) < 0.0)).sum(),
            7 => t(1).powi(2) + t(2).powi(2) * t(3) * (-t(4).abs()).exp() + t(6) - t(8),
            8 => t(1) + 3.0 * t(3).powi(2) - 2.0 * (-t(5)).exp() + t(6),
            _ => f64::NAN,
        }
    }

    fn noise(&self, rng: &mut RandomSource) -> f64 {
        if self.has_gaussian_noise() {
            let z: f64 = rng.sample(StandardNormal);
            z * NOISE_VARIANCE.sqrt()
        } else if self.id == 6 {
            let z: f64 = rng.sample(StandardNormal);
            if z > MODEL6_THRESHOLD {
                -1.0
            } else {
                0.0
            }
        } else {
            0.0
        }
    }

    /// Draw `n` i.i.d. samples. Each row consumes `d` uniforms, then the noise.
    pub fn generate(&self, rng: &mut RandomSource) -> Result<Dataset> {
        self.validate()?;
        let mut points = Vec::with_capacity(self.n * self.d);
        let mut responses = Vec::with_capacity(self.n);
        let mut row = vec![0.0; self.d];
        for _ in 0..self.n {
            for c in row.iter_mut() {
                *c = rng.random::<f64>();
            }
            responses.push(self.signal(&row) + self.noise(rng));
            points.extend_from_slice(&row);
        }
        Dataset::new(self.d, points, responses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table() {
        let expected = [
            (1, 800, 50),
            (2, 600, 100),
            (3, 600, 100),
            (4, 600, 100),
            (5, 700, 20),
            (6, 500, 30),
            (7, 600, 300),
            (8, 500, 1000),
        ];
        for (id, n, d) in expected {
            let m = SyntheticModel::standard(id).unwrap();
            assert_eq!((m.n, m.d), (n, d));
            m.validate().unwrap();
        }
        assert!(SyntheticModel::standard(9).is_err());
    }

    #[test]
    fn too_small_dimension() {
        assert!(matches!(
            SyntheticModel::with_size(2, 10, 9),
            Err(Error::InvalidModel(_))
        ));
        assert!(SyntheticModel::with_size(2, 10, 10).is_ok());
        assert!(SyntheticModel::with_size(1, 0, 5).is_err());
    }

    #[test]
    fn model1_center_is_one() {
        let m = SyntheticModel::standard(1).unwrap();
        assert_eq!(m.signal(&vec![0.5; 50]), 1.0);
    }

    #[test]
    fn model1_is_noiseless() {
        let m = SyntheticModel::with_size(1, 2, 50).unwrap();
        let data = m.generate(&mut RandomSource::new(17, 0)).unwrap();
        assert_eq!(data.len(), 2);
        for (i, x) in data.points().enumerate() {
            let (a, b) = (2.0 * (x[0] - 0.5), 2.0 * (x[1] - 0.5));
            assert_eq!(data.response(i), a * a + (-(b * b)).exp());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let m = SyntheticModel::with_size(4, 50, 6).unwrap();
        let a = m.generate(&mut RandomSource::new(3, 1)).unwrap();
        let b = m.generate(&mut RandomSource::new(3, 1)).unwrap();
        assert_eq!(a, b);
    }
}
