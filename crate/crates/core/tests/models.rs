use kerf::{RandomSource, SyntheticModel};
use statrs::distribution::{ContinuousCDF, Normal};

fn residuals(id: u8, n: usize, d: usize, seed: u64) -> Vec<f64> {
    let model = SyntheticModel::with_size(id, n, d).unwrap();
    let data = model.generate(&mut RandomSource::new(seed, 0)).unwrap();
    data.points()
        .zip(data.responses())
        .map(|(x, y)| y - model.signal(x))
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn gaussian_noise_has_variance_one_half() {
    for id in [2u8, 3, 4, 5, 7] {
        let (m, v) = mean_var(&residuals(id, 200_000, 10, u64::from(id)));
        // Standard errors: mean 0.0016, variance 0.0016.
        assert!(m.abs() < 0.008, "model {id}: mean {m}");
        assert!((v - 0.5).abs() < 0.01, "model {id}: variance {v}");
    }
}

#[test]
fn noiseless_models_have_zero_residuals() {
    for id in [1u8, 8] {
        assert!(residuals(id, 500, 10, 1).iter().all(|&r| r == 0.0));
    }
}

#[test]
fn model6_noise_is_a_negative_indicator() {
    let r = residuals(6, 200_000, 10, 6);
    assert!(r.iter().all(|&e| e == 0.0 || e == -1.0));
    let p = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf(1.25);
    let (m, _) = mean_var(&r);
    // Standard error of the mean is about 0.0007.
    assert!((m + p).abs() < 0.004, "mean {m}, expected {}", -p);
}

#[test]
fn generation_is_reproducible() {
    let model = SyntheticModel::with_size(4, 50, 6).unwrap();
    let a = model.generate(&mut RandomSource::new(11, 0)).unwrap();
    let b = model.generate(&mut RandomSource::new(11, 0)).unwrap();
    let c = model.generate(&mut RandomSource::new(11, 1)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
