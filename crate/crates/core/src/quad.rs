//! Composite midpoint quadrature with a Richardson-style error estimate.

/// Composite midpoint rule for `∫_a^b f` on `panels` equal panels.
pub fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a || panels == 0 {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    (0..panels).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Midpoint nodes of `panels` equal panels on `[a, b]`, with the panel width.
pub fn midpoint_nodes(a: f64, b: f64, panels: usize) -> (Vec<f64>, f64) {
    if b <= a || panels == 0 {
        return (Vec::new(), 0.0);
    }
    let h = (b - a) / panels as f64;
    ((0..panels).map(|i| a + (i as f64 + 0.5) * h).collect(), h)
}

/// An integral estimate and its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Double the panel count from `start` until the estimated error
/// `|I_2n − I_n| / 3` drops below `tol` or `max_panels` is reached.
pub fn midpoint_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    start: usize,
    tol: f64,
    max_panels: usize,
) -> Estimate {
    let mut n = start.max(1);
    let mut coarse = midpoint(&f, a, b, n);
    loop {
        let fine = midpoint(&f, a, b, 2 * n);
        let error = (fine - coarse).abs() / 3.0;
        n *= 2;
        if error <= tol || n >= max_panels {
            return Estimate {
                value: fine,
                error,
                panels: n,
            };
        }
        coarse = fine;
    }
}

/// Mean of `f` over the box `[lower, upper]` by the tensor midpoint rule
/// with `panels` panels per axis.
pub fn box_mean(f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64], panels: usize) -> f64 {
    let d = lower.len();
    let total = panels.pow(d as u32);
    let mut z = vec![0.0; d];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut r = idx;
        for j in 0..d {
            let i = r % panels;
            r /= panels;
            z[j] = lower[j] + (i as f64 + 0.5) * (upper[j] - lower[j]) / panels as f64;
        }
        acc += f(&z);
    }
    acc / total as f64
}
