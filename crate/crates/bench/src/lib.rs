//! Deterministic inputs shared by the benchmarks.

use qwsnm::degradation::GaussianStream;
use qwsnm::{PureQImage, QMatrix, Quaternion};

/// `m × n` matrix with standard normal components.
pub fn gaussian_qmatrix(m: usize, n: usize, seed: u64) -> QMatrix {
    let mut g = GaussianStream::new(seed);
    QMatrix::from_fn(m, n, |_, _| {
        Quaternion::new(g.next_normal(), g.next_normal(), g.next_normal(), g.next_normal())
    })
}

/// Smooth color ramp plus noise of standard deviation `sigma`.
pub fn test_image(m: usize, n: usize, sigma: f64, seed: u64) -> PureQImage {
    let mut g = GaussianStream::new(seed);
    PureQImage::from_fn(m, n, |i, j| {
        let (x, y) = (i as f64 / m as f64, j as f64 / n as f64);
        [
            128.0 + 90.0 * (5.0 * x).sin() * (3.0 * y).cos() + sigma * g.next_normal(),
            60.0 + 150.0 * x * y + sigma * g.next_normal(),
            200.0 - 120.0 * y + sigma * g.next_normal(),
        ]
    })
}
