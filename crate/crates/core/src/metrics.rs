//! PSNR and SSIM on `[0, 255]` color images.

use crate::error::{Error, Result};
use crate::image::PureQImage;

pub const PEAK: f64 = 255.0;

const SSIM_WIN: usize = 11;
const SSIM_STD: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
}

fn check_shapes(op: &'static str, a: &PureQImage, b: &PureQImage) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Mean squared error over all `3·m·n` color samples.
pub fn mse(reference: &PureQImage, test: &PureQImage) -> Result<f64> {
    check_shapes("mse", reference, test)?;
    let mut acc = 0.0;
    for c in 0..3 {
        for (a, b) in reference.channel(c).iter().zip(test.channel(c)) {
            acc += (a - b) * (a - b);
        }
    }
    Ok(acc / (3 * reference.rows() * reference.cols()) as f64)
}

/// `10 log10(255² / MSE)` on the values as given; `+∞` when `MSE = 0`.
pub fn psnr(reference: &PureQImage, test: &PureQImage) -> Result<f64> {
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / e).log10())
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
fn gaussian_taps() -> [f64; SSIM_WIN] {
    let half = (SSIM_WIN / 2) as f64;
    let mut g = [0.0; SSIM_WIN];
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_STD * SSIM_STD)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable 'valid' filtering of an `m × n` plane.
fn filter_valid(x: &[f64], m: usize, n: usize, g: &[f64; SSIM_WIN]) -> Vec<f64> {
    let (om, on) = (m - SSIM_WIN + 1, n - SSIM_WIN + 1);
    let mut rows = vec![0.0; m * on];
    for i in 0..m {
        for j in 0..on {
            rows[i * on + j] = (0..SSIM_WIN).map(|t| g[t] * x[i * n + j + t]).sum();
        }
    }
    let mut out = vec![0.0; om * on];
    for i in 0..om {
        for j in 0..on {
            out[i * on + j] = (0..SSIM_WIN).map(|t| g[t] * rows[(i + t) * on + j]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], m: usize, n: usize) -> f64 {
    let g = gaussian_taps();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, m, n, &g);
    let mu_b = filter_valid(b, m, n, &g);
    let aa = filter_valid(&prod(|x, _| x * x), m, n, &g);
    let bb = filter_valid(&prod(|_, y| y * y), m, n, &g);
    let ab = filter_valid(&prod(|x, y| x * y), m, n, &g);
    let count = mu_a.len();
    let mut total = 0.0;
    for k in 0..count {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = aa[k] - ma * ma;
        let vb = bb[k] - mb * mb;
        let cov = ab[k] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / count as f64
}

/// Mean over R, G, B of single-scale SSIM with an 11×11 Gaussian window
/// (std 1.5), `K1 = 0.01`, `K2 = 0.03`, `L = 255`, over the valid region.
pub fn ssim(reference: &PureQImage, test: &PureQImage) -> Result<f64> {
    check_shapes("ssim", reference, test)?;
    let (m, n) = reference.shape();
    if m < SSIM_WIN || n < SSIM_WIN {
        return Err(Error::DimensionMismatch {
            op: "ssim needs at least 11x11",
            left: (m, n),
            right: (SSIM_WIN, SSIM_WIN),
        });
    }
    if a_eq_b(reference, test) {
        return Ok(1.0);
    }
    let s: f64 = (0..3).map(|c| ssim_plane(reference.channel(c), test.channel(c), m, n)).sum();
    Ok(s / 3.0)
}

fn a_eq_b(a: &PureQImage, b: &PureQImage) -> bool {
    (0..3).all(|c| a.channel(c) == b.channel(c))
}

/// Both metrics after clamping and rounding both images to 8-bit levels.
pub fn evaluate(reference: &PureQImage, test: &PureQImage) -> Result<QualityReport> {
    let (r, t) = (reference.quantized(), test.quantized());
    Ok(QualityReport {
        psnr: psnr(&r, &t)?,
        ssim: ssim(&r, &t)?,
    })
}
