//! Blur kernels, periodic convolution, seeded Gaussian noise and the
//! Fourier-domain solve of the data-fidelity subproblem.
//!
//! All kernels are real and act identically on each quaternion plane, so the
//! quaternion convolution splits into independent real 2D circular
//! convolutions. Kernels are anchored at `(⌊rows/2⌋, ⌊cols/2⌋)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::image::PureQImage;
use crate::qmatrix::QMatrix;

/// A real 2D point-spread function, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Wraps raw taps; entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Kernel::new",
                left: data.len(),
                right: rows * cols,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(Self { rows, cols, data })
    }

    /// The 1×1 kernel `[1]`.
    pub fn delta() -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![1.0],
        }
    }

    /// `s × s` box filter, every tap `1/s²`.
    pub fn uniform(s: usize) -> Result<Self> {
        check_odd(s)?;
        let v = 1.0 / (s * s) as f64;
        Self::new(s, s, vec![v; s * s])
    }

    /// Sampled isotropic Gaussian on an `s × s` grid.
    ///
    /// Taps below `f64::EPSILON` times the peak are zeroed before normalizing.
    pub fn gaussian(s: usize, std: f64) -> Result<Self> {
        check_odd(s)?;
        if !(std > 0.0 && std.is_finite()) {
            return Err(invalid(format!("Gaussian std must be positive, got {std}")));
        }
        let half = (s / 2) as f64;
        let mut data = Vec::with_capacity(s * s);
        for i in 0..s {
            for j in 0..s {
                let (y, x) = (i as f64 - half, j as f64 - half);
                data.push((-(x * x + y * y) / (2.0 * std * std)).exp());
            }
        }
        let peak = data.iter().cloned().fold(0.0, f64::max);
        data.iter_mut().filter(|v| **v < f64::EPSILON * peak).for_each(|v| *v = 0.0);
        let sum: f64 = data.iter().sum();
        data.iter_mut().for_each(|v| *v /= sum);
        Self::new(s, s, data)
    }

    /// Linear motion blur of `len` pixels at `angle_deg` counter-clockwise.
    ///
    /// Follows MATLAB's `fspecial('motion', len, angle)`: one quadrant of the
    /// segment is rasterized with weights `1 − d` from the perpendicular
    /// distance `d`, the end pixel is attenuated by its overshoot, the
    /// quadrant is mirrored through the center, and the result is normalized
    /// by `Σ + ε·len²` and flipped vertically for angles with `cos > 0`.
    /// The output is always odd-sized; border rows and columns of taps at
    /// rounding level are dropped.
    pub fn motion(len: f64, angle_deg: f64) -> Result<Self> {
        if !(len >= 1.0 && len.is_finite()) || !angle_deg.is_finite() {
            return Err(invalid(format!("motion kernel needs len >= 1 and a finite angle, got ({len}, {angle_deg})")));
        }
        let eps = f64::EPSILON;
        let half = (len - 1.0) / 2.0;
        let phi = angle_deg.rem_euclid(180.0) / 180.0 * std::f64::consts::PI;
        let (sinphi, cosphi) = phi.sin_cos();
        let xsign = if cosphi < 0.0 { -1.0 } else { 1.0 };
        let sx = (half * cosphi + xsign - len * eps).trunc();
        let sy = (half * sinphi + 1.0 - len * eps).trunc();

        let nx = (sx.abs() as usize) + 1;
        let ny = sy as usize + 1;
        let mut quad = vec![0.0; ny * nx];
        for r in 0..ny {
            for c in 0..nx {
                let (x, y) = (xsign * c as f64, r as f64);
                let mut dist = y * cosphi - x * sinphi;
                let rad = (x * x + y * y).sqrt();
                if rad >= half && dist.abs() <= 1.0 {
                    let overshoot = half - ((x + dist * sinphi) / cosphi).abs();
                    dist = (dist * dist + overshoot * overshoot).sqrt();
                }
                quad[r * nx + c] = (1.0 + eps - dist.abs()).max(0.0);
            }
        }

        let (rows, cols) = (2 * ny - 1, 2 * nx - 1);
        let mut data = vec![0.0; rows * cols];
        for r in 0..ny {
            for c in 0..nx {
                let v = quad[r * nx + c];
                data[(ny - 1 - r) * cols + (nx - 1 - c)] = v;
                data[(ny - 1 + r) * cols + (nx - 1 + c)] = v;
            }
        }
        let norm = data.iter().sum::<f64>() + eps * len * len;
        data.iter_mut().for_each(|v| *v /= norm);
        if cosphi > 0.0 {
            for r in 0..rows / 2 {
                for c in 0..cols {
                    data.swap(r * cols + c, (rows - 1 - r) * cols + c);
                }
            }
        }
        Self::new(rows, cols, data).map(|k| k.trim(4.0 * eps))
    }

    /// Drops border rows/columns whose taps are all `≤ tol`, in symmetric
    /// pairs so the center stays the anchor.
    fn trim(self, tol: f64) -> Self {
        let negligible_row = |k: &Self, r: usize| (0..k.cols).all(|c| k.get(r, c).abs() <= tol);
        let negligible_col = |k: &Self, c: usize| (0..k.rows).all(|r| k.get(r, c).abs() <= tol);
        let (mut top, mut left) = (0, 0);
        let (mut rows, mut cols) = (self.rows, self.cols);
        while rows > 2 && negligible_row(&self, top) && negligible_row(&self, top + rows - 1) {
            top += 1;
            rows -= 2;
        }
        while cols > 2 && negligible_col(&self, left) && negligible_col(&self, left + cols - 1) {
            left += 1;
            cols -= 2;
        }
        if (rows, cols) == (self.rows, self.cols) {
            return self;
        }
        let data = (top..top + rows)
            .flat_map(|r| (left..left + cols).map(move |c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn anchor(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

fn check_odd(s: usize) -> Result<()> {
    if s.is_multiple_of(2) {
        return Err(invalid(format!("kernel side must be odd and positive, got {s}")));
    }
    Ok(())
}

/// A blur operator `A`: either no blur or a real convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum BlurOperator {
    Identity,
    Kernel(Kernel),
}

impl BlurOperator {
    pub fn is_identity(&self) -> bool {
        matches!(self, BlurOperator::Identity)
    }
}

impl From<Kernel> for BlurOperator {
    fn from(k: Kernel) -> Self {
        BlurOperator::Kernel(k)
    }
}

/// Parses `identity`, `uniform:S`, `gaussian:S:STD` or `motion:LEN:ANGLE`.
impl FromStr for BlurOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            what: "kernel spec",
            reason: format!("`{s}`: {reason}"),
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad("expected an integer size"));
        let real = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        match parts.as_slice() {
            ["identity"] | ["none"] => Ok(BlurOperator::Identity),
            ["uniform", size] => Ok(Kernel::uniform(int(size)?)?.into()),
            ["gaussian", size, std] => Ok(Kernel::gaussian(int(size)?, real(std)?)?.into()),
            ["motion", len, angle] => Ok(Kernel::motion(real(len)?, real(angle)?)?.into()),
            _ => Err(bad("expected identity, uniform:S, gaussian:S:STD or motion:LEN:ANGLE")),
        }
    }
}

/// Row/column 2D FFT on row-major complex buffers.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run(&self, buf: &mut [Complex64], row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        let (m, n) = (self.rows, self.cols);
        assert_eq!(buf.len(), m * n);
        row.process(buf);
        let mut t = vec![Complex64::default(); m * n];
        transpose(buf, &mut t, m, n);
        col.process(&mut t);
        transpose(&t, buf, n, m);
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_fwd, &*self.col_fwd);
    }

    /// Inverse transform including the `1/(rows·cols)` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_inv, &*self.col_inv);
        let s = 1.0 / (self.rows * self.cols) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, plane: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

/// Optical transfer function: the kernel zero-padded to `m × n` with its
/// anchor moved to `(0, 0)`, then transformed.
pub fn kernel_otf(k: &Kernel, m: usize, n: usize, fft: &Fft2) -> Result<Vec<Complex64>> {
    if k.rows > m || k.cols > n {
        return Err(Error::DimensionMismatch {
            op: "kernel larger than image",
            left: k.shape(),
            right: (m, n),
        });
    }
    let (ar, ac) = k.anchor();
    let mut buf = vec![Complex64::default(); m * n];
    for i in 0..k.rows {
        for j in 0..k.cols {
            let r = (i + m - ar) % m;
            let c = (j + n - ac) % n;
            buf[r * n + c].re += k.get(i, j);
        }
    }
    fft.forward(&mut buf);
    Ok(buf)
}

/// Circular convolution of each color plane with `k`.
pub fn blur_periodic(img: &PureQImage, k: &Kernel) -> Result<PureQImage> {
    let (m, n) = img.shape();
    let fft = Fft2::new(m, n);
    let otf = kernel_otf(k, m, n, &fft)?;
    let channels: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|c| {
            let mut hat = fft.forward_real(img.channel(c));
            hat.iter_mut().zip(&otf).for_each(|(x, h)| *x *= h);
            fft.inverse_real(hat)
        })
        .collect();
    let [r, g, b]: [Vec<f64>; 3] = channels.try_into().expect("three channels");
    PureQImage::from_channels(m, n, r, g, b)
}

/// Applies `A` (identity or periodic blur).
pub fn apply_blur(img: &PureQImage, op: &BlurOperator) -> Result<PureQImage> {
    match op {
        BlurOperator::Identity => Ok(img.clone()),
        BlurOperator::Kernel(k) => blur_periodic(img, k),
    }
}

/// Seeded standard normal stream.
///
/// ChaCha20 seeded with `seed_from_u64(seed)` supplies 64-bit words; each
/// word `x` gives a uniform `u = (x >> 11) · 2⁻⁵³`. Pairs `(u₁, u₂)` are
/// mapped by Box–Muller to `r cos θ` then `r sin θ`, with
/// `r = sqrt(−2 ln(1 − u₁))` and `θ = 2π u₂`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Adds `N(0, σ²)` noise to R, G, B in that order, each plane row-major.
pub fn add_noise(img: &PureQImage, sigma: f64, seed: u64) -> Result<PureQImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise level must be non-negative, got {sigma}")));
    }
    let mut out = img.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut stream = GaussianStream::new(seed);
    for c in 0..3 {
        for v in out.channel_mut(c) {
            *v += sigma * stream.next_normal();
        }
    }
    Ok(out)
}

/// `Y = A X + n` with seeded noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationModel {
    pub blur: BlurOperator,
    pub sigma: f64,
    pub seed: u64,
}

impl DegradationModel {
    pub fn new(blur: BlurOperator, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("noise level must be non-negative, got {sigma}")));
        }
        Ok(Self { blur, sigma, seed })
    }

    pub fn apply(&self, clean: &PureQImage) -> Result<PureQImage> {
        add_noise(&apply_blur(clean, &self.blur)?, self.sigma, self.seed)
    }
}

/// Cached solver for
/// `min_X (λ/2)‖AX − Y‖² + (β/2)‖X − Z‖² + ⟨η, X − Z⟩`
/// with fixed `A`, `Y` and `λ`.
///
/// The normal equations `(λAᵀA + βI) X = λAᵀY + βZ − η` are diagonal in the
/// Fourier basis. Only the three imaginary planes are solved; the real plane
/// of the result is zero.
#[derive(Debug)]
pub struct XSolver {
    rows: usize,
    cols: usize,
    lambda: f64,
    y: PureQImage,
    fourier: Option<Fourier>,
}

#[derive(Debug)]
struct Fourier {
    fft: Fft2,
    otf_abs2: Vec<f64>,
    /// `λ conj(K̂) Ŷ_c` per color plane.
    data_term: Vec<Vec<Complex64>>,
}

impl XSolver {
    pub fn new(y: &PureQImage, op: &BlurOperator, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let (m, n) = y.shape();
        let fourier = match op {
            BlurOperator::Identity => None,
            BlurOperator::Kernel(k) => {
                let fft = Fft2::new(m, n);
                let otf = kernel_otf(k, m, n, &fft)?;
                let data_term = (0..3)
                    .map(|c| {
                        let mut hat = fft.forward_real(y.channel(c));
                        hat.iter_mut().zip(&otf).for_each(|(v, h)| *v *= h.conj() * lambda);
                        hat
                    })
                    .collect();
                let otf_abs2 = otf.iter().map(|h| h.norm_sqr()).collect();
                Some(Fourier {
                    fft,
                    otf_abs2,
                    data_term,
                })
            }
        };
        Ok(Self {
            rows: m,
            cols: n,
            lambda,
            y: y.clone(),
            fourier,
        })
    }

    pub fn solve(&self, z: &QMatrix, eta: &QMatrix, beta: f64) -> Result<QMatrix> {
        let shape = (self.rows, self.cols);
        for (name, q) in [("Z", z), ("eta", eta)] {
            if q.shape() != shape {
                return Err(Error::DimensionMismatch {
                    op: if name == "Z" { "x-subproblem Z" } else { "x-subproblem eta" },
                    left: q.shape(),
                    right: shape,
                });
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        let lambda = self.lambda;
        let planes: Vec<Vec<f64>> = (0..3)
            .into_par_iter()
            .map(|c| {
                let (zc, ec) = (z.plane(c + 1), eta.plane(c + 1));
                let rhs = zc.iter().zip(ec).map(|(zv, ev)| beta * zv - ev);
                match &self.fourier {
                    None => {
                        let yc = self.y.channel(c);
                        rhs.zip(yc).map(|(r, yv)| (lambda * yv + r) / (lambda + beta)).collect()
                    }
                    Some(f) => {
                        let rhs: Vec<f64> = rhs.collect();
                        let mut hat = f.fft.forward_real(&rhs);
                        for ((v, d), a2) in hat.iter_mut().zip(&f.data_term[c]).zip(&f.otf_abs2) {
                            *v = (*v + d) / (lambda * a2 + beta);
                        }
                        f.fft.inverse_real(hat)
                    }
                }
            })
            .collect();
        let [r, g, b]: [Vec<f64>; 3] = planes.try_into().expect("three planes");
        QMatrix::from_planes(self.rows, self.cols, [vec![0.0; self.rows * self.cols], r, g, b])
    }
}

/// One-shot form of [`XSolver::solve`].
pub fn solve_x_subproblem(
    y: &PureQImage,
    z: &QMatrix,
    eta: &QMatrix,
    op: &BlurOperator,
    lambda: f64,
    beta: f64,
) -> Result<QMatrix> {
    XSolver::new(y, op, lambda)?.solve(z, eta, beta)
}
