//! ADMM with penalty continuation for
//!
//! ```text
//! min_X (λ/2)‖A X − Y‖²_F + Σ_g ‖P_g X‖^p_{w,Sp}
//! ```
//!
//! where `P_g` stacks the patch group of key `g`. Splitting `X = Z` gives the
//! iteration
//!
//! ```text
//! X ← argmin (λ/2)‖AX − Y‖² + (β/2)‖X − Z‖² + ⟨η, X − Z⟩     (FFT solve)
//! Z ← group-wise weighted singular value shrinkage of X + η/β
//! η ← η + β (X − Z)
//! β ← μ β
//! ```
//!
//! starting from `X = Z = Y`, `η = 0`.
//!
//! Intensities are divided by [`SolverConfig::intensity_scale`] on entry and
//! multiplied back on exit. The weights `c / (σ + ε)` do not scale with the
//! image while the data term does, so this divisor sets the balance between
//! the two; the default of 1020 maps `[0, 255]` to `[0, 0.25]`. Trace norms
//! and PSNR are reported on the caller's scale.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::degradation::{BlurOperator, DegradationModel, XSolver};
use crate::error::{invalid, Error, Result};
use crate::image::PureQImage;
use crate::metrics::psnr;
use crate::patch::{extract_patches, match_members, select_keys, Aggregator, Coord, PatchParams};
use crate::qmatrix::QMatrix;
use crate::qsvd::map_singular_values;
use crate::shrinkage::{make_weights, noise_compensated, shrink_singular_values, ShrinkMode, ShrinkageSpec, DEFAULT_GST_ITERS};

/// Default continuation factor.
pub const DEFAULT_MU: f64 = 1.05;
/// Default initial penalty for denoising.
pub const DEFAULT_DENOISE_BETA0: f64 = 0.5;
/// Default iteration cap for deblurring.
pub const DEFAULT_DEBLUR_ITERS: usize = 30;
/// Default early-stop threshold on `‖X⁺ − X‖ / ‖X‖` for deblurring.
pub const DEFAULT_DEBLUR_TOL: f64 = 1e-4;
/// Default internal intensity divisor.
pub const DEFAULT_INTENSITY_SCALE: f64 = 1020.0;

/// Keys handled per parallel batch; bounds the memory held by group estimates.
const KEY_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mode: ShrinkMode,
    /// Schatten power, ignored in WNNM mode.
    pub p: f64,
    pub lambda: f64,
    pub beta0: f64,
    /// Continuation factor `μ > 1`.
    pub mu: f64,
    /// Iteration count `K`.
    pub iters: usize,
    /// Fixed-point steps of the generalized soft threshold.
    pub gst_iters: usize,
    pub patch: PatchParams,
    /// Weight numerator `c` in `w_i = c / (σ_i + ε)`.
    pub c: f64,
    pub eps: f64,
    /// Multiply `c` by `√M` for groups of `M` patches.
    pub weight_sqrt_m: bool,
    /// Noise level (caller's scale) used to estimate clean singular values
    /// for the weights as `sqrt(max(σ² − M·σ_n², 0))`; plain `σ` if `None`.
    pub noise_compensation: Option<f64>,
    /// Recorded for provenance; the solver itself draws no random numbers.
    pub seed: u64,
    /// Stop early once `‖X⁺ − X‖_F / ‖X‖_F` falls below this.
    pub tol: Option<f64>,
    pub intensity_scale: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("lambda", self.lambda)?;
        pos("beta0", self.beta0)?;
        pos("c", self.c)?;
        pos("eps", self.eps)?;
        pos("intensity_scale", self.intensity_scale)?;
        if !(self.mu > 1.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be greater than 1, got {}", self.mu)));
        }
        if self.iters == 0 {
            return Err(invalid("iters must be at least 1"));
        }
        if let Some(t) = self.tol {
            pos("tol", t)?;
        }
        if let Some(s) = self.noise_compensation {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid(format!("noise_compensation must be a non-negative noise level, got {s}")));
            }
        }
        self.shrinkage().validate()
    }

    pub fn shrinkage(&self) -> ShrinkageSpec {
        ShrinkageSpec {
            mode: self.mode,
            p: match self.mode {
                ShrinkMode::Wnnm => 1.0,
                ShrinkMode::Wsnm => self.p,
            },
            gst_iters: self.gst_iters,
        }
    }

    /// `key = value` lines, one per field.
    pub fn describe(&self) -> Vec<(String, String)> {
        let fields = [
            ("mode", self.mode.to_string()),
            ("p", self.p.to_string()),
            ("lambda", self.lambda.to_string()),
            ("beta0", self.beta0.to_string()),
            ("mu", self.mu.to_string()),
            ("iters", self.iters.to_string()),
            ("gst_iters", self.gst_iters.to_string()),
            ("patch_size", self.patch.patch_size.to_string()),
            ("group_size", self.patch.group_size.to_string()),
            ("window", self.patch.window.to_string()),
            ("stride", self.patch.stride.to_string()),
            ("c", self.c.to_string()),
            ("eps", self.eps.to_string()),
            ("weight_sqrt_m", self.weight_sqrt_m.to_string()),
            ("noise_compensation", self.noise_compensation.map_or("none".into(), |v| v.to_string())),
            ("seed", self.seed.to_string()),
            ("tol", self.tol.map_or("none".into(), |t| t.to_string())),
            ("intensity_scale", self.intensity_scale.to_string()),
        ];
        fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Sets one field by its [`describe`](Self::describe) key. Changing
    /// `patch_size` resets `stride` to its default for the new size.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| invalid(format!("bad value `{v}` for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "p" => self.p = num(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "beta0" => self.beta0 = num(key, v)?,
            "mu" => self.mu = num(key, v)?,
            "iters" => self.iters = num(key, v)?,
            "gst_iters" => self.gst_iters = num(key, v)?,
            "patch_size" => {
                let p = &self.patch;
                self.patch = PatchParams::new(num(key, v)?, p.group_size, p.window);
            }
            "group_size" => self.patch.group_size = num(key, v)?,
            "window" => self.patch.window = num(key, v)?,
            "stride" => self.patch.stride = num(key, v)?,
            "c" => self.c = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "weight_sqrt_m" => self.weight_sqrt_m = num(key, v)?,
            "noise_compensation" => self.noise_compensation = if v == "none" { None } else { Some(num(key, v)?) },
            "seed" => self.seed = num(key, v)?,
            "tol" => self.tol = if v == "none" { None } else { Some(num(key, v)?) },
            "intensity_scale" => self.intensity_scale = num(key, v)?,
            other => return Err(invalid(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }
}

/// Denoising defaults for noise level `sigma` on the `[0, 255]` scale.
///
/// | σ        | M   | w | K  | W  |
/// |----------|-----|---|----|----|
/// | ≤ 20     | 70  | 4 | 8  | 30 |
/// | (20, 40] | 90  | 5 | 12 | 30 |
/// | (40, 50] | 120 | 5 | 14 | 40 |
///
/// with `p = 0.95`, `λ = 1`, `c = √2`, `ε = f64::EPSILON`. Levels above 50
/// reuse the last row.
pub fn default_denoise_config(sigma: f64) -> Result<SolverConfig> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise level must be positive, got {sigma}")));
    }
    if sigma > 50.0 {
        log::warn!("no denoising schedule above sigma = 50; using the 40 < sigma <= 50 settings for sigma = {sigma}");
    }
    let (m, w, k, win) = if sigma <= 20.0 {
        (70, 4, 8, 30)
    } else if sigma <= 40.0 {
        (90, 5, 12, 30)
    } else {
        (120, 5, 14, 40)
    };
    Ok(SolverConfig {
        mode: ShrinkMode::Wsnm,
        p: 0.95,
        lambda: 1.0,
        beta0: DEFAULT_DENOISE_BETA0,
        mu: DEFAULT_MU,
        iters: k,
        gst_iters: DEFAULT_GST_ITERS,
        patch: PatchParams::new(w, m, win),
        c: std::f64::consts::SQRT_2,
        eps: f64::EPSILON,
        weight_sqrt_m: false,
        noise_compensation: None,
        seed: 0,
        tol: None,
        intensity_scale: DEFAULT_INTENSITY_SCALE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlurKind {
    Uniform,
    Gaussian,
    Motion,
}

impl BlurKind {
    /// Kind named by a kernel spec such as `gaussian:25:1.6`; `None` for
    /// `identity`.
    pub fn from_spec(spec: &str) -> Result<Option<Self>> {
        match spec.trim().split(':').next().unwrap_or("") {
            "uniform" => Ok(Some(BlurKind::Uniform)),
            "gaussian" => Ok(Some(BlurKind::Gaussian)),
            "motion" => Ok(Some(BlurKind::Motion)),
            "identity" | "none" => Ok(None),
            other => Err(invalid(format!("unknown kernel kind `{other}`"))),
        }
    }
}

/// Deblurring defaults: `W = 30`, `M = 155`, `w = 6`, `p = 0.95`,
/// `c = 2.2·√2`, `ε = f64::EPSILON`, `K = 30` with early stop at `1e-4`,
/// and `(λ, β0)` of `(115, 8.5)` uniform, `(65, 7.5)` Gaussian,
/// `(115, 7.5)` motion.
pub fn default_deblur_config(kind: BlurKind) -> SolverConfig {
    let (lambda, beta0) = match kind {
        BlurKind::Uniform => (115.0, 8.5),
        BlurKind::Gaussian => (65.0, 7.5),
        BlurKind::Motion => (115.0, 7.5),
    };
    SolverConfig {
        mode: ShrinkMode::Wsnm,
        p: 0.95,
        lambda,
        beta0,
        mu: DEFAULT_MU,
        iters: DEFAULT_DEBLUR_ITERS,
        gst_iters: DEFAULT_GST_ITERS,
        patch: PatchParams::new(6, 155, 30),
        c: 2.2 * std::f64::consts::SQRT_2,
        eps: f64::EPSILON,
        weight_sqrt_m: false,
        noise_compensation: None,
        seed: 0,
        tol: Some(DEFAULT_DEBLUR_TOL),
        intensity_scale: DEFAULT_INTENSITY_SCALE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// `‖X^{k+1} − X^k‖_F`.
    pub dx: f64,
    /// `‖Z^{k+1} − Z^k‖_F`.
    pub dz: f64,
    /// `‖X^{k+1} − Z^{k+1}‖_F`.
    pub dxz: f64,
    /// Penalty used in this iteration.
    pub beta: f64,
    /// `‖η^{k+1}‖_F`.
    pub eta_norm: f64,
    /// PSNR of `X^{k+1}` when a reference was given.
    pub psnr: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, f: impl Fn(&IterationRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// CSV with columns `iter,dx,dz,dxz,beta,psnr,seconds`.
    ///
    /// With `timing = false` the `seconds` field is left empty so that the
    /// file depends only on inputs and configuration.
    pub fn write_csv(&self, mut out: impl Write, timing: bool) -> std::io::Result<()> {
        writeln!(out, "iter,dx,dz,dxz,beta,psnr,seconds")?;
        for r in &self.records {
            let psnr = r.psnr.map_or(String::new(), |v| format!("{v:.6}"));
            let secs = if timing { format!("{:.6}", r.seconds) } else { String::new() };
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{}",
                r.iter, r.dx, r.dz, r.dxz, r.beta, psnr, secs
            )?;
        }
        Ok(())
    }
}

/// Iterates of one run, on the internal intensity scale.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: QMatrix,
    pub z: QMatrix,
    pub eta: QMatrix,
    pub beta: f64,
    /// Completed iterations.
    pub k: usize,
}

/// A single restoration run; owns the iterates and the trace.
#[derive(Debug)]
pub struct Solver {
    cfg: SolverConfig,
    x_solver: XSolver,
    keys: Vec<Coord>,
    state: SolverState,
    trace: ConvergenceTrace,
    reference: Option<PureQImage>,
}

impl Solver {
    pub fn new(y: &PureQImage, blur: &BlurOperator, cfg: &SolverConfig, reference: Option<&PureQImage>) -> Result<Self> {
        cfg.validate()?;
        let (m, n) = y.shape();
        cfg.patch.validate(m, n)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("degraded image"));
        }
        if let Some(r) = reference {
            if r.shape() != y.shape() {
                return Err(Error::DimensionMismatch {
                    op: "reference image",
                    left: r.shape(),
                    right: y.shape(),
                });
            }
        }
        let scaled = PureQImage::from_qmatrix(y.as_qmatrix().scale(1.0 / cfg.intensity_scale));
        let x_solver = XSolver::new(&scaled, blur, cfg.lambda)?;
        let keys = select_keys(m, n, &cfg.patch)?;
        let x = scaled.into_qmatrix();
        let state = SolverState {
            z: x.clone(),
            eta: QMatrix::zeros(m, n),
            x,
            beta: cfg.beta0,
            k: 0,
        };
        Ok(Self {
            cfg: cfg.clone(),
            x_solver,
            keys,
            state,
            trace: ConvergenceTrace::default(),
            reference: reference.cloned(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn trace(&self) -> &ConvergenceTrace {
        &self.trace
    }

    pub fn keys(&self) -> &[Coord] {
        &self.keys
    }

    /// Current `X` on the caller's intensity scale.
    pub fn estimate(&self) -> PureQImage {
        PureQImage::from_qmatrix(self.state.x.scale(self.cfg.intensity_scale))
    }

    /// Group-wise shrinkage of `v` with penalty `beta`.
    pub fn z_update(&self, v: &QMatrix, beta: f64) -> Result<QMatrix> {
        let (m, n) = v.shape();
        let w = self.cfg.patch.patch_size;
        let spec = self.cfg.shrinkage();
        let eps = self.cfg.eps;
        let noise = self.cfg.noise_compensation.map(|s| s / self.cfg.intensity_scale);
        let c = if self.cfg.weight_sqrt_m {
            self.cfg.c * (self.cfg.patch.group_size as f64).sqrt()
        } else {
            self.cfg.c
        };
        let mut acc = Aggregator::new(m, n, w);
        for batch in self.keys.chunks(KEY_BATCH) {
            let estimates: Vec<(Vec<Coord>, QMatrix)> = batch
                .par_iter()
                .map(|&key| {
                    let members = match_members(v, key, &self.cfg.patch)?;
                    let group = extract_patches(v, &members, w);
                    let (_, est) = map_singular_values(&group, |s| {
                        let weights = match noise {
                            Some(ns) => make_weights(&noise_compensated(s, members.len(), ns), c, eps)?,
                            None => make_weights(s, c, eps)?,
                        };
                        shrink_singular_values(s, &weights, &spec, beta)
                    })?;
                    Ok((members, est))
                })
                .collect::<Result<_>>()?;
            for (members, est) in &estimates {
                acc.add(members, est)?;
            }
        }
        let mut z = acc.finish()?;
        z.purify();
        Ok(z)
    }

    /// One ADMM iteration; returns its trace record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let start = Instant::now();
        let iteration = self.state.k + 1;
        let beta = self.state.beta;
        let diverged = || Error::Diverged { iteration };

        let x = self.x_solver.solve(&self.state.z, &self.state.eta, beta)?;
        if !x.is_finite() {
            return Err(diverged());
        }
        let v = x.lin_comb(1.0, &self.state.eta, 1.0 / beta)?;
        let z = self.z_update(&v, beta)?;
        if !z.is_finite() {
            return Err(diverged());
        }
        let eta = self.state.eta.lin_comb(1.0, &x.sub(&z)?, beta)?;
        if !eta.is_finite() {
            return Err(diverged());
        }

        let s = self.cfg.intensity_scale;
        let dx = x.distance(&self.state.x)? * s;
        let dz = z.distance(&self.state.z)? * s;
        let dxz = x.distance(&z)? * s;
        let eta_norm = eta.frobenius();
        self.state = SolverState {
            x,
            z,
            eta,
            beta: beta * self.cfg.mu,
            k: iteration,
        };
        let psnr = match &self.reference {
            Some(r) => Some(psnr(&r.quantized(), &self.estimate().quantized())?),
            None => None,
        };
        let record = IterationRecord {
            iter: iteration,
            dx,
            dz,
            dxz,
            beta,
            eta_norm,
            psnr,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.trace.records.push(record);
        Ok(record)
    }

    /// Runs up to `K` iterations, stopping early on the relative-change test.
    pub fn run(mut self) -> Result<(PureQImage, ConvergenceTrace)> {
        for _ in 0..self.cfg.iters {
            let prev_norm = self.state.x.frobenius() * self.cfg.intensity_scale;
            let rec = self.step()?;
            log::debug!(
                "iter {} dx {:.4e} dz {:.4e} dxz {:.4e} beta {:.4}",
                rec.iter,
                rec.dx,
                rec.dz,
                rec.dxz,
                rec.beta
            );
            if let Some(tol) = self.cfg.tol {
                if prev_norm > 0.0 && rec.dx / prev_norm < tol {
                    break;
                }
            }
        }
        Ok((self.estimate(), self.trace))
    }
}

/// Restores `y` degraded by `model.blur`.
pub fn restore(
    y: &PureQImage,
    model: &DegradationModel,
    cfg: &SolverConfig,
    reference: Option<&PureQImage>,
) -> Result<(PureQImage, ConvergenceTrace)> {
    Solver::new(y, &model.blur, cfg, reference)?.run()
}
