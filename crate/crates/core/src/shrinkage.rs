//! Weighted singular value penalties and their proximal maps.
//!
//! Per singular value the proximal problem is
//!
//! ```text
//! min_{δ ≥ 0}  ½ (δ − σ)² + w δ^p
//! ```
//!
//! For `p = 1` this is soft thresholding, `δ = max(σ − w, 0)`. For `p < 1`
//! the generalized soft-thresholding (GST) rule applies: below the threshold
//!
//! ```text
//! τ_p(w) = (2w(1−p))^{1/(2−p)} + w p (2w(1−p))^{(p−1)/(2−p)}
//! ```
//!
//! the minimizer is zero, above it the fixed point of
//! `δ ← σ − w p δ^{p−1}` started from `δ = σ`.

use crate::error::{invalid, Error, Result};

/// Values of `p` this close to one use the closed soft-threshold branch.
pub const P_ONE_TOL: f64 = 1e-9;

/// Default number of GST fixed-point steps.
pub const DEFAULT_GST_ITERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShrinkMode {
    /// Weighted nuclear norm, closed-form soft thresholding.
    Wnnm,
    /// Weighted Schatten p-norm, generalized soft thresholding.
    Wsnm,
}

impl std::str::FromStr for ShrinkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wnnm" => Ok(ShrinkMode::Wnnm),
            "wsnm" => Ok(ShrinkMode::Wsnm),
            other => Err(invalid(format!("unknown shrinkage mode `{other}` (expected wnnm or wsnm)"))),
        }
    }
}

impl std::fmt::Display for ShrinkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShrinkMode::Wnnm => "wnnm",
            ShrinkMode::Wsnm => "wsnm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageSpec {
    pub mode: ShrinkMode,
    pub p: f64,
    pub gst_iters: usize,
}

impl ShrinkageSpec {
    pub fn new(mode: ShrinkMode, p: f64, gst_iters: usize) -> Result<Self> {
        let spec = Self { mode, p, gst_iters };
        spec.validate()?;
        Ok(spec)
    }

    pub fn wnnm() -> Self {
        Self {
            mode: ShrinkMode::Wnnm,
            p: 1.0,
            gst_iters: DEFAULT_GST_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!("power p must lie in (0, 1], got {}", self.p)));
        }
        if self.gst_iters == 0 {
            return Err(invalid("GST needs at least one iteration"));
        }
        Ok(())
    }
}

/// One positive weight per singular value.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wraps raw weights; every entry must be finite and positive.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(w) = values.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid(format!("weights must be finite and positive, got {w}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|w| w * factor).collect())
    }
}

/// `w_i = c / (σ_i + ε)`.
pub fn make_weights(sigma: &[f64], c: f64, eps: f64) -> Result<WeightVector> {
    if !(c > 0.0) || !(eps > 0.0) {
        return Err(invalid(format!("weight constants must be positive (c = {c}, eps = {eps})")));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0)) {
        return Err(invalid(format!("singular values must be non-negative, got {s}")));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(invalid("singular values must be non-ascending"));
    }
    WeightVector::new(sigma.iter().map(|s| c / (s + eps)).collect())
}

/// `sqrt(max(σ² − groups·σ_n², 0))`, the usual estimate of the clean
/// singular values of a group of `groups` noisy columns.
pub fn noise_compensated(sigma: &[f64], group_size: usize, noise_sigma: f64) -> Vec<f64> {
    let floor = group_size as f64 * noise_sigma * noise_sigma;
    sigma.iter().map(|s| (s * s - floor).max(0.0).sqrt()).collect()
}

/// GST threshold `τ_p(w)`; equals `w` at `p = 1`.
pub fn gst_threshold(w: f64, p: f64) -> f64 {
    if (p - 1.0).abs() <= P_ONE_TOL {
        return w;
    }
    let base = 2.0 * w * (1.0 - p);
    base.powf(1.0 / (2.0 - p)) + w * p * base.powf((p - 1.0) / (2.0 - p))
}

/// Minimizer of `½(δ − σ)² + w δ^p` over `δ ≥ 0`, with `iters` fixed-point steps.
pub fn gst(sigma: f64, w: f64, p: f64, iters: usize) -> f64 {
    if (p - 1.0).abs() <= P_ONE_TOL {
        return (sigma - w).max(0.0);
    }
    if sigma <= 0.0 {
        return 0.0;
    }
    if sigma <= gst_threshold(w, p) {
        return 0.0;
    }
    let mut delta = sigma;
    for _ in 0..iters {
        delta = sigma - w * p * delta.powf(p - 1.0);
    }
    delta
}

/// Shrinks each singular value with weight `w_i / β`.
///
/// The augmented Lagrangian couples the group with `(β/2)‖Z − P‖²`, so the
/// per-value penalty relative to `½(δ − σ)²` is `w_i / β`.
pub fn shrink_singular_values(
    sigma: &[f64],
    weights: &WeightVector,
    spec: &ShrinkageSpec,
    beta: f64,
) -> Result<Vec<f64>> {
    if sigma.len() != weights.len() {
        return Err(Error::LengthMismatch {
            op: "shrink_singular_values",
            left: sigma.len(),
            right: weights.len(),
        });
    }
    if !(beta > 0.0) {
        return Err(invalid(format!("penalty beta must be positive, got {beta}")));
    }
    Ok(sigma
        .iter()
        .zip(weights.as_slice())
        .map(|(&s, &w)| {
            let w = w / beta;
            match spec.mode {
                ShrinkMode::Wnnm => (s - w).max(0.0),
                ShrinkMode::Wsnm => gst(s, w, spec.p, spec.gst_iters),
            }
        })
        .collect())
}

/// `Σ w_i σ_i^p`.
pub fn wsnorm(sigma: &[f64], weights: &WeightVector, p: f64) -> Result<f64> {
    if sigma.len() != weights.len() {
        return Err(Error::LengthMismatch {
            op: "wsnorm",
            left: sigma.len(),
            right: weights.len(),
        });
    }
    Ok(sigma
        .iter()
        .zip(weights.as_slice())
        .map(|(s, w)| if *s == 0.0 { 0.0 } else { w * s.powf(p) })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objective(delta: f64, sigma: f64, w: f64, p: f64) -> f64 {
        let pen = if delta == 0.0 { 0.0 } else { w * delta.powf(p) };
        0.5 * (delta - sigma).powi(2) + pen
    }

    /// Brute-force minimizer over the grid `0, h, 2h, …, σ`.
    fn grid_argmin(sigma: f64, w: f64, p: f64, h: f64) -> f64 {
        let steps = (sigma / h).floor() as usize;
        let mut best = (objective(0.0, sigma, w, p), 0.0);
        for k in 1..=steps {
            let d = k as f64 * h;
            let f = objective(d, sigma, w, p);
            if f < best.0 {
                best = (f, d);
            }
        }
        let f = objective(sigma, sigma, w, p);
        if f < best.0 {
            best = (f, sigma);
        }
        best.1
    }

    #[test]
    fn weights_examples() {
        assert_eq!(make_weights(&[1.0], 1.0, 1.0).unwrap().as_slice(), &[0.5]);
        assert_eq!(make_weights(&[3.0, 1.0], 2.0, 1.0).unwrap().as_slice(), &[0.5, 1.0]);
        let w = make_weights(&[0.0], 2f64.sqrt(), f64::EPSILON).unwrap();
        assert!(w.as_slice()[0].is_finite());
        assert!((w.as_slice()[0] / 6.369e15 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn weights_reject_bad_input() {
        assert!(make_weights(&[1.0, 2.0], 1.0, 1.0).is_err());
        assert!(make_weights(&[1.0], 0.0, 1.0).is_err());
        assert!(make_weights(&[1.0], 1.0, 0.0).is_err());
        assert!(make_weights(&[-1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn weights_are_non_descending() {
        let w = make_weights(&[9.0, 4.0, 4.0, 0.5, 0.0], 1.3, 1e-3).unwrap();
        assert!(w.as_slice().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn gst_examples() {
        assert_eq!(gst(3.0, 1.0, 1.0, 3), 2.0);
        // τ = (2·0.5)^{1/1.5} + 0.5·(2·0.5)^{−1/3} = 1.5 > 0.5
        assert!((gst_threshold(1.0, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(gst(0.5, 1.0, 0.5, 3), 0.0);
        assert_eq!(gst(0.0, 0.2, 0.7, 3), 0.0);
    }

    #[test]
    fn gst_matches_grid_oracle_with_default_iterations() {
        let delta = gst(2.0, 0.5, 0.95, 3);
        let oracle = grid_argmin(2.0, 0.5, 0.95, 1e-6);
        assert!((delta - oracle).abs() < 1e-4, "{delta} vs {oracle}");
    }

    #[test]
    fn wnnm_shrinkage_example() {
        let w = WeightVector::new(vec![1.0, 1.0]).unwrap();
        let out = shrink_singular_values(&[3.0, 1.0], &w, &ShrinkageSpec::wnnm(), 1.0).unwrap();
        assert_eq!(out, vec![2.0, 0.0]);
    }

    #[test]
    fn wsnm_shrinkage_matches_per_value_oracle() {
        let w = WeightVector::new(vec![0.2, 0.4, 0.9]).unwrap();
        let spec = ShrinkageSpec::new(ShrinkMode::Wsnm, 0.95, 30).unwrap();
        let sigma = [5.0, 3.0, 1.0];
        let out = shrink_singular_values(&sigma, &w, &spec, 2.0).unwrap();
        for i in 0..3 {
            let oracle = grid_argmin(sigma[i], w.as_slice()[i] / 2.0, 0.95, 1e-6);
            assert!((out[i] - oracle).abs() < 1e-4, "{i}: {} vs {oracle}", out[i]);
        }
        assert!(out.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn shrinkage_rejects_mismatch() {
        let w = WeightVector::new(vec![1.0]).unwrap();
        assert!(shrink_singular_values(&[1.0, 2.0], &w, &ShrinkageSpec::wnnm(), 1.0).is_err());
        assert!(shrink_singular_values(&[1.0], &w, &ShrinkageSpec::wnnm(), 0.0).is_err());
        assert!(ShrinkageSpec::new(ShrinkMode::Wsnm, 0.0, 3).is_err());
        assert!(ShrinkageSpec::new(ShrinkMode::Wsnm, 0.5, 0).is_err());
    }

    #[test]
    fn wsnorm_examples() {
        let ones = WeightVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(wsnorm(&[1.0, 1.0], &ones, 0.5).unwrap(), 2.0);
        assert_eq!(wsnorm(&[0.0, 0.0], &ones, 0.5).unwrap(), 0.0);
        let w = WeightVector::new(vec![0.5, 1.0]).unwrap();
        let expected = 0.5 * 2f64.powf(0.95) + 1.0;
        assert!((wsnorm(&[2.0, 1.0], &w, 0.95).unwrap() - expected).abs() < 1e-15);
        assert!(wsnorm(&[1.0], &w, 0.5).is_err());
    }

    #[test]
    fn noise_compensation_floors_at_zero() {
        let est = noise_compensated(&[10.0, 2.0], 4, 1.5);
        assert!((est[0] - (100.0f64 - 9.0).sqrt()).abs() < 1e-12);
        assert_eq!(est[1], 0.0);
    }

    const POWERS: [f64; 5] = [0.3, 0.5, 0.7, 0.95, 1.0];

    proptest! {
        #[test]
        fn gst_is_a_global_minimizer(sigma in 0.0..10.0f64, w in 1e-3..5.0f64, pi in 0usize..5) {
            let p = POWERS[pi];
            let delta = gst(sigma, w, p, 60);
            let f = objective(delta, sigma, w, p);
            let steps = (sigma / 1e-3) as usize;
            for k in 0..=steps {
                let d = k as f64 * 1e-3;
                prop_assert!(f <= objective(d, sigma, w, p) + 1e-9);
            }
        }

        #[test]
        fn gst_is_monotone_in_sigma(w in 1e-3..5.0f64, pi in 0usize..5, iters in 1usize..8) {
            let p = POWERS[pi];
            let mut prev = 0.0;
            for k in 0..400 {
                let s = k as f64 * 0.025;
                let d = gst(s, w, p, iters);
                prop_assert!(d >= prev);
                prev = d;
            }
        }

        #[test]
        fn gst_zero_exactly_below_threshold(sigma in 0.0..10.0f64, w in 1e-3..5.0f64, pi in 0usize..5) {
            let p = POWERS[pi];
            let tau = gst_threshold(w, p);
            let zero = gst(sigma, w, p, 3) == 0.0;
            prop_assert_eq!(zero, sigma <= tau + 1e-12);
        }

        #[test]
        fn p_one_wsnm_equals_wnnm(seed in prop::collection::vec(0.0..50.0f64, 1..12), beta in 0.1..10.0f64) {
            let mut sigma = seed.clone();
            sigma.sort_by(|a, b| b.total_cmp(a));
            let w = make_weights(&sigma, 2f64.sqrt() * 3.0, 1e-6).unwrap();
            let a = shrink_singular_values(&sigma, &w, &ShrinkageSpec::wnnm(), beta).unwrap();
            let spec = ShrinkageSpec::new(ShrinkMode::Wsnm, 1.0, 3).unwrap();
            let b = shrink_singular_values(&sigma, &w, &spec, beta).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn shrinkage_preserves_ordering(seed in prop::collection::vec(0.0..500.0f64, 1..20), c in 0.1..2000.0f64, pi in 0usize..5, beta in 0.1..10.0f64) {
            let mut sigma = seed.clone();
            sigma.sort_by(|a, b| b.total_cmp(a));
            let w = make_weights(&sigma, c, f64::EPSILON).unwrap();
            let spec = ShrinkageSpec::new(ShrinkMode::Wsnm, POWERS[pi], 3).unwrap();
            let out = shrink_singular_values(&sigma, &w, &spec, beta).unwrap();
            prop_assert!(out.windows(2).all(|p| p[0] >= p[1]));
        }
    }
}
