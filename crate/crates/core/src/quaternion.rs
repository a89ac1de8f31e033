//! Quaternion scalars.
//!
//! A quaternion `a0 + a1 i + a2 j + a3 k` with the Hamilton rules
//! `i² = j² = k² = ijk = −1`. Multiplication is associative but not
//! commutative: `ij = k = −ji`, `jk = i = −kj`, `ki = j = −ik`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// One of the three imaginary units, used to select an involution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    I,
    J,
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(a0: f64, a1: f64, a2: f64, a3: f64) -> Self {
        Self { a0, a1, a2, a3 }
    }

    #[inline]
    pub const fn real(a0: f64) -> Self {
        Self::new(a0, 0.0, 0.0, 0.0)
    }

    /// Pure quaternion `r i + g j + b k`, the encoding of one RGB pixel.
    #[inline]
    pub const fn pure(r: f64, g: f64, b: f64) -> Self {
        Self::new(0.0, r, g, b)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Self::new(s * self.a0, s * self.a1, s * self.a2, s * self.a3)
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.a0, -self.a1, -self.a2, -self.a3)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.a0 * self.a0 + self.a1 * self.a1 + self.a2 * self.a2 + self.a3 * self.a3
    }

    #[inline]
    pub fn modulus(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `-u q u` for the pure unit `u`: keeps the real part and the `u`
    /// component, negates the other two imaginary parts.
    #[inline]
    pub fn involution(self, axis: Axis) -> Self {
        match axis {
            Axis::I => Self::new(self.a0, self.a1, -self.a2, -self.a3),
            Axis::J => Self::new(self.a0, -self.a1, self.a2, -self.a3),
            Axis::K => Self::new(self.a0, -self.a1, -self.a2, self.a3),
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        let n = self.norm_sqr();
        if n == 0.0 {
            None
        } else {
            Some(self.conj().scale(1.0 / n))
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.a0.is_finite() && self.a1.is_finite() && self.a2.is_finite() && self.a3.is_finite()
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    #[inline]
    fn add(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.a0 + b.a0, self.a1 + b.a1, self.a2 + b.a2, self.a3 + b.a3)
    }
}

impl AddAssign for Quaternion {
    #[inline]
    fn add_assign(&mut self, b: Quaternion) {
        *self = *self + b;
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    #[inline]
    fn sub(self, b: Quaternion) -> Quaternion {
        Quaternion::new(self.a0 - b.a0, self.a1 - b.a1, self.a2 - b.a2, self.a3 - b.a3)
    }
}

impl SubAssign for Quaternion {
    #[inline]
    fn sub_assign(&mut self, b: Quaternion) {
        *self = *self - b;
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    #[inline]
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;
    #[inline]
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.a0 * b.a0 - a.a1 * b.a1 - a.a2 * b.a2 - a.a3 * b.a3,
            a.a0 * b.a1 + a.a1 * b.a0 + a.a2 * b.a3 - a.a3 * b.a2,
            a.a0 * b.a2 - a.a1 * b.a3 + a.a2 * b.a0 + a.a3 * b.a1,
            a.a0 * b.a3 + a.a1 * b.a2 - a.a2 * b.a1 + a.a3 * b.a0,
        )
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    #[inline]
    fn mul(self, q: Quaternion) -> Quaternion {
        q.scale(self)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.a0, self.a1, self.a2, self.a3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a0: f64, a1: f64, a2: f64, a3: f64) -> Quaternion {
        Quaternion::new(a0, a1, a2, a3)
    }

    #[test]
    fn add_and_scale() {
        assert_eq!(q(1.0, 1.0, 0.0, 0.0) + q(0.0, 0.0, 1.0, 1.0), q(1.0, 1.0, 1.0, 1.0));
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).scale(2.0), q(2.0, 2.0, 2.0, 2.0));
        let a = q(0.3, -1.2, 4.0, 2.5);
        assert_eq!(a + a.scale(-1.0), Quaternion::ZERO);
    }

    #[test]
    fn unit_products() {
        use Quaternion as Q;
        assert_eq!(Q::I * Q::J, Q::K);
        assert_eq!(Q::J * Q::I, -Q::K);
        assert_eq!(Q::J * Q::K, Q::I);
        assert_eq!(Q::K * Q::I, Q::J);
        for u in [Q::I, Q::J, Q::K] {
            assert_eq!(u * u, Q::real(-1.0));
        }
        assert_eq!(Q::I * Q::J * Q::K, Q::real(-1.0));
    }

    #[test]
    fn hand_expanded_product() {
        // (1+i)(1-i) = 1 - i + i - i² = 2
        assert_eq!(q(1.0, 1.0, 0.0, 0.0) * q(1.0, -1.0, 0.0, 0.0), Quaternion::real(2.0));
    }

    #[test]
    fn conj_and_modulus() {
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).conj(), q(1.0, -1.0, -1.0, -1.0));
        assert_eq!(q(1.0, 1.0, 1.0, 1.0).modulus(), 2.0);
        assert_eq!(Quaternion::ZERO.modulus(), 0.0);
    }

    #[test]
    fn involutions() {
        let a = q(1.0, 1.0, 1.0, 1.0);
        assert_eq!(a.involution(Axis::I), q(1.0, 1.0, -1.0, -1.0));
        assert_eq!(a.involution(Axis::J), q(1.0, -1.0, 1.0, -1.0));
        assert_eq!(a.involution(Axis::K), q(1.0, -1.0, -1.0, 1.0));
        let r = Quaternion::real(3.5);
        for ax in [Axis::I, Axis::J, Axis::K] {
            assert_eq!(r.involution(ax), r);
        }
    }

    #[test]
    fn involution_matches_conjugation_by_unit() {
        let a = q(0.7, -2.0, 0.4, 1.1);
        for (ax, u) in [(Axis::I, Quaternion::I), (Axis::J, Quaternion::J), (Axis::K, Quaternion::K)] {
            let by_def = -(u * a * u);
            let d = by_def - a.involution(ax);
            assert!(d.modulus() < 1e-15);
        }
    }

    fn arb_q() -> impl Strategy<Value = Quaternion> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(a, b, c, d)| q(a, b, c, d))
    }

    proptest! {
        #[test]
        fn modulus_is_multiplicative(a in arb_q(), b in arb_q()) {
            let lhs = (a * b).modulus();
            let rhs = a.modulus() * b.modulus();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn q_times_conj_is_real(a in arb_q()) {
            let p = a * a.conj();
            let scale = a.norm_sqr().max(1.0);
            prop_assert!(p.a1.abs() <= 1e-12 * scale);
            prop_assert!(p.a2.abs() <= 1e-12 * scale);
            prop_assert!(p.a3.abs() <= 1e-12 * scale);
            prop_assert!((p.a0 - a.norm_sqr()).abs() <= 1e-12 * scale);
        }

        #[test]
        fn product_is_associative(a in arb_q(), b in arb_q(), c in arb_q()) {
            let d = (a * b) * c - a * (b * c);
            let scale = a.modulus() * b.modulus() * c.modulus();
            prop_assert!(d.modulus() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn involution_is_self_inverse(a in arb_q()) {
            for ax in [Axis::I, Axis::J, Axis::K] {
                prop_assert_eq!(a.involution(ax).involution(ax), a);
            }
        }
    }
}
