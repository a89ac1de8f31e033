//! Dense quaternion matrices in planar storage.
//!
//! `X = X0 + X1 i + X2 j + X3 k` is kept as four row-major real planes of
//! identical shape. FFT-based solves and patch extraction work on one plane
//! at a time, so each plane is a contiguous slice.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;

#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    planes: [Vec<f64>; 4],
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let len = rows * cols;
        Self {
            rows,
            cols,
            planes: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.planes[0][i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Quaternion) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from four row-major planes; all must hold `rows * cols` values.
    pub fn from_planes(rows: usize, cols: usize, planes: [Vec<f64>; 4]) -> Result<Self> {
        for p in &planes {
            if p.len() != rows * cols {
                return Err(Error::LengthMismatch {
                    op: "QMatrix::from_planes",
                    left: p.len(),
                    right: rows * cols,
                });
            }
        }
        Ok(Self { rows, cols, planes })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn plane(&self, l: usize) -> &[f64] {
        &self.planes[l]
    }

    #[inline]
    pub fn plane_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.planes[l]
    }

    pub fn planes(&self) -> &[Vec<f64>; 4] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<f64>; 4] {
        self.planes
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Quaternion {
        let idx = i * self.cols + j;
        Quaternion::new(
            self.planes[0][idx],
            self.planes[1][idx],
            self.planes[2][idx],
            self.planes[3][idx],
        )
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, q: Quaternion) {
        let idx = i * self.cols + j;
        self.planes[0][idx] = q.a0;
        self.planes[1][idx] = q.a1;
        self.planes[2][idx] = q.a2;
        self.planes[3][idx] = q.a3;
    }

    pub fn column(&self, j: usize) -> Vec<Quaternion> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[Quaternion]) {
        debug_assert_eq!(col.len(), self.rows);
        for (i, q) in col.iter().enumerate() {
            self.set(i, j, *q);
        }
    }

    fn check_same_shape(&self, other: &QMatrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product with entrywise Hamilton products.
    pub fn mul(&self, other: &QMatrix) -> Result<QMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "QMatrix::mul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, p, n) = (self.rows, self.cols, other.cols);
        let mut out = QMatrix::zeros(m, n);
        let [c0, c1, c2, c3] = &mut out.planes;
        let [b0, b1, b2, b3] = &other.planes;
        for i in 0..m {
            let crow = i * n..(i + 1) * n;
            let (c0, c1, c2, c3) = (
                &mut c0[crow.clone()],
                &mut c1[crow.clone()],
                &mut c2[crow.clone()],
                &mut c3[crow],
            );
            for k in 0..p {
                let a = self.get(i, k);
                if a == Quaternion::ZERO {
                    continue;
                }
                let brow = k * n..(k + 1) * n;
                let (b0, b1, b2, b3) = (
                    &b0[brow.clone()],
                    &b1[brow.clone()],
                    &b2[brow.clone()],
                    &b3[brow],
                );
                for j in 0..n {
                    let (x0, x1, x2, x3) = (b0[j], b1[j], b2[j], b3[j]);
                    c0[j] += a.a0 * x0 - a.a1 * x1 - a.a2 * x2 - a.a3 * x3;
                    c1[j] += a.a0 * x1 + a.a1 * x0 + a.a2 * x3 - a.a3 * x2;
                    c2[j] += a.a0 * x2 - a.a1 * x3 + a.a2 * x0 + a.a3 * x1;
                    c3[j] += a.a0 * x3 + a.a1 * x2 - a.a2 * x1 + a.a3 * x0;
                }
            }
        }
        Ok(out)
    }

    /// Entrywise conjugate, no transpose.
    pub fn conj(&self) -> QMatrix {
        let mut out = self.clone();
        for l in 1..4 {
            out.planes[l].iter_mut().for_each(|v| *v = -*v);
        }
        out
    }

    pub fn transpose(&self) -> QMatrix {
        let mut out = QMatrix::zeros(self.cols, self.rows);
        for l in 0..4 {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    out.planes[l][j * self.rows + i] = self.planes[l][i * self.cols + j];
                }
            }
        }
        out
    }

    /// `(A^◁)_{ij} = conj(A_{ji})`.
    pub fn conj_transpose(&self) -> QMatrix {
        let mut out = self.transpose();
        for l in 1..4 {
            out.planes[l].iter_mut().for_each(|v| *v = -*v);
        }
        out
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.planes.iter().flat_map(|p| p.iter()).map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sqr().sqrt()
    }

    /// Real part of `⟨A, B⟩ = Σ conj(a_ij) b_ij`, i.e. the Euclidean inner
    /// product of the stacked real planes.
    pub fn inner(&self, other: &QMatrix) -> Result<f64> {
        self.check_same_shape(other, "QMatrix::inner")?;
        Ok(self
            .planes
            .iter()
            .zip(other.planes.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn add(&self, other: &QMatrix) -> Result<QMatrix> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &QMatrix) -> Result<QMatrix> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, s: f64) -> QMatrix {
        let mut out = self.clone();
        out.scale_mut(s);
        out
    }

    pub fn scale_mut(&mut self, s: f64) {
        for p in self.planes.iter_mut() {
            p.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &QMatrix, b: f64) -> Result<QMatrix> {
        self.check_same_shape(other, "QMatrix::lin_comb")?;
        let mut out = self.clone();
        for (po, pb) in out.planes.iter_mut().zip(other.planes.iter()) {
            po.iter_mut().zip(pb.iter()).for_each(|(x, y)| *x = a * *x + b * y);
        }
        Ok(out)
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: f64, other: &QMatrix) -> Result<()> {
        self.check_same_shape(other, "QMatrix::axpy")?;
        for (po, pb) in self.planes.iter_mut().zip(other.planes.iter()) {
            po.iter_mut().zip(pb.iter()).for_each(|(x, y)| *x += s * y);
        }
        Ok(())
    }

    /// `‖self − other‖_F`.
    pub fn distance(&self, other: &QMatrix) -> Result<f64> {
        self.check_same_shape(other, "QMatrix::distance")?;
        Ok(self
            .planes
            .iter()
            .zip(other.planes.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum::<f64>()
            .sqrt())
    }

    /// Largest absolute component over all four planes.
    pub fn max_abs(&self) -> f64 {
        self.planes.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_real(&self) -> f64 {
        self.planes[0].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes the real plane.
    pub fn purify(&mut self) {
        self.planes[0].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_qmatrix as random;
    use proptest::prelude::*;
    use rand::SeedableRng;

    /// Entry-by-entry product with the scalar Hamilton product; independent of the planar kernel.
    fn naive_mul(a: &QMatrix, b: &QMatrix) -> QMatrix {
        QMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).fold(Quaternion::ZERO, |acc, k| acc + a.get(i, k) * b.get(k, j))
        })
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let a = random(2, 3, &mut rng);
        let prod = QMatrix::identity(2).mul(&a).unwrap();
        assert!(prod.distance(&a).unwrap() < 1e-15);
    }

    #[test]
    fn product_matches_scalar_loop() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let a = random(4, 5, &mut rng);
        let b = random(5, 3, &mut rng);
        let d = a.mul(&b).unwrap().distance(&naive_mul(&a, &b)).unwrap();
        assert!(d < 1e-13);
    }

    #[test]
    fn conj_transpose_reverses_products() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let a = random(2, 2, &mut rng);
        let b = random(2, 2, &mut rng);
        let lhs = a.mul(&b).unwrap().conj_transpose();
        let rhs = b.conj_transpose().mul(&a.conj_transpose()).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-14);
    }

    #[test]
    fn all_j_matrix_squared() {
        // Each entry: j·j + j·j = −2.
        let a = QMatrix::from_fn(2, 2, |_, _| Quaternion::J);
        let sq = a.mul(&a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(sq.get(i, j), Quaternion::real(-2.0));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = QMatrix::zeros(2, 3);
        assert!(matches!(a.mul(&a), Err(Error::DimensionMismatch { .. })));
        assert!(a.inner(&QMatrix::zeros(3, 2)).is_err());
        assert!(QMatrix::from_planes(2, 2, [vec![0.0; 4], vec![0.0; 4], vec![0.0; 3], vec![0.0; 4]]).is_err());
    }

    #[test]
    fn norms() {
        assert!((QMatrix::identity(2).frobenius() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(QMatrix::zeros(3, 4).frobenius(), 0.0);
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let a = random(3, 5, &mut rng);
        assert!((a.inner(&a).unwrap() - a.frobenius_sqr()).abs() < 1e-12);
        // Definition: sum of squared entry moduli.
        let direct: f64 = (0..3).flat_map(|i| (0..5).map(move |j| (i, j))).map(|(i, j)| a.get(i, j).norm_sqr()).sum();
        assert!((direct - a.frobenius_sqr()).abs() < 1e-12);
    }

    #[test]
    fn inner_is_real_part_of_conj_product() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let a = random(3, 2, &mut rng);
        let b = random(3, 2, &mut rng);
        let mut re = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                re += (a.get(i, j).conj() * b.get(i, j)).a0;
            }
        }
        assert!((a.inner(&b).unwrap() - re).abs() < 1e-14);
    }

    #[test]
    fn purify_zeroes_real_plane() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let mut a = random(3, 3, &mut rng);
        assert!(a.max_abs_real() > 0.0);
        a.purify();
        assert_eq!(a.max_abs_real(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn product_is_bilinear_and_associative(seed in any::<u64>(), s in -3.0..3.0f64) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let a = random(3, 3, &mut rng);
            let b = random(3, 3, &mut rng);
            let b2 = random(3, 3, &mut rng);
            let c = random(3, 3, &mut rng);
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert!(left.distance(&right).unwrap() <= 1e-10 * left.frobenius().max(1.0));
            let lin = a.mul(&b.lin_comb(1.0, &b2, s).unwrap()).unwrap();
            let sep = a.mul(&b).unwrap().lin_comb(1.0, &a.mul(&b2).unwrap(), s).unwrap();
            prop_assert!(lin.distance(&sep).unwrap() <= 1e-10 * lin.frobenius().max(1.0));
        }
    }
}
