//! Quaternion singular value decomposition through the complex adjoint.
//!
//! A quaternion matrix `Q = A + B j` (`A = X0 + X1 i`, `B = X2 + X3 i`) is
//! embedded as the `2m × 2n` complex matrix
//!
//! ```text
//! χ(Q) = [  A      B    ]
//!        [ −B̄      Ā    ]
//! ```
//!
//! `χ` is a ring homomorphism, so a complex singular triplet `(σ, ũ, ṽ)` of
//! `χ(Q)` maps back to a quaternion triplet with `Q v = σ u`, where a complex
//! vector `[x; y]` corresponds to the quaternion vector `x − ȳ j`. Every
//! quaternion singular value appears twice in `χ(Q)`; the two members of a
//! pair map to quaternion vectors that differ by a unit right factor, so
//! exactly one per pair is kept. Selection walks the complex triplets in
//! descending order and keeps a triplet when its right vector is not already
//! in the quaternion span of the kept ones (Gram–Schmidt with right scalar
//! coefficients, applied identically to the left vectors). Inside a
//! repeated cluster this yields an orthonormal basis of the cluster.

use faer::c64;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::linalg::svd::{self as faer_svd, ComputeSvdVectors};
use faer::diag::Diag;
use faer::{Accum, Mat, Par};

use crate::error::{Error, Result};
use crate::qmatrix::QMatrix;
use crate::quaternion::Quaternion;

/// Thin decomposition `Q = U · diag(S) · V^◁` with `r = min(m, n)`.
#[derive(Debug, Clone)]
pub struct QSvdResult {
    pub u: QMatrix,
    pub s: Vec<f64>,
    pub v: QMatrix,
}

impl QSvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U · diag(values) · V^◁`, skipping zero entries of `values`.
    pub fn reconstruct_with(&self, values: &[f64]) -> Result<QMatrix> {
        if values.len() != self.s.len() {
            return Err(Error::LengthMismatch {
                op: "QSvdResult::reconstruct_with",
                left: values.len(),
                right: self.s.len(),
            });
        }
        let (m, n) = (self.u.rows(), self.v.rows());
        let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
        if kept.is_empty() {
            return Ok(QMatrix::zeros(m, n));
        }
        let left = QMatrix::from_fn(m, kept.len(), |i, t| self.u.get(i, kept[t]).scale(values[kept[t]]));
        let right = QMatrix::from_fn(kept.len(), n, |t, j| self.v.get(j, kept[t]).conj());
        left.mul(&right)
    }

    pub fn reconstruct(&self) -> Result<QMatrix> {
        self.reconstruct_with(&self.s)
    }
}

/// Complex adjoint `χ(Q)` of size `2m × 2n`.
pub fn complex_adjoint(q: &QMatrix) -> Mat<c64> {
    let (m, n) = q.shape();
    Mat::from_fn(2 * m, 2 * n, |i, j| {
        let (ii, top) = if i < m { (i, true) } else { (i - m, false) };
        let (jj, left) = if j < n { (j, true) } else { (j - n, false) };
        let e = q.get(ii, jj);
        let a = c64::new(e.a0, e.a1);
        let b = c64::new(e.a2, e.a3);
        match (top, left) {
            (true, true) => a,
            (true, false) => b,
            (false, true) => -b.conj(),
            (false, false) => a.conj(),
        }
    })
}

/// Thin complex SVD with a fixed sequential backend.
pub(crate) fn complex_svd(a: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>, Mat<c64>)> {
    let (m, n) = a.shape();
    let size = m.min(n);
    let mut u = Mat::<c64>::zeros(m, size);
    let mut v = Mat::<c64>::zeros(n, size);
    let mut s = Diag::<c64>::zeros(size);
    let par = Par::Seq;
    let mut buf = MemBuffer::new(faer_svd::svd_scratch::<c64>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        par,
        Default::default(),
    ));
    faer_svd::svd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Svd(format!("complex SVD of {m}x{n} adjoint: {e:?}")))?;
    let values: Vec<f64> = (0..size).map(|i| s.column_vector()[i].re).collect();
    Ok((values, u, v))
}

type QVec = Vec<Quaternion>;

fn to_quaternion_vec(mat: &Mat<c64>, col: usize, len: usize) -> QVec {
    (0..len)
        .map(|i| {
            let x = mat[(i, col)];
            let y = mat[(i + len, col)];
            // a = x, b = −ȳ
            Quaternion::new(x.re, x.im, -y.re, y.im)
        })
        .collect()
}

fn vec_norm(x: &[Quaternion]) -> f64 {
    x.iter().map(|q| q.norm_sqr()).sum::<f64>().sqrt()
}

/// `x^◁ y`.
fn vec_inner(x: &[Quaternion], y: &[Quaternion]) -> Quaternion {
    x.iter().zip(y).fold(Quaternion::ZERO, |acc, (a, b)| acc + a.conj() * *b)
}

/// `y ← y − x·c`.
fn sub_right_scaled(y: &mut [Quaternion], x: &[Quaternion], c: Quaternion) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= *xi * c;
    }
}

fn scale_vec(x: &mut [Quaternion], s: f64) {
    x.iter_mut().for_each(|q| *q = q.scale(s));
}

/// Orthogonalizes `v` against `basis` (two passes), applying the same right
/// coefficients to `paired` against `paired_basis`. Returns the residual norm.
fn project_out(
    v: &mut QVec,
    basis: &[QVec],
    mut paired: Option<(&mut QVec, &[QVec])>,
) -> f64 {
    let start = vec_norm(v);
    let mut norm = start;
    for _pass in 0..2 {
        for (t, b) in basis.iter().enumerate() {
            let c = vec_inner(b, v);
            sub_right_scaled(v, b, c);
            if let Some((p, pb)) = paired.as_mut() {
                sub_right_scaled(p, &pb[t], c);
            }
        }
        let after = vec_norm(v);
        // A second pass is only needed after heavy cancellation.
        if after > 0.7 * norm {
            return after;
        }
        norm = after;
    }
    norm
}

const ACCEPT: f64 = 0.5;
const ACCEPT_FALLBACK: f64 = 1e-8;

/// Thin QSVD. Singular values are real, non-negative and non-ascending.
pub fn qsvd(q: &QMatrix) -> Result<QSvdResult> {
    let (m, n) = q.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("qsvd of empty {m}x{n} matrix")));
    }
    if !q.is_finite() {
        return Err(Error::NonFinite("qsvd input"));
    }
    let r = m.min(n);
    let chi = complex_adjoint(q);
    let (values, cu, cv) = complex_svd(&chi)?;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut us: Vec<QVec> = Vec::with_capacity(r);
    let mut vs: Vec<QVec> = Vec::with_capacity(r);
    let mut s: Vec<f64> = Vec::with_capacity(r);
    let mut rejected = Vec::new();

    for &idx in &order {
        if vs.len() == r {
            break;
        }
        let mut v = to_quaternion_vec(&cv, idx, n);
        let mut u = to_quaternion_vec(&cu, idx, m);
        let res = project_out(&mut v, &vs, Some((&mut u, &us)));
        if res > ACCEPT {
            scale_vec(&mut v, 1.0 / res);
            scale_vec(&mut u, 1.0 / res);
            vs.push(v);
            us.push(u);
            s.push(values[idx].max(0.0));
        } else {
            rejected.push(idx);
        }
    }

    // Degenerate fallbacks: weaker acceptance, then canonical basis vectors.
    if vs.len() < r {
        for &idx in &rejected {
            if vs.len() == r {
                break;
            }
            let mut v = to_quaternion_vec(&cv, idx, n);
            let mut u = to_quaternion_vec(&cu, idx, m);
            let res = project_out(&mut v, &vs, Some((&mut u, &us)));
            if res > ACCEPT_FALLBACK {
                scale_vec(&mut v, 1.0 / res);
                scale_vec(&mut u, 1.0 / res);
                vs.push(v);
                us.push(u);
                s.push(values[idx].max(0.0));
            }
        }
    }
    let mut e = 0;
    while vs.len() < r && e < n {
        let mut v = vec![Quaternion::ZERO; n];
        v[e] = Quaternion::ONE;
        e += 1;
        let res = project_out(&mut v, &vs, None);
        if res > ACCEPT {
            scale_vec(&mut v, 1.0 / res);
            vs.push(v);
            us.push(vec![Quaternion::ZERO; m]);
            s.push(0.0);
        }
    }
    if vs.len() < r {
        return Err(Error::Svd(format!("could not extract {r} quaternion singular vectors from {m}x{n} input")));
    }

    // Keep ordering non-ascending after any fallback insertions.
    let mut perm: Vec<usize> = (0..r).collect();
    perm.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let s: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
    let mut us: Vec<QVec> = perm.iter().map(|&i| std::mem::take(&mut us[i])).collect();
    let vs: Vec<QVec> = perm.iter().map(|&i| vs[i].clone()).collect();

    // Left vectors of (numerically) null singular values are not tied to V
    // and may have lost orthogonality; re-orthonormalize them.
    let tiny = (m.max(n) as f64) * f64::EPSILON * s[0];
    let first_null = s.iter().position(|&x| x <= tiny).unwrap_or(r);
    let mut basis_idx = 0;
    for i in first_null..r {
        let mut u = std::mem::take(&mut us[i]);
        let mut res = project_out(&mut u, &us[..i], None);
        while res <= ACCEPT {
            if basis_idx >= m {
                return Err(Error::Svd(format!("could not complete left basis for {m}x{n} input")));
            }
            u = vec![Quaternion::ZERO; m];
            u[basis_idx] = Quaternion::ONE;
            basis_idx += 1;
            res = project_out(&mut u, &us[..i], None);
        }
        scale_vec(&mut u, 1.0 / res);
        us[i] = u;
    }

    let mut u_mat = QMatrix::zeros(m, r);
    let mut v_mat = QMatrix::zeros(n, r);
    for j in 0..r {
        u_mat.set_column(j, &us[j]);
        v_mat.set_column(j, &vs[j]);
    }
    Ok(QSvdResult { u: u_mat, s, v: v_mat })
}

/// Number of singular values strictly above `tol · S[0]`.
pub fn q_rank(q: &QMatrix, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("rank tolerance must be >= 0, got {tol}")));
    }
    let svd = qsvd(q)?;
    let top = svd.s.first().copied().unwrap_or(0.0);
    Ok(svd.s.iter().filter(|&&x| x > tol * top).count())
}

/// Applies a singular value map `σ ↦ f(σ)` without forming `V`.
///
/// For `Q = Σ σ_i u_i v_i^◁` (σ descending) this returns `σ` together with
/// `Σ δ_i u_i v_i^◁`, `δ = f(σ)`. It works on the smaller Gram matrix of
/// `χ(Q)`: when `m ≤ n`, `χχᴴ = E Λ Eᴴ` and the result is the top block row
/// of `E diag(δ/σ) Eᴴ χ`; otherwise `χ E diag(δ/σ) Eᴴ` with `χᴴχ = E Λ Eᴴ`.
/// Because `χ` maps both members of a singular pair to the same `δ`, the
/// output is again a complex adjoint and no pair selection is needed.
///
/// Components with `σ_i = 0` are dropped whatever `δ_i` is, and accuracy
/// for tiny nonzero `σ_i` is limited by the squared spectrum, so `f` should
/// vanish on small values (every thresholding rule does).
pub fn map_singular_values(
    q: &QMatrix,
    f: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, QMatrix)> {
    let (m, n) = q.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if !q.is_finite() {
        return Err(Error::NonFinite("map_singular_values input"));
    }
    let chi = complex_adjoint(q);
    let wide = m <= n;
    let d = 2 * m.min(n);
    let one = c64::new(1.0, 0.0);
    let par = Par::Seq;

    let mut gram = Mat::<c64>::zeros(d, d);
    if wide {
        matmul(gram.as_mut(), Accum::Replace, chi.as_ref(), chi.adjoint(), one, par);
    } else {
        matmul(gram.as_mut(), Accum::Replace, chi.adjoint(), chi.as_ref(), one, par);
    }
    let mut eig = Diag::<c64>::zeros(d);
    let mut e = Mat::<c64>::zeros(d, d);
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<c64>(
        d,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        gram.as_ref(),
        eig.as_mut(),
        Some(e.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|err| Error::Svd(format!("Hermitian eigensolver on {d}x{d} Gram matrix: {err:?}")))?;

    let lam: Vec<f64> = (0..d).map(|i| eig.column_vector()[i].re).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
    let sigma: Vec<f64> = (0..d / 2)
        .map(|i| (0.5 * (lam[order[2 * i]] + lam[order[2 * i + 1]])).max(0.0).sqrt())
        .collect();
    let delta = f(&sigma)?;
    if delta.len() != sigma.len() {
        return Err(Error::LengthMismatch {
            op: "map_singular_values",
            left: delta.len(),
            right: sigma.len(),
        });
    }

    // eigenvector columns with a nonzero gain δ/σ
    let kept: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .filter_map(|(rank, &col)| {
            let i = rank / 2;
            (sigma[i] > 0.0 && delta[i] != 0.0).then(|| (col, delta[i] / sigma[i]))
        })
        .collect();
    if kept.is_empty() {
        return Ok((sigma, QMatrix::zeros(m, n)));
    }
    let t = kept.len();
    let ek = Mat::<c64>::from_fn(d, t, |i, j| e[(i, kept[j].0)]);
    let ek_scaled = Mat::<c64>::from_fn(d, t, |i, j| e[(i, kept[j].0)] * kept[j].1);

    let mut top = Mat::<c64>::zeros(m, 2 * n);
    if wide {
        // (E_k diag(r) E_kᴴ)[..m, :] · χ
        let mut proj = Mat::<c64>::zeros(m, d);
        matmul(proj.as_mut(), Accum::Replace, ek_scaled.as_ref().subrows(0, m), ek.adjoint(), one, par);
        matmul(top.as_mut(), Accum::Replace, proj.as_ref(), chi.as_ref(), one, par);
    } else {
        // χ[..m, :] · E_k diag(r) E_kᴴ
        let mut proj = Mat::<c64>::zeros(d, d);
        matmul(proj.as_mut(), Accum::Replace, ek_scaled.as_ref(), ek.adjoint(), one, par);
        matmul(top.as_mut(), Accum::Replace, chi.as_ref().subrows(0, m), proj.as_ref(), one, par);
    }
    let mut out = QMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let a = top[(i, j)];
            let b = top[(i, j + n)];
            out.set(i, j, Quaternion::new(a.re, a.im, b.re, b.im));
        }
    }
    Ok((sigma, out))
}
