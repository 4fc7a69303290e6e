//! Dense complex linear algebra helpers on top of nalgebra.

use crate::{Mat, C64};
use nalgebra::linalg::SymmetricEigen;

pub fn zeros(n: usize) -> Mat {
    Mat::zeros(n, n)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Largest entry modulus.
pub fn max_norm(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace(a: &Mat) -> C64 {
    a.diagonal().iter().sum()
}

pub fn is_hermitian(a: &Mat, tol: f64) -> bool {
    a.is_square() && max_diff(a, &a.adjoint()) <= tol
}

pub fn is_unitary(a: &Mat, tol: f64) -> bool {
    a.is_square() && max_diff(&(a.adjoint() * a), &identity(a.nrows())) <= tol
}

/// Replace `a` by (a + a†)/2.
pub fn hermitize(a: &mut Mat) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..=j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

/// Eigenvalues of the hermitian part of `a`, ascending.
pub fn eigvals_hermitian(a: &Mat) -> Vec<f64> {
    let mut h = a.clone();
    hermitize(&mut h);
    let mut w: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    w.sort_by(|x, y| x.total_cmp(y));
    w
}

/// Applies a scalar function to a hermitian matrix through its eigendecomposition.
pub fn hermitian_fn(a: &Mat, f: impl Fn(f64) -> C64) -> Mat {
    let mut h = a.clone();
    hermitize(&mut h);
    let eig = SymmetricEigen::new(h);
    let v = &eig.eigenvectors;
    let mut vf = v.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let z = f(lam);
        for x in vf.column_mut(k).iter_mut() {
            *x *= z;
        }
    }
    vf * v.adjoint()
}

/// exp(−i t H) for hermitian H.
pub fn expm_hermitian(h: &Mat, t: f64) -> Mat {
    hermitian_fn(h, |lam| C64::from_polar(1.0, -lam * t))
}

/// General matrix exponential by Padé scaling and squaring.
pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

/// Trace norm of a hermitian matrix.
pub fn trace_norm_hermitian(a: &Mat) -> f64 {
    eigvals_hermitian(a).iter().map(|x| x.abs()).sum()
}

/// ½‖a − b‖₁ for hermitian a, b.
pub fn trace_distance(a: &Mat, b: &Mat) -> f64 {
    0.5 * trace_norm_hermitian(&(a - b))
}

/// Max-norm distance between two matrices after removing the best global phase.
pub fn phase_free_distance(a: &Mat, b: &Mat) -> f64 {
    let inner: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { C64::new(1.0, 0.0) };
    max_diff(a, &(b * phase))
}

/// |tr(A†B)|/dim, equal to 1 iff the unitaries agree up to a global phase.
pub fn phase_free_overlap(a: &Mat, b: &Mat) -> f64 {
    let inner: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    inner.norm() / a.nrows() as f64
}

/// True when every eigenvalue of hermitian `a` is ≥ −tol, decided by a
/// Cholesky factorization of a + tol·1.
pub fn is_psd_within(a: &Mat, tol: f64) -> bool {
    let n = a.nrows();
    let mut l = a.clone();
    hermitize(&mut l);
    for i in 0..n {
        l[(i, i)] += tol;
    }
    // Left-looking column Cholesky on the lower triangle.
    for j in 0..n {
        for k in 0..j {
            let ljk = l[(j, k)].conj();
            if ljk == C64::new(0.0, 0.0) {
                continue;
            }
            for i in j..n {
                let v = l[(i, k)] * ljk;
                l[(i, j)] -= v;
            }
        }
        let d = l[(j, j)].re;
        if !(d > 0.0) {
            return false;
        }
        let inv = 1.0 / d.sqrt();
        for i in j..n {
            l[(i, j)] *= inv;
        }
    }
    true
}

/// Projector |v⟩⟨v|.
pub fn projector(v: &crate::Vector) -> Mat {
    v * v.adjoint()
}
