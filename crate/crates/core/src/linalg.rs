//! Small fixed-size complex and real matrix helpers.
//!
//! Everything here works on `nalgebra` statically sized matrices. Two-qubit
//! operators use the computational basis |00>, |01>, |10>, |11> in that order
//! (first factor is the most significant index).

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector4};
use num_complex::Complex64;

pub type Mat2 = Matrix2<Complex64>;
pub type Mat4 = Matrix4<Complex64>;
pub type Ket4 = Vector4<Complex64>;
pub type Real4 = Matrix4<f64>;
pub type Real3 = Matrix3<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The Pauli basis sigma_0 = I, sigma_1 = X, sigma_2 = Y, sigma_3 = Z.
pub fn pauli(i: usize) -> Mat2 {
    match i {
        0 => Mat2::new(ONE, ZERO, ZERO, ONE),
        1 => Mat2::new(ZERO, ONE, ONE, ZERO),
        2 => Mat2::new(ZERO, -I, I, ZERO),
        3 => Mat2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// Kronecker product of two 2x2 matrices.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn kron_ket(a: [Complex64; 2], b: [Complex64; 2]) -> Ket4 {
    Ket4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

pub fn projector(v: &Ket4) -> Mat4 {
    v * v.adjoint()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<Complex64, R, C>,
    b: &nalgebra::SMatrix<Complex64, R, C>,
) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff_real<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<f64, R, C>,
    b: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn is_finite<const R: usize, const C: usize>(m: &nalgebra::SMatrix<Complex64, R, C>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigenvalues of a general real 4x4 matrix, or `None` if the QR iteration
/// does not converge.
///
/// nalgebra's Francis iteration does not terminate on matrices that are a
/// multiple of the identity up to rounding noise (the spin block of a pure
/// state produces exactly that). The sweep count is therefore bounded, and on
/// failure the mean eigenvalue is shifted out: a remainder at rounding level
/// returns the mean four times, anything else is retried on the normalized
/// remainder and once more under a fixed orthogonal similarity.
pub fn real_eigenvalues4(m: &Real4) -> Option<[Complex64; 4]> {
    const QUICK_SWEEPS: usize = 200;
    const MAX_SWEEPS: usize = 10_000;
    if let Some(schur) = nalgebra::Schur::try_new(*m, f64::EPSILON, QUICK_SWEEPS) {
        let ev = schur.complex_eigenvalues();
        return Some([ev[0], ev[1], ev[2], ev[3]]);
    }
    let mu = m.trace() / 4.0;
    let rest = m - Real4::identity() * mu;
    let scale = rest.norm();
    if scale <= 64.0 * f64::EPSILON * m.norm() {
        return Some([Complex64::new(mu, 0.0); 4]);
    }
    let unit = rest / scale;
    let q = nalgebra::Rotation3::from_euler_angles(0.3, 0.7, 1.1).into_inner();
    let mut q4 = Real4::identity();
    q4.fixed_view_mut::<3, 3>(1, 1).copy_from(&q);
    for cand in [unit, q4.transpose() * unit * q4] {
        if let Some(schur) = nalgebra::Schur::try_new(cand, f64::EPSILON, MAX_SWEEPS) {
            let ev = schur.complex_eigenvalues();
            return Some(std::array::from_fn(|k| ev[k] * scale + mu));
        }
    }
    None
}

/// Eigenvalues of a Hermitian 4x4 matrix in ascending order.
///
/// Only the Hermitian part of `m` is used.
pub fn hermitian_eigenvalues4(m: &Mat4) -> [f64; 4] {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Eigen-decomposition of a Hermitian 2x2 matrix: ascending eigenvalues and
/// the matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen2(m: &Mat2) -> ([f64; 2], Mat2) {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let (v0, v1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let (lo, hi) = if v0 <= v1 { (0, 1) } else { (1, 0) };
    let vecs = Mat2::from_columns(&[eig.eigenvectors.column(lo), eig.eigenvectors.column(hi)]);
    ([eig.eigenvalues[lo], eig.eigenvalues[hi]], vecs)
}

/// Inverse square root of a Hermitian positive definite 2x2 matrix.
///
/// Returns `None` when the smallest eigenvalue is not above `floor`.
pub fn inv_sqrt_psd2(m: &Mat2, floor: f64) -> Option<Mat2> {
    let (vals, vecs) = hermitian_eigen2(m);
    if vals[0] <= floor {
        return None;
    }
    let d = Mat2::new(
        c(vals[0].powf(-0.5), 0.0),
        ZERO,
        ZERO,
        c(vals[1].powf(-0.5), 0.0),
    );
    Some(vecs * d * vecs.adjoint())
}

pub fn det2(m: &Mat2) -> Complex64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Singular values of a 2x2 complex matrix, descending.
pub fn singular_values2(m: &Mat2) -> [f64; 2] {
    let (vals, _) = hermitian_eigen2(&(m.adjoint() * m));
    [vals[1].max(0.0).sqrt(), vals[0].max(0.0).sqrt()]
}

/// SU(2) element whose adjoint action on the Pauli vector is the rotation `o`.
///
/// With `w = su2_from_rotation(o)`, `w^dagger sigma_i w = sum_k o[i][k] sigma_k`,
/// so conjugating a state by `w` on one side maps that side's correlation
/// vectors by `o`.
pub fn su2_from_rotation(o: &Real3) -> Mat2 {
    // Shepperd's method for the unit quaternion of a rotation matrix.
    let tr = o.trace();
    let (w, x, y, z);
    if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (o[(2, 1)] - o[(1, 2)]) / s;
        y = (o[(0, 2)] - o[(2, 0)]) / s;
        z = (o[(1, 0)] - o[(0, 1)]) / s;
    } else if o[(0, 0)] > o[(1, 1)] && o[(0, 0)] > o[(2, 2)] {
        let s = (1.0 + o[(0, 0)] - o[(1, 1)] - o[(2, 2)]).sqrt() * 2.0;
        w = (o[(2, 1)] - o[(1, 2)]) / s;
        x = 0.25 * s;
        y = (o[(0, 1)] + o[(1, 0)]) / s;
        z = (o[(0, 2)] + o[(2, 0)]) / s;
    } else if o[(1, 1)] > o[(2, 2)] {
        let s = (1.0 + o[(1, 1)] - o[(0, 0)] - o[(2, 2)]).sqrt() * 2.0;
        w = (o[(0, 2)] - o[(2, 0)]) / s;
        x = (o[(0, 1)] + o[(1, 0)]) / s;
        y = 0.25 * s;
        z = (o[(1, 2)] + o[(2, 1)]) / s;
    } else {
        let s = (1.0 + o[(2, 2)] - o[(0, 0)] - o[(1, 1)]).sqrt() * 2.0;
        w = (o[(1, 0)] - o[(0, 1)]) / s;
        x = (o[(0, 2)] + o[(2, 0)]) / s;
        y = (o[(1, 2)] + o[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / norm, x / norm, y / norm, z / norm);
    // exp(-i theta n.sigma / 2), written out in quaternion components.
    Mat2::new(c(w, -z), c(-y, -x), c(y, -x), c(w, z))
}

/// Real 3x3 rotation induced by conjugation with a 2x2 unitary:
/// `o[i][k] = Tr(u^dagger sigma_i u sigma_k) / 2`.
pub fn rotation_of_unitary(u: &Mat2) -> Real3 {
    Real3::from_fn(|i, k| {
        let m = u.adjoint() * pauli(i + 1) * u * pauli(k + 1);
        0.5 * m.trace().re
    })
}
