//! Two-qubit density matrices: validation, partial operations, the PPT
//! separability test and random state generation.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eigenvalues4, is_finite, kron_ket, max_abs_diff, projector, Ket4, Mat2, Mat4,
    ONE, ZERO,
};
use crate::rng::SeedStream;

/// Absolute tolerance used when validating states unless told otherwise.
pub const DEFAULT_STATE_TOL: f64 = 1e-10;

/// Environment dimension of the default random-channel measure.
pub const DEFAULT_ENV_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// A validated two-qubit density matrix.
///
/// Construction goes through [`validate_state`], so every value of this type
/// is Hermitian, unit trace and positive semidefinite up to `norm_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Mat4,
    norm_tol: f64,
}

/// Checks the three physicality invariants and returns a cleaned-up state.
///
/// The matrix is symmetrized to its Hermitian part and renormalized to unit
/// trace once both deviations are known to be within `tol`.
pub fn validate_state(m: &Mat4, tol: f64) -> Result<TwoQubitState> {
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    let deviation = max_abs_diff(m, &m.adjoint());
    if deviation > tol {
        return Err(Error::NotHermitian { deviation, tol });
    }
    let mut rho = (m + m.adjoint()) * c(0.5, 0.0);
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > tol {
        return Err(Error::NotUnitTrace { trace, tol });
    }
    rho /= c(trace, 0.0);
    let min_eigenvalue = hermitian_eigenvalues4(&rho)[0];
    if min_eigenvalue < -tol {
        return Err(Error::NotPositive { min_eigenvalue, tol });
    }
    Ok(TwoQubitState { rho, norm_tol: tol })
}

impl TwoQubitState {
    pub fn new(m: &Mat4) -> Result<Self> {
        validate_state(m, DEFAULT_STATE_TOL)
    }

    /// Normalizes a positive semidefinite operator to unit trace, then validates.
    pub fn from_unnormalized(m: &Mat4) -> Result<Self> {
        let trace = m.trace().re;
        if !(trace.is_finite() && trace > 0.0) {
            return Err(Error::NotUnitTrace { trace, tol: DEFAULT_STATE_TOL });
        }
        Self::new(&(m / c(trace, 0.0)))
    }

    pub fn from_pure(psi: &Ket4) -> Result<Self> {
        let norm = psi.norm();
        Self::new(&projector(&(psi / c(norm, 0.0))))
    }

    pub fn rho(&self) -> &Mat4 {
        &self.rho
    }

    pub fn norm_tol(&self) -> f64 {
        self.norm_tol
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Mat4::identity() * c(0.25, 0.0), norm_tol: DEFAULT_STATE_TOL }
    }

    /// |Phi+> = (|00> + |11>)/sqrt(2).
    pub fn phi_plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_pure(&Ket4::new(c(h, 0.0), ZERO, ZERO, c(h, 0.0))).expect("pure state")
    }

    /// The singlet |psi-> = (|01> - |10>)/sqrt(2).
    pub fn singlet() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_pure(&Ket4::new(ZERO, c(h, 0.0), c(-h, 0.0), ZERO)).expect("pure state")
    }

    /// Product state |ab> for computational-basis labels.
    pub fn product_basis(a: usize, b: usize) -> Self {
        let ket = |bit: usize| if bit == 0 { [ONE, ZERO] } else { [ZERO, ONE] };
        Self::from_pure(&kron_ket(ket(a), ket(b))).expect("pure state")
    }

    /// Werner state p |psi-><psi-| + (1 - p) I/4, for p in [-1/3, 1].
    pub fn werner(p: f64) -> Result<Self> {
        let m = Self::singlet().rho * c(p, 0.0) + Mat4::identity() * c((1.0 - p) / 4.0, 0.0);
        Self::new(&m)
    }

    /// `a (x) b` for single-qubit density matrices.
    pub fn product(a: &Mat2, b: &Mat2) -> Result<Self> {
        Self::new(&crate::linalg::kron(a, b))
    }

    /// Conjugates by a local unitary `u (x) v`.
    pub fn local_unitary(&self, u: &Mat2, v: &Mat2) -> Result<Self> {
        let k = crate::linalg::kron(u, v);
        validate_state(&(k * self.rho * k.adjoint()), self.norm_tol)
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues4(&self.rho)
    }

    pub fn trace_distance(&self, other: &TwoQubitState) -> f64 {
        let diff = self.rho - other.rho;
        0.5 * hermitian_eigenvalues4(&diff).iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// Reduced density matrix on the kept side.
pub fn partial_trace(s: &TwoQubitState, keep: Side) -> Mat2 {
    reduce(s.rho(), keep)
}

pub(crate) fn reduce(rho: &Mat4, keep: Side) -> Mat2 {
    Mat2::from_fn(|i, k| match keep {
        Side::A => rho[(2 * i, 2 * k)] + rho[(2 * i + 1, 2 * k + 1)],
        Side::B => rho[(i, k)] + rho[(2 + i, 2 + k)],
    })
}

/// Transpose on the second tensor factor.
pub fn partial_transpose(s: &TwoQubitState) -> Mat4 {
    partial_transpose_raw(s.rho())
}

pub fn partial_transpose_raw(rho: &Mat4) -> Mat4 {
    Mat4::from_fn(|r, col| {
        let (i, j) = (r / 2, r % 2);
        let (k, l) = (col / 2, col % 2);
        rho[(2 * i + l, 2 * k + j)]
    })
}

/// Peres-Horodecki test; exact for two qubits.
pub fn is_separable(s: &TwoQubitState, tol: f64) -> bool {
    min_pt_eigenvalue(s) >= -tol
}

pub fn min_pt_eigenvalue(s: &TwoQubitState) -> f64 {
    hermitian_eigenvalues4(&partial_transpose(s))[0]
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Haar-random pure state on C^4, returned as a projector.
pub fn random_pure_state(seed: &SeedStream) -> TwoQubitState {
    let mut rng = seed.rng();
    let psi = Ket4::from_fn(|_, _| complex_normal(&mut rng));
    TwoQubitState::from_pure(&psi).expect("normalized projector is a state")
}

/// Hilbert-Schmidt (Ginibre) random state of the given rank, 1 <= rank <= 4.
pub fn random_ginibre_state(seed: &SeedStream, rank: usize) -> TwoQubitState {
    assert!((1..=4).contains(&rank), "rank must be in 1..=4");
    let mut rng = seed.rng();
    let g = nalgebra::SMatrix::<Complex64, 4, 4>::from_fn(|_, col| {
        if col < rank {
            complex_normal(&mut rng)
        } else {
            ZERO
        }
    });
    TwoQubitState::from_unnormalized(&(g * g.adjoint())).expect("G G^dagger is positive")
}

/// Haar-random 2 x 2 unitary.
pub fn random_unitary2(seed: &SeedStream) -> Mat2 {
    let iso = haar_isometry(&mut seed.rng(), 2);
    Mat2::new(iso[0][0], iso[1][0], iso[0][1], iso[1][1])
}

/// Two orthonormal columns of a Haar-random unitary on C^dim, by Gram-Schmidt
/// on complex Gaussian vectors.
fn haar_isometry<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> [DVector<Complex64>; 2] {
    let mut v0 = DVector::from_fn(dim, |_, _| complex_normal(rng));
    let mut v1 = DVector::from_fn(dim, |_, _| complex_normal(rng));
    v0 /= c(v0.norm(), 0.0);
    let overlap = v0.dotc(&v1);
    v1 -= &v0 * overlap;
    v1 /= c(v1.norm(), 0.0);
    [v0, v1]
}

/// Choi state (id (x) Phi)(|Phi+><Phi+|) of a random qubit channel.
///
/// The channel is `Phi(X) = Tr_env(V X V^dagger)` with `V: C^2 -> C^2 (x) C^env_dim`
/// a Haar-random isometry. The first qubit is untouched, so its marginal is
/// exactly I/2 up to rounding.
pub fn random_channel_choi(seed: &SeedStream, env_dim: usize) -> TwoQubitState {
    assert!(env_dim >= 1, "environment dimension must be positive");
    let [col0, col1] = haar_isometry(&mut seed.rng(), 2 * env_dim);
    let cols = [col0, col1];
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    // psi[(i, o), e] = V[(o, e), i] / sqrt(2); rho = psi psi^dagger
    let mut rho = Mat4::zeros();
    for r in 0..4 {
        let (i, o) = (r / 2, r % 2);
        for s in 0..4 {
            let (k, p) = (s / 2, s % 2);
            let mut acc = ZERO;
            for e in 0..env_dim {
                acc += cols[i][o * env_dim + e] * cols[k][p * env_dim + e].conj();
            }
            rho[(r, s)] = acc * h * h;
        }
    }
    validate_state(&rho, DEFAULT_STATE_TOL).expect("Choi state of a channel is a state")
}
