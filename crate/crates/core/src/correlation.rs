//! Pauli correlation matrix, the Lorentz spectrum and both CHSH criteria.

use nalgebra::Matrix3;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{c, det2, hermitian_eigen2, inv_sqrt_psd2, kron, pauli, real_eigenvalues4, Mat2, Mat4, Real3, Real4};
use crate::qstate::{is_separable, reduce, Side, TwoQubitState};

/// Numerical thresholds shared by the analysis entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Largest tolerated imaginary part of `Tr(rho s_i x s_j)`.
    pub correlation_imag: f64,
    /// Relative bound on imaginary eigenvalue parts of `C`, scaled by `1 + |C|`.
    pub spectrum: f64,
    /// Relative margin on `lambda1 + lambda2 > lambda0`.
    pub boundary_rel: f64,
    /// `lambda0` at or below this is treated as a zero spectrum.
    pub lambda0_abs: f64,
    /// Partial-transpose eigenvalues down to `-separability` count as PPT.
    pub separability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            correlation_imag: 1e-12,
            spectrum: 1e-6,
            boundary_rel: 1e-12,
            lambda0_abs: 1e-12,
            separability: 1e-12,
        }
    }
}

/// `M = diag(1, -1, -1, -1)`.
pub fn minkowski() -> Real4 {
    Real4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// Real 4x4 matrix `R[i][j] = Tr(rho sigma_i (x) sigma_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationMatrix {
    pub r: Real4,
    pub normalized: bool,
}

impl CorrelationMatrix {
    /// Wraps an unnormalized matrix (for example a transported one).
    pub fn raw(r: Real4) -> Self {
        Self { r, normalized: false }
    }

    /// Divides by `R[0][0]`, the trace of the underlying operator.
    pub fn normalize(&self) -> Self {
        Self { r: self.r / self.r[(0, 0)], normalized: true }
    }

    /// The lower-right 3x3 block of spin correlations.
    pub fn spin_block(&self) -> Real3 {
        self.r.fixed_view::<3, 3>(1, 1).into_owned()
    }

    /// Density matrix `sum_ij R_ij sigma_i (x) sigma_j / 4` (normalized first).
    pub fn to_density(&self) -> Mat4 {
        let r = self.normalize().r;
        let mut rho = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                rho += kron(&pauli(i), &pauli(j)) * c(r[(i, j)] / 4.0, 0.0);
            }
        }
        rho
    }
}

pub fn correlation_matrix(s: &TwoQubitState) -> Result<CorrelationMatrix> {
    let (r, residual) = correlation_of(s.rho());
    if residual > Tolerances::default().correlation_imag {
        return Err(Error::NonRealCorrelation { residual });
    }
    Ok(CorrelationMatrix { r, normalized: true })
}

/// Correlation matrix of any operator, with the largest imaginary residue.
pub(crate) fn correlation_of(rho: &Mat4) -> (Real4, f64) {
    let mut r = Real4::zeros();
    let mut residual = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            let p = kron(&pauli(i), &pauli(j));
            // Tr(rho P) = sum_ab rho_ab P_ba
            let t = rho.component_mul(&p.transpose()).sum();
            r[(i, j)] = t.re;
            residual = residual.max(t.im.abs());
        }
    }
    (r, residual)
}

/// `C = M R M R^T`, exactly as written.
pub fn c_matrix(r: &CorrelationMatrix) -> Real4 {
    let m = minkowski();
    m * r.r * m * r.r.transpose()
}

/// Eigenvalues of `C` sorted descending, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorentzSpectrum {
    pub lambda: [f64; 4],
    pub max_imag_residual: f64,
    pub clamp_applied: bool,
}

impl LorentzSpectrum {
    /// `(lambda1 + lambda2) / lambda0`, or 0 for a zero spectrum.
    pub fn ratio(&self, lambda0_abs: f64) -> f64 {
        if self.lambda[0] > lambda0_abs {
            (self.lambda[1] + self.lambda[2]) / self.lambda[0]
        } else {
            0.0
        }
    }

    /// `lambda_i / lambda0` for i = 0..3.
    pub fn ratios(&self) -> [f64; 4] {
        let l0 = self.lambda[0];
        self.lambda.map(|x| x / l0)
    }
}

/// Eigenvalues closer than this times `|C|` are replaced by their mean.
const CLUSTER_GAP: f64 = 1e-7;

/// Computes the spectrum of `C` with a general real eigensolver.
///
/// `C` need not be symmetric, so reality of the spectrum is checked rather
/// than assumed: imaginary parts above `tol * (1 + |C|)` are an error, small
/// negative eigenvalues are clamped to zero and large ones are an error.
///
/// `C` can carry a nontrivial Jordan block (the non-diagonal normal forms do),
/// where individual eigenvalues are only accurate to about `sqrt(eps)` while
/// the mean of the split cluster stays accurate to `eps`. Eigenvalues within
/// `CLUSTER_GAP * |C|` of each other are therefore averaged.
pub fn lorentz_spectrum(c: &Real4, tol: f64) -> Result<LorentzSpectrum> {
    let norm = c.norm();
    let bound = tol * (1.0 + norm);
    let eig = real_eigenvalues4(c).ok_or_else(|| Error::ConvergenceFailure {
        iterations: 0,
        deviation: f64::NAN,
        detail: "eigenvalues of C did not converge".into(),
    })?;
    let max_imag_residual = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_imag_residual > bound {
        return Err(Error::ComplexSpectrum { residual: max_imag_residual, bound });
    }
    let mut lambda = [eig[0].re, eig[1].re, eig[2].re, eig[3].re];
    lambda.sort_by(|a, b| b.total_cmp(a));
    average_clusters(&mut lambda, CLUSTER_GAP * norm);
    let mut clamp_applied = false;
    for x in lambda.iter_mut() {
        if *x < 0.0 {
            if *x < -bound {
                return Err(Error::NegativeSpectrum { value: *x, bound });
            }
            *x = 0.0;
            clamp_applied = true;
        }
    }
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok(LorentzSpectrum { lambda, max_imag_residual, clamp_applied })
}

/// Whitening steps taken before the spectrum of a state is computed.
const PRECONDITION_STEPS: usize = 8;
/// A marginal whose eigenvalue ratio is below this is left alone.
const PRECONDITION_FLOOR: f64 = 1e-4;

/// Spectrum of `C` for a state, computed in a better-conditioned frame.
///
/// `C` is similar to a diagonal matrix through the Lorentz boosts of the
/// filter that would bring the state to normal form, so for a state far from
/// that form the eigenvalues are ill-conditioned and plain `lorentz_spectrum`
/// loses digits. Filters only rescale the spectrum, by `(|det X| / p)^2` for a
/// one-sided filter `X` with success probability `p`, so a few marginal
/// whitening steps are applied first and the result is scaled back. Nearly
/// singular marginals are skipped.
pub fn state_spectrum(s: &TwoQubitState, tol: f64) -> Result<LorentzSpectrum> {
    let mut rho = *s.rho();
    let mut log_scale = 0.0;
    for _ in 0..PRECONDITION_STEPS {
        let mut moved = false;
        for side in [Side::A, Side::B] {
            let m = reduce(&rho, side);
            let (vals, _) = hermitian_eigen2(&m);
            if vals[0] <= PRECONDITION_FLOOR * vals[1] || (vals[1] - vals[0]) <= 1e-12 {
                continue;
            }
            let Some(x) = inv_sqrt_psd2(&(m * c(2.0, 0.0)), 0.0) else { continue };
            let k = match side {
                Side::A => kron(&x, &Mat2::identity()),
                Side::B => kron(&Mat2::identity(), &x),
            };
            let out = k * rho * k.adjoint();
            let p = out.trace().re;
            rho = (out + out.adjoint()) * c(0.5 / p, 0.0);
            log_scale += 2.0 * (p / det2(&x).norm()).ln();
            moved = true;
        }
        if !moved {
            break;
        }
    }
    let (r, _) = correlation_of(&rho);
    let spec = lorentz_spectrum(&c_matrix(&CorrelationMatrix { r, normalized: true }), tol)?;
    let scale = log_scale.exp();
    Ok(LorentzSpectrum {
        lambda: spec.lambda.map(|x| x * scale),
        max_imag_residual: spec.max_imag_residual * scale,
        clamp_applied: spec.clamp_applied,
    })
}

/// Single-linkage clustering of a descending slice; each run of neighbours
/// closer than `gap` is replaced by its mean.
fn average_clusters(sorted_desc: &mut [f64; 4], gap: f64) {
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && sorted_desc[end - 1] - sorted_desc[end] <= gap {
            end += 1;
        }
        if end - start > 1 {
            let mean = sorted_desc[start..end].iter().sum::<f64>() / (end - start) as f64;
            sorted_desc[start..end].fill(mean);
        }
        start = end;
    }
}

/// The closed-form hidden-nonlocality test and the optimal filtered CHSH value.
///
/// Returns `(lambda1 + lambda2 > lambda0 (1 + boundary_rel), 2 sqrt((lambda1 + lambda2)/lambda0))`;
/// a zero spectrum gives `(false, 0)`.
pub fn hidden_nonlocality(spec: &LorentzSpectrum, tol: &Tolerances) -> (bool, f64) {
    let [l0, l1, l2, _] = spec.lambda;
    if l0 <= tol.lambda0_abs {
        return (false, 0.0);
    }
    let violated = l1 + l2 > l0 * (1.0 + tol.boundary_rel);
    (violated, 2.0 * ((l1 + l2) / l0).sqrt())
}

/// Horodecki value: sum of the two largest eigenvalues of `T^T T`.
///
/// The maximal unfiltered CHSH value is `2 sqrt(M)`; CHSH is violated iff `M > 1`.
pub fn horodecki_value(r: &CorrelationMatrix) -> f64 {
    let t = r.normalize().spin_block();
    horodecki_of_block(&t)
}

pub(crate) fn horodecki_of_block(t: &Real3) -> f64 {
    let tt: Matrix3<f64> = t.transpose() * t;
    let mut ev: Vec<f64> = tt.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] + ev[1]
}

/// Everything the CLI and the survey need to know about one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionReport {
    pub spectrum: LorentzSpectrum,
    pub hidden_nonlocal: bool,
    pub max_filtered_chsh: f64,
    pub horodecki_m: f64,
    pub chsh_unfiltered: f64,
    pub separable: bool,
}

impl Serialize for CriterionReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("CriterionReport", 10)?;
        st.serialize_field("spectrum", &self.spectrum)?;
        st.serialize_field("hidden_nonlocal", &self.hidden_nonlocal)?;
        st.serialize_field("max_filtered_chsh", &self.max_filtered_chsh)?;
        st.serialize_field("horodecki_M", &self.horodecki_m)?;
        st.serialize_field("chsh_unfiltered", &self.chsh_unfiltered)?;
        st.serialize_field("separable", &self.separable)?;
        st.serialize_field("lambda0", &self.spectrum.lambda[0])?;
        st.serialize_field("lambda1", &self.spectrum.lambda[1])?;
        st.serialize_field("lambda2", &self.spectrum.lambda[2])?;
        st.serialize_field("lambda3", &self.spectrum.lambda[3])?;
        st.end()
    }
}

pub fn analyze(s: &TwoQubitState) -> Result<CriterionReport> {
    analyze_with(s, &Tolerances::default())
}

pub fn analyze_with(s: &TwoQubitState, tol: &Tolerances) -> Result<CriterionReport> {
    let r = correlation_matrix(s)?;
    let spectrum = state_spectrum(s, tol.spectrum)?;
    Ok(report_from_parts(&r, spectrum, is_separable(s, tol.separability), tol))
}

pub(crate) fn report_from_parts(
    r: &CorrelationMatrix,
    spectrum: LorentzSpectrum,
    separable: bool,
    tol: &Tolerances,
) -> CriterionReport {
    let (hidden_nonlocal, max_filtered_chsh) = hidden_nonlocality(&spectrum, tol);
    let horodecki_m = horodecki_value(r);
    CriterionReport {
        spectrum,
        hidden_nonlocal,
        max_filtered_chsh,
        horodecki_m,
        chsh_unfiltered: 2.0 * horodecki_m.sqrt(),
        separable,
    }
}
