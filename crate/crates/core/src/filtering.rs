//! Local filters `A (x) B`, the Lorentz maps they induce on the correlation
//! matrix, reduction to the normal form and the quasi-distillation family.

use num_complex::Complex64;
use serde::Serialize;

use crate::correlation::{correlation_matrix, horodecki_value, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    c, det2, hermitian_eigen2, inv_sqrt_psd2, kron, max_abs_diff_real, singular_values2,
    su2_from_rotation, Mat2, Mat4, Real3, Real4, ONE, ZERO,
};
use crate::qstate::{reduce, validate_state, Side, TwoQubitState, DEFAULT_STATE_TOL};

/// Filters with `|det|` below this are treated as rank deficient.
pub const DEFAULT_MIN_ABS_DET: f64 = 1e-12;
/// Marginal tolerance and singularity threshold of [`normal_form`].
pub const DEFAULT_EPS: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Largest off-pattern entry accepted when fitting the normal form.
const FIT_RESIDUAL: f64 = 1e-6;
/// Success probabilities below this mean the filter wiped the state out.
const MIN_SUCCESS_PROBABILITY: f64 = 1e-14;
/// Eigenvalues of rho below this (relative to the largest) span its kernel.
const KERNEL_TOL: f64 = 1e-9;
/// First iteration at which the whitening sweep is checked for stalling.
const STALL_CHECK_FROM: usize = 64;

/// The unitary change of basis from `vec(X)` (row-major) to `Tr(X sigma_i)/sqrt(2)`.
pub fn t_matrix() -> Mat4 {
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i = crate::linalg::I;
    Mat4::new(
        ONE, ZERO, ZERO, ONE, //
        ZERO, ONE, ONE, ZERO, //
        ZERO, i, -i, ZERO, //
        ONE, ZERO, ZERO, -ONE,
    ) * h
}

/// A pair of full-rank local filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFilter {
    a: Mat2,
    b: Mat2,
    min_abs_det: f64,
}

impl LocalFilter {
    pub fn new(a: Mat2, b: Mat2) -> Result<Self> {
        Self::with_min_abs_det(a, b, DEFAULT_MIN_ABS_DET)
    }

    pub fn with_min_abs_det(a: Mat2, b: Mat2, min_abs_det: f64) -> Result<Self> {
        for m in [&a, &b] {
            let abs_det = det2(m).norm();
            if !(abs_det >= min_abs_det) {
                return Err(Error::SingularFilter { abs_det, min_abs_det });
            }
        }
        Ok(Self { a, b, min_abs_det })
    }

    pub fn identity() -> Self {
        Self { a: Mat2::identity(), b: Mat2::identity(), min_abs_det: DEFAULT_MIN_ABS_DET }
    }

    pub fn a(&self) -> &Mat2 {
        &self.a
    }

    pub fn b(&self) -> &Mat2 {
        &self.b
    }

    pub fn min_abs_det(&self) -> f64 {
        self.min_abs_det
    }

    /// `A (x) B`.
    pub fn kron(&self) -> Mat4 {
        kron(&self.a, &self.b)
    }

    /// The filter that applies `self` first and `next` afterwards.
    pub fn then(&self, next: &LocalFilter) -> Result<LocalFilter> {
        LocalFilter::with_min_abs_det(next.a * self.a, next.b * self.b, self.min_abs_det.min(next.min_abs_det))
    }

    /// Rescales each side to unit operator norm, so `A^dagger A <= I` and the
    /// success probability is a genuine probability.
    pub fn contracted(&self) -> LocalFilter {
        let scale = |m: &Mat2| m / c(singular_values2(m)[0], 0.0);
        LocalFilter { a: scale(&self.a), b: scale(&self.b), min_abs_det: self.min_abs_det }
    }
}

/// A proper orthochronous Lorentz transformation acting on correlation rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzMap {
    pub l: Real4,
}

impl LorentzMap {
    /// Largest entry of `l^T M l - M`.
    pub fn metric_defect(&self) -> f64 {
        let m = crate::correlation::minkowski();
        max_abs_diff_real(&(self.l.transpose() * m * self.l), &m)
    }

    pub fn is_proper_orthochronous(&self, tol: f64) -> bool {
        self.metric_defect() <= tol && (self.l.determinant() - 1.0).abs() <= tol && self.l[(0, 0)] >= 1.0 - tol
    }
}

/// `L = T (a (x) a*) T^dagger / |det a|`.
pub fn lorentz_of_filter(a: &Mat2) -> Result<LorentzMap> {
    let abs_det = det2(a).norm();
    if !(abs_det >= DEFAULT_MIN_ABS_DET) {
        return Err(Error::SingularFilter { abs_det, min_abs_det: DEFAULT_MIN_ABS_DET });
    }
    let t = t_matrix();
    let lc = t * kron(a, &a.map(|z| z.conj())) * t.adjoint() / c(abs_det, 0.0);
    let scale = lc.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = lc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residual > 1e-12 * scale {
        return Err(Error::NonRealCorrelation { residual });
    }
    Ok(LorentzMap { l: lc.map(|z| z.re) })
}

/// Applies the filter and renormalizes.
///
/// Returns the filtered state and the success probability
/// `Tr(A^dagger A (x) B^dagger B rho)`.
pub fn apply_filter(s: &TwoQubitState, f: &LocalFilter) -> Result<(TwoQubitState, f64)> {
    // Conjugate the square-root factor rather than rho itself: a strong filter
    // would otherwise blow rounding-level negative eigenvalues of rho up into
    // a visible loss of positivity.
    let eig = (s.rho() + s.rho().adjoint()).scale(0.5).symmetric_eigen();
    let root = Mat4::from_diagonal(&eig.eigenvalues.map(|x| c(x.max(0.0).sqrt(), 0.0)));
    let w = f.kron() * eig.eigenvectors * root;
    let out = w * w.adjoint();
    let probability = out.trace().re;
    if !(probability >= MIN_SUCCESS_PROBABILITY) {
        return Err(Error::FilterAnnihilates { probability });
    }
    let state = validate_state(&(out / c(probability, 0.0)), s.norm_tol().max(DEFAULT_STATE_TOL))?;
    Ok((state, probability))
}

/// `R' = L_A R L_B^T |det A| |det B|`, left unnormalized.
pub fn transport_correlation(r: &CorrelationMatrix, f: &LocalFilter) -> Result<CorrelationMatrix> {
    let la = lorentz_of_filter(f.a())?;
    let lb = lorentz_of_filter(f.b())?;
    let scale = det2(f.a()).norm() * det2(f.b()).norm();
    Ok(CorrelationMatrix::raw(la.l * r.r * lb.l.transpose() * scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalFormCase {
    /// Finite filters reach a Bell-diagonal state.
    BellDiagonal,
    /// `b = c = a/2`: rank three or two, only quasi-distillable.
    RankDeficientI,
    /// `d = 0 = c`, `b = a`: `I/2 (x) |0><0|`.
    ProductIi,
    /// `d = 0 = b`, `c = a`: `|0><0| (x) I/2`.
    ProductIii,
    /// `d = 0`, `a = b = c`: `|00><00|`.
    ProductIv,
}

impl NormalFormCase {
    pub fn label(&self) -> &'static str {
        match self {
            NormalFormCase::BellDiagonal => "bell_diagonal",
            NormalFormCase::RankDeficientI => "rank_deficient_i",
            NormalFormCase::ProductIi => "product_ii",
            NormalFormCase::ProductIii => "product_iii",
            NormalFormCase::ProductIv => "product_iv",
        }
    }
}

/// Parameters of the non-diagonal normal form
/// `R = [[a,0,0,b],[0,d,0,0],[0,0,d,0],[c,0,0,b+c-a]]`.
///
/// For the Bell-diagonal case `b = c = d = 0` and `diagonal` carries the
/// diagonal of the reached correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalFormParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub case_tag: NormalFormCase,
    pub diagonal: [f64; 4],
}

impl NormalFormParams {
    /// Case-(i) parameters normalized to `a = 1`.
    pub fn rank_deficient(d: f64) -> Self {
        Self {
            a: 1.0,
            b: 0.5,
            c: 0.5,
            d,
            case_tag: NormalFormCase::RankDeficientI,
            diagonal: [1.0, d, d, 0.0],
        }
    }

    /// `1 + d^2 / ((a - b)(a - c))`: the filtered Horodecki value in the limit.
    pub fn limit_horodecki(&self) -> f64 {
        1.0 + self.d * self.d / ((self.a - self.b) * (self.a - self.c))
    }
}

/// Builds the normalized state
/// `(1/2a) [[b+c,0,0,0],[0,a-b,d,0],[0,d,a-c,0],[0,0,0,0]]`.
pub fn normal_form_state(a: f64, b: f64, c_: f64, d: f64) -> Result<TwoQubitState> {
    if !(a > 0.0) {
        return Err(Error::InvalidConfig(format!("normal form needs a > 0, got {a}")));
    }
    if (a - b) * (a - c_) < d * d || a < b || a < c_ || b + c_ < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "(a,b,c,d) = ({a},{b},{c_},{d}) is not positive: need a >= b, a >= c, b + c >= 0, (a-b)(a-c) >= d^2"
        )));
    }
    let h = 0.5 / a;
    let mut m = Mat4::zeros();
    m[(0, 0)] = c((b + c_) * h, 0.0);
    m[(1, 1)] = c((a - b) * h, 0.0);
    m[(2, 2)] = c((a - c_) * h, 0.0);
    m[(1, 2)] = c(d * h, 0.0);
    m[(2, 1)] = c(d * h, 0.0);
    TwoQubitState::new(&m)
}

/// Result of [`normal_form`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub state: TwoQubitState,
    /// Accumulated filter, contracted to unit operator norm on each side.
    pub filter: LocalFilter,
    pub params: NormalFormParams,
    pub iterations: usize,
    pub success_probability: f64,
}

/// Largest operator-norm distance of a marginal from I/2. Unlike an
/// entrywise measure it does not change under the final local rotations.
fn marginal_deviation(rho: &Mat4) -> f64 {
    let dist = |m: Mat2| {
        let d = m - Mat2::identity() * c(0.5, 0.0);
        let mean = 0.5 * (d[(0, 0)].re + d[(1, 1)].re);
        let half_gap = 0.5 * (d[(0, 0)].re - d[(1, 1)].re);
        mean.abs() + half_gap.hypot(d[(0, 1)].norm())
    };
    dist(reduce(rho, Side::A)).max(dist(reduce(rho, Side::B)))
}

fn conjugate(rho: &Mat4, k: &Mat4) -> Mat4 {
    let out = k * rho * k.adjoint();
    let tr = out.trace().re;
    out / c(tr, 0.0)
}

/// Reduces `s` by local filters to a Bell-diagonal state or to one of the
/// non-diagonal forms.
///
/// The sweep alternately whitens each marginal with `(2 rho_X)^{-1/2}`. It
/// stops when both marginals are within `eps` of I/2. If a marginal is
/// singular the state is a product and one of the product cases applies. A
/// rank-deficient state whose sweep stalls is reduced exactly through the
/// product vector in its kernel, which gives the `b = c = a/2` form.
pub fn normal_form(s: &TwoQubitState, eps: f64, max_iter: usize) -> Result<NormalForm> {
    let rho0 = *s.rho();
    let (ea, _) = hermitian_eigen2(&reduce(&rho0, Side::A));
    let (eb, _) = hermitian_eigen2(&reduce(&rho0, Side::B));
    if ea[0] < eps || eb[0] < eps {
        return product_form(s, eps);
    }

    let rank_deficient = {
        let ev = s.eigenvalues();
        ev[0] <= KERNEL_TOL * ev[3]
    };
    let mut rho = rho0;
    let mut fa = Mat2::identity();
    let mut fb = Mat2::identity();
    let mut history = Vec::with_capacity(max_iter.min(1 << 16));
    let mut dev = marginal_deviation(&rho);

    for it in 1..=max_iter {
        dev = marginal_deviation(&rho);
        history.push(dev);
        if dev <= eps {
            return finish_bell_diagonal(s, &fa, &fb, it);
        }
        if rank_deficient && it >= STALL_CHECK_FROM && it.is_power_of_two() && dev > 0.25 * history[it / 2 - 1] {
            if let Ok(nf) = rank_deficient_form(s, it) {
                return Ok(nf);
            }
        }
        let singular = |iterations| Error::ConvergenceFailure {
            iterations,
            deviation: dev,
            detail: "marginal became singular during whitening".into(),
        };
        let x = inv_sqrt_psd2(&(reduce(&rho, Side::A) * c(2.0, 0.0)), eps).ok_or_else(|| singular(it))?;
        rho = conjugate(&rho, &kron(&x, &Mat2::identity()));
        fa = x * fa;
        let y = inv_sqrt_psd2(&(reduce(&rho, Side::B) * c(2.0, 0.0)), eps).ok_or_else(|| singular(it))?;
        rho = conjugate(&rho, &kron(&Mat2::identity(), &y));
        fb = y * fb;
        fa /= c(singular_values2(&fa)[0], 0.0);
        fb /= c(singular_values2(&fb)[0], 0.0);
    }
    if rank_deficient {
        if let Ok(nf) = rank_deficient_form(s, max_iter) {
            return Ok(nf);
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
        deviation: dev,
        detail: "marginals did not reach I/2".into(),
    })
}

/// Proper rotations `(U, V)` and signed singular values with `T = U S V^T`.
fn proper_svd(t: &Real3) -> Result<(Real3, [f64; 3], Real3)> {
    let svd = t.try_svd(true, true, f64::EPSILON, 10_000).ok_or_else(|| Error::ConvergenceFailure {
        iterations: 0,
        deviation: f64::NAN,
        detail: "SVD of the spin block did not converge".into(),
    })?;
    let mut u = svd.u.expect("u requested");
    let mut vt = svd.v_t.expect("v_t requested");
    let mut s = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        s[2] = -s[2];
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
        s[2] = -s[2];
    }
    Ok((u, s, vt.transpose()))
}

fn finish_bell_diagonal(s: &TwoQubitState, fa: &Mat2, fb: &Mat2, iterations: usize) -> Result<NormalForm> {
    let whitening = LocalFilter::new(*fa, *fb)?;
    let (whitened, _) = apply_filter(s, &whitening)?;
    let r = correlation_matrix(&whitened)?;
    let t = r.spin_block();
    let off_diagonal = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| t[(i, j)].abs())
        .fold(0.0, f64::max);
    let filter = if off_diagonal <= FIT_RESIDUAL * 1e-3 {
        whitening
    } else {
        let (u, _, v) = proper_svd(&t)?;
        let wa = su2_from_rotation(&u.transpose());
        let wb = su2_from_rotation(&v.transpose());
        whitening.then(&LocalFilter::new(wa, wb)?)?
    }
    .contracted();
    let (state, success_probability) = apply_filter(s, &filter)?;
    let rr = correlation_matrix(&state)?.r;
    let residual = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| rr[(i, j)].abs())
        .fold(0.0, f64::max);
    if residual > FIT_RESIDUAL {
        return Err(Error::ConvergenceFailure {
            iterations,
            deviation: residual,
            detail: "whitened correlation matrix is not diagonal".into(),
        });
    }
    let params = NormalFormParams {
        a: rr[(0, 0)],
        b: 0.0,
        c: 0.0,
        d: 0.0,
        case_tag: NormalFormCase::BellDiagonal,
        diagonal: [rr[(0, 0)], rr[(1, 1)], rr[(2, 2)], rr[(3, 3)]],
    };
    Ok(NormalForm { state, filter, params, iterations, success_probability })
}

/// Unitary sending the unit vector `f` to |0>.
fn rotate_to_zero(f: [Complex64; 2]) -> Mat2 {
    Mat2::new(f[0].conj(), f[1].conj(), -f[1], f[0])
}

/// Unitary sending the unit vector `f` to |1>.
fn rotate_to_one(f: [Complex64; 2]) -> Mat2 {
    Mat2::new(-f[1], f[0], f[0].conj(), f[1].conj())
}

fn top_eigvec2(m: &Mat2) -> [Complex64; 2] {
    let (_, vecs) = hermitian_eigen2(m);
    [vecs[(0, 1)], vecs[(1, 1)]]
}

fn product_form(s: &TwoQubitState, eps: f64) -> Result<NormalForm> {
    let ma = reduce(s.rho(), Side::A);
    let mb = reduce(s.rho(), Side::B);
    let (ea, _) = hermitian_eigen2(&ma);
    let (eb, _) = hermitian_eigen2(&mb);
    let side_filter = |m: &Mat2, singular: bool| -> Result<Mat2> {
        if singular {
            Ok(rotate_to_zero(top_eigvec2(m)))
        } else {
            inv_sqrt_psd2(&(m * c(2.0, 0.0)), 0.0).ok_or(Error::ConvergenceFailure {
                iterations: 0,
                deviation: f64::NAN,
                detail: "marginal is not invertible".into(),
            })
        }
    };
    let filter = LocalFilter::new(side_filter(&ma, ea[0] < eps)?, side_filter(&mb, eb[0] < eps)?)?.contracted();
    let (state, success_probability) = apply_filter(s, &filter)?;
    let params = fit_nondiagonal(&correlation_matrix(&state)?.r, 0)?;
    Ok(NormalForm { state, filter, params, iterations: 0, success_probability })
}

/// Reads `(a, b, c, d)` off a correlation matrix already in the non-diagonal
/// pattern and classifies it.
fn fit_nondiagonal(r: &Real4, iterations: usize) -> Result<NormalFormParams> {
    let (a, b, c_) = (r[(0, 0)], r[(0, 3)], r[(3, 0)]);
    let d = 0.5 * (r[(1, 1)] + r[(2, 2)]);
    let mut residual = (r[(1, 1)] - r[(2, 2)]).abs().max((r[(3, 3)] - (b + c_ - a)).abs());
    for i in 0..4 {
        for j in 0..4 {
            let in_pattern = i == j || (i, j) == (0, 3) || (i, j) == (3, 0);
            if !in_pattern {
                residual = residual.max(r[(i, j)].abs());
            }
        }
    }
    let close = |x: f64, y: f64| (x - y).abs() <= FIT_RESIDUAL;
    let case_tag = if close(b, a / 2.0) && close(c_, a / 2.0) {
        NormalFormCase::RankDeficientI
    } else if close(d, 0.0) && close(b, a) && close(c_, a) {
        NormalFormCase::ProductIv
    } else if close(d, 0.0) && close(c_, 0.0) && close(b, a) {
        NormalFormCase::ProductIi
    } else if close(d, 0.0) && close(b, 0.0) && close(c_, a) {
        NormalFormCase::ProductIii
    } else {
        residual = f64::INFINITY;
        NormalFormCase::RankDeficientI
    };
    if residual > FIT_RESIDUAL {
        return Err(Error::ConvergenceFailure {
            iterations,
            deviation: residual,
            detail: format!("correlation matrix does not fit the normal-form pattern: {r:?}"),
        });
    }
    Ok(NormalFormParams { a, b, c: c_, d, case_tag, diagonal: [a, r[(1, 1)], r[(2, 2)], r[(3, 3)]] })
}

/// Splits a product vector given as its 2x2 coefficient matrix `v[i][j]`.
fn split_product(v: &Mat2) -> ([Complex64; 2], [Complex64; 2]) {
    // rank one: v = f g^T; take the dominant singular pair
    let (_, vecs) = hermitian_eigen2(&(v.adjoint() * v));
    let g_conj = [vecs[(0, 1)], vecs[(1, 1)]];
    let f = [
        v[(0, 0)] * g_conj[0] + v[(0, 1)] * g_conj[1],
        v[(1, 0)] * g_conj[0] + v[(1, 1)] * g_conj[1],
    ];
    let nf = (f[0].norm_sqr() + f[1].norm_sqr()).sqrt();
    let f = [f[0] / nf, f[1] / nf];
    let g = [g_conj[0].conj(), g_conj[1].conj()];
    (f, g)
}

/// Product vectors in the kernel of rho, as normalized factor pairs.
fn kernel_product_vectors(rho: &Mat4) -> Vec<([Complex64; 2], [Complex64; 2])> {
    let h = (rho + rho.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let kernel: Vec<Mat2> = (0..4)
        .filter(|&k| eig.eigenvalues[k] <= KERNEL_TOL * top)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            Mat2::new(v[0], v[1], v[2], v[3])
        })
        .collect();
    let mut out = Vec::new();
    match kernel.as_slice() {
        [k] => {
            if det2(k).norm() <= 1e-7 {
                out.push(split_product(k));
            }
        }
        [k1, k2] => {
            // det(alpha k1 + k2) = q2 alpha^2 + q1 alpha + q0
            let q2 = det2(k1);
            let q0 = det2(k2);
            let q1 = k1[(0, 0)] * k2[(1, 1)] + k2[(0, 0)] * k1[(1, 1)] - k1[(0, 1)] * k2[(1, 0)] - k2[(0, 1)] * k1[(1, 0)];
            let mut candidates = Vec::new();
            if q2.norm() <= 1e-12 {
                candidates.push(*k1);
                if q1.norm() > 1e-12 {
                    candidates.push(k1 * (-q0 / q1) + k2);
                }
            } else {
                let disc = (q1 * q1 - q2 * q0 * 4.0).sqrt();
                for root in [(-q1 + disc) / (q2 * 2.0), (-q1 - disc) / (q2 * 2.0)] {
                    candidates.push(k1 * root + k2);
                }
            }
            for m in candidates {
                let n = m.norm();
                if n > 0.0 {
                    out.push(split_product(&(m / c(n, 0.0))));
                }
            }
        }
        _ => {}
    }
    out
}

/// Exact reduction of a rank-deficient state to the `b = c = a/2` form.
fn rank_deficient_form(s: &TwoQubitState, iterations: usize) -> Result<NormalForm> {
    let mut last_err = Error::ConvergenceFailure {
        iterations,
        deviation: f64::NAN,
        detail: "no product vector in the kernel".into(),
    };
    for (f, g) in kernel_product_vectors(s.rho()) {
        match reduce_with_kernel_vector(s, f, g, iterations) {
            Ok(nf) => return Ok(nf),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn reduce_with_kernel_vector(
    s: &TwoQubitState,
    f: [Complex64; 2],
    g: [Complex64; 2],
    iterations: usize,
) -> Result<NormalForm> {
    let fail = |detail: &str| Error::ConvergenceFailure { iterations, deviation: f64::NAN, detail: detail.into() };
    // move the kernel product vector to |11>
    let ua = rotate_to_one(f);
    let ub = rotate_to_one(g);
    let rho1 = conjugate(s.rho(), &kron(&ua, &ub));
    let (x, w1, w2) = (rho1[(0, 0)].re, rho1[(0, 1)], rho1[(0, 2)]);
    let (y, z, e) = (rho1[(1, 1)].re, rho1[(2, 2)].re, rho1[(1, 2)]);
    if !(y > KERNEL_TOL && z > KERNEL_TOL) {
        return Err(fail("kernel vector leaves a product marginal"));
    }
    // shear |01>, |10> into |00> to clear its coherences: solve
    // [[y, e*], [e, z]] (v, u) = -(w1, w2)
    let m = Mat2::new(c(y, 0.0), e.conj(), e, c(z, 0.0));
    let rhs = nalgebra::Vector2::new(-w1, -w2);
    let sol = match m.try_inverse() {
        Some(inv) if det2(&m).norm() > 1e-14 * (y * z) => inv * rhs,
        _ => m.pseudo_inverse(1e-12).map_err(|_| fail("degenerate shear"))? * rhs,
    };
    let (v, u) = (sol[0], sol[1]);
    let shear = LocalFilter::new(Mat2::new(ONE, u, ZERO, ONE), Mat2::new(ONE, v, ZERO, ONE))?;
    let rho2 = conjugate(&rho1, &shear.kron());
    let x2 = rho2[(0, 0)].re;
    let (y2, z2, e2) = (rho2[(1, 1)].re, rho2[(2, 2)].re, rho2[(1, 2)]);
    if !(x2 > KERNEL_TOL * x.abs().max(1.0)) {
        return Err(fail("no weight left on |00>; Bell-diagonal limit"));
    }
    let phase = Mat2::new(ONE, ZERO, ZERO, Complex64::from_polar(1.0, e2.arg()));
    let alpha = (2.0 * z2 / x2).sqrt();
    let beta = (2.0 * y2 / x2).sqrt();
    let scale_a = Mat2::new(c(alpha, 0.0), ZERO, ZERO, ONE);
    let scale_b = Mat2::new(c(beta, 0.0), ZERO, ZERO, ONE);
    let total = LocalFilter::new(scale_a * phase * Mat2::new(ONE, u, ZERO, ONE) * ua, scale_b * Mat2::new(ONE, v, ZERO, ONE) * ub)?
        .contracted();
    let (state, success_probability) = apply_filter(s, &total)?;
    let params = fit_nondiagonal(&correlation_matrix(&state)?.r, iterations)?;
    if params.case_tag != NormalFormCase::RankDeficientI {
        return Err(fail("reduced state is not of the b = c = a/2 form"));
    }
    Ok(NormalForm { state, filter: total, params, iterations, success_probability })
}

/// The filter pair `A = diag(sqrt((a-c)/(a-b))/n, 1)`, `B = diag(1/n, 1)`.
///
/// Applied to the normal-form state, the output approaches the
/// Bell-diagonal state of [`quasi_distilled_limit`] as `n` grows.
pub fn quasi_distill_family(p: &NormalFormParams, n: f64) -> Result<LocalFilter> {
    if p.case_tag != NormalFormCase::RankDeficientI || p.d == 0.0 {
        return Err(Error::WrongCase(format!("{} with d = {} has no quasi-distillation family", p.case_tag.label(), p.d)));
    }
    if !(p.a - p.b > 0.0 && p.a - p.c > 0.0) {
        return Err(Error::WrongCase(format!("need a > b and a > c, got ({}, {}, {})", p.a, p.b, p.c)));
    }
    if !(n >= 1.0) {
        return Err(Error::InvalidConfig(format!("n must be at least 1, got {n}")));
    }
    let ratio = ((p.a - p.c) / (p.a - p.b)).sqrt();
    LocalFilter::new(
        Mat2::new(c(ratio / n, 0.0), ZERO, ZERO, ONE),
        Mat2::new(c(1.0 / n, 0.0), ZERO, ZERO, ONE),
    )
}

/// `(I + D s1 s1 + D s2 s2 - s3 s3) / 4` with `D = d / sqrt((a-b)(a-c))`.
pub fn quasi_distilled_limit(p: &NormalFormParams) -> Result<TwoQubitState> {
    let dd = p.d / ((p.a - p.b) * (p.a - p.c)).sqrt();
    let mut r = Real4::zeros();
    r[(0, 0)] = 1.0;
    r[(1, 1)] = dd;
    r[(2, 2)] = dd;
    r[(3, 3)] = -1.0;
    TwoQubitState::new(&CorrelationMatrix::raw(r).to_density())
}

/// One row of the probability-versus-violation trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub n: f64,
    pub success_probability: f64,
    pub chsh: f64,
}

/// Applies `quasi_distill_family(n)` after the normal-form filter to the
/// original state for every `n` in the grid.
pub fn tradeoff_table(s: &TwoQubitState, nf: &NormalForm, n_grid: &[f64]) -> Result<Vec<TradeoffRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let family = quasi_distill_family(&nf.params, n)?;
            let total = nf.filter.then(&family)?;
            let (out, success_probability) = apply_filter(s, &total)?;
            let m = horodecki_value(&correlation_matrix(&out)?);
            Ok(TradeoffRow { n, success_probability, chsh: 2.0 * m.sqrt() })
        })
        .collect()
}
