//! Thin helpers over `nalgebra` for complex dense linear algebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// `exp(i·phase)`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Circularly symmetric complex Gaussian sample with variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    CVector::from_iterator(len, (0..len).map(|_| complex_gaussian(rng, variance)))
}

/// Largest and smallest singular values of `m`, as `(max, min)`.
pub fn singular_extremes(m: &CMatrix) -> (f64, f64) {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}

/// Numerical rank with relative threshold `rtol` against the largest singular value.
pub fn rank(m: &CMatrix, rtol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

/// Right pseudo-inverse `Mᴴ (M Mᴴ)⁻¹` of a wide, full-row-rank matrix.
///
/// Returns the inverse together with the singular-value ratio `σ_min/σ_max`;
/// `None` when that ratio falls below `rtol`.
pub fn right_pseudo_inverse(m: &CMatrix, rtol: f64) -> (Option<CMatrix>, f64) {
    let (max, min) = singular_extremes(m);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio.is_nan() || ratio <= rtol {
        return (None, ratio);
    }
    let gram = m * m.adjoint();
    match gram.try_inverse() {
        Some(inv) => (Some(m.adjoint() * inv), ratio),
        None => (None, ratio),
    }
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Leading singular triple `(u, σ, v)` of `m`, so that `σ·u·vᴴ` is the best rank-1 approximation.
pub fn leading_singular_triple(m: &CMatrix) -> (CVector, f64, CVector) {
    let svd = m.clone().svd(true, true);
    let (idx, sigma) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let u = svd.u.expect("requested u").column(idx).into_owned();
    let v = svd.v_t.expect("requested v_t").row(idx).adjoint();
    (u, sigma, v)
}
