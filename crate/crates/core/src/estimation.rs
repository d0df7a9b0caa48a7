//! Pilot-based channel observation and sparse recovery by orthogonal matching pursuit.

use rand::Rng;

use crate::dictionary::{Dictionary, DictionaryKind};
use crate::error::{Error, Result};
use crate::linalg::{cis, complex_gaussian_vector, CMatrix, CVector, C64};

/// Pilot combining matrix `Φ` (`P × N`, unit-norm rows).
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    phi: CMatrix,
}

impl MeasurementMatrix {
    /// Random unit-modulus combiners `exp(iθ)/√N`, `θ` uniform.
    pub fn random<R: Rng + ?Sized>(antennas: usize, pilot_count: usize, rng: &mut R) -> Result<Self> {
        if pilot_count == 0 {
            return Err(Error::InvalidParameter { name: "pilot_count", reason: "must be at least 1".into() });
        }
        if pilot_count > antennas {
            return Err(Error::PilotBudgetExceeded { pilots: pilot_count, antennas });
        }
        let scale = 1.0 / (antennas as f64).sqrt();
        let mut phi = CMatrix::zeros(pilot_count, antennas);
        for p in 0..pilot_count {
            for n in 0..antennas {
                phi[(p, n)] = cis(rng.gen_range(0.0..2.0 * std::f64::consts::PI)) * scale;
            }
        }
        Ok(Self { phi })
    }

    /// Full observation `Φ = I`.
    pub fn identity(antennas: usize) -> Self {
        Self { phi: CMatrix::identity(antennas, antennas) }
    }

    pub fn phi(&self) -> &CMatrix {
        &self.phi
    }

    pub fn pilot_count(&self) -> usize {
        self.phi.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.phi.ncols()
    }

    /// `y = Φh + w`, `w ~ CN(0, σ²I)`.
    pub fn observe<R: Rng + ?Sized>(&self, h: &CVector, noise_sigma: f64, rng: &mut R) -> Result<CVector> {
        if h.len() != self.antennas() {
            return Err(Error::DimensionMismatch { expected: self.antennas(), actual: h.len() });
        }
        let noise = complex_gaussian_vector(rng, self.pilot_count(), 1.0);
        Ok(self.observe_with_noise(h, noise_sigma, &noise))
    }

    /// Like [`observe`](Self::observe) with a caller-supplied unit-variance noise draw.
    pub fn observe_with_noise(&self, h: &CVector, noise_sigma: f64, unit_noise: &CVector) -> CVector {
        &self.phi * h + unit_noise * C64::new(noise_sigma, 0.0)
    }

    /// Noise standard deviation giving `‖Φh‖²/(P·σ²) = snr`.
    pub fn noise_sigma_for_snr(&self, h: &CVector, snr_linear: f64) -> f64 {
        let signal = (&self.phi * h).norm_squared();
        (signal / (self.pilot_count() as f64 * snr_linear)).sqrt()
    }
}

/// OMP stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_atoms: usize,
    /// Stop once `‖r‖/‖y‖ ≤ residual_tol`.
    pub residual_tol: f64,
}

impl StoppingRule {
    pub fn exact(max_atoms: usize) -> Self {
        Self { max_atoms, residual_tol: 0.0 }
    }

    /// Stops when the residual energy per observation reaches `1.1·σ²`.
    pub fn noise_matched(max_atoms: usize, noise_sigma: f64, y: &CVector) -> Self {
        let ynorm = y.norm();
        let floor = (1.1 * noise_sigma * noise_sigma * y.len() as f64).sqrt();
        let residual_tol = if ynorm > 0.0 { floor / ynorm } else { 0.0 };
        Self { max_atoms, residual_tol }
    }
}

/// Sparse code: a support into dictionary columns with refit coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEstimate {
    pub support: Vec<usize>,
    pub coefficients: Vec<C64>,
    pub kind: Option<DictionaryKind>,
    /// Residual norm after each selection, starting with `‖y‖`.
    pub residual_norms: Vec<f64>,
}

impl SparseEstimate {
    pub fn empty(kind: Option<DictionaryKind>) -> Self {
        Self { support: Vec::new(), coefficients: Vec::new(), kind, residual_norms: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

const RANK_TOL: f64 = 1e-10;

/// Orthogonal matching pursuit.
///
/// Columns of `sensing` are normalized for the correlation step only; the
/// returned coefficients apply to the columns as given. The least-squares
/// refit is an incremental QR of the selected columns; a candidate whose
/// component orthogonal to the current support falls below `1e-10` of its
/// norm is rejected and the next-best correlation is tried (ties resolve to
/// the lowest index).
pub fn omp(y: &CVector, sensing: &CMatrix, stopping: &StoppingRule) -> Result<SparseEstimate> {
    let p = sensing.nrows();
    let m = sensing.ncols();
    if y.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: y.len() });
    }
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Ok(SparseEstimate { residual_norms: vec![0.0], ..SparseEstimate::empty(None) });
    }
    let budget = stopping.max_atoms.min(p).min(m);
    let inv_norms: Vec<f64> = sensing
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect();

    let mut usable = vec![true; m];
    let mut support: Vec<usize> = Vec::with_capacity(budget);
    let mut basis: Vec<CVector> = Vec::with_capacity(budget);
    // r_cols[j] holds column j of the triangular factor R (length j + 1)
    let mut r_cols: Vec<Vec<C64>> = Vec::with_capacity(budget);
    let mut qty: Vec<C64> = Vec::with_capacity(budget);
    let mut residual = y.clone();
    let mut residual_norms = vec![ynorm];

    while support.len() < budget && residual_norms.last().copied().unwrap_or(0.0) > stopping.residual_tol * ynorm {
        let corr = sensing.ad_mul(&residual);
        let mut order: Vec<(usize, f64)> =
            (0..m).filter(|&j| usable[j]).map(|j| (j, corr[j].norm() * inv_norms[j])).collect();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

        let threshold = 1e-14 * ynorm;
        let mut chosen = None;
        for &(j, c) in &order {
            if c <= threshold {
                break;
            }
            let col = sensing.column(j).into_owned();
            let col_norm = col.norm();
            let mut w = col.clone();
            let mut coeffs = vec![C64::new(0.0, 0.0); basis.len()];
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = q.dotc(&w);
                    coeffs[i] += c;
                    w.axpy(-c, q, C64::new(1.0, 0.0));
                }
            }
            let wn = w.norm();
            if wn <= RANK_TOL * col_norm {
                usable[j] = false;
                continue;
            }
            coeffs.push(C64::new(wn, 0.0));
            chosen = Some((j, w.unscale(wn), coeffs));
            break;
        }
        let Some((j, q, r_col)) = chosen else {
            if support.is_empty() {
                return Err(Error::NoProgress);
            }
            break;
        };
        usable[j] = false;
        let z = q.dotc(y);
        residual.axpy(-z, &q, C64::new(1.0, 0.0));
        support.push(j);
        basis.push(q);
        r_cols.push(r_col);
        qty.push(z);
        residual_norms.push(residual.norm());
    }

    // back substitution R x = Qᴴy
    let s = support.len();
    let mut coefficients = vec![C64::new(0.0, 0.0); s];
    for i in (0..s).rev() {
        let mut acc = qty[i];
        for (jj, coef) in coefficients.iter().enumerate().skip(i + 1) {
            acc -= r_cols[jj][i] * coef;
        }
        coefficients[i] = acc / r_cols[i][i];
    }
    Ok(SparseEstimate { support, coefficients, kind: None, residual_norms })
}

/// `Φ·A` for one (measurement, dictionary) pair.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    matrix: CMatrix,
    kind: DictionaryKind,
}

impl SensingOperator {
    pub fn new(measurement: &MeasurementMatrix, dict: &Dictionary) -> Result<Self> {
        if measurement.antennas() != dict.num_antennas() {
            return Err(Error::DimensionMismatch { expected: dict.num_antennas(), actual: measurement.antennas() });
        }
        Ok(Self { matrix: measurement.phi() * dict.atoms(), kind: dict.kind() })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn estimate(&self, y: &CVector, stopping: &StoppingRule) -> Result<SparseEstimate> {
        let mut est = omp(y, &self.matrix, stopping)?;
        est.kind = Some(self.kind);
        Ok(est)
    }
}

/// `ĥ = Σ cᵢ·A[:, sᵢ]`.
pub fn reconstruct(dict: &Dictionary, est: &SparseEstimate) -> Result<CVector> {
    let mut h = CVector::zeros(dict.num_antennas());
    for (&j, &c) in est.support.iter().zip(&est.coefficients) {
        if j >= dict.num_atoms() {
            return Err(Error::IndexOutOfRange { index: j, len: dict.num_atoms() });
        }
        h.axpy(c, &dict.atoms().column(j), C64::new(1.0, 0.0));
    }
    Ok(h)
}

/// `‖ĥ − h‖²/‖h‖²`.
pub fn nmse(h_hat: &CVector, h: &CVector) -> Result<f64> {
    if h_hat.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), actual: h_hat.len() });
    }
    let denom = h.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((h_hat - h).norm_squared() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{direction_angles, planar_steering, sample_front_direction};
    use crate::dictionary::{dft_codebook, wavenumber_dictionary, wavenumber_dictionary_oversampled};
    use crate::geometry::ArrayGeometry;
    use crate::linalg::{complex_gaussian, rank};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_unitary(n: usize, r: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| complex_gaussian(r, 1.0));
        g.qr().q()
    }

    #[test]
    fn identity_measurement_observes_channel() {
        let mut r = rng(1);
        let m = MeasurementMatrix::identity(16);
        let h = complex_gaussian_vector(&mut r, 16, 1.0);
        assert_eq!(m.observe(&h, 0.0, &mut r).unwrap(), h);
    }

    #[test]
    fn random_rows_unit_norm_and_full_rank() {
        let mut r = rng(2);
        let m = MeasurementMatrix::random(64, 16, &mut r).unwrap();
        for row in m.phi().row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rank(m.phi(), 1e-10), 16);
        assert!(matches!(MeasurementMatrix::random(8, 9, &mut r), Err(Error::PilotBudgetExceeded { .. })));
        assert!(MeasurementMatrix::random(8, 0, &mut r).is_err());
    }

    #[test]
    fn measurement_is_seed_deterministic() {
        let a = MeasurementMatrix::random(32, 8, &mut rng(3)).unwrap();
        let b = MeasurementMatrix::random(32, 8, &mut rng(3)).unwrap();
        assert_eq!(a.phi(), b.phi());
        let h = complex_gaussian_vector(&mut rng(4), 32, 1.0);
        assert_eq!(a.observe(&h, 0.3, &mut rng(5)).unwrap(), a.observe(&h, 0.3, &mut rng(5)).unwrap());
    }

    #[test]
    fn noiseless_observation_is_exact_and_dimensions_checked() {
        let mut r = rng(6);
        let m = MeasurementMatrix::random(32, 8, &mut r).unwrap();
        let h = complex_gaussian_vector(&mut r, 32, 1.0);
        assert_eq!(m.observe(&h, 0.0, &mut r).unwrap(), m.phi() * &h);
        let bad = complex_gaussian_vector(&mut r, 31, 1.0);
        assert!(matches!(m.observe(&bad, 0.0, &mut r), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pure_noise_variance() {
        let mut r = rng(7);
        let m = MeasurementMatrix::identity(10_000);
        let y = m.observe(&CVector::zeros(10_000), 0.5, &mut r).unwrap();
        let var = y.norm_squared() / 10_000.0;
        assert!((var - 0.25).abs() < 0.25 * 0.05, "{var}");
    }

    #[test]
    fn one_sparse_exact() {
        let mut r = rng(8);
        let a = random_unitary(16, &mut r);
        let y = a.column(3) * C64::new(5.0, 0.0);
        let est = omp(&y, &a, &StoppingRule::exact(4)).unwrap();
        assert_eq!(est.support, vec![3]);
        assert!((est.coefficients[0] - C64::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_observation_gives_empty_estimate() {
        let a = CMatrix::identity(8, 8);
        let est = omp(&CVector::zeros(8), &a, &StoppingRule::exact(3)).unwrap();
        assert!(est.is_empty());
    }

    #[test]
    fn orthogonal_observation_makes_no_progress() {
        let mut a = CMatrix::zeros(4, 2);
        a[(0, 0)] = C64::new(1.0, 0.0);
        a[(1, 1)] = C64::new(1.0, 0.0);
        let mut y = CVector::zeros(4);
        y[3] = C64::new(1.0, 0.0);
        assert!(matches!(omp(&y, &a, &StoppingRule::exact(2)), Err(Error::NoProgress)));
    }

    #[test]
    fn three_sparse_unitary_exact() {
        let mut r = rng(9);
        let a = random_unitary(32, &mut r);
        let mut idx: Vec<usize> = (0..32).collect();
        idx.shuffle(&mut r);
        let mut x = CVector::zeros(32);
        for &j in &idx[..3] {
            x[j] = complex_gaussian(&mut r, 1.0);
        }
        let y = &a * &x;
        let est = omp(&y, &a, &StoppingRule::exact(3)).unwrap();
        let mut sup = est.support.clone();
        sup.sort();
        let mut truth = idx[..3].to_vec();
        truth.sort();
        assert_eq!(sup, truth);
        for (&j, c) in est.support.iter().zip(&est.coefficients) {
            assert!((c - x[j]).norm() < 1e-10);
        }
    }

    #[test]
    fn unnormalized_columns_return_coefficients_for_given_columns() {
        let mut r = rng(10);
        let mut a = random_unitary(8, &mut r);
        a.column_mut(2).scale_mut(4.0);
        let y = a.column(2) * C64::new(0.5, -1.0);
        let est = omp(&y, &a, &StoppingRule::exact(2)).unwrap();
        assert_eq!(est.support, vec![2]);
        assert!((est.coefficients[0] - C64::new(0.5, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn residual_non_increasing_and_support_unique() {
        let mut r = rng(11);
        for _ in 0..20 {
            let a = CMatrix::from_fn(24, 80, |_, _| complex_gaussian(&mut r, 1.0));
            let y = complex_gaussian_vector(&mut r, 24, 1.0);
            let est = omp(&y, &a, &StoppingRule::exact(24)).unwrap();
            assert!(est.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let mut s = est.support.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), est.support.len());
            assert!(est.residual_norms.last().unwrap() / y.norm() < 1e-8);
        }
    }

    #[test]
    fn rank_deficient_candidates_are_skipped() {
        let mut r = rng(12);
        let base = random_unitary(6, &mut r);
        // column 1 duplicates column 0 with a larger scale
        let a = CMatrix::from_columns(&[
            base.column(0).into_owned(),
            base.column(0) * C64::new(0.0, 3.0),
            base.column(1).into_owned(),
        ]);
        let y = base.column(0) * C64::new(2.0, 0.0) + base.column(1);
        let est = omp(&y, &a, &StoppingRule::exact(3)).unwrap();
        assert_eq!(est.support, vec![0, 2]);
        assert!(*est.residual_norms.last().unwrap() < 1e-12);
    }

    #[test]
    fn residual_tolerance_stops_early() {
        let a = CMatrix::identity(4, 4);
        let y =
            CVector::from_vec(vec![C64::new(10.0, 0.0), C64::new(0.01, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let est = omp(&y, &a, &StoppingRule { max_atoms: 4, residual_tol: 0.01 }).unwrap();
        assert_eq!(est.support, vec![0]);
    }

    #[test]
    fn reconstruct_basics() {
        let g = ArrayGeometry::upa(4, 4, 0.005, 0.01).unwrap();
        let d = dft_codebook(&g, 1).unwrap();
        assert_eq!(reconstruct(&d, &SparseEstimate::empty(None)).unwrap(), CVector::zeros(16));
        let est = SparseEstimate {
            support: vec![5],
            coefficients: vec![C64::new(0.0, 2.0)],
            kind: Some(DictionaryKind::Dft),
            residual_norms: vec![],
        };
        assert_eq!(reconstruct(&d, &est).unwrap(), d.atom(5) * C64::new(0.0, 2.0));
        let bad = SparseEstimate { support: vec![16], ..est };
        assert!(matches!(reconstruct(&d, &bad), Err(Error::IndexOutOfRange { index: 16, len: 16 })));
    }

    #[test]
    fn end_to_end_noiseless_round_trip() {
        let g = ArrayGeometry::upa(4, 4, 0.005, 0.01).unwrap();
        let d = dft_codebook(&g, 1).unwrap();
        let mut r = rng(13);
        let m = MeasurementMatrix::random(16, 16, &mut r).unwrap();
        let sensing = SensingOperator::new(&m, &d).unwrap();
        let mut x = CVector::zeros(16);
        for j in [1usize, 4, 9, 14] {
            x[j] = complex_gaussian(&mut r, 1.0);
        }
        let h = d.atoms() * &x;
        let y = m.observe(&h, 0.0, &mut r).unwrap();
        let est = sensing.estimate(&y, &StoppingRule::exact(4)).unwrap();
        assert_eq!(est.kind, Some(DictionaryKind::Dft));
        let h_hat = reconstruct(&d, &est).unwrap();
        assert!((h_hat - &h).norm() / h.norm() < 1e-8);
    }

    #[test]
    fn nmse_values() {
        let mut r = rng(14);
        let h = complex_gaussian_vector(&mut r, 8, 1.0);
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert!((nmse(&CVector::zeros(8), &h).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&(&h * C64::new(2.0, 0.0)), &h).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(nmse(&h, &CVector::zeros(8)), Err(Error::ZeroReference)));
    }

    #[test]
    fn snr_definition_round_trips() {
        let mut r = rng(15);
        let m = MeasurementMatrix::random(64, 16, &mut r).unwrap();
        let h = complex_gaussian_vector(&mut r, 64, 1.0);
        let sigma = m.noise_sigma_for_snr(&h, 10.0);
        let snr = (m.phi() * &h).norm_squared() / (16.0 * sigma * sigma);
        assert!((snr - 10.0).abs() < 1e-10);
    }

    fn worst_far_field_wavenumber_nmse(w: &Dictionary, g: &ArrayGeometry) -> f64 {
        let m = MeasurementMatrix::identity(g.num_elements());
        let sensing = SensingOperator::new(&m, w).unwrap();
        let mut r = rng(16);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let (az, el) = direction_angles(&sample_front_direction(&mut r));
            let h = planar_steering(g, az, el) * C64::new(8.0, 0.0);
            let est = sensing.estimate(&m.observe(&h, 0.0, &mut r).unwrap(), &StoppingRule::exact(16)).unwrap();
            worst = worst.max(nmse(&reconstruct(w, &est).unwrap(), &h).unwrap());
        }
        worst
    }

    #[test]
    #[ignore = "the orthogonal disk-limited lattice misses off-grid plane waves near grazing"]
    fn far_field_single_path_full_observation_in_wavenumber_domain() {
        let g = ArrayGeometry::upa(8, 8, 0.005, 0.01).unwrap();
        let w = wavenumber_dictionary(&g, false).unwrap();
        let worst = worst_far_field_wavenumber_nmse(&w, &g);
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn far_field_single_path_full_observation_oversampled_lattice() {
        let g = ArrayGeometry::upa(8, 8, 0.005, 0.01).unwrap();
        let w = wavenumber_dictionary_oversampled(&g, 2, false).unwrap();
        let worst = worst_far_field_wavenumber_nmse(&w, &g);
        assert!(worst < 1e-2, "{worst}");
    }
}
