//! Codeword feedback, Type-I/Type-II and hybrid precoders, fully digital
//! baselines and spectral efficiency.
//!
//! Channel convention: UE `k` receives `h_kᴴ·x`, so the multi-user channel
//! `H` is `K × N` with row `k` equal to `h_kᴴ`. Every precoder spends the
//! power budget equally across its `K` columns.

use rand::Rng;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::ksvd::constant_modulus_project;
use crate::linalg::{complex_gaussian, right_pseudo_inverse, CMatrix, CVector, C64};

/// Smallest accepted `σ_min/σ_max` before a channel counts as rank deficient.
pub const RANK_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackReport {
    pub ue_index: usize,
    pub codeword_indices: Vec<usize>,
    /// Received pilot values `h_kᴴ·a_m + n`, sorted by descending magnitude.
    pub amplitudes: Vec<C64>,
}

impl FeedbackReport {
    pub fn strongest_power(&self) -> f64 {
        self.amplitudes.first().map_or(0.0, |a| a.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    pub f: CMatrix,
    pub power_budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub analog: CMatrix,
    pub baseband: CMatrix,
    /// Codebook columns behind each RF chain.
    pub beams: Vec<usize>,
    pub power_budget: f64,
}

impl HybridPrecoder {
    pub fn effective(&self) -> CMatrix {
        &self.analog * &self.baseband
    }
}

/// How the hybrid precoder picks its analog beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalogSelection {
    /// Top `n_rf` codewords by reported energy summed over UEs.
    #[default]
    Global,
    /// Each UE, strongest first, claims its best unclaimed codeword; the
    /// remaining chains follow the global rule.
    PerUe,
}

/// Per-UE spectral efficiencies and their sum, in bits/s/Hz.
pub fn spectral_efficiency(h: &CMatrix, f: &CMatrix, noise_sigma: f64) -> Result<(Vec<f64>, f64)> {
    if h.ncols() != f.nrows() {
        return Err(Error::DimensionMismatch { expected: h.ncols(), actual: f.nrows() });
    }
    if h.nrows() != f.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), actual: f.ncols() });
    }
    let g = h * f;
    let noise = noise_sigma * noise_sigma;
    let per_ue: Vec<f64> = (0..g.nrows())
        .map(|k| {
            let signal = g[(k, k)].norm_sqr();
            let interference: f64 = (0..g.ncols()).filter(|&j| j != k).map(|j| g[(k, j)].norm_sqr()).sum();
            let denom = interference + noise;
            let sinr = if denom > 0.0 {
                signal / denom
            } else if signal > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            (1.0 + sinr).log2()
        })
        .collect();
    let sum = per_ue.iter().sum();
    Ok((per_ue, sum))
}

/// Sweeps every codeword towards UE `ue_index` and reports the `l` strongest.
pub fn beam_sweep_report<R: Rng + ?Sized>(
    codebook: &Dictionary,
    ue_index: usize,
    h: &CVector,
    l: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<FeedbackReport> {
    let a = codebook.atoms();
    let unit_noise = if noise_sigma > 0.0 {
        (0..a.ncols()).map(|_| complex_gaussian(rng, 1.0)).collect()
    } else {
        vec![C64::new(0.0, 0.0); a.ncols()]
    };
    beam_sweep_report_with_noise(codebook, ue_index, h, l, noise_sigma, &unit_noise)
}

/// `beam_sweep_report` with caller-supplied unit-variance noise, one entry
/// per codeword, scaled by `noise_sigma`.
pub fn beam_sweep_report_with_noise(
    codebook: &Dictionary,
    ue_index: usize,
    h: &CVector,
    l: usize,
    noise_sigma: f64,
    unit_noise: &[C64],
) -> Result<FeedbackReport> {
    let a = codebook.atoms();
    if h.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), actual: h.len() });
    }
    if unit_noise.len() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), actual: unit_noise.len() });
    }
    if l == 0 || l > a.ncols() {
        return Err(Error::InvalidParameter {
            name: "feedback_len",
            reason: format!("must lie in 1..={}, got {l}", a.ncols()),
        });
    }
    let amps: Vec<C64> = (0..a.ncols()).map(|m| h.dotc(&a.column(m)) + unit_noise[m] * noise_sigma).collect();
    let mut order: Vec<usize> = (0..amps.len()).collect();
    order.sort_by(|&x, &y| amps[y].norm().total_cmp(&amps[x].norm()).then(x.cmp(&y)));
    order.truncate(l);
    Ok(FeedbackReport { ue_index, amplitudes: order.iter().map(|&m| amps[m]).collect(), codeword_indices: order })
}

fn check_budget(power_budget: f64) -> Result<()> {
    if !power_budget.is_finite() || power_budget <= 0.0 {
        return Err(Error::NonPositiveParameter { name: "power_budget", value: power_budget });
    }
    Ok(())
}

/// Scales every column to norm `√(P/K)`; zero columns stay zero.
fn equal_power_columns(f: &mut CMatrix, power_budget: f64) {
    let k = f.ncols();
    if k == 0 {
        return;
    }
    let target = (power_budget / k as f64).sqrt();
    for mut col in f.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col *= C64::new(target / norm, 0.0);
        }
    }
}

/// UEs ordered by the power of their strongest report, ties by UE order.
fn strength_order(reports: &[FeedbackReport]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&x, &y| reports[y].strongest_power().total_cmp(&reports[x].strongest_power()).then(x.cmp(&y)));
    order
}

fn check_reports(reports: &[FeedbackReport], codebook: &Dictionary) -> Result<()> {
    for r in reports {
        if r.codeword_indices.is_empty() {
            return Err(Error::InsufficientFeedback { ue: r.ue_index });
        }
        if r.codeword_indices.len() != r.amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: r.codeword_indices.len(), actual: r.amplitudes.len() });
        }
        if let Some(&m) = r.codeword_indices.iter().find(|&&m| m >= codebook.num_atoms()) {
            return Err(Error::IndexOutOfRange { index: m, len: codebook.num_atoms() });
        }
    }
    Ok(())
}

/// Column `k` is UE `k`'s strongest codeword. When two UEs claim the same
/// codeword the weaker one falls back to its next reported index.
pub fn type1_precoder(reports: &[FeedbackReport], codebook: &Dictionary, power_budget: f64) -> Result<PrecodingMatrix> {
    check_budget(power_budget)?;
    check_reports(reports, codebook)?;
    let mut taken = vec![false; codebook.num_atoms()];
    let mut choice = vec![0; reports.len()];
    for k in strength_order(reports) {
        let r = &reports[k];
        let m =
            *r.codeword_indices.iter().find(|&&m| !taken[m]).ok_or(Error::InsufficientFeedback { ue: r.ue_index })?;
        taken[m] = true;
        choice[k] = m;
    }
    let mut f = CMatrix::zeros(codebook.num_antennas(), reports.len());
    for (k, &m) in choice.iter().enumerate() {
        f.set_column(k, &codebook.atoms().column(m));
    }
    equal_power_columns(&mut f, power_budget);
    Ok(PrecodingMatrix { f, power_budget })
}

/// Column `k` is the matched combination `Σ conj(amplitude)·codeword` over
/// UE `k`'s reported codewords.
pub fn type2_precoder(reports: &[FeedbackReport], codebook: &Dictionary, power_budget: f64) -> Result<PrecodingMatrix> {
    check_budget(power_budget)?;
    check_reports(reports, codebook)?;
    let a = codebook.atoms();
    let mut f = CMatrix::zeros(codebook.num_antennas(), reports.len());
    for (k, r) in reports.iter().enumerate() {
        let mut col = CVector::zeros(a.nrows());
        for (&m, amp) in r.codeword_indices.iter().zip(&r.amplitudes) {
            col += a.column(m) * amp.conj();
        }
        f.set_column(k, &col);
    }
    equal_power_columns(&mut f, power_budget);
    Ok(PrecodingMatrix { f, power_budget })
}

fn select_beams(reports: &[FeedbackReport], num_atoms: usize, n_rf: usize, rule: AnalogSelection) -> Vec<usize> {
    let mut energy = vec![0.0; num_atoms];
    for r in reports {
        for (&m, amp) in r.codeword_indices.iter().zip(&r.amplitudes) {
            energy[m] += amp.norm_sqr();
        }
    }
    let mut by_energy: Vec<usize> = (0..num_atoms).collect();
    by_energy.sort_by(|&x, &y| energy[y].total_cmp(&energy[x]).then(x.cmp(&y)));

    let mut chosen = Vec::with_capacity(n_rf);
    let mut taken = vec![false; num_atoms];
    if rule == AnalogSelection::PerUe {
        for k in strength_order(reports) {
            if chosen.len() == n_rf {
                break;
            }
            if let Some(&m) = reports[k].codeword_indices.iter().find(|&&m| !taken[m]) {
                taken[m] = true;
                chosen.push(m);
            }
        }
    }
    for m in by_energy {
        if chosen.len() == n_rf {
            break;
        }
        if !taken[m] {
            taken[m] = true;
            chosen.push(m);
        }
    }
    chosen
}

/// Digital stage of the hybrid precoder.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Baseband {
    /// `H_effᴴ(H_eff·H_effᴴ)⁻¹`; fails on a rank-deficient effective channel.
    #[default]
    ZeroForcing,
    /// `H_effᴴ(H_eff·H_effᴴ + Kσ²/P·I)⁻¹`.
    Mmse { noise_sigma: f64 },
}

/// Constant-modulus analog beams from the codebook followed by a ZF
/// baseband stage designed on `channel_estimates · analog`.
pub fn hybrid_precoder(
    codebook: &Dictionary,
    reports: &[FeedbackReport],
    channel_estimates: &CMatrix,
    n_rf: usize,
    power_budget: f64,
    rule: AnalogSelection,
) -> Result<HybridPrecoder> {
    hybrid_precoder_with(codebook, reports, channel_estimates, n_rf, power_budget, rule, Baseband::ZeroForcing)
}

pub fn hybrid_precoder_with(
    codebook: &Dictionary,
    reports: &[FeedbackReport],
    channel_estimates: &CMatrix,
    n_rf: usize,
    power_budget: f64,
    rule: AnalogSelection,
    baseband: Baseband,
) -> Result<HybridPrecoder> {
    check_budget(power_budget)?;
    check_reports(reports, codebook)?;
    let k = channel_estimates.nrows();
    if channel_estimates.ncols() != codebook.num_antennas() {
        return Err(Error::DimensionMismatch { expected: codebook.num_antennas(), actual: channel_estimates.ncols() });
    }
    if n_rf < k || n_rf > codebook.num_atoms() {
        return Err(Error::InvalidParameter {
            name: "n_rf",
            reason: format!("must lie in {k}..={}, got {n_rf}", codebook.num_atoms()),
        });
    }
    let beams = select_beams(reports, codebook.num_atoms(), n_rf, rule);
    let mut picked = CMatrix::zeros(codebook.num_antennas(), n_rf);
    for (c, &m) in beams.iter().enumerate() {
        picked.set_column(c, &codebook.atoms().column(m));
    }
    let analog = constant_modulus_project(&picked);
    let h_eff = channel_estimates * &analog;
    let mut digital = match baseband {
        Baseband::ZeroForcing => {
            let (pinv, ratio) = right_pseudo_inverse(&h_eff, RANK_RTOL);
            pinv.ok_or(Error::RankDeficientEffectiveChannel { ratio })?
        }
        Baseband::Mmse { noise_sigma } => {
            let alpha = (k as f64 * noise_sigma * noise_sigma / power_budget).max(f64::MIN_POSITIVE);
            let gram = &h_eff * h_eff.adjoint() + CMatrix::identity(k, k) * C64::new(alpha, 0.0);
            let inv = gram.try_inverse().ok_or(Error::RankDeficientEffectiveChannel { ratio: 0.0 })?;
            h_eff.adjoint() * inv
        }
    };
    let target = (power_budget / k as f64).sqrt();
    for c in 0..k {
        let norm = (&analog * digital.column(c)).norm();
        if norm > 0.0 {
            digital.column_mut(c).scale_mut(target / norm);
        }
    }
    Ok(HybridPrecoder { analog, baseband: digital, beams, power_budget })
}

fn zf_like(h: &CMatrix, power_budget: f64, regularization: f64) -> Result<PrecodingMatrix> {
    check_budget(power_budget)?;
    let (k, n) = h.shape();
    if k > n {
        return Err(Error::SingularChannel { ratio: 0.0 });
    }
    let mut f = if regularization > 0.0 {
        let gram = h * h.adjoint() + CMatrix::identity(k, k) * C64::new(regularization, 0.0);
        let inv = gram.try_inverse().ok_or(Error::SingularChannel { ratio: 0.0 })?;
        h.adjoint() * inv
    } else {
        let (pinv, ratio) = right_pseudo_inverse(h, RANK_RTOL);
        pinv.ok_or(Error::SingularChannel { ratio })?
    };
    equal_power_columns(&mut f, power_budget);
    Ok(PrecodingMatrix { f, power_budget })
}

/// `F = Hᴴ(HHᴴ)⁻¹` with equal column power.
pub fn fully_digital_zf(h: &CMatrix, power_budget: f64) -> Result<PrecodingMatrix> {
    zf_like(h, power_budget, 0.0)
}

/// Regularized ZF `Hᴴ(HHᴴ + Kσ²/P·I)⁻¹` with equal column power.
pub fn fully_digital_rzf(h: &CMatrix, power_budget: f64, noise_sigma: f64) -> Result<PrecodingMatrix> {
    let alpha = h.nrows() as f64 * noise_sigma * noise_sigma / power_budget;
    zf_like(h, power_budget, alpha)
}

/// Column `k` is the constant-modulus projection of `h_k`.
pub fn cm_mf_precoder(h: &CMatrix, power_budget: f64) -> Result<PrecodingMatrix> {
    check_budget(power_budget)?;
    let mut f = constant_modulus_project(&h.adjoint());
    equal_power_columns(&mut f, power_budget);
    Ok(PrecodingMatrix { f, power_budget })
}
