//! K-SVD codebook learning, constant-modulus projection and the retraining policy.
//!
//! The learner alternates OMP sparse coding of every training channel with a
//! column-by-column dictionary update in which each atom and its coefficient
//! row become the best rank-1 approximation of the residual restricted to the
//! training columns that use the atom.

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dictionary::{Dictionary, DictionaryKind};
use crate::error::{Error, Result};
use crate::estimation::{omp, StoppingRule};
use crate::linalg::{complex_gaussian_vector, frobenius_sq, leading_singular_triple, CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct KsvdConfig {
    pub atom_count: usize,
    pub sparsity: usize,
    pub max_iters: usize,
    pub nmse_threshold: f64,
    pub seed: u64,
}

impl KsvdConfig {
    /// Square codebook (`atom_count = N`), sparsity 8, 30 iterations, threshold 1e−3.
    pub fn for_antennas(antennas: usize, seed: u64) -> Self {
        Self { atom_count: antennas, sparsity: 8.min(antennas), max_iters: 30, nmse_threshold: 1e-3, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atom_count == 0 {
            return Err(Error::InvalidParameter { name: "atom_count", reason: "must be at least 1".into() });
        }
        if self.sparsity == 0 || self.sparsity > self.atom_count {
            return Err(Error::InvalidParameter {
                name: "sparsity",
                reason: format!("must lie in 1..={}, got {}", self.atom_count, self.sparsity),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter { name: "max_iters", reason: "must be at least 1".into() });
        }
        if self.nmse_threshold.is_nan() || self.nmse_threshold < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nmse_threshold",
                reason: format!("must be nonnegative, got {}", self.nmse_threshold),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearnedCodebook {
    pub dictionary: Dictionary,
    /// `M × T` sparse channel matrix over the training set.
    pub sparse_codes: CMatrix,
    /// Training NMSE after each iteration.
    pub history: Vec<f64>,
    pub config: KsvdConfig,
}

impl LearnedCodebook {
    pub fn final_nmse(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Codes every training column independently with OMP (`residual_tol = 0`).
pub fn sparse_coding_step(atoms: &CMatrix, channels: &CMatrix, sparsity: usize) -> Result<CMatrix> {
    if atoms.nrows() != channels.nrows() {
        return Err(Error::DimensionMismatch { expected: atoms.nrows(), actual: channels.nrows() });
    }
    let stopping = StoppingRule::exact(sparsity);
    let columns: Vec<CVector> = (0..channels.ncols())
        .into_par_iter()
        .map(|t| -> Result<CVector> {
            let y = channels.column(t).into_owned();
            let est = omp(&y, atoms, &stopping)?;
            let mut code = CVector::zeros(atoms.ncols());
            for (&j, &c) in est.support.iter().zip(&est.coefficients) {
                code[j] = c;
            }
            Ok(code)
        })
        .collect::<Result<_>>()?;
    let mut codes = CMatrix::zeros(atoms.ncols(), channels.ncols());
    for (t, c) in columns.iter().enumerate() {
        codes.set_column(t, c);
    }
    Ok(codes)
}

#[derive(Debug, Clone, Default)]
pub struct UpdateReport {
    /// Atoms that no training column used and were reseeded.
    pub replaced: Vec<usize>,
    /// `‖H − A·X‖²_F` before the pass and after each atom update.
    pub objective_trace: Vec<f64>,
}

/// One sequential pass over all atoms with the sparse supports held fixed.
pub fn dictionary_update_step(atoms: &mut CMatrix, codes: &mut CMatrix, channels: &CMatrix) -> Result<UpdateReport> {
    let (n, m) = atoms.shape();
    let t = channels.ncols();
    if channels.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: channels.nrows() });
    }
    if codes.shape() != (m, t) {
        return Err(Error::DimensionMismatch { expected: m * t, actual: codes.nrows() * codes.ncols() });
    }
    let mut residual = channels - &*atoms * &*codes;
    let mut objective = frobenius_sq(&residual);
    let mut report = UpdateReport { replaced: Vec::new(), objective_trace: vec![objective] };
    let mut reseeded_from = vec![false; t];
    let zero = C64::new(0.0, 0.0);

    for j in 0..m {
        let users: Vec<usize> = (0..t).filter(|&c| codes[(j, c)] != zero).collect();
        if users.is_empty() {
            let worst = (0..t).filter(|&c| !reseeded_from[c]).map(|c| (c, residual.column(c).norm_squared())).fold(
                None::<(usize, f64)>,
                |best, (c, e)| match best {
                    Some((_, be)) if be >= e => best,
                    _ => Some((c, e)),
                },
            );
            if let Some((c, e)) = worst {
                if e > 0.0 {
                    let col = residual.column(c).into_owned();
                    let src = channels.column(c).into_owned();
                    let pick = if src.norm() > 0.0 { src } else { col };
                    atoms.set_column(j, &pick.unscale(pick.norm()));
                    reseeded_from[c] = true;
                    report.replaced.push(j);
                }
            }
            report.objective_trace.push(objective);
            continue;
        }

        let a_j = atoms.column(j).into_owned();
        let mut restricted = CMatrix::zeros(n, users.len());
        let mut before = 0.0;
        for (i, &c) in users.iter().enumerate() {
            let r = residual.column(c);
            before += r.norm_squared();
            restricted.set_column(i, &(r + &a_j * codes[(j, c)]));
        }
        let (u, sigma, v) = leading_singular_triple(&restricted);
        let mut after = 0.0;
        for (i, &c) in users.iter().enumerate() {
            let coef = v[i].conj() * sigma;
            codes[(j, c)] = coef;
            let r = restricted.column(i) - &u * coef;
            after += r.norm_squared();
            residual.set_column(c, &r);
        }
        atoms.set_column(j, &u);
        objective = (objective - before + after).max(0.0);
        report.objective_trace.push(objective);
    }
    Ok(report)
}

/// Learns a codebook from the `N × T` training matrix.
pub fn ksvd_learn(channels: &CMatrix, cfg: &KsvdConfig) -> Result<LearnedCodebook> {
    cfg.validate()?;
    let (n, t) = channels.shape();
    if t == 0 || n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let energy = frobenius_sq(channels);
    if energy == 0.0 {
        return Err(Error::EmptyTrainingSet);
    }
    if t < cfg.atom_count {
        warn!("K-SVD training set has {t} columns for {} atoms", cfg.atom_count);
    }
    if cfg.sparsity > n {
        return Err(Error::InvalidParameter {
            name: "sparsity",
            reason: format!("cannot exceed the channel dimension {n}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut atoms = CMatrix::zeros(n, cfg.atom_count);
    let picks = sample(&mut rng, t, cfg.atom_count.min(t));
    let mut filled = 0;
    for c in picks.iter() {
        let col = channels.column(c).into_owned();
        let norm = col.norm();
        if norm > 0.0 {
            atoms.set_column(filled, &col.unscale(norm));
            filled += 1;
        }
    }
    for j in filled..cfg.atom_count {
        let g = complex_gaussian_vector(&mut rng, n, 1.0);
        atoms.set_column(j, &g.unscale(g.norm()));
    }

    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut codes = CMatrix::zeros(cfg.atom_count, t);
    for _ in 0..cfg.max_iters {
        codes = sparse_coding_step(&atoms, channels, cfg.sparsity)?;
        let report = dictionary_update_step(&mut atoms, &mut codes, channels)?;
        let nmse = report.objective_trace.last().copied().unwrap_or(energy) / energy;
        history.push(nmse);
        if nmse <= cfg.nmse_threshold {
            break;
        }
    }
    let dictionary = Dictionary::from_matrix(atoms, DictionaryKind::Learned)?;
    Ok(LearnedCodebook { dictionary, sparse_codes: codes, history, config: cfg.clone() })
}

/// Replaces every entry by its phase scaled to `1/√N`; entries with
/// `|a| ≤ 1e−12` map to phase zero.
pub fn constant_modulus_project(atoms: &CMatrix) -> CMatrix {
    let scale = 1.0 / (atoms.nrows() as f64).sqrt();
    atoms.map(|a| {
        let r = a.norm();
        if r > 1e-12 {
            a / r * scale
        } else {
            C64::new(scale, 0.0)
        }
    })
}

/// Whether the trailing 10-sample average of spectral efficiency has dropped
/// below `(1 − decline_fraction)·baseline_se`.
///
/// # Panics
///
/// If `decline_fraction` is outside `(0, 1)`.
pub fn retrain_trigger(se_history: &[f64], baseline_se: f64, decline_fraction: f64) -> bool {
    assert!(
        decline_fraction > 0.0 && decline_fraction < 1.0,
        "decline_fraction must lie in (0, 1), got {decline_fraction}"
    );
    const WINDOW: usize = 10;
    if se_history.is_empty() {
        return false;
    }
    let tail = &se_history[se_history.len().saturating_sub(WINDOW)..];
    let avg = tail.iter().sum::<f64>() / tail.len() as f64;
    avg < (1.0 - decline_fraction) * baseline_se
}
