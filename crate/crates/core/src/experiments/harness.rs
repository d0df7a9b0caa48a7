//! Monte Carlo driver.
//!
//! Trial `t` draws everything from a ChaCha8 stream keyed by `(seed, t)`, so
//! results do not depend on scheduling. Feedback noise comes from a separate
//! stream per method, which keeps a method's numbers independent of which
//! other methods run. Channels, pilot matrices and unit noise are shared by
//! all SNR points of a trial.

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Method, Pipeline, ScenarioConfig, TrainingSource};
use super::results::{mean_and_stderr, ResultRow, ResultTable};
use crate::channel::{
    generate_channel, generate_multiuser_channels, sample_ue_placement, ClusterConfig, MultiUserChannel, UePlacement,
};
use crate::dictionary::{dft_codebook, polar_codebook, wavenumber_dictionary_oversampled, Dictionary, DictionaryKind};
use crate::error::{Error, Result};
use crate::estimation::{nmse, reconstruct, MeasurementMatrix, SensingOperator, StoppingRule};
use crate::geometry::{ArrayGeometry, RegionLabel};
use crate::ksvd::{constant_modulus_project, ksvd_learn, KsvdConfig, LearnedCodebook};
use crate::linalg::{complex_gaussian_vector, CMatrix, CVector, C64};
use crate::precoding::{
    beam_sweep_report_with_noise, cm_mf_precoder, fully_digital_zf, hybrid_precoder_with, spectral_efficiency,
    type2_precoder, Baseband,
};

/// Seed offset of the codebook training split.
pub const TRAINING_SEED_OFFSET: u64 = 1_000_000;

/// Total transmit power; SNR is `POWER_BUDGET/σ²`.
pub const POWER_BUDGET: f64 = 1.0;

/// Metric reporting how often ZF on the estimated effective channel failed
/// and the MMSE baseband stood in.
pub const FALLBACK_METRIC: &str = "zf_fallback_fraction";

pub fn snr_to_sigma(snr_db: f64) -> f64 {
    (POWER_BUDGET / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn method_rng(seed: u64, method: Method, trial: usize) -> ChaCha8Rng {
    let tag = 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(method as u64 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    rng.set_stream(trial as u64);
    rng
}

fn cluster_config(cfg: &ScenarioConfig) -> Result<ClusterConfig> {
    ClusterConfig::exponential(
        cfg.clusters,
        cfg.rays_per_cluster,
        cfg.angular_spread_deg.to_radians(),
        cfg.cluster_decay_db,
    )
}

/// Near-field UEs first, then far-field UEs.
pub fn draw_placements(cfg: &ScenarioConfig, geom: &ArrayGeometry, rng: &mut ChaCha8Rng) -> Result<Vec<UePlacement>> {
    let dr = geom.rayleigh_distance();
    let mut out = Vec::with_capacity(cfg.num_ues());
    for _ in 0..cfg.near_ues {
        let b = (cfg.near_range.0 * dr, cfg.near_range.1 * dr);
        out.push(sample_ue_placement(geom, RegionLabel::NearField, b, rng)?);
    }
    for _ in 0..cfg.far_ues {
        let b = (cfg.far_range.0 * dr, cfg.far_range.1 * dr);
        out.push(sample_ue_placement(geom, RegionLabel::FarField, b, rng)?);
    }
    Ok(out)
}

fn estimation_stopping(cfg: &ScenarioConfig, sigma: f64, y: &CVector) -> StoppingRule {
    StoppingRule::noise_matched(cfg.resolved_omp_max_atoms(), sigma, y)
}

fn estimate_channel(
    cfg: &ScenarioConfig,
    sensing: &SensingOperator,
    dict: &Dictionary,
    meas: &MeasurementMatrix,
    h: &CVector,
    sigma: f64,
    unit_noise: &CVector,
) -> Result<CVector> {
    let y = meas.observe_with_noise(h, sigma, unit_noise);
    let est = sensing.estimate(&y, &estimation_stopping(cfg, sigma, &y))?;
    reconstruct(dict, &est)
}

pub fn wavenumber_for(cfg: &ScenarioConfig, geom: &ArrayGeometry) -> Result<Dictionary> {
    wavenumber_dictionary_oversampled(geom, cfg.wavenumber_oversampling, cfg.evanescent)
}

/// Learns the regression codebook from an independent training split.
pub fn train_regression_codebook(cfg: &ScenarioConfig) -> Result<LearnedCodebook> {
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let clusters = cluster_config(cfg)?;
    let n = geom.num_elements();
    let t = cfg.training_samples;
    let seed = cfg.seed.wrapping_add(TRAINING_SEED_OFFSET);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut channels = Vec::with_capacity(t);
    while channels.len() < t {
        for ue in draw_placements(cfg, &geom, &mut rng)? {
            if channels.len() == t {
                break;
            }
            channels.push(generate_channel(&geom, &ue, &clusters, &mut rng)?.h);
        }
    }
    let columns: Vec<CVector> = match cfg.training_source {
        TrainingSource::Genie => channels,
        TrainingSource::Estimated => {
            let dict = wavenumber_for(cfg, &geom)?;
            let sigma = snr_to_sigma(cfg.training_snr_db);
            let pilots = cfg.resolved_pilots();
            let meas: Vec<MeasurementMatrix> =
                (0..channels.len()).map(|_| MeasurementMatrix::random(n, pilots, &mut rng)).collect::<Result<_>>()?;
            let noise: Vec<CVector> =
                (0..channels.len()).map(|_| complex_gaussian_vector(&mut rng, pilots, 1.0)).collect();
            (0..channels.len())
                .into_par_iter()
                .map(|i| {
                    let sensing = SensingOperator::new(&meas[i], &dict)?;
                    estimate_channel(cfg, &sensing, &dict, &meas[i], &channels[i], sigma, &noise[i])
                })
                .collect::<Result<_>>()?
        }
    };
    let mut h = CMatrix::zeros(n, columns.len());
    for (i, c) in columns.iter().enumerate() {
        h.set_column(i, c);
    }
    let kcfg = KsvdConfig {
        atom_count: cfg.resolved_ksvd_atoms(),
        sparsity: cfg.ksvd_sparsity,
        max_iters: cfg.ksvd_iters,
        nmse_threshold: cfg.ksvd_threshold,
        seed,
    };
    let learned = ksvd_learn(&h, &kcfg)?;
    info!(
        "regression codebook: {} atoms, {} iterations, training NMSE {:.4e}",
        kcfg.atom_count,
        learned.history.len(),
        learned.final_nmse()
    );
    Ok(learned)
}

/// The codebook used on air: the learned atoms, constant-modulus projected
/// when `cfg.projection` is set.
pub fn deployable_codebook(cfg: &ScenarioConfig, learned: &LearnedCodebook) -> Result<Dictionary> {
    if cfg.projection {
        Dictionary::from_matrix(constant_modulus_project(learned.dictionary.atoms()), DictionaryKind::Learned)
    } else {
        Ok(learned.dictionary.clone())
    }
}

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    geom: ArrayGeometry,
    clusters: ClusterConfig,
    dft: Dictionary,
    polar: Option<Dictionary>,
    wavenumber: Option<Dictionary>,
    regression: Option<Dictionary>,
}

impl<'a> Context<'a> {
    fn build(cfg: &'a ScenarioConfig, learned: Option<&LearnedCodebook>) -> Result<Self> {
        let geom = cfg.geometry()?;
        let needs = |m: Method| cfg.methods.contains(&m);
        let polar = if needs(Method::Polar) {
            Some(polar_codebook(&geom, cfg.polar_rings, cfg.polar_min_distance * geom.rayleigh_distance())?)
        } else {
            None
        };
        let hybrid_estimates = cfg.pipeline == Pipeline::Hybrid && cfg.estimation;
        let wavenumber =
            if needs(Method::OmpWavenumber) || hybrid_estimates { Some(wavenumber_for(cfg, &geom)?) } else { None };
        let regression = if needs(Method::Regression) {
            let owned;
            let learned = match learned {
                Some(l) => l,
                None => {
                    owned = train_regression_codebook(cfg)?;
                    &owned
                }
            };
            if learned.dictionary.num_antennas() != geom.num_elements() {
                return Err(Error::DimensionMismatch {
                    expected: geom.num_elements(),
                    actual: learned.dictionary.num_antennas(),
                });
            }
            Some(deployable_codebook(cfg, learned)?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            clusters: cluster_config(cfg)?,
            dft: dft_codebook(&geom, cfg.dft_oversampling)?,
            geom,
            polar,
            wavenumber,
            regression,
        })
    }

    /// Codebook swept over the air for a method.
    fn codebook(&self, m: Method) -> &Dictionary {
        match m {
            Method::Polar => self.polar.as_ref().expect("polar built"),
            Method::Regression => self.regression.as_ref().expect("regression built"),
            _ => &self.dft,
        }
    }

    /// Dictionary of an estimation-pipeline method.
    fn estimation_dictionary(&self, m: Method) -> &Dictionary {
        match m {
            Method::OmpWavenumber => self.wavenumber.as_ref().expect("wavenumber built"),
            _ => &self.dft,
        }
    }
}

/// Per-trial outcome: `values[method][snr]` plus hybrid fallback flags.
struct TrialOutcome {
    values: Vec<Vec<f64>>,
    fallbacks: Vec<Vec<bool>>,
}

fn run_trial(ctx: &Context, trial: usize) -> Result<TrialOutcome> {
    let cfg = ctx.cfg;
    let mut rng = trial_rng(cfg.seed, trial);
    let placements = draw_placements(cfg, &ctx.geom, &mut rng)?;
    let channel = generate_multiuser_channels(&ctx.geom, &placements, &ctx.clusters, &mut rng)?;
    let hs: Vec<CVector> = channel.realizations.iter().map(|r| r.h.clone()).collect();
    let n = ctx.geom.num_elements();
    let k = hs.len();
    let snrs = &cfg.snr_db;

    let needs_pilots = cfg.pipeline == Pipeline::Estimation || (cfg.pipeline == Pipeline::Hybrid && cfg.estimation);
    let (meas, pilot_noise) = if needs_pilots {
        let pilots = cfg.resolved_pilots();
        let meas = MeasurementMatrix::random(n, pilots, &mut rng)?;
        let noise: Vec<CVector> = (0..k).map(|_| complex_gaussian_vector(&mut rng, pilots, 1.0)).collect();
        (Some(meas), noise)
    } else {
        (None, Vec::new())
    };

    // Every hybrid codebook is fed the same wavenumber-domain CSI estimate.
    let mut hybrid_csi = Vec::new();
    if cfg.pipeline == Pipeline::Hybrid && cfg.estimation {
        let meas = meas.as_ref().expect("pilots drawn");
        let dict = ctx.wavenumber.as_ref().expect("wavenumber built");
        let sensing = SensingOperator::new(meas, dict)?;
        for &snr_db in snrs {
            let sigma = snr_to_sigma(snr_db);
            let rows = hs
                .iter()
                .zip(&pilot_noise)
                .map(|(h, w)| estimate_channel(cfg, &sensing, dict, meas, h, sigma, w))
                .collect::<Result<Vec<_>>>()?;
            hybrid_csi.push(MultiUserChannel::stack(&rows));
        }
    }

    let mut values = Vec::with_capacity(cfg.methods.len());
    let mut fallbacks = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut row = Vec::with_capacity(snrs.len());
        let mut fb = vec![false; snrs.len()];
        match (cfg.pipeline, method) {
            (Pipeline::Estimation, _) => {
                let meas = meas.as_ref().expect("pilots drawn");
                let dict = ctx.estimation_dictionary(method);
                let sensing = SensingOperator::new(meas, dict)?;
                for &snr_db in snrs {
                    let snr = 10f64.powf(snr_db / 10.0);
                    let mut acc = 0.0;
                    for (h, w) in hs.iter().zip(&pilot_noise) {
                        let sigma = meas.noise_sigma_for_snr(h, snr);
                        let h_hat = estimate_channel(cfg, &sensing, dict, meas, h, sigma, w)?;
                        acc += nmse(&h_hat, h)?;
                    }
                    row.push(acc / k as f64);
                }
            }
            (_, Method::CmMf) => {
                let f = cm_mf_precoder(&channel.matrix, POWER_BUDGET)?;
                for &snr_db in snrs {
                    row.push(spectral_efficiency(&channel.matrix, &f.f, snr_to_sigma(snr_db))?.1);
                }
            }
            (_, Method::FullyDigital) => {
                let f = fully_digital_zf(&channel.matrix, POWER_BUDGET)?;
                for &snr_db in snrs {
                    row.push(spectral_efficiency(&channel.matrix, &f.f, snr_to_sigma(snr_db))?.1);
                }
            }
            (pipeline, _) => {
                let codebook = ctx.codebook(method);
                let mut mrng = method_rng(cfg.seed, method, trial);
                let sweep_noise: Vec<Vec<C64>> = (0..k)
                    .map(|_| complex_gaussian_vector(&mut mrng, codebook.num_atoms(), 1.0).iter().copied().collect())
                    .collect();
                let l = cfg.feedback_len.min(codebook.num_atoms());
                for (si, &snr_db) in snrs.iter().enumerate() {
                    let sigma = snr_to_sigma(snr_db);
                    let reports = hs
                        .iter()
                        .enumerate()
                        .map(|(u, h)| beam_sweep_report_with_noise(codebook, u, h, l, sigma, &sweep_noise[u]))
                        .collect::<Result<Vec<_>>>()?;
                    let f = if pipeline == Pipeline::Sweep {
                        type2_precoder(&reports, codebook, POWER_BUDGET)?.f
                    } else {
                        let h_hat = hybrid_csi.get(si).unwrap_or(&channel.matrix);
                        let n_rf = cfg.resolved_n_rf();
                        let rule = cfg.analog_selection;
                        let first = if cfg.mmse_baseband {
                            Baseband::Mmse { noise_sigma: sigma }
                        } else {
                            Baseband::ZeroForcing
                        };
                        match hybrid_precoder_with(codebook, &reports, h_hat, n_rf, POWER_BUDGET, rule, first) {
                            Ok(hp) => hp.effective(),
                            Err(Error::RankDeficientEffectiveChannel { .. }) => {
                                fb[si] = true;
                                hybrid_precoder_with(
                                    codebook,
                                    &reports,
                                    h_hat,
                                    n_rf,
                                    POWER_BUDGET,
                                    rule,
                                    Baseband::Mmse { noise_sigma: sigma },
                                )?
                                .effective()
                            }
                            Err(e) => return Err(e),
                        }
                    };
                    row.push(spectral_efficiency(&channel.matrix, &f, sigma)?.1);
                }
            }
        }
        values.push(row);
        fallbacks.push(fb);
    }
    Ok(TrialOutcome { values, fallbacks })
}

/// Runs every trial and aggregates means and standard errors. The learned
/// codebook is trained from the training split unless supplied.
pub fn run_scenario_with(cfg: &ScenarioConfig, learned: Option<&LearnedCodebook>) -> Result<ResultTable> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter { name: "workers", reason: e.to_string() })?;
    pool.install(|| {
        let ctx = Context::build(cfg, learned)?;
        let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(&ctx, t).map_err(|e| Error::Trial { trial: t, source: Box::new(e) }))
            .collect::<Result<_>>()?;
        Ok(aggregate(cfg, &outcomes))
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultTable> {
    run_scenario_with(cfg, None)
}

fn aggregate(cfg: &ScenarioConfig, outcomes: &[TrialOutcome]) -> ResultTable {
    let mut table = ResultTable::default();
    let metric = cfg.pipeline.metric();
    for (mi, method) in cfg.methods.iter().enumerate() {
        let hybrid_codebook = cfg.pipeline == Pipeline::Hybrid && !matches!(method, Method::FullyDigital);
        for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
            let samples: Vec<f64> = outcomes.iter().map(|o| o.values[mi][si]).collect();
            let (mean, stderr) = mean_and_stderr(&samples);
            table.push(ResultRow {
                scenario: cfg.name.clone(),
                method: method.label().to_string(),
                snr_db,
                metric: metric.to_string(),
                mean,
                stderr,
                trials: samples.len(),
            });
            if hybrid_codebook {
                let flags: Vec<f64> = outcomes.iter().map(|o| if o.fallbacks[mi][si] { 1.0 } else { 0.0 }).collect();
                let (mean, stderr) = mean_and_stderr(&flags);
                if mean > 0.0 {
                    warn!(
                        "{}: ZF baseband fell back to MMSE in {:.1}% of trials at {snr_db} dB",
                        method.label(),
                        100.0 * mean
                    );
                }
                table.push(ResultRow {
                    scenario: cfg.name.clone(),
                    method: method.label().to_string(),
                    snr_db,
                    metric: FALLBACK_METRIC.to_string(),
                    mean,
                    stderr,
                    trials: flags.len(),
                });
            }
        }
    }
    table.sort();
    table
}

/// Comment lines for CSV output: SNR referents and codebook parameters.
pub fn csv_comments(cfg: &ScenarioConfig) -> Vec<String> {
    let mut out = vec![format!(
        "scenario {}: {}x{} UPA, {} near + {} far UEs, {} trials, seed {}",
        cfg.name, cfg.rows, cfg.cols, cfg.near_ues, cfg.far_ues, cfg.trials, cfg.seed
    )];
    match cfg.pipeline {
        Pipeline::Estimation => out.push("SNR = |Phi h|^2 / (P sigma^2) per pilot observation".into()),
        _ => out.push(format!("SNR = power_budget / sigma^2 with power_budget = {POWER_BUDGET} and E|h|^2 = N")),
    }
    if cfg.pipeline == Pipeline::Hybrid {
        out.push(format!(
            "hybrid: n_rf = {}, CSI = {}, baseband = {}; {FALLBACK_METRIC} counts trials where ZF lost rank and MMSE was used",
            cfg.resolved_n_rf(),
            if cfg.estimation { "wavenumber-domain OMP estimate" } else { "genie" },
            if cfg.mmse_baseband { "mmse" } else { "zf" },
        ));
    }
    if cfg.uses_learned_codebook() {
        out.push(format!(
            "regression codebook: atoms {}, sparsity {}, iterations {}, threshold {}, training samples {} ({}), projection {}",
            cfg.resolved_ksvd_atoms(),
            cfg.ksvd_sparsity,
            cfg.ksvd_iters,
            cfg.ksvd_threshold,
            cfg.training_samples,
            cfg.training_source.as_str(),
            cfg.projection
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{preset, PresetName};

    fn small(name: PresetName) -> ScenarioConfig {
        let mut c = preset(name).desk();
        c.rows = 4;
        c.cols = 4;
        c.trials = 4;
        c.snr_db = vec![0.0, 10.0];
        c.training_samples = 40;
        c.ksvd_iters = 2;
        c
    }

    #[test]
    fn one_trial_one_method_one_snr() {
        let mut c = small(PresetName::Fig4aSweep);
        c.trials = 1;
        c.methods = vec![Method::Dft];
        c.snr_db = vec![5.0];
        let t = run_scenario(&c).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].metric, "sum_se");
        assert_eq!(t.rows[0].stderr, 0.0);
    }

    #[test]
    fn hybrid_rows_include_fallback_fraction() {
        let mut c = small(PresetName::Fig4bHybrid);
        c.methods = vec![Method::Dft, Method::FullyDigital];
        let t = run_scenario(&c).unwrap();
        // dft: two metrics per SNR; fully digital: one
        assert_eq!(t.rows.len(), 2 * 2 + 2);
        for r in t.rows.iter().filter(|r| r.metric == FALLBACK_METRIC) {
            assert!((0.0..=1.0).contains(&r.mean));
        }
    }

    #[test]
    fn same_seed_same_table_any_worker_count() {
        for name in [PresetName::Fig2Nmse, PresetName::Fig4bHybrid] {
            let mut c = small(name);
            c.workers = 1;
            let a = run_scenario(&c).unwrap();
            let b = run_scenario(&c).unwrap();
            c.workers = 3;
            let d = run_scenario(&c).unwrap();
            assert_eq!(a.to_csv(&[]), b.to_csv(&[]));
            assert_eq!(a.to_csv(&[]), d.to_csv(&[]));
        }
    }

    #[test]
    fn different_seed_changes_results() {
        let mut c = small(PresetName::Fig2Nmse);
        let a = run_scenario(&c).unwrap();
        c.seed += 1;
        assert_ne!(a, run_scenario(&c).unwrap());
    }

    #[test]
    fn method_results_do_not_depend_on_other_methods() {
        let mut c = small(PresetName::Fig4aSweep);
        let full = run_scenario(&c).unwrap();
        c.methods = vec![Method::Polar];
        let alone = run_scenario(&c).unwrap();
        for r in &alone.rows {
            assert_eq!(full.get("polar", r.snr_db).unwrap(), r);
        }
    }

    #[test]
    fn supplied_codebook_matches_internal_training() {
        let c = small(PresetName::Fig4aSweep);
        let learned = train_regression_codebook(&c).unwrap();
        assert_eq!(run_scenario_with(&c, Some(&learned)).unwrap(), run_scenario(&c).unwrap());
    }

    #[test]
    fn codebook_size_mismatch_is_reported() {
        let c = small(PresetName::Fig4aSweep);
        let mut other = c.clone();
        other.rows = 2;
        other.ksvd_atoms = 4;
        other.ksvd_sparsity = 2;
        let learned = train_regression_codebook(&other).unwrap();
        assert!(matches!(run_scenario_with(&c, Some(&learned)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let mut c = small(PresetName::Fig2Nmse);
        c.trials = 0;
        assert!(run_scenario(&c).unwrap_err().is_config_error());
    }

    #[test]
    fn snr_sigma_relation() {
        assert_eq!(snr_to_sigma(0.0), 1.0);
        assert!((snr_to_sigma(20.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn comments_state_the_snr_definition() {
        let c = small(PresetName::Fig4bHybrid);
        let text = csv_comments(&c).join("\n");
        assert!(text.contains("SNR = power_budget / sigma^2"));
        assert!(text.contains("regression codebook"));
        assert!(csv_comments(&small(PresetName::Fig2Nmse)).join("\n").contains("per pilot observation"));
    }
}
