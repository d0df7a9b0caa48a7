//! Scenario configuration, presets and the flat `key = value` file format.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::precoding::AnalogSelection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    Fig2Nmse,
    Fig4aSweep,
    Fig4bHybrid,
    Fig5aNear,
    Fig5bFar,
}

impl PresetName {
    pub const ALL: [PresetName; 5] = [
        PresetName::Fig2Nmse,
        PresetName::Fig4aSweep,
        PresetName::Fig4bHybrid,
        PresetName::Fig5aNear,
        PresetName::Fig5bFar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fig2Nmse => "fig2_nmse",
            PresetName::Fig4aSweep => "fig4a_sweep",
            PresetName::Fig4bHybrid => "fig4b_hybrid",
            PresetName::Fig5aNear => "fig5a_near",
            PresetName::Fig5bFar => "fig5b_far",
        }
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a trial computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Pilot observation and OMP recovery; metric NMSE.
    Estimation,
    /// Beam sweeping with Type-II feedback precoding; metric sum SE.
    Sweep,
    /// Analog codewords plus ZF baseband; metric sum SE.
    Hybrid,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Estimation => "estimation",
            Pipeline::Sweep => "sweep",
            Pipeline::Hybrid => "hybrid",
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            Pipeline::Estimation => "nmse",
            Pipeline::Sweep | Pipeline::Hybrid => "sum_se",
        }
    }
}

impl FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "estimation" => Ok(Pipeline::Estimation),
            "sweep" => Ok(Pipeline::Sweep),
            "hybrid" => Ok(Pipeline::Hybrid),
            _ => Err(format!("unknown pipeline `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    OmpAngular,
    OmpWavenumber,
    Dft,
    Polar,
    Regression,
    CmMf,
    FullyDigital,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::OmpAngular,
        Method::OmpWavenumber,
        Method::Dft,
        Method::Polar,
        Method::Regression,
        Method::CmMf,
        Method::FullyDigital,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::OmpAngular => "omp_angular",
            Method::OmpWavenumber => "omp_wavenumber",
            Method::Dft => "dft",
            Method::Polar => "polar",
            Method::Regression => "regression",
            Method::CmMf => "cm_mf",
            Method::FullyDigital => "fully_digital",
        }
    }

    pub fn supports(self, pipeline: Pipeline) -> bool {
        match self {
            Method::OmpAngular | Method::OmpWavenumber => pipeline == Pipeline::Estimation,
            Method::Dft | Method::Polar | Method::Regression | Method::CmMf => pipeline != Pipeline::Estimation,
            Method::FullyDigital => pipeline == Pipeline::Hybrid,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.label() == s).ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Channels the learned codebook is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingSource {
    /// Wavenumber-domain OMP estimates at `training_snr_db`.
    Estimated,
    /// True channels.
    Genie,
}

impl TrainingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingSource::Estimated => "estimated",
            TrainingSource::Genie => "genie",
        }
    }
}

impl FromStr for TrainingSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "estimated" => Ok(TrainingSource::Estimated),
            "genie" => Ok(TrainingSource::Genie),
            _ => Err(format!("unknown training source `{s}`")),
        }
    }
}

fn selection_str(s: AnalogSelection) -> &'static str {
    match s {
        AnalogSelection::Global => "global",
        AnalogSelection::PerUe => "per_ue",
    }
}

fn parse_selection(s: &str) -> std::result::Result<AnalogSelection, String> {
    match s {
        "global" => Ok(AnalogSelection::Global),
        "per_ue" => Ok(AnalogSelection::PerUe),
        _ => Err(format!("unknown analog selection `{s}`")),
    }
}

/// Full description of one Monte Carlo experiment. Counts set to 0 mean
/// "derive from the geometry" (see the resolver methods).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub pipeline: Pipeline,
    pub methods: Vec<Method>,

    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,

    pub near_ues: usize,
    pub far_ues: usize,
    /// Radial bounds as fractions of the Rayleigh distance.
    pub near_range: (f64, f64),
    pub far_range: (f64, f64),

    pub clusters: usize,
    pub rays_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub cluster_decay_db: f64,

    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub seed: u64,

    /// Estimate channels before hybrid precoding; genie CSI otherwise.
    pub estimation: bool,
    /// Constant-modulus projection of the learned codebook.
    pub projection: bool,

    pub pilots: usize,
    pub omp_max_atoms: usize,
    pub dft_oversampling: usize,
    pub polar_rings: usize,
    /// Polar ring clipping radius as a fraction of the Rayleigh distance.
    pub polar_min_distance: f64,
    pub wavenumber_oversampling: usize,
    pub evanescent: bool,

    pub feedback_len: usize,
    pub n_rf: usize,
    pub analog_selection: AnalogSelection,
    /// Use the regularized baseband directly instead of ZF.
    pub mmse_baseband: bool,

    pub ksvd_atoms: usize,
    pub ksvd_sparsity: usize,
    pub ksvd_iters: usize,
    pub ksvd_threshold: f64,
    pub training_samples: usize,
    pub training_source: TrainingSource,
    pub training_snr_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        preset(PresetName::Fig4aSweep)
    }
}

/// Full-scale configuration of a named scenario.
pub fn preset(name: PresetName) -> ScenarioConfig {
    let (pipeline, methods, near, far) = match name {
        PresetName::Fig2Nmse => (Pipeline::Estimation, vec![Method::OmpAngular, Method::OmpWavenumber], 4, 12),
        PresetName::Fig4aSweep => {
            (Pipeline::Sweep, vec![Method::Dft, Method::Polar, Method::Regression, Method::CmMf], 4, 12)
        }
        PresetName::Fig4bHybrid => {
            (Pipeline::Hybrid, vec![Method::Dft, Method::Polar, Method::Regression, Method::FullyDigital], 4, 12)
        }
        PresetName::Fig5aNear => {
            (Pipeline::Hybrid, vec![Method::Dft, Method::Polar, Method::Regression, Method::FullyDigital], 16, 0)
        }
        PresetName::Fig5bFar => {
            (Pipeline::Hybrid, vec![Method::Dft, Method::Polar, Method::Regression, Method::FullyDigital], 0, 16)
        }
    };
    ScenarioConfig {
        name: name.as_str().to_string(),
        pipeline,
        methods,
        rows: 32,
        cols: 32,
        spacing: 0.5,
        wavelength: 0.01,
        near_ues: near,
        far_ues: far,
        near_range: (0.05, 0.95),
        far_range: (1.5, 10.0),
        clusters: 4,
        rays_per_cluster: 5,
        angular_spread_deg: 5.0,
        cluster_decay_db: 3.0,
        snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        trials: 500,
        workers: 0,
        seed: 1,
        estimation: true,
        projection: true,
        pilots: 0,
        omp_max_atoms: 0,
        dft_oversampling: 1,
        polar_rings: 3,
        polar_min_distance: 0.05,
        wavenumber_oversampling: 1,
        evanescent: false,
        feedback_len: 4,
        n_rf: 0,
        analog_selection: AnalogSelection::Global,
        mmse_baseband: false,
        ksvd_atoms: 0,
        ksvd_sparsity: 8,
        ksvd_iters: 30,
        ksvd_threshold: 1e-3,
        training_samples: 2000,
        training_source: TrainingSource::Estimated,
        training_snr_db: 20.0,
    }
}

impl ScenarioConfig {
    /// Desk scale: 8×8 array, 4 UEs split in the preset's near/far
    /// proportion (mixed scenarios become 2 + 2), 50 trials.
    pub fn desk(mut self) -> Self {
        self.rows = 8;
        self.cols = 8;
        self.trials = 50;
        let (near, far) = match (self.near_ues, self.far_ues) {
            (0, _) => (0, 4),
            (_, 0) => (4, 0),
            _ => (2, 2),
        };
        self.near_ues = near;
        self.far_ues = far;
        self
    }

    pub fn num_ues(&self) -> usize {
        self.near_ues + self.far_ues
    }

    pub fn num_antennas(&self) -> usize {
        self.rows * self.cols
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::upa(self.rows, self.cols, self.spacing * self.wavelength, self.wavelength)
    }

    pub fn resolved_pilots(&self) -> usize {
        if self.pilots == 0 {
            (self.num_antennas() / 2).max(1)
        } else {
            self.pilots
        }
    }

    pub fn resolved_omp_max_atoms(&self) -> usize {
        let atoms =
            if self.omp_max_atoms == 0 { 2 * self.clusters * self.rays_per_cluster } else { self.omp_max_atoms };
        atoms.min(self.resolved_pilots())
    }

    pub fn resolved_n_rf(&self) -> usize {
        if self.n_rf == 0 {
            self.num_ues()
        } else {
            self.n_rf
        }
    }

    pub fn resolved_ksvd_atoms(&self) -> usize {
        if self.ksvd_atoms == 0 {
            self.num_antennas()
        } else {
            self.ksvd_atoms
        }
    }

    pub fn uses_learned_codebook(&self) -> bool {
        self.methods.contains(&Method::Regression)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.trials == 0 {
            return invalid("trials", "must be at least 1".into());
        }
        if self.snr_db.is_empty() {
            return invalid("snr_db", "grid must be nonempty".into());
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return invalid("snr_db", format!("non-finite entry {s}"));
        }
        if self.num_ues() == 0 {
            return invalid("ue_counts", "at least one UE required".into());
        }
        if self.methods.is_empty() {
            return invalid("methods", "list must be nonempty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if !m.supports(self.pipeline) {
                return invalid(
                    "methods",
                    format!("{} is not available in the {} pipeline", m.label(), self.pipeline.as_str()),
                );
            }
            if self.methods[..i].contains(m) {
                return invalid("methods", format!("{} listed twice", m.label()));
            }
        }
        let geom = self.geometry()?;
        let n = geom.num_elements();
        let (nl, nh) = self.near_range;
        if self.near_ues > 0 && !(nl > 0.0 && nl < nh && nh <= 1.0) {
            return invalid("near_range", format!("need 0 < lo < hi <= 1, got ({nl}, {nh})"));
        }
        let (fl, fh) = self.far_range;
        if self.far_ues > 0 && !(fl >= 1.0 && fl < fh && fh.is_finite()) {
            return invalid("far_range", format!("need 1 <= lo < hi, got ({fl}, {fh})"));
        }
        if self.clusters == 0 || self.rays_per_cluster == 0 {
            return invalid("clusters", "clusters and rays must be at least 1".into());
        }
        if !(self.angular_spread_deg >= 0.0 && self.angular_spread_deg.is_finite()) {
            return invalid("angular_spread_deg", format!("must be nonnegative, got {}", self.angular_spread_deg));
        }
        if !self.cluster_decay_db.is_finite() {
            return invalid("cluster_decay_db", "must be finite".into());
        }
        if self.resolved_pilots() > n {
            return Err(Error::PilotBudgetExceeded { pilots: self.resolved_pilots(), antennas: n });
        }
        if self.dft_oversampling == 0 || self.wavenumber_oversampling == 0 {
            return invalid("oversampling", "must be at least 1".into());
        }
        if !(self.polar_min_distance > 0.0 && self.polar_min_distance.is_finite()) {
            return invalid("polar_min_distance", format!("must be positive, got {}", self.polar_min_distance));
        }
        if self.feedback_len == 0 {
            return invalid("feedback_len", "must be at least 1".into());
        }
        if self.pipeline == Pipeline::Hybrid {
            let n_rf = self.resolved_n_rf();
            if n_rf < self.num_ues() || n_rf > n {
                return invalid("n_rf", format!("must lie in {}..={n}, got {n_rf}", self.num_ues()));
            }
            if self.feedback_len * self.num_ues() < n_rf && self.analog_selection == AnalogSelection::Global {
                log::debug!("fewer reported codewords than RF chains; unreported codewords fill by index");
            }
        }
        if self.uses_learned_codebook() {
            let atoms = self.resolved_ksvd_atoms();
            if self.ksvd_sparsity == 0 || self.ksvd_sparsity > atoms.min(n) {
                return invalid("ksvd_sparsity", format!("must lie in 1..={}", atoms.min(n)));
            }
            if self.ksvd_iters == 0 {
                return invalid("ksvd_iters", "must be at least 1".into());
            }
            if self.ksvd_threshold.is_nan() || self.ksvd_threshold < 0.0 {
                return invalid("ksvd_threshold", "must be nonnegative".into());
            }
            if self.training_samples == 0 {
                return invalid("training_samples", "must be at least 1".into());
            }
            if !self.training_snr_db.is_finite() {
                return invalid("training_snr_db", "must be finite".into());
            }
        }
        Ok(())
    }

    /// Renders every key; `parse` of the output reproduces the config.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let methods = self.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(", ");
        let lines = [
            ("name", self.name.clone()),
            ("pipeline", self.pipeline.as_str().into()),
            ("methods", methods),
            ("rows", self.rows.to_string()),
            ("cols", self.cols.to_string()),
            ("spacing", self.spacing.to_string()),
            ("wavelength", self.wavelength.to_string()),
            ("near_ues", self.near_ues.to_string()),
            ("far_ues", self.far_ues.to_string()),
            ("near_range", list(&[self.near_range.0, self.near_range.1])),
            ("far_range", list(&[self.far_range.0, self.far_range.1])),
            ("clusters", self.clusters.to_string()),
            ("rays_per_cluster", self.rays_per_cluster.to_string()),
            ("angular_spread_deg", self.angular_spread_deg.to_string()),
            ("cluster_decay_db", self.cluster_decay_db.to_string()),
            ("snr_db", list(&self.snr_db)),
            ("trials", self.trials.to_string()),
            ("workers", self.workers.to_string()),
            ("seed", self.seed.to_string()),
            ("estimation", self.estimation.to_string()),
            ("projection", self.projection.to_string()),
            ("pilots", self.pilots.to_string()),
            ("omp_max_atoms", self.omp_max_atoms.to_string()),
            ("dft_oversampling", self.dft_oversampling.to_string()),
            ("polar_rings", self.polar_rings.to_string()),
            ("polar_min_distance", self.polar_min_distance.to_string()),
            ("wavenumber_oversampling", self.wavenumber_oversampling.to_string()),
            ("evanescent", self.evanescent.to_string()),
            ("feedback_len", self.feedback_len.to_string()),
            ("n_rf", self.n_rf.to_string()),
            ("analog_selection", selection_str(self.analog_selection).into()),
            ("mmse_baseband", self.mmse_baseband.to_string()),
            ("ksvd_atoms", self.ksvd_atoms.to_string()),
            ("ksvd_sparsity", self.ksvd_sparsity.to_string()),
            ("ksvd_iters", self.ksvd_iters.to_string()),
            ("ksvd_threshold", self.ksvd_threshold.to_string()),
            ("training_samples", self.training_samples.to_string()),
            ("training_source", self.training_source.as_str().into()),
            ("training_snr_db", self.training_snr_db.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses a config file. Keys absent from the file keep the value of the
    /// preset named by an optional leading `preset = <name>` line (default
    /// `fig4a_sweep`); `desk = true` right after it applies the desk scaling.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Option<ScenarioConfig> = None;
        let mut seen_other = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| {
                Error::Config { line: line_no, reason: format!("expected `key = value`, got `{line}`") }
            })?;
            match key {
                "preset" => {
                    if cfg.is_some() || seen_other {
                        return Err(Error::Config { line: line_no, reason: "`preset` must come first".into() });
                    }
                    let name: PresetName =
                        value.parse().map_err(|e: Error| Error::Config { line: line_no, reason: e.to_string() })?;
                    cfg = Some(preset(name));
                }
                "desk" => {
                    if seen_other {
                        return Err(Error::Config { line: line_no, reason: "`desk` must precede other keys".into() });
                    }
                    let on: bool = parse_value(line_no, key, value)?;
                    let base = cfg.take().unwrap_or_default();
                    cfg = Some(if on { base.desk() } else { base });
                }
                _ => {
                    seen_other = true;
                    let c = cfg.get_or_insert_with(ScenarioConfig::default);
                    c.set(line_no, key, value)?;
                }
            }
        }
        Ok(cfg.unwrap_or_default())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => {
                if value.is_empty() || value.contains(',') {
                    return Err(Error::Config { line, reason: "name must be nonempty without commas".into() });
                }
                self.name = value.to_string();
            }
            "pipeline" => self.pipeline = parse_value(line, key, value)?,
            "methods" => self.methods = parse_list(line, key, value)?,
            "rows" => self.rows = parse_value(line, key, value)?,
            "cols" => self.cols = parse_value(line, key, value)?,
            "spacing" => self.spacing = parse_value(line, key, value)?,
            "wavelength" => self.wavelength = parse_value(line, key, value)?,
            "near_ues" => self.near_ues = parse_value(line, key, value)?,
            "far_ues" => self.far_ues = parse_value(line, key, value)?,
            "near_range" => self.near_range = parse_pair(line, key, value)?,
            "far_range" => self.far_range = parse_pair(line, key, value)?,
            "clusters" => self.clusters = parse_value(line, key, value)?,
            "rays_per_cluster" => self.rays_per_cluster = parse_value(line, key, value)?,
            "angular_spread_deg" => self.angular_spread_deg = parse_value(line, key, value)?,
            "cluster_decay_db" => self.cluster_decay_db = parse_value(line, key, value)?,
            "snr_db" => self.snr_db = parse_list(line, key, value)?,
            "trials" => self.trials = parse_value(line, key, value)?,
            "workers" => self.workers = parse_value(line, key, value)?,
            "seed" => self.seed = parse_value(line, key, value)?,
            "estimation" => self.estimation = parse_value(line, key, value)?,
            "projection" => self.projection = parse_value(line, key, value)?,
            "pilots" => self.pilots = parse_value(line, key, value)?,
            "omp_max_atoms" => self.omp_max_atoms = parse_value(line, key, value)?,
            "dft_oversampling" => self.dft_oversampling = parse_value(line, key, value)?,
            "polar_rings" => self.polar_rings = parse_value(line, key, value)?,
            "polar_min_distance" => self.polar_min_distance = parse_value(line, key, value)?,
            "wavenumber_oversampling" => self.wavenumber_oversampling = parse_value(line, key, value)?,
            "evanescent" => self.evanescent = parse_value(line, key, value)?,
            "feedback_len" => self.feedback_len = parse_value(line, key, value)?,
            "n_rf" => self.n_rf = parse_value(line, key, value)?,
            "analog_selection" => {
                self.analog_selection = parse_selection(value).map_err(|reason| Error::Config { line, reason })?
            }
            "mmse_baseband" => self.mmse_baseband = parse_value(line, key, value)?,
            "ksvd_atoms" => self.ksvd_atoms = parse_value(line, key, value)?,
            "ksvd_sparsity" => self.ksvd_sparsity = parse_value(line, key, value)?,
            "ksvd_iters" => self.ksvd_iters = parse_value(line, key, value)?,
            "ksvd_threshold" => self.ksvd_threshold = parse_value(line, key, value)?,
            "training_samples" => self.training_samples = parse_value(line, key, value)?,
            "training_source" => self.training_source = parse_value(line, key, value)?,
            "training_snr_db" => self.training_snr_db = parse_value(line, key, value)?,
            _ => return Err(Error::Config { line, reason: format!("unknown key `{key}`") }),
        }
        Ok(())
    }
}

fn parse_value<T>(line: usize, key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Config { line, reason: format!("`{key}`: {e}") })
}

fn parse_list<T>(line: usize, key: &str, value: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(line, key, v.trim())).collect()
}

fn parse_pair(line: usize, key: &str, value: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(line, key, value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config { line, reason: format!("`{key}` needs two comma-separated numbers") }),
    }
}
