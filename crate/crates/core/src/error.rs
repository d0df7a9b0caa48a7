use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("source point lies on array element {element}")]
    SourceOnArray { element: usize },

    #[error("radial bounds ({lo}, {hi}) m are inconsistent with the {region} region (Rayleigh distance {rayleigh} m)")]
    InconsistentBounds { lo: f64, hi: f64, region: &'static str, rayleigh: f64 },

    #[error("pilot count {pilots} exceeds the number of antennas {antennas}")]
    PilotBudgetExceeded { pilots: usize, antennas: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("pursuit made no progress: all correlations vanished before any atom was selected")]
    NoProgress,

    #[error("index {index} out of range for dictionary with {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("feedback from UE {ue} exhausted by codeword collisions")]
    InsufficientFeedback { ue: usize },

    #[error("effective channel is rank deficient (condition ratio {ratio:e})")]
    RankDeficientEffectiveChannel { ratio: f64 },

    #[error("channel matrix is singular (condition ratio {ratio:e})")]
    SingularChannel { ratio: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from user configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::NonPositiveParameter { .. }
            | Error::InvalidParameter { .. }
            | Error::InconsistentBounds { .. }
            | Error::PilotBudgetExceeded { .. }
            | Error::UnknownPreset(_)
            | Error::Config { .. }
            | Error::Format(_) => true,
            Error::Trial { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
