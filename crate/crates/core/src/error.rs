use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// A scenario, sweep or parameter set failed validation.
    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("unknown scenario: {0}")]
    UnknownScenario(String),

    /// A configuration file or override could not be parsed.
    #[error("config parse error: {0}")]
    Config(String),

    /// A trace file could not be read back.
    #[error("malformed trace {file} at row {row}: {reason}")]
    MalformedTrace {
        file: String,
        row: usize,
        reason: String,
    },

    #[error("no samples in window [{from_ms} ms, {to_ms} ms]")]
    EmptyWindow { from_ms: f64, to_ms: f64 },

    #[error("harm is undefined: solo goodput is zero")]
    ZeroSoloGoodput,

    #[error("sweep has {size} cells, exceeding the cap of {cap}")]
    SweepTooLarge { size: usize, cap: usize },

    /// A rule was invoked outside its precondition.
    #[error("misuse: {0}")]
    Misuse(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Stable machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Validation(_) => "validation",
            LabError::UnknownScenario(_) => "unknown-scenario",
            LabError::Config(_) => "config",
            LabError::MalformedTrace { .. } => "malformed-trace",
            LabError::EmptyWindow { .. } => "empty-window",
            LabError::ZeroSoloGoodput => "zero-solo-goodput",
            LabError::SweepTooLarge { .. } => "sweep-too-large",
            LabError::Misuse(_) => "misuse",
            LabError::Io(_) => "io",
        }
    }

    /// True for errors caused by bad input rather than a runtime fault.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, LabError::Io(_) | LabError::Misuse(_))
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
