use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of its allowed domain.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("room is acoustically infeasible: absorption {absorption:.4} >= 1")]
    InfeasibleRoom { absorption: f64 },

    #[error("HRIR pack at {path} is incomplete, missing azimuths: {}", format_azimuths(.missing))]
    PackIncomplete { path: PathBuf, missing: Vec<i32> },

    #[error("BRIR bank has no entry for azimuth {0}")]
    MissingAzimuth(i32),

    #[error("speaker `{0}` appears in more than one split")]
    SpeakerOverlap(String),

    #[error("utterance pool exhausted: {0}")]
    PoolExhausted(String),

    #[error("dataset generation stopped early ({completed} scenes written), resume from {resume_token}")]
    PartialDataset {
        completed: usize,
        resume_token: String,
        #[source]
        cause: Box<Error>,
    },

    #[error("signal is silent, no direction estimate possible")]
    SilentSignal,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn format_azimuths(az: &[i32]) -> String {
    az.iter()
        .map(|a| format!("{a:+}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem or file formats rather than of
    /// the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Wav { .. } | Error::Json { .. } | Error::Csv { .. }
        )
    }
}
