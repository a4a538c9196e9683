use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PIPELINE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] binscene_core::Error),

    #[error(transparent)]
    Sep(#[from] binscene_sep::Error),

    /// Bad flags or config values not covered by a library validator.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),
}

fn core_code(e: &binscene_core::Error) -> i32 {
    use binscene_core::Error as E;
    match e {
        E::Config { .. } => EXIT_CONFIG,
        E::PartialDataset { cause, .. } => core_code(cause),
        e if e.is_io() => EXIT_IO,
        _ => EXIT_PIPELINE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use binscene_sep::Error as S;
        match self {
            CliError::Core(e) => core_code(e),
            CliError::Sep(S::Core(e)) => core_code(e),
            CliError::Sep(S::Config(_)) => EXIT_CONFIG,
            CliError::Sep(S::Io { .. } | S::Checkpoint { .. }) => EXIT_IO,
            CliError::Sep(_) => EXIT_PIPELINE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Pipeline(_) => EXIT_PIPELINE,
        }
    }
}

pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Core(binscene_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub(crate) fn json(path: &std::path::Path, e: serde_json::Error) -> CliError {
    CliError::Core(binscene_core::Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
