use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: no such file or directory", .0.display())]
    MissingInput(std::path::PathBuf),

    #[error("{0}")]
    Exists(String),

    #[error("{0}")]
    HashMismatch(String),

    #[error("{0}")]
    Incomplete(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] vmfd::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(vmfd::Error::Io(e))
    }
}

impl CliError {
    /// Stable tag printed as `error[<kind>]`.
    pub fn kind(&self) -> &'static str {
        use vmfd::Error as E;
        match self {
            Self::Usage(_) => "usage",
            Self::MissingInput(_) => "missing-input",
            Self::Exists(_) => "exists",
            Self::HashMismatch(_) => "hash-mismatch",
            Self::Incomplete(_) => "incomplete",
            Self::Json(_) => "format",
            Self::Core(e) => match e {
                E::Domain(_) => "domain",
                E::DimensionMismatch { .. } => "dimension",
                E::DegenerateStatistics(_) => "degenerate-statistics",
                E::DegenerateEmbedding { .. } => "degenerate-embedding",
                E::InvalidCamera(_) => "camera",
                E::InvalidConfig(_) => "config",
                E::MissingField(_) => "missing-field",
                E::NonFiniteGradient(_) => "non-finite",
                E::Format(_) => "format",
                E::Truncated(_) => "truncated",
                E::Version { .. } => "version",
                E::Io(_) => "io",
            },
        }
    }

    /// 2 for bad invocations, configs and missing inputs; 1 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        use vmfd::Error as E;
        match self {
            Self::Usage(_) | Self::MissingInput(_) | Self::Exists(_) | Self::Incomplete(_) => 2,
            Self::Core(E::InvalidConfig(_) | E::MissingField(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads an input file, reporting a missing one as such.
pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
        _ => e.into(),
    })
}
