use std::fmt;

/// Failure of a CLI command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("no viable model for subset {subset}: all {trials} trials failed")]
    NoModel { subset: usize, trials: usize },
    #[error("report error: {0}")]
    Report(String),
    #[error(transparent)]
    Core(#[from] dmkrr_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoModel { .. } => 2,
            CliError::Core(dmkrr_core::Error::NoViableModel { .. }) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) if is_data_error(e) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }
}

fn is_data_error(e: &dmkrr_core::Error) -> bool {
    use dmkrr_core::Error as E;
    matches!(
        e,
        E::Format(_) | E::Io(_) | E::BlowUp { .. } | E::NonFinite { .. } | E::Domain(_)
    )
}
