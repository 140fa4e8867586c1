use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] multichannel::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn kind(&self) -> &'static str {
        use multichannel::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Internal(_) => "internal",
            CliError::Core(e) => match e {
                E::Io { .. } => "io",
                E::Infeasible(_) => "infeasible",
                E::StepLimit(_) | E::ZeroAggregate => "internal",
                _ => "config",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" => 2,
            "io" => 3,
            "infeasible" => 4,
            _ => 5,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind(),
                "code": self.exit_code(),
                "message": self.to_string(),
            }
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
