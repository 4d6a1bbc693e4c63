use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pathlasso::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid settings: {0}")]
    Settings(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn settings(msg: impl Into<String>) -> Self {
        CliError::Settings(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use pathlasso::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::Shape(_) => "shape",
                E::Numeric(_) => "numeric",
                E::Capacity(_) => "capacity",
                E::Config(_) => "config",
                E::UndefinedMetric(_) => "undefined_metric",
                E::Parse { .. } => "parse",
                E::Input(_) => "input",
                E::Training { .. } | E::Step { .. } => "training",
                E::Io(_) => "io",
                E::Json(_) => "json",
            },
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::Settings(_) => "settings",
            CliError::Csv(_) => "csv",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut detail = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(pathlasso::Error::Training { stage, epoch, .. }) = self {
            detail["stage"] = json!(stage);
            detail["epoch"] = json!(epoch);
        }
        json!({ "error": detail })
    }
}
