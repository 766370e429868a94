use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] graphseq_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        source: Box<EvalError>,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

impl EvalError {
    pub fn context(self, context: impl Into<String>) -> Self {
        EvalError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::Core(_) => "model",
            EvalError::Io { .. } => "io",
            EvalError::Parse { .. } => "parse",
            EvalError::Json { .. } => "json",
            EvalError::Config(_) => "config",
            EvalError::Context { source, .. } => source.kind(),
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some((path, line)) = self.location() {
            v["path"] = json!(path);
            v["line"] = json!(line);
        }
        v
    }

    fn location(&self) -> Option<(String, usize)> {
        match self {
            EvalError::Parse { path, line, .. } => Some((path.display().to_string(), *line)),
            EvalError::Context { source, .. } => source.location(),
            _ => None,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T, E: Into<EvalError>> Context<T> for std::result::Result<T, E> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.into().context(context()))
    }
}
