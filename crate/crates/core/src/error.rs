use thiserror::Error;

use crate::history::ConvergenceHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system (pivot-ratio condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("relative solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("diagnostic disabled: {0}")]
    DiagnosticDisabled(String),

    #[error("not converged after {} iterations (last |dk| = {:.3e})", .history.iterations(), .history.last_delta())]
    NotConverged { history: Box<ConvergenceHistory> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, written to error records by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Domain(_) => "domain",
            Error::Dimension(_) => "dimension",
            Error::Singular { .. } => "singular",
            Error::Residual { .. } => "residual",
            Error::Degenerate(_) => "degenerate",
            Error::RankDeficient(_) => "rank_deficient",
            Error::Contract(_) => "contract",
            Error::Measurement(_) => "measurement",
            Error::DiagnosticDisabled(_) => "diagnostic_disabled",
            Error::NotConverged { .. } => "not_converged",
            Error::Io(_) => "io",
        }
    }
}
