use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside an operation's domain (bad sizes, bad parameters, malformed config).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Operator fails the `sigma_min > 1e-10 * sigma_max` rank test.
    #[error("singular operator: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    SingularOperator { sigma_min: f64, sigma_max: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("training diverged at epoch {epoch} (loss = {loss:e})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularOperator { .. }
                | Error::NoConvergence(_)
                | Error::Divergence { .. }
                | Error::Experiment(_)
        )
    }
}
