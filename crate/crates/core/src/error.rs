use thiserror::Error;

pub type Result<T> = std::result::Result<T, KunnError>;

#[derive(Debug, Error)]
pub enum KunnError {
    #[error("shape mismatch at {node}: {detail}")]
    Shape { node: String, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward called before forward")]
    NotEvaluated,

    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed KTEN file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KunnError {
    pub(crate) fn shape(node: impl Into<String>, detail: impl Into<String>) -> Self {
        KunnError::Shape {
            node: node.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KunnError::InvalidArgument(msg.into())
    }

    /// True for failures that stem from numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KunnError::NonFinite(_) | KunnError::NoConvergence { .. } | KunnError::Diverged { .. }
        )
    }
}
