use thiserror::Error;

/// Errors produced by the simulator and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RpelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite model at round {round}, node {node}")]
    NonFinite { round: usize, node: usize },

    #[error("no grid value satisfies kappa <= {q}: {}", format_kappa_table(.table))]
    InfeasibleGrid { q: f64, table: Vec<(usize, usize, f64)> },

    #[error("graph is not connected")]
    Disconnected,
}

fn format_kappa_table(table: &[(usize, usize, f64)]) -> String {
    table
        .iter()
        .map(|(s, b_hat, kappa)| format!("s={s} b_hat={b_hat} kappa={kappa:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = RpelError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> RpelError {
    RpelError::InvalidArgument(msg.into())
}
