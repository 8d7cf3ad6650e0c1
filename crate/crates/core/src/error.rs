use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which side of the table a margin belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Col,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Col => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("margin sums differ: rows sum to {rows}, columns sum to {cols}")]
    MarginSumMismatch { rows: u64, cols: u64 },
    #[error("{axis} margin {index} must be a positive integer")]
    NonPositiveMargin { axis: Axis, index: usize },
    #[error("margins must be non-empty")]
    EmptyMargins,
    #[error("weight at ({row}, {col}) is {value}; weights must be finite and non-negative")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("enumeration budget of {budget} nodes exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("matrix order {order} exceeds the permanent cap of {cap}")]
    PermanentCap { order: usize, cap: usize },
    #[error("matrix entry at ({row}, {col}) is {value}; scaling requires strictly positive entries")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },
    #[error("scaling did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("minimization stalled after {iterations} iterations (gradient norm {gradient_norm:e})")]
    OptimizerStall { iterations: usize, gradient_norm: f64 },
    #[error("epsilon {0} must lie strictly between 0 and 1")]
    EpsilonOutOfRange(f64),
    #[error("delta {delta} must lie strictly between 0 and 1/{dim}")]
    DeltaOutOfRange { delta: f64, dim: usize },
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("vertex excesses sum to {0}, expected 0")]
    ExcessSum(i64),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("neither computation route is feasible: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 input, 3 precondition, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MarginSumMismatch { .. }
            | Error::NonPositiveMargin { .. }
            | Error::EmptyMargins
            | Error::InvalidWeight { .. }
            | Error::DimensionMismatch { .. }
            | Error::ExcessSum(_)
            | Error::InvalidGraph(_)
            | Error::InvalidConfig(_)
            | Error::Parse(_)
            | Error::Io(_) => 2,
            Error::BudgetExceeded { .. }
            | Error::PermanentCap { .. }
            | Error::NonPositiveEntry { .. }
            | Error::EpsilonOutOfRange(_)
            | Error::DeltaOutOfRange { .. }
            | Error::CyclicGraph
            | Error::Infeasible(_) => 3,
            Error::NonConvergence { .. } | Error::OptimizerStall { .. } | Error::Sampler(_) => 4,
        }
    }

    /// Short machine-readable tag used in JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MarginSumMismatch { .. } => "margin_sum_mismatch",
            Error::NonPositiveMargin { .. } => "non_positive_margin",
            Error::EmptyMargins => "empty_margins",
            Error::InvalidWeight { .. } => "invalid_weight",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::PermanentCap { .. } => "permanent_cap",
            Error::NonPositiveEntry { .. } => "non_positive_entry",
            Error::NonConvergence { .. } => "non_convergence",
            Error::OptimizerStall { .. } => "optimizer_stall",
            Error::EpsilonOutOfRange(_) => "epsilon_out_of_range",
            Error::DeltaOutOfRange { .. } => "delta_out_of_range",
            Error::CyclicGraph => "cyclic_graph",
            Error::ExcessSum(_) => "excess_sum",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Sampler(_) => "sampler",
            Error::Infeasible(_) => "infeasible",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
