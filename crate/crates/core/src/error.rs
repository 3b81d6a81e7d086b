use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("combiner is undefined for an all-zero channel vector")]
    ZeroChannel,

    #[error("channel {channel} in cell {cell} is used by more than one user")]
    Orthogonality { cell: usize, channel: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("fidelity fit stopped at mse {mse:.3e} after {epochs} epochs (target {target:.1e})")]
    FitNotConverged { mse: f64, target: f64, epochs: usize },

    #[error("symbol budget {k} outside [{min}, {max}]")]
    BudgetOutOfRange { k: f64, min: f64, max: f64 },

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("no rate supplied for group member {0}")]
    MissingMember(usize),

    #[error("matching did not converge within {cap} swaps")]
    NonConvergence { cap: u64 },

    #[error("cell {cell} iteration {iteration}: {searches} searches exceed bound {bound}")]
    ComplexityBound {
        cell: usize,
        iteration: usize,
        searches: u64,
        bound: u64,
    },

    #[error("constraint audit failed: {0}")]
    Audit(String),

    #[error("malformed fidelity table: {0}")]
    Table(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
