use hedge_core::dual::DualError;
use hedge_core::lp::LpError;
use hedge_core::primal::PrimalError;
use hedge_core::tree::TreeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input document.
    #[error("{0}")]
    Schema(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) | CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<LpError> for CliError {
    fn from(e: LpError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<DualError> for CliError {
    fn from(e: DualError) -> Self {
        match e {
            DualError::Tree(t) => t.into(),
            DualError::BoundsOutOfOrder { .. } | DualError::InvalidPart { .. } | DualError::InvalidWeights(_) => {
                CliError::Schema(e.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<PrimalError> for CliError {
    fn from(e: PrimalError) -> Self {
        match e {
            PrimalError::Tree(t) => t.into(),
            PrimalError::Dual(d) => d.into(),
            other => CliError::Solver(other.to_string()),
        }
    }
}
