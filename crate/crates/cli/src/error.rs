use thiserror::Error;

use riccati_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] CoreError),

    #[error("oracle disagreement: error {error:.3e} at t = {t} exceeds tolerance {tolerance:.3e}")]
    OracleDisagreement { t: f64, error: f64, tolerance: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(e) => match e {
                CoreError::PatchBreakdown { .. } | CoreError::PoleCrossing { .. } => 3,
                CoreError::Instability { .. }
                | CoreError::BlowUp { .. }
                | CoreError::InadmissibleSymbol { .. } => 4,
                CoreError::InvalidGrid(_)
                | CoreError::InvalidInput(_)
                | CoreError::GridMismatch
                | CoreError::NonPositiveQ { .. }
                | CoreError::Unsupported(_) => 2,
            },
            CliError::OracleDisagreement { .. } => 5,
            CliError::Io { .. } => 1,
        }
    }

    /// Short status label used in reports.
    pub fn status(&self) -> &'static str {
        if let CliError::Solver(CoreError::PoleCrossing { .. }) = self {
            return "pole_crossing";
        }
        match self.exit_code() {
            2 => "invalid",
            3 => "breakdown",
            4 => "instability",
            5 => "oracle_disagreement",
            _ => "io_error",
        }
    }
}
