use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operands live on different grids")]
    GridMismatch,

    /// `Re d(2πik)·t` is large enough that `e^{d t}` overflows.
    #[error("inadmissible symbol: growth exponent {exponent:.3e} at k = {k} exceeds the overflow guard")]
    InadmissibleSymbol { k: f64, exponent: f64 },

    /// The flow has left the canonical coordinate patch: `Q = id + Q'` is no
    /// longer safely invertible.
    #[error("coordinate patch breakdown at t = {t:?}: |det2| = {det2_abs:.3e}, rcond = {rcond:.3e}")]
    PatchBreakdown {
        t: Option<f64>,
        det2_abs: f64,
        rcond: f64,
    },

    /// A per-mode denominator `1 + Î(k,t)ĝ₀(k)` vanishes before the requested time.
    #[error("pole crossing in mode k = {k} at t ≈ {t_critical:.6} (requested t = {t_requested})")]
    PoleCrossing {
        k: f64,
        t_critical: f64,
        t_requested: f64,
    },

    /// The state of a time integration became non-finite or exceeded the
    /// magnitude cap.
    #[error("blow-up: last good state at t = {t_last_good}, blow-up time estimate {t_estimate}")]
    BlowUp { t_last_good: f64, t_estimate: f64 },

    /// Norm growth beyond the instability guard.
    #[error("instability at t = {t}: norm grew by a factor {growth:.3e}")]
    Instability { t: f64, growth: f64 },

    #[error("non-positive Cole-Hopf denominator q = {value:.3e} at x = {x}")]
    NonPositiveQ { x: f64, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
