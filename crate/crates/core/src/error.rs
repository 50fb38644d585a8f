//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scores")]
    EmptyScores,

    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },

    #[error("alpha must be > 1, got {value}")]
    InvalidAlpha { value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("page index {page} out of range (cache has {pages} pages)")]
    PageOutOfRange { page: usize, pages: usize },

    #[error("token index {token} out of range (cache has {tokens} tokens)")]
    TokenOutOfRange { token: usize, tokens: usize },

    #[error(
        "threshold solve did not converge: residual {residual:e} after {iterations} iterations"
    )]
    Convergence { residual: f64, iterations: usize },

    #[error("bracket failure: mass {lo_mass} at lower endpoint, {hi_mass} at upper endpoint")]
    BracketFailure { lo_mass: f64, hi_mass: f64 },

    #[error("no closed form for alpha = {alpha} (supported: 4/3, 3/2, 2)")]
    NoClosedForm { alpha: f64 },

    #[error("page-maximum confidence must lie in (0, 1), got {q}")]
    InvalidConfidence { q: f64 },

    #[error("selection budget must be at least 1")]
    InvalidBudget,

    #[error("empty selection")]
    EmptySelection,

    #[error("empty cache")]
    EmptyCache,

    #[error("degenerate truncation: kept set carries zero mass")]
    DegenerateTruncation,

    #[error("transform mismatch: full pass used {full}, sparse pass used {sparse}")]
    TransformMismatch { full: String, sparse: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid cache file: {reason}")]
    InvalidCacheFile { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
