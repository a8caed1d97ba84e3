use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the laboratory can report. The kebab-case prefix of each
/// message is the stable error code returned by [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-threshold: threshold {0} is negative")]
    EmptyThreshold(f64),
    #[error("invalid-matrix: {0}")]
    InvalidMatrix(String),
    #[error("untrusted-window: lambda {lambda} exceeds the maximal admissible value {limit}")]
    UntrustedWindow { lambda: f64, limit: f64 },
    #[error("bad-window: window width {0} must be positive")]
    BadWindow(f64),
    #[error("incompatible-operators: {0}")]
    IncompatibleOperators(String),
    #[error("f-domain: function value is not finite at {0}")]
    FDomain(f64),
    #[error("not-positive: {0}")]
    NotPositive(String),
    #[error("under-resolved-symbol: Fourier tail {tail:e} exceeds cutoff {cutoff:e}")]
    UnderResolvedSymbol { tail: f64, cutoff: f64 },
    #[error("n-range: {0}")]
    NRange(String),
    #[error("incompatible-symbols: {0}")]
    IncompatibleSymbols(String),
    #[error("empty-projection: no eigenvalues in (0, {0}]")]
    EmptyProjection(f64),
    #[error("bad-kappa: {0} is outside (0, 1)")]
    BadKappa(f64),
    #[error("insufficient-margin: {0}")]
    InsufficientMargin(String),
    #[error("divergent-kernel: kernel exponent {0} must be positive")]
    DivergentKernel(f64),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("not-trace-class: m*k = {mk} must exceed d = {d}")]
    NotTraceClass { mk: f64, d: usize },
    #[error("no-convergence: {0}")]
    NoConvergence(String),
    #[error("invalid-config: field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyThreshold(_) => "empty-threshold",
            Error::InvalidMatrix(_) => "invalid-matrix",
            Error::UntrustedWindow { .. } => "untrusted-window",
            Error::BadWindow(_) => "bad-window",
            Error::IncompatibleOperators(_) => "incompatible-operators",
            Error::FDomain(_) => "f-domain",
            Error::NotPositive(_) => "not-positive",
            Error::UnderResolvedSymbol { .. } => "under-resolved-symbol",
            Error::NRange(_) => "n-range",
            Error::IncompatibleSymbols(_) => "incompatible-symbols",
            Error::EmptyProjection(_) => "empty-projection",
            Error::BadKappa(_) => "bad-kappa",
            Error::InsufficientMargin(_) => "insufficient-margin",
            Error::DivergentKernel(_) => "divergent-kernel",
            Error::Degenerate(_) => "degenerate",
            Error::NotTraceClass { .. } => "not-trace-class",
            Error::NoConvergence(_) => "no-convergence",
            Error::InvalidConfig { .. } => "invalid-config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that fails while computing or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. } | Error::UntrustedWindow { .. } => 1,
            _ => 2,
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
