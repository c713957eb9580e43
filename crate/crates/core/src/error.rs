use thiserror::Error;

/// Errors produced by the model, estimators and analytics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter is invalid or unsupported.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A requested moment of the size distribution is infinite.
    #[error("divergent moment: E(l^{exponent}) is infinite for tail exponent {gamma}")]
    Divergent { exponent: f64, gamma: f64 },

    /// The root-finding bracket does not contain a sign change.
    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    Bracket { a: f64, b: f64, fa: f64, fb: f64 },

    /// A lookup fell outside the range covered by a table or book.
    #[error("out of range: {0}")]
    Range(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
