//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// An intensity evaluation returned a non-finite value.
    #[error("intensity evaluation returned a non-finite value at delta = {delta}")]
    Evaluation { delta: f64 },

    /// No sign change could be bracketed for the first-order condition of
    /// the Hamiltonian maximizer. Signals a pathological custom intensity.
    #[error("could not bracket the quote maximizer for p = {p} after {expansions} bracket expansions")]
    Bracketing { p: f64, expansions: u32 },

    /// `H_ξ''(0) <= 0`: the asymptotic approximations are undefined.
    #[error("H''(0) = {value} is not positive; closed-form approximations are undefined for this intensity")]
    Curvature { value: f64 },

    /// Newton failed to reduce the implicit-step residual below tolerance.
    #[error("Newton did not converge at t = {t} (residual {residual:.3e} after {iterations} iterations); try a smaller dt")]
    NewtonConvergence { t: f64, residual: f64, iterations: u32 },

    /// The exact linear-system oracle only covers exponential intensities
    /// with a common decay rate.
    #[error("unsupported model for the exponential oracle: {reason}")]
    UnsupportedModel { reason: String },

    /// A requested point is off the solved grid.
    #[error("point off the solved grid: {what}")]
    Domain { what: String },

    /// A caller broke an API contract (model/ξ mismatch, asymmetric matrix, ...).
    #[error("contract violation: {what}")]
    Contract { what: String },

    /// Tensor grid larger than the configured node cap.
    #[error("inventory grid has {nodes} nodes, above the cap of {cap}; use the closed-form approximations for problems of this size")]
    GridTooLarge { nodes: usize, cap: usize },

    /// Invalid problem or simulation configuration.
    #[error("invalid configuration: {what}")]
    Config { what: String },

    /// Calibration data cannot identify the parameters.
    #[error("unidentifiable calibration data: {what}")]
    Identifiability { what: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (CSV observations, ...).
    #[error("parse error at line {line}: {what}")]
    Parse { line: usize, what: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;
