//! Error type shared by all computation modules.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A rate that must be strictly positive was zero or negative.
    NonpositiveRate { what: &'static str, value: f64 },
    /// A Brownian variance entry was negative.
    NegativeVariance { level: usize, value: f64 },
    /// A non-default loss stream was declared without its loss law.
    MissingNondefaultLoss,
    /// A caller-supplied argument was outside the documented domain.
    InvalidArgument(String),
    /// A bracketing root search could not find a sign change.
    Bracketing {
        what: &'static str,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    /// An iterative scheme failed to reach its tolerance.
    NonConvergent { what: &'static str, detail: String },
    /// The rarity condition does not hold; carries the (negative) margin.
    RarityViolated { margin: f64 },
    /// Net-profit-type condition violated (no positive Lundberg root).
    NetProfitViolated(String),
    /// A multi-group lattice exceeded the configured cell cap.
    LatticeTooLarge { cells: usize, cap: usize },
    /// The requested method does not apply to this model.
    Inapplicable(String),
    /// Evaluation was requested at (or too close to) a genuine pole.
    PoleEvaluation { at: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonpositiveRate { what, value } => {
                write!(f, "nonpositive rate: {what} = {value}")
            }
            Error::NegativeVariance { level, value } => {
                write!(f, "negative variance at level {level}: {value}")
            }
            Error::MissingNondefaultLoss => {
                write!(f, "non-default stream declared without a loss law")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Bracketing {
                what,
                lo,
                hi,
                f_lo,
                f_hi,
            } => write!(
                f,
                "bracketing failed for {what}: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
            ),
            Error::NonConvergent { what, detail } => {
                write!(f, "{what} did not converge: {detail}")
            }
            Error::RarityViolated { margin } => {
                write!(f, "rarity condition violated (margin {margin})")
            }
            Error::NetProfitViolated(msg) => write!(f, "net-profit condition violated: {msg}"),
            Error::LatticeTooLarge { cells, cap } => {
                write!(f, "lattice of {cells} cells exceeds cap of {cap}")
            }
            Error::Inapplicable(msg) => write!(f, "method not applicable: {msg}"),
            Error::PoleEvaluation { at } => write!(f, "evaluation at a pole near {at}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
