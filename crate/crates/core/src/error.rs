use alloc::string::String;
use core::fmt;

/// Failure classes shared by every solver.
///
/// The variants are coarse on purpose: the command line maps them onto exit
/// codes, and the message carries the detail.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input outside the documented domain (non-finite, wrong sign, ...).
    Domain(String),
    /// B − ½|U|² ≤ 0: no positive density exists.
    Vacuum { enthalpy: f64 },
    /// A right-hand side guard fired.
    Singular { guard: &'static str, value: f64 },
    /// A root finder could not bracket or converge.
    Bracket { a: f64, b: f64, fa: f64, fb: f64 },
    /// An iterative solver stopped without meeting its tolerance.
    NoConvergence(String),
    /// A mathematical invariant that must hold was violated.
    Invariant(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// True for failures of a checked property rather than of the numerics.
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Vacuum { enthalpy } => {
                write!(f, "vacuum: B - |U|^2/2 = {enthalpy:e} is not positive")
            }
            Error::Singular { guard, value } => {
                write!(f, "singular right-hand side: {guard} = {value:e}")
            }
            Error::Bracket { a, b, fa, fb } => write!(
                f,
                "root not bracketed on [{a}, {b}]: f(a) = {fa:e}, f(b) = {fb:e}"
            ),
            Error::NoConvergence(m) => write!(f, "no convergence: {m}"),
            Error::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl core::error::Error for Error {}
