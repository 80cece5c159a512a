use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("probability `{name}` = {value} must lie strictly inside (0, 1)")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("incompatible decorrelation probabilities: {0}")]
    IncompatibleProbabilities(String),

    #[error("length mismatch for `{what}`: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("training subset is empty")]
    EmptySubset,

    #[error("degenerate assignment: realized count `{0}` is zero")]
    DegenerateAssignment(&'static str),

    #[error("information barrier violated: {0}")]
    InformationBarrier(String),

    #[error("solver did not converge after {iterations} iterations (last objective {objective})")]
    NonConvergence { iterations: usize, objective: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no fixed point in bracket [{lo}, {hi}]; trace: {trace}")]
    NoRoot { lo: f64, hi: f64, trace: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidProbability { .. } | Error::IncompatibleProbabilities(_) => 2,
            Error::Data(_) | Error::LengthMismatch { .. } | Error::InvalidInput(_) | Error::EmptySubset => 3,
            Error::DegenerateAssignment(_)
            | Error::InformationBarrier(_)
            | Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::NoRoot { .. } => 4,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { what, expected, got });
    }
    Ok(())
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::InvalidProbability { name, value });
    }
    Ok(())
}
