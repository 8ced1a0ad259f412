use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("model blow-up: non-finite state at time {time}")]
    ModelBlowUp { time: usize },
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("kernel underflow in transport solver; increase epsilon (currently {epsilon})")]
    KernelUnderflow { epsilon: f64 },
    #[error("inconsistent coupling inputs: {0}")]
    Inconsistent(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("not enough data: {0}")]
    NotEnoughData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
