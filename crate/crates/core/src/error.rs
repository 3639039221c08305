use alloc::string::String;

/// Errors produced by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The network produced a non-finite value. `param_index` points at the first
    /// non-finite parameter, or at the largest-magnitude one when all are finite.
    #[error("numeric overflow: non-finite network output (suspect parameter {param_index})")]
    NumericOverflow { param_index: usize },

    #[error("target has no gradient but the kernel requires one")]
    GradientUnavailable,

    #[error("target has no Gaussian prior but the kernel requires one")]
    PriorUnavailable,

    #[error("chain aborted at step {step}: {reason}")]
    ChainAborted { step: usize, reason: String },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("non-finite value at draw {draw}")]
    NonFiniteDraw { draw: usize },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: alloc::boxed::Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn ensure_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
