use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("search space size overflows u64: {base}^{exponent}")]
    Overflow { base: u64, exponent: u32 },

    #[error("invalid operation: {0}")]
    InvalidOp(String),

    #[error("parse error at position {position}: {reason} (token `{token}`)")]
    Parse {
        token: String,
        position: usize,
        reason: String,
    },

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("range out of bounds: offset {offset} + limit {limit} > {size}")]
    OutOfRange { offset: u64, limit: u64, size: u64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid training data: {0}")]
    Data(String),

    #[error("non-finite training loss at step {step} for {arch}: {loss}")]
    Diverged { step: u64, arch: String, loss: f64 },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_phase(self, phase: &'static str) -> Error {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}
