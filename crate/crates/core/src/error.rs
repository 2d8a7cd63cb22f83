use crate::lm::{LmError, TokenId};

/// Failures of the steganographic coders.
#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error(transparent)]
    Provider(#[from] LmError),
    #[error("message must be non-empty")]
    EmptyMessage,
    #[error("message of {0} bits does not fit the 32-bit length header")]
    MessageTooLong(usize),
    #[error("precision must be in 16..=30 bits, got {0}")]
    InvalidPrecision(u32),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("interval of width {width} cannot give {tokens} tokens one unit each; raise the precision or lower K")]
    IntervalExhausted { width: u64, tokens: usize },
    #[error("token {token} outside truncated support at step {step}")]
    TokenOutsideSupport { step: usize, token: TokenId },
    #[error("bin {bin} has no candidate token at step {step}")]
    EmptyBin { step: usize, bin: u32 },
    #[error("cover ends early: recovered {recovered} bits, the length header needs {needed}")]
    Truncated { recovered: usize, needed: usize },
    #[error("cover continues past the end of the message at step {step}")]
    TrailingTokens { step: usize },
    #[error("{0} consecutive steps failed the patience test")]
    Stalled(usize),
    #[error("encoder did not finish within {0} steps")]
    StepLimit(usize),
    #[error("internal coder invariant violated: {0}")]
    Internal(String),
}
