//! Steganographic entropy coding over language-model distributions.
//!
//! A ciphertext (a uniform bit string) is mapped to a fluent token sequence by
//! running an arithmetic decoder over the next-token distributions of a
//! language model, truncated per step either to a fixed top-K set or to the
//! smallest top-K set whose dropped mass stays within a KL budget
//! (self-adjusting arithmetic coding, "SAAC"). The receiver replays the same
//! distributions and recovers the bits exactly.
//!
//! Module map:
//!
//! - [`lm`]: provider contract, the toy n-gram model and the wire protocol for
//!   external model servers.
//! - [`truncation`]: static top-K and self-adjusting truncation policies.
//! - [`coder`]: the fixed-precision arithmetic coder.
//! - [`baselines`]: Bin-LM, Huffman (RNN-Stega) and Patient-Huffman coders.
//! - [`metrics`]: bits/word, KL summaries and Pinsker bounds.
//! - [`pipeline`]: plaintext → ciphertext → cover text sessions.
//! - [`bench`]: seeded multi-method benchmark runs.

pub mod baselines;
pub mod bench;
pub mod coder;
mod error;
pub mod lm;
pub mod message;
pub mod method;
pub mod metrics;
pub mod pipeline;
pub mod truncation;

pub use error::CodecError;
pub use lm::{DistributionProvider, NextTokenDistribution, TokenId, Vocabulary};
pub use message::Ciphertext;
pub use method::{EncodeOutput, MethodConfig};
