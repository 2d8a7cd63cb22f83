//! Language-model distribution providers.
//!
//! Every coder consumes distributions through [`DistributionProvider`]. A
//! provider must be deterministic: the same context always yields the same
//! [`NextTokenDistribution`], bit for bit, because the sender and receiver
//! rebuild identical coding intervals from it.

mod corpus;
mod ngram;
pub mod protocol;
mod vocab;

use std::sync::Arc;

pub use corpus::{synthetic_corpus, Corpus};
pub use ngram::{NgramModel, DEFAULT_SMOOTHING, MAX_ORDER};
pub use vocab::{Vocabulary, EOS_SURFACE};

use serde::{Deserialize, Serialize};

/// Tolerance on `sum(entries) + tail == 1` for in-process distributions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Dense index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be in 1..=5, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),
    #[error("token id {id} is outside the vocabulary of {size} tokens")]
    InvalidToken { id: u32, size: usize },
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("context of {len} tokens exceeds the provider window of {window}")]
    ContextTooLong { len: usize, window: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("protocol version mismatch: expected {expected}, got {got}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("server error: {0}")]
    Server(String),
    #[error("provider is not deterministic: probe context replay differed")]
    NonDeterministic,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Conditional next-token distribution, sorted by probability descending with
/// ties broken by ascending token id.
///
/// In-process providers return full-support distributions (`tail == 0`).
/// Distributions received over the wire carry the top-N entries plus the
/// mass of everything that was not transferred; coders only ever use a prefix
/// of the entries, so the tail never takes part in coding. Temperature is
/// fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    entries: Vec<(TokenId, f64)>,
    tail: f64,
}

impl NextTokenDistribution {
    /// Validates an already sorted entry list.
    pub fn new(entries: Vec<(TokenId, f64)>, tail: f64) -> Result<Self, LmError> {
        Self::with_tolerance(entries, tail, NORMALIZATION_TOLERANCE)
    }

    pub fn with_tolerance(entries: Vec<(TokenId, f64)>, tail: f64, tolerance: f64) -> Result<Self, LmError> {
        let bad = |msg: String| Err(LmError::InvalidDistribution(msg));
        if entries.is_empty() {
            return bad("no entries".into());
        }
        if !(tail.is_finite() && tail >= 0.0) {
            return bad(format!("tail mass {tail} is not a non-negative number"));
        }
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        let mut sum = 0.0;
        for (i, &(id, p)) in entries.iter().enumerate() {
            if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                return bad(format!("probability {p} of token {id} is not in (0, 1]"));
            }
            if !seen.insert(id) {
                return bad(format!("token {id} listed twice"));
            }
            if i > 0 && !in_order(entries[i - 1], (id, p)) {
                return bad(format!("entry {i} (token {id}) breaks the sort order"));
            }
            sum += p;
        }
        if (sum + tail - 1.0).abs() > tolerance {
            return bad(format!("mass sums to {} (tail {tail})", sum + tail));
        }
        Ok(Self { entries, tail })
    }

    /// Sorts and normalizes non-negative weights; zero weights are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (TokenId, f64)>) -> Result<Self, LmError> {
        let mut entries: Vec<(TokenId, f64)> = weights.into_iter().filter(|&(_, w)| w > 0.0).collect();
        let total: f64 = entries.iter().map(|&(_, w)| w).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(LmError::InvalidDistribution("weights have no positive mass".into()));
        }
        for e in &mut entries {
            e.1 /= total;
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::new(entries, 0.0)
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    /// Number of entries (the usable support).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Probability mass not present in `entries`.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn probability(&self, token: TokenId) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == token).map(|e| e.1)
    }
}

fn in_order(prev: (TokenId, f64), next: (TokenId, f64)) -> bool {
    prev.1 > next.1 || (prev.1 == next.1 && prev.0 < next.0)
}

/// Source of deterministic next-token distributions.
///
/// Implementations are read-only after construction and may be queried from
/// several threads at once.
pub trait DistributionProvider: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Longest context the provider accepts, if bounded.
    fn window(&self) -> Option<usize> {
        None
    }

    /// Computes the distribution for an already validated context.
    fn distribution_for(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError>;

    /// Validates `ctx` and returns `P(· | ctx)`.
    ///
    /// Contexts longer than [`window`](Self::window) are rejected rather than
    /// truncated.
    fn next_distribution(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
        let size = self.vocabulary().len();
        if let Some(bad) = ctx.iter().find(|t| t.index() >= size) {
            return Err(LmError::InvalidToken { id: bad.0, size });
        }
        if let Some(window) = self.window() {
            if ctx.len() > window {
                return Err(LmError::ContextTooLong { len: ctx.len(), window });
            }
        }
        self.distribution_for(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(i: u32) -> TokenId {
        TokenId(i)
    }

    #[test]
    fn from_weights_sorts_with_id_tiebreak() {
        let d = NextTokenDistribution::from_weights([(t(3), 1.0), (t(1), 2.0), (t(0), 1.0), (t(2), 0.0)]).unwrap();
        let ids: Vec<u32> = d.entries().iter().map(|e| e.0 .0).collect();
        assert_eq!(ids, vec![1, 0, 3]);
        assert_eq!(d.probability(t(1)), Some(0.5));
        assert_eq!(d.probability(t(2)), None);
    }

    #[test]
    fn rejects_unsorted_and_unnormalized() {
        assert!(NextTokenDistribution::new(vec![(t(0), 0.4), (t(1), 0.6)], 0.0).is_err());
        assert!(NextTokenDistribution::new(vec![(t(1), 0.5), (t(0), 0.5)], 0.0).is_err());
        assert!(NextTokenDistribution::new(vec![(t(0), 0.6), (t(1), 0.6)], 0.0).is_err());
        assert!(NextTokenDistribution::new(vec![(t(0), 0.6), (t(0), 0.4)], 0.0).is_err());
        assert!(NextTokenDistribution::new(vec![(t(0), 0.6), (t(1), 0.3)], 0.1).is_ok());
        assert!(NextTokenDistribution::new(vec![], 1.0).is_err());
    }
}
