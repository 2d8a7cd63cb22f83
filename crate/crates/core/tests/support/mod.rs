//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use num::{BigInt, BigRational, One, Zero};
use saac::lm::{synthetic_corpus, LmError, NgramModel};
use saac::{DistributionProvider, NextTokenDistribution, TokenId, Vocabulary};

/// Toy model used across the suites: 2000 synthetic sentences, trigram,
/// additive smoothing 0.01.
pub fn toy_model() -> &'static NgramModel {
    static MODEL: OnceLock<NgramModel> = OnceLock::new();
    MODEL.get_or_init(|| NgramModel::train(&synthetic_corpus(0, 2000), 3, 0.01).expect("toy model trains"))
}

/// Provider whose distribution depends only on the context length after
/// the initial context: step `t` (1-based) uses `steps[t-1]`, and later
/// steps reuse the last entry.
pub struct Scripted {
    pub vocab: Vocabulary,
    pub steps: Vec<Arc<NextTokenDistribution>>,
    pub prefix: usize,
}

impl Scripted {
    pub fn new(words: &[&str], steps: Vec<Vec<(u32, f64)>>, prefix: usize) -> Self {
        let mut tokens = vec!["</s>".to_string()];
        tokens.extend(words.iter().map(|w| w.to_string()));
        let vocab = Vocabulary::from_tokens(tokens).expect("vocabulary");
        let steps = steps
            .into_iter()
            .map(|s| {
                Arc::new(
                    NextTokenDistribution::new(s.into_iter().map(|(i, p)| (TokenId(i), p)).collect(), 0.0).unwrap(),
                )
            })
            .collect();
        Self { vocab, steps, prefix }
    }
}

impl DistributionProvider for Scripted {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution_for(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
        let t = ctx.len().saturating_sub(self.prefix);
        Ok(Arc::clone(&self.steps[t.min(self.steps.len() - 1)]))
    }
}

/// Provider with an arbitrary table of distributions keyed by full context,
/// falling back to a default.
pub struct Table {
    pub vocab: Vocabulary,
    pub table: HashMap<Vec<TokenId>, Arc<NextTokenDistribution>>,
    pub fallback: Arc<NextTokenDistribution>,
}

impl DistributionProvider for Table {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution_for(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
        Ok(Arc::clone(self.table.get(ctx).unwrap_or(&self.fallback)))
    }
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact value of a bit string read as a binary fraction.
pub fn bits_value(bits: &[bool]) -> BigRational {
    let mut num = BigInt::zero();
    for &b in bits {
        num = num * 2 + if b { 1 } else { 0 };
    }
    BigRational::new(num, BigInt::one() << bits.len())
}

/// Exact-arithmetic reference: splits `[lo, hi)` in proportion to each
/// step's (renormalized) probabilities and follows the token whose
/// sub-interval contains `point`.
pub struct ExactCoder {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl Default for ExactCoder {
    fn default() -> Self {
        Self { lo: BigRational::zero(), hi: BigRational::one() }
    }
}

impl ExactCoder {
    /// Sub-intervals of the current interval for `q`, in order.
    pub fn split(&self, q: &[(TokenId, f64)]) -> Vec<(TokenId, BigRational, BigRational)> {
        let total: BigRational = q.iter().map(|e| rational(e.1)).fold(BigRational::zero(), |a, b| a + b);
        let width = &self.hi - &self.lo;
        let mut cum = BigRational::zero();
        let mut out = Vec::with_capacity(q.len());
        for &(id, p) in q {
            let a = &self.lo + &width * &cum / &total;
            cum += rational(p);
            let b = &self.lo + &width * &cum / &total;
            out.push((id, a, b));
        }
        out
    }

    /// Selects the token whose sub-interval contains `point` and narrows.
    pub fn step(&mut self, q: &[(TokenId, f64)], point: &BigRational) -> TokenId {
        let (id, a, b) =
            self.split(q).into_iter().find(|(_, a, b)| a <= point && point < b).expect("point inside the interval");
        self.lo = a;
        self.hi = b;
        id
    }

    /// Selects the token whose sub-interval contains all of `[lo, hi)`.
    pub fn step_containing(&mut self, q: &[(TokenId, f64)], lo: &BigRational, hi: &BigRational) -> Option<TokenId> {
        let (id, a, b) = self.split(q).into_iter().find(|(_, a, b)| a <= lo && hi <= b)?;
        self.lo = a;
        self.hi = b;
        Some(id)
    }
}
