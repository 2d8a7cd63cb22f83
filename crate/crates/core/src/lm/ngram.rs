use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{Corpus, DistributionProvider, LmError, NextTokenDistribution, TokenId, Vocabulary};

pub const MAX_ORDER: usize = 5;
pub const DEFAULT_SMOOTHING: f64 = 0.01;

#[derive(Debug, Default)]
struct SuccessorCounts {
    total: u64,
    counts: HashMap<TokenId, u64>,
}

/// Word n-gram model with additive smoothing and backoff to the longest
/// context suffix seen in training.
///
/// `P(w | ctx) = (c(s, w) + α) / (c(s) + α·|V|)` where `s` is the longest
/// suffix of `ctx` (at most `order - 1` tokens) observed as a context. With
/// `α > 0` every distribution has full support. Training text is the
/// concatenation of all sentences, each followed by EOS, so EOS doubles as the
/// sentence-start context.
#[derive(Debug)]
pub struct NgramModel {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    tables: HashMap<Vec<TokenId>, SuccessorCounts>,
    cache: RwLock<HashMap<Vec<TokenId>, Arc<NextTokenDistribution>>>,
}

impl NgramModel {
    /// Trains on `corpus` with a vocabulary derived from the corpus itself.
    pub fn train(corpus: &Corpus, order: usize, smoothing: f64) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let vocab = Vocabulary::from_sentences(corpus.sentences())?;
        Self::train_with_vocabulary(corpus, vocab, order, smoothing)
    }

    pub fn train_with_vocabulary(
        corpus: &Corpus,
        vocab: Vocabulary,
        order: usize,
        smoothing: f64,
    ) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(LmError::InvalidOrder(order));
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(LmError::InvalidSmoothing(smoothing));
        }
        let mut stream = Vec::new();
        for sentence in corpus.sentences() {
            for word in sentence {
                stream.push(vocab.id(word).ok_or_else(|| LmError::UnknownWord(word.clone()))?);
            }
            stream.push(vocab.eos());
        }
        let mut tables: HashMap<Vec<TokenId>, SuccessorCounts> = HashMap::new();
        for (i, &next) in stream.iter().enumerate() {
            for n in 0..order.min(i + 1) {
                let entry = tables.entry(stream[i - n..i].to_vec()).or_default();
                entry.total += 1;
                *entry.counts.entry(next).or_insert(0) += 1;
            }
        }
        Ok(Self { vocab, order, smoothing, tables, cache: RwLock::new(HashMap::new()) })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Longest suffix of `ctx` that was observed as a training context.
    fn backoff_key<'c>(&self, ctx: &'c [TokenId]) -> &'c [TokenId] {
        let mut start = ctx.len().saturating_sub(self.order - 1);
        while !self.tables.contains_key(&ctx[start..]) {
            start += 1;
        }
        &ctx[start..]
    }

    fn build(&self, key: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        let table = &self.tables[key];
        if self.smoothing > 0.0 {
            let weights = (0..self.vocab.len() as u32).map(|i| {
                let id = TokenId(i);
                (id, table.counts.get(&id).copied().unwrap_or(0) as f64 + self.smoothing)
            });
            NextTokenDistribution::from_weights(weights)
        } else {
            NextTokenDistribution::from_weights(table.counts.iter().map(|(&id, &c)| (id, c as f64)))
        }
    }
}

impl DistributionProvider for NgramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn distribution_for(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
        let key = self.backoff_key(ctx);
        if let Some(hit) = self.cache.read().expect("cache lock poisoned").get(key) {
            return Ok(Arc::clone(hit));
        }
        let dist = Arc::new(self.build(key)?);
        self.cache.write().expect("cache lock poisoned").entry(key.to_vec()).or_insert_with(|| Arc::clone(&dist));
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Corpus {
        Corpus::from_text(s)
    }

    #[test]
    fn single_observed_successor_gets_all_mass() {
        let m = NgramModel::train(&words("a b a b a b"), 2, 0.0).unwrap();
        let a = m.vocabulary().id("a").unwrap();
        let b = m.vocabulary().id("b").unwrap();
        let d = m.next_distribution(&[a]).unwrap();
        assert_eq!(d.entries(), &[(b, 1.0)]);
    }

    #[test]
    fn empty_context_is_the_unigram_distribution() {
        let m = NgramModel::train(&words("a b a b a b"), 2, 0.0).unwrap();
        let d = m.next_distribution(&[]).unwrap();
        let v = m.vocabulary();
        let expect = [(v.id("a").unwrap(), 3.0 / 7.0), (v.id("b").unwrap(), 3.0 / 7.0), (v.eos(), 1.0 / 7.0)];
        assert_eq!(d.len(), 3);
        for (got, want) in d.entries().iter().zip(expect) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-15);
        }
    }

    #[test]
    fn single_word_corpus_puts_all_non_eos_mass_on_it() {
        let m = NgramModel::train(&words("x"), 1, 0.0).unwrap();
        let d = m.next_distribution(&[]).unwrap();
        let eos = m.vocabulary().eos();
        let non_eos: f64 = d.entries().iter().filter(|e| e.0 != eos).map(|e| e.1).sum();
        let x = d.probability(m.vocabulary().id("x").unwrap()).unwrap();
        assert_eq!(x / non_eos, 1.0);
        assert!(d.probability(eos).unwrap() > 0.0);
    }

    #[test]
    fn equally_frequent_unigrams_share_mass() {
        let m = NgramModel::train(&words("x y"), 1, 0.0).unwrap();
        let d = m.next_distribution(&[]).unwrap();
        let v = m.vocabulary();
        let (px, py) = (d.probability(v.id("x").unwrap()).unwrap(), d.probability(v.id("y").unwrap()).unwrap());
        assert_eq!(px, py);
        assert_eq!(px / (px + py), 0.5);
    }

    #[test]
    fn smoothing_gives_full_support_and_backs_off() {
        let m = NgramModel::train(&words("a b c\nb a b"), 3, 0.01).unwrap();
        let v = m.vocabulary();
        let (a, c) = (v.id("a").unwrap(), v.id("c").unwrap());
        let d = m.next_distribution(&[c, c, a]).unwrap();
        assert_eq!(d.len(), v.len());
        // "c a" never occurs, so the context backs off to "a".
        assert_eq!(m.backoff_key(&[c, c, a]), &[a]);
        assert_eq!(d.entries()[0].0, v.id("b").unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(NgramModel::train(&Corpus::default(), 2, 0.01), Err(LmError::EmptyCorpus)));
        assert!(matches!(NgramModel::train(&words("a"), 0, 0.01), Err(LmError::InvalidOrder(0))));
        assert!(matches!(NgramModel::train(&words("a"), 6, 0.01), Err(LmError::InvalidOrder(6))));
        assert!(NgramModel::train(&words("a"), 2, -1.0).is_err());
    }

    #[test]
    fn invalid_context_tokens_are_rejected() {
        let m = NgramModel::train(&words("a b"), 2, 0.01).unwrap();
        assert!(matches!(m.next_distribution(&[TokenId(99)]), Err(LmError::InvalidToken { id: 99, .. })));
    }
}
