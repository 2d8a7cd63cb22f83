//! The n-gram model against counts taken directly from the corpus text.

mod support;

use saac::lm::{synthetic_corpus, Corpus, NgramModel};
use saac::{DistributionProvider, TokenId};

/// Training stream as words, each sentence followed by `</s>`.
fn stream(corpus: &Corpus) -> Vec<String> {
    corpus.sentences().iter().flat_map(|s| s.iter().cloned().chain(["</s>".to_string()])).collect()
}

/// `(c(ctx, w), c(ctx))` by scanning the stream.
fn count(words: &[String], ctx: &[&str], w: &str) -> (usize, usize) {
    let n = ctx.len();
    let (mut joint, mut total) = (0, 0);
    for i in n..words.len() {
        if words[i - n..i].iter().zip(ctx).all(|(a, b)| a == b) {
            total += 1;
            if words[i] == w {
                joint += 1;
            }
        }
    }
    (joint, total)
}

#[test]
fn smoothed_trigram_matches_direct_counts() {
    let corpus = synthetic_corpus(0, 1000);
    let model = NgramModel::train(&corpus, 3, 0.01).unwrap();
    let v = model.vocabulary();
    let words = stream(&corpus);
    let ids = |ws: &[&str]| ws.iter().map(|w| v.id(w).unwrap()).collect::<Vec<TokenId>>();
    for ctx in [vec!["the", "quick"], vec!["quick", "brown"], vec!["the"], vec!["</s>", "the"]] {
        let (_, total) = count(&words, &ctx, "");
        assert!(total > 0, "context {ctx:?} must occur in the corpus");
        let dist = model.next_distribution(&ids(&ctx)).unwrap();
        for w in ["brown", "fox", "dog", "the", "</s>", "lazy"] {
            let (joint, total) = count(&words, &ctx, w);
            let expected = (joint as f64 + 0.01) / (total as f64 + 0.01 * v.len() as f64);
            let got = dist.probability(v.id(w).unwrap()).unwrap();
            assert!((got - expected).abs() < 1e-12, "P({w} | {ctx:?}) = {got}, counts give {expected}");
        }
    }
}

#[test]
fn unseen_context_backs_off_to_the_longest_seen_suffix() {
    let corpus = synthetic_corpus(0, 1000);
    let model = NgramModel::train(&corpus, 3, 0.01).unwrap();
    let v = model.vocabulary();
    let words = stream(&corpus);
    let (fox, the) = (v.id("fox").unwrap(), v.id("the").unwrap());
    // "fox fox" never occurs, so the context backs off to "fox".
    assert_eq!(count(&words, &["fox", "fox"], "").1, 0);
    let backed = model.next_distribution(&[fox, fox]).unwrap();
    let direct = model.next_distribution(&[the, fox]).unwrap();
    let unigram_ctx = model.next_distribution(&[fox]).unwrap();
    assert_eq!(backed, unigram_ctx);
    assert_ne!(backed, direct);
}

#[test]
fn distributions_are_normalized_and_sorted() {
    let model = support::toy_model();
    let eos = model.vocabulary().eos();
    let d = model.next_distribution(&[eos]).unwrap();
    assert_eq!(d.len(), model.vocabulary().len());
    let sum: f64 = d.entries().iter().map(|e| e.1).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(d.entries().windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
}

fn perplexity(model: &NgramModel, held_out: &Corpus) -> f64 {
    let v = model.vocabulary();
    let mut ctx = vec![v.eos()];
    let (mut nll, mut n) = (0.0, 0usize);
    for s in held_out.sentences() {
        for w in s.iter().map(String::as_str).chain(["</s>"]) {
            let id = v.id(w).unwrap();
            let p = model.next_distribution(&ctx[ctx.len().saturating_sub(4)..]).unwrap().probability(id).unwrap();
            nll -= p.log2();
            n += 1;
            ctx.push(id);
        }
    }
    (nll / n as f64).exp2()
}

#[test]
fn trigram_beats_unigram_on_held_out_text() {
    let (train, test) = synthetic_corpus(3, 3000).split_tail(300);
    let vocab = saac::Vocabulary::from_sentences(synthetic_corpus(3, 3000).sentences()).unwrap();
    let uni = NgramModel::train_with_vocabulary(&train, vocab.clone(), 1, 0.01).unwrap();
    let tri = NgramModel::train_with_vocabulary(&train, vocab, 3, 0.01).unwrap();
    let (pu, pt) = (perplexity(&uni, &test), perplexity(&tri, &test));
    assert!(pt <= pu, "trigram perplexity {pt} vs unigram {pu}");
}
