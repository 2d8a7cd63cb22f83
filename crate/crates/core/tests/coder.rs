//! Coder-level checks against hand-computed intervals.

mod support;

use std::sync::Arc;

use saac::coder::{quantize, ArithmeticCoder, CoderInterval, FixedBits, StreamDecoder, DEFAULT_PRECISION};
use saac::truncation::TruncationPolicy;
use saac::{Ciphertext, DistributionProvider, NextTokenDistribution, TokenId};
use support::{bits_value, rational, ExactCoder, Table};

fn worked_example() -> Table {
    let words = ["</s>", "The", "I", "Hello", "Hi", "We", "It", "world", "there", "my"];
    let vocab = saac::Vocabulary::from_tokens(words.iter().map(|w| w.to_string()).collect()).unwrap();
    let d = |pairs: &[(u32, f64)]| {
        Arc::new(NextTokenDistribution::new(pairs.iter().map(|&(i, p)| (TokenId(i), p)).collect(), 0.0).unwrap())
    };
    let step1 = d(&[(1, 0.25), (2, 0.20), (3, 0.15), (4, 0.14), (5, 0.13), (6, 0.13)]);
    let step2 = d(&[(7, 0.5), (8, 0.25), (9, 0.25)]);
    let table = [(vec![TokenId(0)], step1), (vec![TokenId(0), TokenId(3)], step2.clone())].into_iter().collect();
    Table { vocab, table, fallback: step2 }
}

#[test]
fn decoding_hello_my_fixes_the_prefix_1001() {
    let p = worked_example();
    let mut dec = StreamDecoder::new(DEFAULT_PRECISION).unwrap();
    let mut ctx = vec![TokenId(0)];
    for token in [TokenId(3), TokenId(9)] {
        let d = p.next_distribution(&ctx).unwrap();
        let q = quantize(d.entries(), dec.interval()).unwrap();
        dec.advance(&q, q.position(token).unwrap());
        ctx.push(token);
    }
    assert_eq!(&dec.fixed().bits()[..4], &[true, false, false, true]);
}

#[test]
fn straddle_emissions_match_exact_interval_prefix() {
    // [2^24+1, 2^25+2^24) straddles the midpoint; narrowing to its lower part
    // must emit the common binary prefix of the exact interval.
    let p = 26;
    let lo = (1u64 << 24) + 1;
    let hi = (1u64 << 25) + (1 << 24);
    let mut iv = CoderInterval::new(lo, hi, p).unwrap();
    let mut fixed = FixedBits::default();
    iv.rescale(&mut fixed);
    assert_eq!(fixed.pending(), 1);
    // Take the first eighth of the expanded interval.
    let q = quantize(&[(TokenId(0), 0.125), (TokenId(1), 0.875)], &iv).unwrap();
    let (a, b) = q.sub_interval(0);
    // Undo the straddle doubling to get absolute coordinates in [0, 1).
    let to_abs = |x: u64| (x as f64 / 2.0 + (1u64 << 24) as f64) / (1u64 << 26) as f64;
    let (abs_lo, abs_hi) = (to_abs(a), to_abs(b));
    let mut iv2 = CoderInterval::new(a, b, p).unwrap();
    iv2.rescale(&mut fixed);
    let expected: Vec<bool> = {
        let mut out = Vec::new();
        let (mut l, mut h) = (abs_lo, abs_hi);
        loop {
            let (bl, bh) = (l >= 0.5, h > 0.5);
            if bl != bh {
                break;
            }
            out.push(bl);
            l = l * 2.0 - f64::from(u8::from(bl));
            h = h * 2.0 - f64::from(u8::from(bl));
        }
        out
    };
    assert!(!expected.is_empty());
    assert_eq!(&fixed.bits()[..expected.len()], &expected[..]);
}

#[test]
fn exact_reference_agrees_on_short_runs() {
    // Few steps keep the narrowing well inside the precision.
    let p = worked_example();
    let point = bits_value(&[true, false, false, true, false, true]) + rational(1.0 / 128.0);
    let mut exact = ExactCoder::default();
    let d1 = p.next_distribution(&[TokenId(0)]).unwrap();
    assert_eq!(exact.step(d1.entries(), &point), TokenId(3));
}

#[test]
fn round_trip_at_every_precision() {
    let m = support::toy_model();
    let ctx = [m.vocabulary().eos()];
    let ct = Ciphertext::from_bytes(b"precision").unwrap();
    for precision in 16..=30 {
        let coder = ArithmeticCoder::new(TruncationPolicy::static_k(64).unwrap(), precision).unwrap();
        let out = coder.encode(&ct, m, &ctx).unwrap();
        let back = coder.decode(&out.cover, m, &ctx).unwrap();
        assert_eq!(back.ciphertext, ct, "precision {precision}");
    }
}

#[test]
fn large_k_needs_enough_precision() {
    let m = support::toy_model();
    let ctx = [m.vocabulary().eos()];
    let ct = Ciphertext::from_bytes(b"x").unwrap();
    // All 656 tokens at 16 bits: a rescaled interval always holds 2^14 units.
    let coder = ArithmeticCoder::new(TruncationPolicy::static_k(1000).unwrap(), 16).unwrap();
    let out = coder.encode(&ct, m, &ctx).unwrap();
    assert_eq!(coder.decode(&out.cover, m, &ctx).unwrap().ciphertext, ct);
}
