//! Fixed-precision arithmetic coding in the steganographic direction.
//!
//! The encoder reads the framed ciphertext as a binary fraction and, at each
//! step, emits the token whose sub-interval contains it; this is an
//! arithmetic *decoder* run over the message bits. Renormalization fixes
//! leading bits as the interval narrows. Encoding stops once the fixed bits
//! cover the length header and the message, at which point the final interval
//! lies inside the dyadic interval of the framed message. The receiver replays
//! the same intervals from the cover tokens and reads the fixed bits back.
//!
//! Once the message bits are all inside the coder window the target is a
//! range rather than a point. The encoder then prefers the most probable
//! token whose sub-interval lies entirely inside the target (which finishes
//! the message) and otherwise the most probable token overlapping it.

mod interval;
mod quantize;

pub use interval::{CoderInterval, FixedBits, Shift, DEFAULT_PRECISION, MAX_PRECISION, MIN_PRECISION};
pub use quantize::{quantize, QuantizedDistribution};

use serde::{Deserialize, Serialize};

use crate::lm::{DistributionProvider, TokenId};
use crate::message::Ciphertext;
use crate::truncation::{truncate, TruncationPolicy};
use crate::CodecError;

/// Per-step record shared by all coders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// 1-based step index.
    pub t: usize,
    pub token: TokenId,
    /// Size of the candidate set the token was coded from.
    #[serde(rename = "K")]
    pub k: usize,
    /// Mass of the candidate set under the model.
    #[serde(rename = "Z_K")]
    pub z_k: f64,
    /// Divergence of the step's coding distribution from the model, in bits.
    pub kl: f64,
    /// Extra divergence from rounding to integer widths, in bits.
    #[serde(default)]
    pub quant_kl: f64,
    /// Message bits fixed after this step (cumulative, padding included).
    pub bits: usize,
    /// False for steps that carry no message bits.
    #[serde(default = "yes")]
    pub coded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub budget_violation: bool,
    /// Selected sub-interval before renormalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[u64; 2]>,
    /// Divergence used by a gating test (Patient-Huffman), in bits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_kl: Option<f64>,
}

fn yes() -> bool {
    true
}

impl StepTrace {
    pub(crate) fn new(t: usize, token: TokenId, k: usize, z_k: f64, kl: f64, bits: usize) -> Self {
        Self {
            t,
            token,
            k,
            z_k,
            kl,
            quant_kl: 0.0,
            bits,
            coded: true,
            budget: None,
            budget_violation: false,
            interval: None,
            gate_kl: None,
        }
    }
}

/// Result of hiding one ciphertext.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    pub cover: Vec<TokenId>,
    pub traces: Vec<StepTrace>,
    /// Bits consumed or fixed by the cover, framing and padding included.
    pub coded_bits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub ciphertext: Ciphertext,
    pub traces: Vec<StepTrace>,
}

/// Default step cap: generous for any policy that carries information.
pub(crate) fn default_step_limit(framed_bits: usize) -> usize {
    64 * framed_bits + 4096
}

/// Encoder state over a fixed bit stream.
///
/// `lo..=hi` is the part of the current interval, in window units, whose
/// binary expansions start with the stream; before the stream is exhausted
/// it is a single unit.
#[derive(Debug, Clone)]
pub struct StreamEncoder<'a> {
    stream: &'a [bool],
    interval: CoderInterval,
    fixed: FixedBits,
    lo: u64,
    hi: u64,
    consumed: usize,
}

impl<'a> StreamEncoder<'a> {
    pub fn new(stream: &'a [bool], precision: u32) -> Result<Self, CodecError> {
        let interval = CoderInterval::full(precision)?;
        let read = |pad: bool| {
            (0..precision as usize).fold(0u64, |acc, i| (acc << 1) | u64::from(stream.get(i).copied().unwrap_or(pad)))
        };
        Ok(Self {
            stream,
            interval,
            fixed: FixedBits::default(),
            lo: read(false),
            hi: read(true),
            consumed: precision as usize,
        })
    }

    pub fn interval(&self) -> &CoderInterval {
        &self.interval
    }

    pub fn fixed(&self) -> &FixedBits {
        &self.fixed
    }

    /// Whether the stream is fully inside the window.
    pub fn exhausted(&self) -> bool {
        self.consumed >= self.stream.len()
    }

    /// The current interval lies inside the dyadic interval of the stream.
    pub fn is_certified(&self) -> bool {
        self.exhausted() && self.lo <= self.interval.low() && self.hi + 1 >= self.interval.high()
    }

    /// Index of the token the encoder picks from `q`.
    pub fn choose(&self, q: &QuantizedDistribution) -> usize {
        let (lo, hi) = (self.lo, self.hi);
        if self.exhausted() {
            if let Some(i) = q.bounds().position(|(_, a, b)| a >= lo && b - 1 <= hi) {
                return i;
            }
        }
        q.bounds()
            .position(|(_, a, b)| a <= hi && b > lo)
            .expect("sub-intervals tile the interval, which contains the target")
    }

    /// Chooses a token, narrows to its sub-interval and renormalizes.
    pub fn select(&mut self, q: &QuantizedDistribution) -> usize {
        let index = self.choose(q);
        let (a, b) = q.sub_interval(index);
        self.interval.narrow(a, b);
        self.lo = self.lo.max(a);
        self.hi = self.hi.min(b - 1);
        let precision = self.interval.precision();
        while let Some(shift) = self.interval.next_shift() {
            self.interval.apply(shift);
            self.fixed.record(shift);
            let next = self.stream.get(self.consumed).copied();
            self.lo = shift.map(self.lo, precision, next.unwrap_or(false));
            self.hi = shift.map(self.hi, precision, next.unwrap_or(true));
            self.consumed += 1;
        }
        index
    }
}

/// Receiver state: replays intervals and collects fixed bits.
#[derive(Debug, Clone)]
pub struct StreamDecoder {
    interval: CoderInterval,
    fixed: FixedBits,
}

impl StreamDecoder {
    pub fn new(precision: u32) -> Result<Self, CodecError> {
        Ok(Self { interval: CoderInterval::full(precision)?, fixed: FixedBits::default() })
    }

    pub fn interval(&self) -> &CoderInterval {
        &self.interval
    }

    pub fn fixed(&self) -> &FixedBits {
        &self.fixed
    }

    pub fn advance(&mut self, q: &QuantizedDistribution, index: usize) {
        let (a, b) = q.sub_interval(index);
        self.interval.narrow(a, b);
        self.interval.rescale(&mut self.fixed);
    }
}

/// Arithmetic steganographic coder: static top-K or self-adjusting
/// truncation over a provider, at a fixed precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ArithmeticCoder {
    pub policy: TruncationPolicy,
    pub precision: u32,
    /// Encoder step cap; defaults to `64·framed_bits + 4096`.
    pub max_steps: Option<usize>,
}

impl ArithmeticCoder {
    pub fn new(policy: TruncationPolicy, precision: u32) -> Result<Self, CodecError> {
        CoderInterval::full(precision)?;
        let reachable = 1usize << (precision - 2);
        if policy.max_k() > reachable {
            return Err(CodecError::InvalidConfig(format!(
                "K up to {} needs more than {precision} bits of precision",
                policy.max_k()
            )));
        }
        Ok(Self { policy, precision, max_steps: None })
    }

    pub fn encode(
        &self,
        ciphertext: &Ciphertext,
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<EncodeOutput, CodecError> {
        let framed = ciphertext.framed();
        let limit = self.max_steps.unwrap_or_else(|| default_step_limit(framed.len()));
        let mut enc = StreamEncoder::new(&framed, self.precision)?;
        let mut context = ctx.to_vec();
        let mut cover = Vec::new();
        let mut traces = Vec::new();
        for t in 1..=limit {
            let dist = provider.next_distribution(&context)?;
            let decision = truncate(&dist, &self.policy, t);
            let q = quantize(&decision.q, enc.interval())?;
            let index = enc.select(&q);
            let (a, b) = q.sub_interval(index);
            let token = q.token(index);
            let mut trace = StepTrace::new(t, token, decision.k, decision.z, decision.kl, enc.fixed().len());
            trace.quant_kl = q.divergence_from(&decision.q);
            trace.budget = decision.budget;
            trace.budget_violation = decision.budget_violation;
            trace.interval = Some([a, b]);
            traces.push(trace);
            cover.push(token);
            context.push(token);
            if enc.fixed().len() >= framed.len() {
                if !enc.is_certified() {
                    return Err(CodecError::Internal("fixed bits do not certify the message".into()));
                }
                if enc.fixed().bits()[..framed.len()] != framed[..] {
                    return Err(CodecError::Internal("fixed bits diverge from the message".into()));
                }
                return Ok(EncodeOutput { cover, traces, coded_bits: enc.fixed().len() });
            }
        }
        Err(CodecError::StepLimit(limit))
    }

    pub fn decode(
        &self,
        cover: &[TokenId],
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<DecodeOutput, CodecError> {
        let mut dec = StreamDecoder::new(self.precision)?;
        let mut context = ctx.to_vec();
        let mut traces = Vec::with_capacity(cover.len());
        for (i, &token) in cover.iter().enumerate() {
            let t = i + 1;
            let dist = provider.next_distribution(&context)?;
            let decision = truncate(&dist, &self.policy, t);
            let q = quantize(&decision.q, dec.interval())?;
            let index = q.position(token).ok_or(CodecError::TokenOutsideSupport { step: t, token })?;
            let (a, b) = q.sub_interval(index);
            dec.advance(&q, index);
            let mut trace = StepTrace::new(t, token, decision.k, decision.z, decision.kl, dec.fixed().len());
            trace.quant_kl = q.divergence_from(&decision.q);
            trace.budget = decision.budget;
            trace.budget_violation = decision.budget_violation;
            trace.interval = Some([a, b]);
            traces.push(trace);
            context.push(token);
            if let Some(needed) = Ciphertext::framed_len(dec.fixed().bits()) {
                if dec.fixed().len() >= needed && t < cover.len() {
                    return Err(CodecError::TrailingTokens { step: t });
                }
            }
        }
        let ciphertext = Ciphertext::unframe(dec.fixed().bits())?;
        Ok(DecodeOutput { ciphertext, traces })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{Corpus, NgramModel};
    use crate::truncation::Schedule;

    fn model() -> NgramModel {
        NgramModel::train(&Corpus::from_text("a b c d\nb c a\nd d a b\nc a b d"), 2, 0.01).unwrap()
    }

    #[test]
    fn shortest_message_round_trips() {
        let m = model();
        let coder = ArithmeticCoder::new(TruncationPolicy::static_k(4).unwrap(), DEFAULT_PRECISION).unwrap();
        let ctx = [m.vocabulary().eos()];
        for bits in [vec![false], vec![true]] {
            let ct = Ciphertext::new(bits).unwrap();
            let out = coder.encode(&ct, &m, &ctx).unwrap();
            assert!(out.coded_bits >= 33);
            let back = coder.decode(&out.cover, &m, &ctx).unwrap();
            assert_eq!(back.ciphertext, ct);
            let enc_iv: Vec<_> = out.traces.iter().map(|t| t.interval).collect();
            let dec_iv: Vec<_> = back.traces.iter().map(|t| t.interval).collect();
            assert_eq!(enc_iv, dec_iv);
        }
    }

    #[test]
    fn truncated_and_extended_covers_are_rejected() {
        let m = model();
        let coder =
            ArithmeticCoder::new(TruncationPolicy::self_adjusting(0.05, Schedule::Constant).unwrap(), 20).unwrap();
        let ctx = [m.vocabulary().eos()];
        let ct = Ciphertext::from_bytes(b"hi").unwrap();
        let out = coder.encode(&ct, &m, &ctx).unwrap();
        let short = &out.cover[..out.cover.len() - 1];
        assert!(matches!(coder.decode(short, &m, &ctx), Err(CodecError::Truncated { .. })));
        let mut long = out.cover.clone();
        long.push(long[0]);
        assert!(matches!(coder.decode(&long, &m, &ctx), Err(CodecError::TrailingTokens { .. })));
    }

    #[test]
    fn token_outside_support_is_reported() {
        let m = model();
        let coder = ArithmeticCoder::new(TruncationPolicy::static_k(2).unwrap(), DEFAULT_PRECISION).unwrap();
        let ctx = [m.vocabulary().eos()];
        let dist = m.next_distribution(&ctx).unwrap();
        let outside = dist.entries()[3].0;
        assert!(matches!(
            coder.decode(&[outside], &m, &ctx),
            Err(CodecError::TokenOutsideSupport { step: 1, token }) if token == outside
        ));
    }

    #[test]
    fn k_too_large_for_precision_is_rejected() {
        assert!(ArithmeticCoder::new(TruncationPolicy::static_k(1 << 15).unwrap(), 16).is_err());
        assert!(ArithmeticCoder::new(TruncationPolicy::static_k(1 << 14).unwrap(), 16).is_ok());
    }

    #[test]
    fn exhausted_stream_prefers_a_contained_token() {
        // Stream "1": target is the upper half. With four equal tokens the
        // third one lies inside it and finishes immediately.
        let stream = [true];
        let mut enc = StreamEncoder::new(&stream, 16).unwrap();
        assert!(enc.exhausted());
        let q: Vec<_> = (0..4).map(|i| (TokenId(i), 0.25)).collect();
        let qd = quantize(&q, enc.interval()).unwrap();
        assert_eq!(enc.select(&qd), 2);
        assert_eq!(enc.fixed().bits(), &[true, false]);
        assert!(enc.is_certified());
    }
}
