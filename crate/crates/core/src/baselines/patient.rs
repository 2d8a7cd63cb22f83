use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coder::{default_step_limit, DecodeOutput, EncodeOutput, StepTrace};
use crate::lm::{DistributionProvider, NextTokenDistribution, TokenId};
use crate::message::{Ciphertext, PaddedReader};
use crate::CodecError;

use super::check_trailing;
use super::huffman::{Huffman, HuffmanCode};

/// Tree depth exponent used when none is configured.
pub const DEFAULT_PATIENT_H: u32 = 5;

/// Consecutive failing steps after which encoding is abandoned.
pub const STALL_LIMIT: usize = 10_000;

/// Huffman coding that only spends message bits on steps where the Huffman
/// distribution is within `epsilon` bits of the renormalized top-`2^H`
/// distribution. Other steps emit a plain sample from the model. The test
/// depends only on the context, so the receiver classifies steps the same
/// way without knowing the sampler state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientHuffman {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_h")]
    pub h: u32,
}

fn default_h() -> u32 {
    DEFAULT_PATIENT_H
}

enum Step {
    Coded(HuffmanCode, f64),
    Skipped(f64),
}

impl PatientHuffman {
    pub fn new(epsilon: f64, seed: u64, h: u32) -> Result<Self, CodecError> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(CodecError::InvalidConfig(format!("patience threshold must be positive, got {epsilon}")));
        }
        Huffman::new(h)?;
        Ok(Self { epsilon, seed, h })
    }

    fn classify(&self, dist: &NextTokenDistribution) -> Result<Step, CodecError> {
        let code = HuffmanCode::top(dist, self.h)?;
        let gate = code.kl_from_leaves();
        Ok(if gate <= self.epsilon { Step::Coded(code, gate) } else { Step::Skipped(gate) })
    }

    fn skipped_trace(t: usize, token: TokenId, dist: &NextTokenDistribution, gate: f64, bits: usize) -> StepTrace {
        let mut trace = StepTrace::new(t, token, dist.len(), 1.0 - dist.tail(), 0.0, bits);
        trace.coded = false;
        trace.gate_kl = Some(gate);
        trace
    }

    pub fn encode(
        &self,
        ciphertext: &Ciphertext,
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<EncodeOutput, CodecError> {
        let huffman = Huffman::new(self.h)?;
        huffman.check_vocabulary(provider)?;
        let framed = ciphertext.framed();
        let limit = default_step_limit(framed.len()) + STALL_LIMIT;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut reader = PaddedReader::new(&framed);
        let mut context = ctx.to_vec();
        let mut cover = Vec::new();
        let mut traces = Vec::new();
        let mut failing = 0;
        for t in 1..=limit {
            let dist = provider.next_distribution(&context)?;
            let token = match self.classify(&dist)? {
                Step::Coded(code, gate) => {
                    failing = 0;
                    let token = code.leaves()[code.read(&mut reader)].0;
                    let mut trace = Huffman::trace(t, token, &code, &dist, reader.position());
                    trace.gate_kl = Some(gate);
                    traces.push(trace);
                    token
                }
                Step::Skipped(gate) => {
                    failing += 1;
                    if failing >= STALL_LIMIT {
                        return Err(CodecError::Stalled(failing));
                    }
                    let weights = WeightedIndex::new(dist.entries().iter().map(|e| e.1))
                        .map_err(|e| CodecError::Internal(format!("cannot sample: {e}")))?;
                    let token = dist.entries()[weights.sample(&mut rng)].0;
                    traces.push(Self::skipped_trace(t, token, &dist, gate, reader.position()));
                    token
                }
            };
            cover.push(token);
            context.push(token);
            if reader.exhausted() {
                return Ok(EncodeOutput { cover, traces, coded_bits: reader.position() });
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
        let huffman = Huffman::new(self.h)?;
        huffman.check_vocabulary(provider)?;
        let mut context = ctx.to_vec();
        let mut bits = Vec::new();
        let mut traces = Vec::with_capacity(cover.len());
        for (i, &token) in cover.iter().enumerate() {
            let t = i + 1;
            let dist = provider.next_distribution(&context)?;
            match self.classify(&dist)? {
                Step::Coded(code, gate) => {
                    let index = code.position(token).ok_or(CodecError::TokenOutsideSupport { step: t, token })?;
                    bits.extend(code.code(index));
                    let mut trace = Huffman::trace(t, token, &code, &dist, bits.len());
                    trace.gate_kl = Some(gate);
                    traces.push(trace);
                }
                Step::Skipped(gate) => traces.push(Self::skipped_trace(t, token, &dist, gate, bits.len())),
            }
            context.push(token);
            check_trailing(&bits, t, cover.len())?;
        }
        Ok(DecodeOutput { ciphertext: Ciphertext::unframe(&bits)?, traces })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lm::{Corpus, LmError, NgramModel, Vocabulary};

    fn model() -> NgramModel {
        NgramModel::train(&Corpus::from_text("a b c d e f g\ng f e d c b a\na c e g b d f\na a b"), 2, 0.01).unwrap()
    }

    #[test]
    fn huge_threshold_matches_plain_huffman() {
        let m = model();
        let ctx = [m.vocabulary().eos()];
        let ct = Ciphertext::from_bytes(b"ok").unwrap();
        let plain = Huffman::new(2).unwrap().encode(&ct, &m, &ctx).unwrap();
        let patient = PatientHuffman::new(1e9, 3, 2).unwrap().encode(&ct, &m, &ctx).unwrap();
        assert_eq!(plain.cover, patient.cover);
        assert!(patient.traces.iter().all(|t| t.coded));
    }

    #[test]
    fn tiny_threshold_skips_non_dyadic_steps() {
        let m = model();
        let ctx = [m.vocabulary().eos()];
        let dist = m.next_distribution(&ctx).unwrap();
        let p = PatientHuffman::new(1e-9, 3, 2).unwrap();
        assert!(matches!(p.classify(&dist).unwrap(), Step::Skipped(g) if g > 1e-9));
    }

    #[test]
    fn round_trip_with_skips() {
        let m = model();
        let ctx = [m.vocabulary().eos()];
        let ct = Ciphertext::from_bytes(b"patience").unwrap();
        for eps in [0.02, 0.1, 1.0] {
            let p = PatientHuffman::new(eps, 11, 2).unwrap();
            let out = p.encode(&ct, &m, &ctx).unwrap();
            let back = p.decode(&out.cover, &m, &ctx).unwrap();
            assert_eq!(back.ciphertext, ct);
            let enc: Vec<bool> = out.traces.iter().map(|t| t.coded).collect();
            let dec: Vec<bool> = back.traces.iter().map(|t| t.coded).collect();
            assert_eq!(enc, dec);
            assert!(out.traces.iter().filter(|t| t.coded).all(|t| t.gate_kl.unwrap() <= eps));
        }
    }

    #[test]
    fn stalls_when_no_step_passes() {
        struct Fixed(Vocabulary, Arc<NextTokenDistribution>);
        impl DistributionProvider for Fixed {
            fn vocabulary(&self) -> &Vocabulary {
                &self.0
            }
            fn distribution_for(&self, _: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
                Ok(Arc::clone(&self.1))
            }
        }
        let vocab = Vocabulary::from_tokens(["</s>", "a", "b", "c"].map(String::from).to_vec()).unwrap();
        let dist = NextTokenDistribution::from_weights((0..4).map(|i| (TokenId(i), 4.0 - i as f64))).unwrap();
        let provider = Fixed(vocab, Arc::new(dist));
        let p = PatientHuffman::new(0.01, 1, 1).unwrap();
        let ct = Ciphertext::new(vec![true]).unwrap();
        assert!(matches!(p.encode(&ct, &provider, &[]), Err(CodecError::Stalled(STALL_LIMIT))));
    }

    #[test]
    fn threshold_must_be_positive() {
        assert!(PatientHuffman::new(0.0, 1, 5).is_err());
        assert!(PatientHuffman::new(f64::NAN, 1, 5).is_err());
    }
}
