use serde::{Deserialize, Serialize};

use crate::coder::{DecodeOutput, EncodeOutput, StepTrace};
use crate::lm::{DistributionProvider, NextTokenDistribution, TokenId};
use crate::message::{Ciphertext, PaddedReader};
use crate::CodecError;

use super::check_trailing;

/// Bin of a token under the id-mod rule.
pub fn bin_of(token: TokenId, b: u32) -> u32 {
    token.0 % (1 << b)
}

/// Block coding: the vocabulary is split into `2^B` bins by `id mod 2^B`;
/// each step reads `B` bits and emits the most likely token of that bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinLm {
    pub b: u32,
}

impl BinLm {
    pub fn new(b: u32) -> Result<Self, CodecError> {
        if !(1..=5).contains(&b) {
            return Err(CodecError::InvalidConfig(format!("Bin-LM block size must be in 1..=5, got {b}")));
        }
        Ok(Self { b })
    }

    fn bins(&self) -> usize {
        1 << self.b
    }

    fn check_vocabulary(&self, provider: &dyn DistributionProvider) -> Result<(), CodecError> {
        let v = provider.vocabulary().len();
        if self.bins() > v {
            return Err(CodecError::InvalidConfig(format!("2^{} bins exceed the vocabulary of {v}", self.b)));
        }
        Ok(())
    }

    /// Most likely token of every bin (`None` for bins without support).
    fn tops(&self, dist: &NextTokenDistribution) -> Vec<Option<(TokenId, f64)>> {
        let mut tops = vec![None; self.bins()];
        let mut missing = self.bins();
        for &(id, p) in dist.entries() {
            let slot = &mut tops[bin_of(id, self.b) as usize];
            if slot.is_none() {
                *slot = Some((id, p));
                missing -= 1;
                if missing == 0 {
                    break;
                }
            }
        }
        tops
    }

    /// `Σ_bins 2^-B · log2(2^-B / p_top)`: divergence of the uniform choice
    /// among bin leaders from the model.
    fn step_trace(&self, t: usize, token: TokenId, tops: &[Option<(TokenId, f64)>], bits: usize) -> StepTrace {
        let share = 1.0 / self.bins() as f64;
        let z: f64 = tops.iter().flatten().map(|e| e.1).sum();
        let kl = tops
            .iter()
            .map(|e| match e {
                Some((_, p)) => share * (share / p).log2(),
                None => f64::INFINITY,
            })
            .sum();
        StepTrace::new(t, token, self.bins(), z, kl, bits)
    }

    pub fn encode(
        &self,
        ciphertext: &Ciphertext,
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<EncodeOutput, CodecError> {
        self.check_vocabulary(provider)?;
        let framed = ciphertext.framed();
        let steps = framed.len().div_ceil(self.b as usize);
        let mut reader = PaddedReader::new(&framed);
        let mut context = ctx.to_vec();
        let mut cover = Vec::with_capacity(steps);
        let mut traces = Vec::with_capacity(steps);
        for t in 1..=steps {
            let dist = provider.next_distribution(&context)?;
            let bin = reader.read(self.b);
            let tops = self.tops(&dist);
            let (token, _) = tops[bin as usize].ok_or(CodecError::EmptyBin { step: t, bin })?;
            traces.push(self.step_trace(t, token, &tops, reader.position()));
            cover.push(token);
            context.push(token);
        }
        Ok(EncodeOutput { cover, traces, coded_bits: reader.position() })
    }

    pub fn decode(
        &self,
        cover: &[TokenId],
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<DecodeOutput, CodecError> {
        self.check_vocabulary(provider)?;
        let mut context = ctx.to_vec();
        let mut bits = Vec::with_capacity(cover.len() * self.b as usize);
        let mut traces = Vec::with_capacity(cover.len());
        for (i, &token) in cover.iter().enumerate() {
            let t = i + 1;
            let dist = provider.next_distribution(&context)?;
            let bin = bin_of(token, self.b);
            let tops = self.tops(&dist);
            if tops[bin as usize].map(|e| e.0) != Some(token) {
                return Err(CodecError::TokenOutsideSupport { step: t, token });
            }
            bits.extend((0..self.b).rev().map(|k| (bin >> k) & 1 == 1));
            traces.push(self.step_trace(t, token, &tops, bits.len()));
            context.push(token);
            check_trailing(&bits, t, cover.len())?;
        }
        Ok(DecodeOutput { ciphertext: Ciphertext::unframe(&bits)?, traces })
    }
}
