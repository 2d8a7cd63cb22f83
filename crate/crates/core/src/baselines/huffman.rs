use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::coder::{default_step_limit, DecodeOutput, EncodeOutput, StepTrace};
use crate::lm::{DistributionProvider, NextTokenDistribution, TokenId};
use crate::message::{Ciphertext, PaddedReader};
use crate::CodecError;

use super::{check_trailing, frame_complete};

/// Canonical Huffman code over a renormalized top set.
///
/// Leaves are kept in distribution order (probability descending, id
/// ascending). Code words are assigned in order of (length, leaf index), so
/// with equal lengths the more probable token gets the smaller code.
#[derive(Debug, Clone, PartialEq)]
pub struct HuffmanCode {
    /// Leaf tokens with their renormalized probabilities.
    leaves: Vec<(TokenId, f64)>,
    lengths: Vec<u32>,
    codes: Vec<u128>,
    /// Leaf indices sorted by (length, index).
    canonical: Vec<usize>,
    /// Number of code words of each length.
    counts: Vec<usize>,
}

#[derive(PartialEq)]
struct Node {
    p: f64,
    seq: usize,
    id: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.p.total_cmp(&other.p).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const MAX_CODE_LEN: u32 = 127;

impl HuffmanCode {
    /// Builds the code for `leaves`, which must be non-empty and in
    /// distribution order. A single leaf gets the empty code word.
    pub fn build(leaves: Vec<(TokenId, f64)>) -> Result<Self, CodecError> {
        let n = leaves.len();
        if n == 0 {
            return Err(CodecError::Internal("Huffman code over an empty set".into()));
        }
        // Two smallest weights merge first. Among equal weights, later leaves
        // merge before earlier ones and leaves before internal nodes, so code
        // lengths never decrease along the distribution order.
        let mut parent = vec![usize::MAX; 2 * n - 1];
        let mut heap: BinaryHeap<Reverse<Node>> =
            leaves.iter().enumerate().map(|(id, &(_, p))| Reverse(Node { p, seq: n - 1 - id, id })).collect();
        let mut next = n;
        while heap.len() > 1 {
            let Reverse(a) = heap.pop().expect("heap has two nodes");
            let Reverse(b) = heap.pop().expect("heap has two nodes");
            parent[a.id] = next;
            parent[b.id] = next;
            heap.push(Reverse(Node { p: a.p + b.p, seq: next, id: next }));
            next += 1;
        }
        let mut depth = vec![0u32; 2 * n - 1];
        for id in (0..2 * n - 2).rev() {
            depth[id] = depth[parent[id]] + 1;
        }
        let lengths = depth[..n].to_vec();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        if max_len > MAX_CODE_LEN {
            return Err(CodecError::Internal(format!("Huffman code length {max_len} exceeds {MAX_CODE_LEN}")));
        }
        let mut canonical: Vec<usize> = (0..n).collect();
        canonical.sort_by_key(|&i| (lengths[i], i));
        let mut counts = vec![0usize; max_len as usize + 1];
        for &l in &lengths {
            counts[l as usize] += 1;
        }
        let mut codes = vec![0u128; n];
        let mut code = 0u128;
        let mut prev_len = lengths[canonical[0]];
        for (rank, &i) in canonical.iter().enumerate() {
            if rank > 0 {
                code = (code + 1) << (lengths[i] - prev_len);
            }
            codes[i] = code;
            prev_len = lengths[i];
        }
        Ok(Self { leaves, lengths, codes, canonical, counts })
    }

    /// Code over the top `2^h` entries of `dist`, renormalized.
    pub fn top(dist: &NextTokenDistribution, h: u32) -> Result<Self, CodecError> {
        let k = (1usize << h).min(dist.len());
        let top = &dist.entries()[..k];
        let z: f64 = top.iter().map(|e| e.1).sum();
        Self::build(top.iter().map(|&(id, p)| (id, p / z)).collect())
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[(TokenId, f64)] {
        &self.leaves
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }

    /// Code word of leaf `index`, MSB first.
    pub fn code(&self, index: usize) -> Vec<bool> {
        let l = self.lengths[index];
        (0..l).rev().map(|k| (self.codes[index] >> k) & 1 == 1).collect()
    }

    pub fn position(&self, token: TokenId) -> Option<usize> {
        self.leaves.iter().position(|e| e.0 == token)
    }

    /// Reads one code word from `reader`; returns the leaf index.
    pub fn read(&self, reader: &mut PaddedReader<'_>) -> usize {
        if self.leaves.len() == 1 {
            return 0;
        }
        // Canonical decoding: code words of length l occupy a contiguous
        // range starting at `first`.
        let (mut code, mut first, mut index) = (0u128, 0u128, 0usize);
        for &count in &self.counts[1..] {
            code |= u128::from(reader.next_bit());
            let count = count as u128;
            if code - first < count {
                return self.canonical[index + (code - first) as usize];
            }
            index += count as usize;
            first = (first + count) << 1;
            code <<= 1;
        }
        unreachable!("a full Huffman tree decodes every bit string")
    }

    /// `Σ 2^-len · log2(2^-len / p)` against arbitrary leaf probabilities.
    fn divergence(&self, p: impl Iterator<Item = f64>) -> f64 {
        self.lengths
            .iter()
            .zip(p)
            .map(|(&l, p)| {
                let q = (-(l as f64)).exp2();
                q * (q / p).log2()
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Divergence of the code's implied distribution from the renormalized
    /// leaf probabilities, in bits.
    pub fn kl_from_leaves(&self) -> f64 {
        self.divergence(self.leaves.iter().map(|e| e.1))
    }

    /// Divergence of the code's implied distribution from the model, in bits.
    pub fn kl_from_model(&self, dist: &NextTokenDistribution) -> f64 {
        self.divergence(dist.entries()[..self.len()].iter().map(|e| e.1))
    }
}

/// Huffman coding over the top `2^H` tokens: each step follows message bits
/// down the tree to a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Huffman {
    pub h: u32,
}

impl Huffman {
    pub fn new(h: u32) -> Result<Self, CodecError> {
        if !(1..=11).contains(&h) {
            return Err(CodecError::InvalidConfig(format!("Huffman depth exponent must be in 1..=11, got {h}")));
        }
        Ok(Self { h })
    }

    pub(crate) fn check_vocabulary(&self, provider: &dyn DistributionProvider) -> Result<(), CodecError> {
        let v = provider.vocabulary().len();
        if 1usize << self.h > v {
            return Err(CodecError::InvalidConfig(format!("2^{} leaves exceed the vocabulary of {v}", self.h)));
        }
        Ok(())
    }

    pub(crate) fn trace(
        t: usize,
        token: TokenId,
        code: &HuffmanCode,
        dist: &NextTokenDistribution,
        bits: usize,
    ) -> StepTrace {
        let z = dist.entries()[..code.len()].iter().map(|e| e.1).sum();
        StepTrace::new(t, token, code.len(), z, code.kl_from_model(dist), bits)
    }

    pub fn encode(
        &self,
        ciphertext: &Ciphertext,
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<EncodeOutput, CodecError> {
        self.check_vocabulary(provider)?;
        let framed = ciphertext.framed();
        let limit = default_step_limit(framed.len());
        let mut reader = PaddedReader::new(&framed);
        let mut context = ctx.to_vec();
        let mut cover = Vec::new();
        let mut traces = Vec::new();
        for t in 1..=limit {
            let dist = provider.next_distribution(&context)?;
            let code = HuffmanCode::top(&dist, self.h)?;
            let token = code.leaves()[code.read(&mut reader)].0;
            traces.push(Self::trace(t, token, &code, &dist, reader.position()));
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
        self.check_vocabulary(provider)?;
        let mut context = ctx.to_vec();
        let mut bits = Vec::new();
        let mut traces = Vec::with_capacity(cover.len());
        for (i, &token) in cover.iter().enumerate() {
            let t = i + 1;
            let dist = provider.next_distribution(&context)?;
            let code = HuffmanCode::top(&dist, self.h)?;
            let index = code.position(token).ok_or(CodecError::TokenOutsideSupport { step: t, token })?;
            bits.extend(code.code(index));
            traces.push(Self::trace(t, token, &code, &dist, bits.len()));
            context.push(token);
            check_trailing(&bits, t, cover.len())?;
        }
        debug_assert!(!frame_complete(&bits) || Ciphertext::unframe(&bits).is_ok());
        Ok(DecodeOutput { ciphertext: Ciphertext::unframe(&bits)?, traces })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(ps: &[f64]) -> Vec<(TokenId, f64)> {
        ps.iter().enumerate().map(|(i, &p)| (TokenId(i as u32 + 10), p)).collect()
    }

    #[test]
    fn two_leaves_give_the_first_bit_to_the_likelier_token() {
        let code = HuffmanCode::build(leaves(&[0.6, 0.4])).unwrap();
        assert_eq!(code.lengths(), &[1, 1]);
        assert_eq!(code.code(0), vec![false]);
        assert_eq!(code.code(1), vec![true]);
    }

    #[test]
    fn dyadic_depths_and_paths() {
        let code = HuffmanCode::build(leaves(&[0.5, 0.25, 0.125, 0.125])).unwrap();
        assert_eq!(code.lengths(), &[1, 2, 3, 3]);
        assert_eq!(code.code(1), vec![true, false]);
        let bits = [true, false];
        let mut reader = PaddedReader::new(&bits);
        assert_eq!(code.read(&mut reader), 1);
        assert_eq!(reader.position(), 2);
        assert!(code.kl_from_leaves().abs() < 1e-15);
    }

    #[test]
    fn codes_are_prefix_free_and_complete() {
        let code = HuffmanCode::build(leaves(&[0.3, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05])).unwrap();
        let kraft: f64 = code.lengths().iter().map(|&l| (-(l as f64)).exp2()).sum();
        assert_eq!(kraft, 1.0);
        for i in 0..code.len() {
            let w = code.code(i);
            let mut reader = PaddedReader::new(&w);
            assert_eq!(code.read(&mut reader), i);
            assert_eq!(reader.position(), w.len());
        }
        assert!(code.kl_from_leaves() > 0.0);
    }

    #[test]
    fn equal_weights_are_deterministic() {
        let a = HuffmanCode::build(leaves(&[0.2; 5])).unwrap();
        let b = HuffmanCode::build(leaves(&[0.2; 5])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lengths(), &[2, 2, 2, 3, 3]);
    }

    #[test]
    fn single_leaf_reads_nothing() {
        let code = HuffmanCode::build(leaves(&[1.0])).unwrap();
        let mut reader = PaddedReader::new(&[]);
        assert_eq!(code.read(&mut reader), 0);
        assert_eq!(reader.position(), 0);
    }
}
