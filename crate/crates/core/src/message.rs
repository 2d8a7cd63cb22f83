//! Ciphertext bit strings and the length-prefixed framing shared by all
//! coders.

use crate::CodecError;

/// Length of the big-endian message-length prefix, in bits.
pub const HEADER_BITS: usize = 32;

/// Non-empty bit string, most significant bit first. Read as the binary
/// fraction `Σ bits[i]·2^-(i+1)` in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    bits: Vec<bool>,
}

impl Ciphertext {
    pub fn new(bits: Vec<bool>) -> Result<Self, CodecError> {
        if bits.is_empty() {
            return Err(CodecError::EmptyMessage);
        }
        if u32::try_from(bits.len()).is_err() {
            return Err(CodecError::MessageTooLong(bits.len()));
        }
        Ok(Self { bits })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::new(bytes_to_bits(bytes))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Packs into bytes, MSB first. `None` unless the length is a whole
    /// number of bytes.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        (self.bits.len().is_multiple_of(8)).then(|| bits_to_bytes(&self.bits))
    }

    /// The binary fraction the bits denote (rounded to f64).
    pub fn fraction(&self) -> f64 {
        self.bits.iter().rev().fold(0.0, |acc, &b| (acc + f64::from(u8::from(b))) / 2.0)
    }

    /// Length header followed by the message bits.
    pub fn framed(&self) -> Vec<bool> {
        let len = self.bits.len() as u32;
        let mut out: Vec<bool> = (0..HEADER_BITS).rev().map(|i| (len >> i) & 1 == 1).collect();
        out.extend_from_slice(&self.bits);
        out
    }

    /// Number of framed bits required to recover a message whose header is
    /// the first 32 bits of `bits`, or `None` if the header is incomplete.
    pub fn framed_len(bits: &[bool]) -> Option<usize> {
        (bits.len() >= HEADER_BITS).then(|| {
            let len = bits[..HEADER_BITS].iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
            HEADER_BITS + len as usize
        })
    }

    /// Reads a framed message from the front of `bits`; trailing bits are
    /// ignored.
    pub fn unframe(bits: &[bool]) -> Result<Self, CodecError> {
        let needed =
            Self::framed_len(bits).ok_or(CodecError::Truncated { recovered: bits.len(), needed: HEADER_BITS })?;
        if bits.len() < needed {
            return Err(CodecError::Truncated { recovered: bits.len(), needed });
        }
        Self::new(bits[HEADER_BITS..needed].to_vec())
    }
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1)).collect()
}

/// Packs bits MSB first, zero-padding the final byte.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))).collect()
}

/// Sequential reader over framed bits that yields zeros past the end.
#[derive(Debug, Clone)]
pub struct PaddedReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> PaddedReader<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn next_bit(&mut self) -> bool {
        let b = self.bits.get(self.pos).copied().unwrap_or(false);
        self.pos += 1;
        b
    }

    /// Reads `n ≤ 32` bits as a big-endian integer.
    pub fn read(&mut self, n: u32) -> u32 {
        (0..n).fold(0, |acc, _| (acc << 1) | u32::from(self.next_bit()))
    }

    /// Bits consumed so far, padding included.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn exhausted(&self) -> bool {
        self.pos >= self.bits.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_of_101_is_0625() {
        let m = Ciphertext::new(vec![true, false, true]).unwrap();
        assert_eq!(m.fraction(), 0.625);
    }

    #[test]
    fn empty_message_is_rejected() {
        assert!(matches!(Ciphertext::new(vec![]), Err(CodecError::EmptyMessage)));
        assert!(matches!(Ciphertext::from_bytes(&[]), Err(CodecError::EmptyMessage)));
    }

    #[test]
    fn framing_round_trip() {
        let m = Ciphertext::new(vec![true]).unwrap();
        let framed = m.framed();
        assert_eq!(framed.len(), 33);
        assert!(framed[31] && framed[32]);
        assert_eq!(Ciphertext::framed_len(&framed), Some(33));
        let mut extended = framed.clone();
        extended.extend([true, false, true]);
        assert_eq!(Ciphertext::unframe(&extended).unwrap(), m);
        assert!(matches!(Ciphertext::unframe(&framed[..32]), Err(CodecError::Truncated { needed: 33, .. })));
        assert!(matches!(Ciphertext::unframe(&framed[..10]), Err(CodecError::Truncated { needed: 32, .. })));
    }

    #[test]
    fn bytes_are_msb_first() {
        let m = Ciphertext::from_bytes(&[0b1000_0001, 0xff]).unwrap();
        assert_eq!(&m.bits()[..8], &[true, false, false, false, false, false, false, true]);
        assert_eq!(m.to_bytes().unwrap(), vec![0b1000_0001, 0xff]);
        assert_eq!(Ciphertext::new(vec![true; 3]).unwrap().to_bytes(), None);
    }

    #[test]
    fn padded_reader_yields_zeros() {
        let bits = [true, true];
        let mut r = PaddedReader::new(&bits);
        assert_eq!(r.read(4), 0b1100);
        assert!(r.exhausted());
        assert_eq!(r.position(), 4);
    }
}
