//! Comparison coders: Bin-LM block coding, Huffman coding over the top `2^H`
//! tokens (RNN-Stega) and Patient-Huffman, which skips steps whose Huffman
//! distribution strays too far from the model.
//!
//! All of them consume the same length-framed bit stream as the arithmetic
//! coder, zero-padded past its end, and stop as soon as the whole frame has
//! been consumed.

mod binlm;
mod huffman;
mod patient;

pub use binlm::{bin_of, BinLm};
pub use huffman::{Huffman, HuffmanCode};
pub use patient::{PatientHuffman, DEFAULT_PATIENT_H, STALL_LIMIT};

use crate::message::Ciphertext;
use crate::CodecError;

/// Whether `bits` already hold a complete frame.
fn frame_complete(bits: &[bool]) -> bool {
    Ciphertext::framed_len(bits).is_some_and(|n| bits.len() >= n)
}

/// Decoder-side check after a step has appended its bits: the cover must
/// end exactly at the step that completes the frame.
fn check_trailing(bits: &[bool], step: usize, cover_len: usize) -> Result<(), CodecError> {
    if step < cover_len && frame_complete(bits) {
        return Err(CodecError::TrailingTokens { step });
    }
    Ok(())
}
