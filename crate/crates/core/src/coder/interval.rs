use serde::Serialize;

use crate::CodecError;

pub const DEFAULT_PRECISION: u32 = 26;
pub const MIN_PRECISION: u32 = 16;
pub const MAX_PRECISION: u32 = 30;

/// Half-open integer interval `[low, high)` inside `[0, 2^precision)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoderInterval {
    low: u64,
    high: u64,
    precision: u32,
}

/// One renormalization doubling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// Interval in the lower half: bit 0 is fixed.
    Lower,
    /// Interval in the upper half: bit 1 is fixed.
    Upper,
    /// Interval in the middle half: the next bit is undecided (underflow).
    Straddle,
}

impl Shift {
    /// Maps a point through the doubling, shifting `incoming` into the
    /// lowest bit.
    pub fn map(self, x: u64, precision: u32, incoming: bool) -> u64 {
        let offset = match self {
            Shift::Lower => 0,
            Shift::Upper => 1 << (precision - 1),
            Shift::Straddle => 1 << (precision - 2),
        };
        2 * (x - offset) + u64::from(incoming)
    }
}

impl CoderInterval {
    pub fn full(precision: u32) -> Result<Self, CodecError> {
        check_precision(precision)?;
        Ok(Self { low: 0, high: 1 << precision, precision })
    }

    pub fn new(low: u64, high: u64, precision: u32) -> Result<Self, CodecError> {
        check_precision(precision)?;
        if !(low < high && high <= 1 << precision) {
            return Err(CodecError::Internal(format!("[{low}, {high}) is not a {precision}-bit interval")));
        }
        Ok(Self { low, high, precision })
    }

    pub fn low(&self) -> u64 {
        self.low
    }

    pub fn high(&self) -> u64 {
        self.high
    }

    pub fn width(&self) -> u64 {
        self.high - self.low
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    fn half(&self) -> u64 {
        1 << (self.precision - 1)
    }

    fn quarter(&self) -> u64 {
        1 << (self.precision - 2)
    }

    /// Restricts to the sub-interval `[low, high)`, which must lie inside.
    pub(crate) fn narrow(&mut self, low: u64, high: u64) {
        debug_assert!(self.low <= low && low < high && high <= self.high);
        self.low = low;
        self.high = high;
    }

    /// The doubling that applies now, if any.
    pub fn next_shift(&self) -> Option<Shift> {
        if self.high <= self.half() {
            Some(Shift::Lower)
        } else if self.low >= self.half() {
            Some(Shift::Upper)
        } else if self.low >= self.quarter() && self.high <= 3 * self.quarter() {
            Some(Shift::Straddle)
        } else {
            None
        }
    }

    pub fn apply(&mut self, shift: Shift) {
        self.low = shift.map(self.low, self.precision, false);
        self.high = shift.map(self.high, self.precision, false);
    }

    /// Doubles the interval until it straddles the midpoint with more than a
    /// quarter of the range on its wider side, recording fixed bits in
    /// `fixed`. Returns the shifts applied.
    ///
    /// Afterwards the width exceeds `2^(precision-2)`.
    pub fn rescale(&mut self, fixed: &mut FixedBits) -> Vec<Shift> {
        let mut shifts = Vec::new();
        while let Some(shift) = self.next_shift() {
            self.apply(shift);
            fixed.record(shift);
            shifts.push(shift);
        }
        shifts
    }
}

fn check_precision(precision: u32) -> Result<(), CodecError> {
    if (MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
        Ok(())
    } else {
        Err(CodecError::InvalidPrecision(precision))
    }
}

/// Bits fixed by renormalization, with the underflow counter.
///
/// Each straddle doubling defers one bit whose value is the complement of the
/// next decided bit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedBits {
    bits: Vec<bool>,
    pending: usize,
}

impl FixedBits {
    pub fn record(&mut self, shift: Shift) {
        match shift {
            Shift::Lower => self.emit(false),
            Shift::Upper => self.emit(true),
            Shift::Straddle => self.pending += 1,
        }
    }

    fn emit(&mut self, bit: bool) {
        self.bits.push(bit);
        self.bits.extend(std::iter::repeat_n(!bit, self.pending));
        self.pending = 0;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Straddle doublings not yet resolved.
    pub fn pending(&self) -> usize {
        self.pending
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 26;

    #[test]
    fn lower_half_emits_zero() {
        let mut iv = CoderInterval::new(0, 1 << 25, P).unwrap();
        let mut fixed = FixedBits::default();
        assert_eq!(iv.rescale(&mut fixed), vec![Shift::Lower]);
        assert_eq!(fixed.bits(), &[false]);
        assert_eq!((iv.low(), iv.high()), (0, 1 << 26));
    }

    #[test]
    fn upper_half_emits_one() {
        let mut iv = CoderInterval::new(1 << 25, 1 << 26, P).unwrap();
        let mut fixed = FixedBits::default();
        assert_eq!(iv.rescale(&mut fixed), vec![Shift::Upper]);
        assert_eq!(fixed.bits(), &[true]);
        assert_eq!((iv.low(), iv.high()), (0, 1 << 26));
    }

    #[test]
    fn straddle_defers_a_bit() {
        let mut iv = CoderInterval::new((1 << 24) + 1, (1 << 25) + (1 << 24), P).unwrap();
        let mut fixed = FixedBits::default();
        assert_eq!(iv.rescale(&mut fixed), vec![Shift::Straddle]);
        assert!(fixed.is_empty());
        assert_eq!(fixed.pending(), 1);
        assert_eq!((iv.low(), iv.high()), (2, 1 << 26));
    }

    #[test]
    fn pending_bits_resolve_as_complement() {
        let mut fixed = FixedBits::default();
        fixed.record(Shift::Straddle);
        fixed.record(Shift::Straddle);
        fixed.record(Shift::Lower);
        assert_eq!(fixed.bits(), &[false, true, true]);
        fixed.record(Shift::Straddle);
        fixed.record(Shift::Upper);
        assert_eq!(fixed.bits(), &[false, true, true, true, false]);
    }

    #[test]
    fn rescaled_width_exceeds_a_quarter() {
        for (lo, hi) in [(5, 9), (100, 1 << 20), ((1 << 25) - 3, (1 << 25) + 3), (0, 1)] {
            let mut iv = CoderInterval::new(lo, hi, P).unwrap();
            iv.rescale(&mut FixedBits::default());
            assert!(iv.width() > 1 << (P - 2), "[{lo}, {hi}) -> {iv:?}");
        }
    }

    #[test]
    fn precision_range() {
        assert!(CoderInterval::full(15).is_err());
        assert!(CoderInterval::full(31).is_err());
        assert!(CoderInterval::full(16).is_ok());
        assert!(CoderInterval::new(4, 4, 16).is_err());
    }
}
