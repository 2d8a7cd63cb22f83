use crate::lm::TokenId;
use crate::CodecError;

use super::CoderInterval;

/// Integer split of a coder interval among the kept tokens, in distribution
/// order, starting at the interval's low end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedDistribution {
    base: u64,
    entries: Vec<(TokenId, u64)>,
}

impl QuantizedDistribution {
    pub fn entries(&self) -> &[(TokenId, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn token(&self, index: usize) -> TokenId {
        self.entries[index].0
    }

    pub fn position(&self, token: TokenId) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == token)
    }

    /// Sub-intervals `(token, low, high)` in order.
    pub fn bounds(&self) -> impl Iterator<Item = (TokenId, u64, u64)> + '_ {
        self.entries.iter().scan(self.base, |lo, &(id, w)| {
            let start = *lo;
            *lo += w;
            Some((id, start, start + w))
        })
    }

    pub fn sub_interval(&self, index: usize) -> (u64, u64) {
        let start = self.base + self.entries[..index].iter().map(|e| e.1).sum::<u64>();
        (start, start + self.entries[index].1)
    }

    /// `D_KL(widths/total ‖ q)` in bits: the divergence added by rounding
    /// `q` to integer widths.
    pub fn divergence_from(&self, q: &[(TokenId, f64)]) -> f64 {
        let total = self.total() as f64;
        self.entries
            .iter()
            .zip(q)
            .map(|(&(_, w), &(_, p))| {
                let r = w as f64 / total;
                r * (r / p).log2()
            })
            .sum::<f64>()
            .max(0.0)
    }
}

/// Splits `interval` among `q` (renormalized probabilities, in order) by
/// largest-remainder apportionment.
///
/// Every token gets at least one unit: tokens whose proportional share is
/// below one unit are pinned to one and the rest of the width is re-split
/// among the others. Remainder ties go to the earlier token.
pub fn quantize(q: &[(TokenId, f64)], interval: &CoderInterval) -> Result<QuantizedDistribution, CodecError> {
    let width = interval.width();
    if q.is_empty() || width < q.len() as u64 {
        return Err(CodecError::IntervalExhausted { width, tokens: q.len() });
    }
    let mut pinned = vec![false; q.len()];
    let mut widths = vec![0u64; q.len()];
    loop {
        let free = width - pinned.iter().filter(|&&p| p).count() as u64;
        let mass: f64 = q.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(e, _)| e.1).sum();
        let mut newly_pinned = false;
        let mut ideal = vec![0.0; q.len()];
        for (i, &(_, p)) in q.iter().enumerate() {
            if pinned[i] {
                continue;
            }
            ideal[i] = p / mass * free as f64;
            if ideal[i] < 1.0 {
                pinned[i] = true;
                newly_pinned = true;
            }
        }
        if newly_pinned {
            continue;
        }
        let mut assigned = 0u64;
        for i in 0..q.len() {
            widths[i] = if pinned[i] { 1 } else { ideal[i].floor() as u64 };
            if !pinned[i] {
                assigned += widths[i];
            }
        }
        let mut leftover = free.saturating_sub(assigned);
        let mut order: Vec<usize> = (0..q.len()).filter(|&i| !pinned[i]).collect();
        order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
        if order.is_empty() {
            order.push(0);
        }
        for &i in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            widths[i] += 1;
            leftover -= 1;
        }
        break;
    }
    let entries: Vec<(TokenId, u64)> = q.iter().map(|e| e.0).zip(widths).collect();
    debug_assert_eq!(entries.iter().map(|e| e.1).sum::<u64>(), width);
    Ok(QuantizedDistribution { base: interval.low(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(ps: &[f64]) -> Vec<(TokenId, f64)> {
        ps.iter().enumerate().map(|(i, &p)| (TokenId(i as u32), p)).collect()
    }

    fn widths(ps: &[f64], width: u64) -> Vec<u64> {
        let iv = CoderInterval::new(0, width, 16).unwrap();
        quantize(&q(ps), &iv).unwrap().entries().iter().map(|e| e.1).collect()
    }

    #[test]
    fn symmetric_split() {
        assert_eq!(widths(&[0.5, 0.5], 4), vec![2, 2]);
    }

    #[test]
    fn exact_proportions() {
        assert_eq!(widths(&[0.7, 0.3], 10), vec![7, 3]);
    }

    #[test]
    fn largest_remainder_gets_the_spare_unit() {
        // Ideal 3.5, 2.1, 1.4: floors 3, 2, 1 and the 0.5 remainder wins.
        assert_eq!(widths(&[0.5, 0.3, 0.2], 7), vec![4, 2, 1]);
    }

    #[test]
    fn remainder_ties_go_to_earlier_tokens() {
        assert_eq!(widths(&[0.25, 0.25, 0.25, 0.25], 6), vec![2, 2, 1, 1]);
    }

    #[test]
    fn tiny_probabilities_get_one_unit() {
        let w = widths(&[0.998, 0.001, 0.001], 100);
        assert_eq!(w, vec![98, 1, 1]);
    }

    #[test]
    fn too_narrow_interval_is_an_error() {
        let iv = CoderInterval::new(10, 12, 16).unwrap();
        assert!(matches!(
            quantize(&q(&[0.5, 0.3, 0.2]), &iv),
            Err(CodecError::IntervalExhausted { width: 2, tokens: 3 })
        ));
    }

    #[test]
    fn bounds_tile_the_interval() {
        let iv = CoderInterval::new(100, 107, 16).unwrap();
        let qd = quantize(&q(&[0.5, 0.3, 0.2]), &iv).unwrap();
        let b: Vec<_> = qd.bounds().map(|(_, lo, hi)| (lo, hi)).collect();
        assert_eq!(b, vec![(100, 104), (104, 106), (106, 107)]);
        assert_eq!(qd.sub_interval(2), (106, 107));
        assert_eq!(qd.position(TokenId(1)), Some(1));
    }
}
