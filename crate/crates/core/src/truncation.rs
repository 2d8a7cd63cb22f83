//! Top-K truncation of next-token distributions.
//!
//! Truncating `P` to its top-K set and renormalizing gives `Q = P / Z_K` on
//! that set, and `D_KL(Q ‖ P) = -log2 Z_K` bits. The self-adjusting policy
//! picks, per step, the smallest K with `Z_K ≥ 2^-δ_t`, which keeps every
//! step within budget `δ_t`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::lm::{NextTokenDistribution, TokenId};
use crate::CodecError;

/// Default cap on the self-adjusting K.
pub const DEFAULT_K_MAX: usize = 4096;

/// Per-step budget rule for the self-adjusting policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `δ_t = δ0`
    #[default]
    Constant,
    /// `δ_t = δ0 / t²`; the budgets sum to `δ0·π²/6` over an unbounded message.
    InverseSquare,
}

impl Schedule {
    pub fn budget(self, delta0: f64, t: usize) -> f64 {
        match self {
            Schedule::Constant => delta0,
            Schedule::InverseSquare => delta0 / (t as f64 * t as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    StaticK { k: usize },
    SelfAdjusting { delta0: f64, schedule: Schedule, k_max: usize },
}

impl TruncationPolicy {
    pub fn static_k(k: usize) -> Result<Self, CodecError> {
        if k < 2 {
            return Err(CodecError::InvalidConfig(format!("static K must be at least 2, got {k}")));
        }
        Ok(Self::StaticK { k })
    }

    pub fn self_adjusting(delta0: f64, schedule: Schedule) -> Result<Self, CodecError> {
        Self::self_adjusting_capped(delta0, schedule, DEFAULT_K_MAX)
    }

    pub fn self_adjusting_capped(delta0: f64, schedule: Schedule, k_max: usize) -> Result<Self, CodecError> {
        if !(delta0 > 0.0 && delta0 <= 1.0) {
            return Err(CodecError::InvalidConfig(format!("delta0 must be in (0, 1], got {delta0}")));
        }
        if k_max < 1 {
            return Err(CodecError::InvalidConfig("k_max must be positive".into()));
        }
        Ok(Self::SelfAdjusting { delta0, schedule, k_max })
    }

    /// Per-step budget `δ_t` for step `t ≥ 1`, if the policy has one.
    pub fn budget(&self, t: usize) -> Option<f64> {
        match *self {
            Self::StaticK { .. } => None,
            Self::SelfAdjusting { delta0, schedule, .. } => Some(schedule.budget(delta0, t)),
        }
    }

    /// Largest K this policy can select.
    pub fn max_k(&self) -> usize {
        match *self {
            Self::StaticK { k } => k,
            Self::SelfAdjusting { k_max, .. } => k_max,
        }
    }
}

/// Outcome of truncating one step's distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationDecision {
    /// Number of tokens kept.
    pub k: usize,
    /// Mass of the kept tokens under `P`.
    pub z: f64,
    /// `-log2 z`, the step's truncation divergence in bits.
    pub kl: f64,
    /// Kept tokens with renormalized probabilities, in distribution order.
    pub q: Vec<(TokenId, f64)>,
    /// Budget in force, for self-adjusting policies.
    pub budget: Option<f64>,
    /// Set when the budget could not be met within `k_max` (or within the
    /// entries a remote provider sent).
    pub budget_violation: bool,
}

/// Smallest K whose top-K mass reaches `2^-delta`.
///
/// Cumulative mass is accumulated in distribution order. If even all entries
/// fall short (only possible when the distribution has a tail), the entry
/// count is returned.
pub fn select_min_k(dist: &NextTokenDistribution, delta: f64) -> usize {
    let threshold = (-delta).exp2();
    let mut cum = 0.0;
    for (i, &(_, p)) in dist.entries().iter().enumerate() {
        cum += p;
        if cum >= threshold {
            return i + 1;
        }
    }
    dist.len()
}

fn top_mass(dist: &NextTokenDistribution, k: usize) -> f64 {
    if k == dist.len() && dist.tail() == 0.0 {
        return 1.0;
    }
    dist.entries()[..k].iter().map(|e| e.1).sum()
}

/// Truncates `dist` at step `t` (1-based).
pub fn truncate(dist: &NextTokenDistribution, policy: &TruncationPolicy, t: usize) -> TruncationDecision {
    let (k, budget, budget_violation) = match *policy {
        TruncationPolicy::StaticK { k } => (k.min(dist.len()), None, false),
        TruncationPolicy::SelfAdjusting { k_max, .. } => {
            let delta = policy.budget(t).expect("self-adjusting policies carry a budget");
            let wanted = select_min_k(dist, delta);
            let k = wanted.min(k_max);
            let z = top_mass(dist, k);
            let violated = z < (-delta).exp2();
            if violated {
                log::warn!("step {t}: budget {delta} not met with K = {k} (mass {z})");
            }
            (k, Some(delta), violated)
        }
    };
    let z = top_mass(dist, k);
    let q = dist.entries()[..k].iter().map(|&(id, p)| (id, p / z)).collect();
    TruncationDecision { k, z, kl: kl_of_mass(z), q, budget, budget_violation }
}

/// `-log2 z`, clamped at zero against rounding above 1.
pub fn kl_of_mass(z: f64) -> f64 {
    if z >= 1.0 {
        0.0
    } else {
        -z.log2()
    }
}

/// `√(ln2/2 · total_kl_bits)`: Pinsker's bound on total variation from a KL
/// divergence measured in bits.
pub fn pinsker_bound(total_kl_bits: f64) -> f64 {
    (LN_2 / 2.0 * total_kl_bits.max(0.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("a constant budget has no a-priori bound without a message horizon")]
    Unbounded,
    #[error("delta0 must be a non-negative number, got {0}")]
    InvalidDelta(f64),
}

/// A-priori bound on the total variation distance for a whole message.
///
/// The inverse-square schedule gives `√(π²·ln2/12 · δ0)` for any length; a
/// constant budget needs the number of steps `horizon` and gives
/// `√(ln2/2 · T·δ0)`. Values above 1 are vacuous since TVD ≤ 1.
pub fn total_bound(delta0: f64, schedule: Schedule, horizon: Option<usize>) -> Result<f64, BoundError> {
    if !(delta0.is_finite() && delta0 >= 0.0) {
        return Err(BoundError::InvalidDelta(delta0));
    }
    match schedule {
        Schedule::InverseSquare => Ok((PI * PI * LN_2 / 12.0 * delta0).sqrt()),
        Schedule::Constant => match horizon {
            Some(steps) => Ok(pinsker_bound(steps as f64 * delta0)),
            None if delta0 == 0.0 => Ok(0.0),
            None => Err(BoundError::Unbounded),
        },
    }
}
