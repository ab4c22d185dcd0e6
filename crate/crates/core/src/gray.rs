//! Gray-code walk over `{-1, 1}^N`.
//!
//! Configurations are encoded as bit masks, bit `i` set meaning `σᵢ = −1`.
//! The walk starts at the all-plus configuration (mask 0) and every step
//! flips exactly one spin, so observers can update running sums in O(1)
//! or O(k) per step instead of recomputing them.

use crate::error::{Error, Result};

/// Hard ceiling on the number of spins a walk may enumerate.
pub const MAX_WALK_SPINS: usize = 30;

/// One step of the walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    /// Index of the flipped spin.
    pub site: usize,
    /// Value of the flipped spin *before* the flip.
    pub old: f64,
    /// Mask of the configuration after the flip.
    pub mask: u32,
}

/// Spin value of site `i` in `mask`.
#[inline]
pub fn spin(mask: u32, i: usize) -> f64 {
    if mask >> i & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Expands a mask into a spin vector of length `n`.
pub fn spins(mask: u32, n: usize) -> Vec<f64> {
    (0..n).map(|i| spin(mask, i)).collect()
}

/// Normalized overlap `⟨σ, τ⟩` of two configurations.
#[inline]
pub fn overlap(a: u32, b: u32, n: usize) -> f64 {
    1.0 - 2.0 * (a ^ b).count_ones() as f64 / n as f64
}

/// Visits the all-plus configuration via `start`, then the remaining
/// `2^n − 1` configurations in reflected Gray order via `step`.
pub fn walk(n: usize, mut start: impl FnMut(), mut step: impl FnMut(Flip)) -> Result<()> {
    if n > MAX_WALK_SPINS {
        return Err(Error::Capability(format!(
            "Gray walk over {n} spins exceeds the {MAX_WALK_SPINS}-spin ceiling"
        )));
    }
    start();
    let total: u64 = 1 << n;
    let mut mask: u32 = 0;
    for t in 1..total {
        let site = t.trailing_zeros() as usize;
        let old = spin(mask, site);
        mask ^= 1 << site;
        step(Flip { site, old, mask });
    }
    Ok(())
}
