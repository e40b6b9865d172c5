//! Dual-domain Monte Carlo of the false-alarm probability.
//!
//! Under `H₀` every cell is `β·exp(E/α)` with `E` a unit exponential, so each
//! detector reduces to a comparison of exponential sums. Trial `t` reads the
//! variates `t·(N+M) .. (t+1)·(N+M)` of its stream, which makes the count a
//! pure function of `(seed, stream, trials)` however the blocks are scheduled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::DetectorKind;
use crate::clutter::{RandomStream, VariateCursor};
use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};
use crate::stats::EstimateWithCI;

/// Trials per scheduling block.
pub(crate) const BLOCK_TRIALS: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub trials: u64,
    pub seed: u64,
}

/// Runs `trials` trials and returns one rejection count per threshold slot.
///
/// `trial` must consume exactly `words_per_trial` variates from the cursor.
pub(crate) fn count_rejections<F>(stream: RandomStream, trials: u64, words_per_trial: u64, slots: usize, trial: F) -> Vec<u64>
where
    F: Fn(&mut VariateCursor, &mut Vec<f64>, &mut [u64]) + Sync,
{
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_TRIALS;
            let end = (start + BLOCK_TRIALS).min(trials);
            let mut cursor = stream.cursor_at(start * words_per_trial);
            let mut scratch = Vec::new();
            let mut counts = vec![0u64; slots];
            for _ in start..end {
                trial(&mut cursor, &mut scratch, &mut counts);
            }
            counts
        })
        .reduce(
            || vec![0u64; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Stream used for a detector configuration; independent of `τ` so that a
/// batch over thresholds reproduces the single-threshold estimates exactly.
pub(crate) fn configuration_stream(seed: u64, domain: u64, kind: DetectorKind, n_cut: u64, m_ref: u64) -> RandomStream {
    RandomStream::new(seed, domain)
        .substream(kind as u64)
        .substream(n_cut)
        .substream(m_ref)
}

const DUAL_DOMAIN: u64 = 0xd0a1;

// Σ -ln u over `count` uniforms, taking one log per 16 factors.
#[inline]
fn exponential_sum(cursor: &mut VariateCursor, count: u64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut product = 1.0;
    let mut largest: f64 = 0.0;
    for i in 0..count {
        let u = cursor.open_unit();
        largest = largest.max(u);
        product *= u;
        if i % 16 == 15 {
            sum -= product.ln();
            product = 1.0;
        }
    }
    sum -= product.ln();
    // (Σ E_j, min E_j)
    (sum, -largest.ln())
}

pub fn mc_dual_pfa(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    trials: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    Ok(mc_dual_pfa_taus(kind, n_cut, m_ref, &[tau], trials, seed)?[0])
}

/// [`mc_dual_pfa`] for several thresholds on shared trials.
pub fn mc_dual_pfa_taus(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    taus: &[ThresholdMultiplier],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateWithCI>> {
    kind.check_shape(n_cut, m_ref)?;
    if trials == 0 {
        return Err(Error::domain("Monte Carlo needs at least one trial"));
    }
    let stream = configuration_stream(seed, DUAL_DOMAIN, kind, n_cut, m_ref);
    let taus: Vec<f64> = taus.iter().map(|t| t.value()).collect();
    let n = n_cut as f64;
    let m = m_ref as f64;
    let full = kind.is_full_cfar();
    let counts = count_rejections(stream, trials, n_cut + m_ref, taus.len(), |cursor, _, counts| {
        let (cut_sum, _) = exponential_sum(cursor, n_cut);
        let (ref_sum, ref_min) = exponential_sum(cursor, m_ref);
        // ΣX* > (N - Mτ)Y*_(1) + τΣY*, written about the minimum
        let (floor, excess) = if full { (n * ref_min, ref_sum - m * ref_min) } else { (0.0, ref_sum) };
        for (count, &t) in counts.iter_mut().zip(&taus) {
            if cut_sum > floor + t * excess {
                *count += 1;
            }
        }
    });
    Ok(counts
        .into_iter()
        .map(|c| EstimateWithCI::from_counts(c, trials, seed))
        .collect())
}
