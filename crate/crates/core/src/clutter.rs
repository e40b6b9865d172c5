//! Pareto Type I clutter primitives.
//!
//! A Pareto variate with shape `α` and scale `β` is generated from a unit
//! exponential `X*` through `X = β·exp(X*/α)`. The exponential is obtained by
//! inversion of a uniform draw, so every sample is a deterministic function of
//! `(seed, stream_id, variate index)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape/scale pair of a Pareto Type I law, `F(t) = 1 - (β/t)^α` for `t ≥ β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoParams {
    shape: f64,
    scale: f64,
}

impl ParetoParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::domain(format!("Pareto shape must be positive and finite, got {shape}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!("Pareto scale must be positive and finite, got {scale}")));
        }
        Ok(Self { shape, scale })
    }

    /// Shape `α`.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Scale `β`, the lower endpoint of the support.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn pareto_cdf(params: &ParetoParams, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::domain(format!("CDF argument must be finite, got {t}")));
    }
    if t < params.scale {
        return Ok(0.0);
    }
    // 1 - (β/t)^α, written through exp_m1 to keep precision near the lower endpoint
    let log_ratio = (params.scale / t).ln();
    Ok(-(params.shape * log_ratio).exp_m1())
}

pub fn pareto_quantile(params: &ParetoParams, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!("quantile level must lie in [0, 1), got {u}")));
    }
    let z = params.scale * (-(-u).ln_1p() / params.shape).exp();
    if !z.is_finite() {
        return Err(Error::Overflow(format!(
            "Pareto quantile at u = {u} exceeds the double range"
        )));
    }
    Ok(z)
}

/// Maps a unit exponential dual `x*` to its Pareto variate `β·exp(x*/α)`.
pub fn dual_to_pareto(params: &ParetoParams, x_star: f64) -> Result<f64> {
    if !(x_star >= 0.0) {
        return Err(Error::domain(format!("dual variate must be non-negative, got {x_star}")));
    }
    Ok(params.scale * (x_star / params.shape).exp())
}

/// Maps a Pareto variate back to its unit exponential dual `α·ln(z/β)`.
pub fn pareto_to_dual(params: &ParetoParams, z: f64) -> Result<f64> {
    if !(z >= params.scale) {
        return Err(Error::domain(format!(
            "value {z} lies below the Pareto scale {}",
            params.scale
        )));
    }
    Ok(params.shape * (z / params.scale).ln())
}

/// Addressable random source: a ChaCha8 key derived from `seed`, one ChaCha
/// stream per `stream_id`, and a counter that indexes 64-bit variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream for an independent unit of work (a grid point, a detector).
    pub fn substream(&self, index: u64) -> RandomStream {
        RandomStream {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    /// Cursor positioned at variate `index` of this stream.
    pub fn cursor_at(&self, index: u64) -> VariateCursor {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(u128::from(index) * 2);
        VariateCursor { rng }
    }
}

// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sequential reader over the variates of a [`RandomStream`].
pub struct VariateCursor {
    rng: ChaCha8Rng,
}

impl VariateCursor {
    /// Uniform on `(0, 1]` with 53 random bits.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-mean exponential by inversion.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.open_unit().ln()
    }
}

pub fn sample_exponential_unit(stream: &RandomStream, count: usize) -> Vec<f64> {
    let mut cursor = stream.cursor_at(0);
    (0..count).map(|_| cursor.exponential()).collect()
}

pub fn sample_pareto(params: &ParetoParams, stream: &RandomStream, count: usize) -> Vec<f64> {
    let mut cursor = stream.cursor_at(0);
    (0..count)
        .map(|_| params.scale * (cursor.exponential() / params.shape).exp())
        .collect()
}
