//! Adaptive Gauss–Kronrod integration and the quadrature false-alarm oracles.
//!
//! Finite intervals use a 10/21-point Gauss–Kronrod pair with global
//! bisection of the worst subinterval. Semi-infinite integrals are integrated
//! on a growing finite range until an analytic bound on the remaining tail is
//! negligible.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::incgamma::{gamma_density, regularized_upper_gamma};
use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};

/// Relative accuracy requested on top of the absolute tolerance.
pub const RELATIVE_GOAL: f64 = 1e-12;
/// Largest absolute tolerance accepted by the Pfa oracles.
pub const MAX_TOLERANCE: f64 = 1e-6;

const MAX_INTERVALS: usize = 4000;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    roundoff: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut fv = [0.0; 21];
    fv[10] = fc;
    for j in 0..10 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(centre - dx), f(centre + dx));
        fv[j] = f1;
        fv[20 - j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv[j] - mean).abs() + (fv[20 - j] - mean).abs());
    }
    let value = kronrod * half;
    let (abs_sum, asc) = (abs_sum * half.abs(), asc * half.abs());
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    let roundoff = 50.0 * f64::EPSILON * abs_sum;
    if roundoff > f64::MIN_POSITIVE {
        error = error.max(roundoff);
    }
    Segment {
        a,
        b,
        value,
        error,
        roundoff,
    }
}

/// Integrates `f` over `[a, b]` until the error estimate is at most
/// `min(abs_tol, rel_tol·|I|)`.
///
/// Fails when the goal lies below the roundoff floor of the integrand.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    adaptive(&f, a, b, abs_tol, rel_tol, false)
}

// `accept_roundoff`: return the floor-limited result instead of failing.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, accept_roundoff: bool) -> Result<Integral> {
    let first = gauss_kronrod(f, a, b);
    let mut total = first.value;
    let mut error = first.error;
    let mut roundoff = first.roundoff;
    let mut heap = BinaryHeap::from([first]);
    let failure = |message: String, achieved: f64| Error::NumericalFailure { message, achieved };
    loop {
        if !(total.is_finite() && error.is_finite()) {
            return Err(failure(format!("integrand is not finite on [{a}, {b}]"), error));
        }
        let goal = abs_tol.min(rel_tol * total.abs());
        if error <= goal || error == 0.0 {
            return Ok(Integral { value: total, error });
        }
        if roundoff > goal {
            if accept_roundoff {
                return Ok(Integral { value: total, error });
            }
            return Err(failure(
                format!("accuracy goal {goal:e} is below the roundoff floor {roundoff:e} on [{a}, {b}]"),
                error,
            ));
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(failure(
                format!("adaptive quadrature exhausted {MAX_INTERVALS} subintervals on [{a}, {b}]"),
                error,
            ));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further; accept what the roundoff allows
            return Ok(Integral { value: total, error });
        }
        let left = gauss_kronrod(f, worst.a, mid);
        let right = gauss_kronrod(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        roundoff += left.roundoff + right.roundoff - worst.roundoff;
        heap.push(left);
        heap.push(right);
        // re-sum occasionally to shed accumulated cancellation in the running totals
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
            roundoff = heap.iter().map(|s| s.roundoff).sum();
        }
    }
}

/// Integrates a non-negative `f` over `[0, ∞)`.
///
/// `tail_bound(T)` must bound `∫_T^∞ f`; the range is doubled from `initial`
/// until that bound is below a tenth of the accuracy goal.
pub fn integrate_to_infinity<F, B>(f: F, tail_bound: B, initial: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    adaptive_to_infinity(&f, &tail_bound, initial, abs_tol, rel_tol, false)
}

fn adaptive_to_infinity<F, B>(
    f: &F,
    tail_bound: &B,
    initial: f64,
    abs_tol: f64,
    rel_tol: f64,
    accept_roundoff: bool,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let mut upper = initial;
    let mut acc = adaptive(f, 0.0, upper, abs_tol, rel_tol, accept_roundoff)?;
    for _ in 0..64 {
        let tail = tail_bound(upper);
        let goal = abs_tol.min(rel_tol * acc.value.abs());
        if tail <= 0.1 * goal || tail == 0.0 {
            return Ok(Integral {
                value: acc.value,
                error: acc.error + tail,
            });
        }
        let piece = adaptive(f, upper, 2.0 * upper, abs_tol, rel_tol, accept_roundoff)?;
        acc.value += piece.value;
        acc.error += piece.error;
        upper *= 2.0;
    }
    Err(Error::NumericalFailure {
        message: "semi-infinite integral tail did not decay".into(),
        achieved: tail_bound(upper),
    })
}

/// Shape of the excess sum `W₂ = Σ (Y_j - t)` given the reference minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExcessShape {
    /// `γ(M-1, 1)`, the law of the excess over the minimum.
    MMinusOne,
    /// `γ(M, 1)`.
    M,
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= MAX_TOLERANCE) {
        return Err(Error::domain(format!("quadrature tolerance must lie in (0, {MAX_TOLERANCE:e}], got {tol}")));
    }
    Ok(())
}

fn erlang_tail(k: u64, x: f64) -> f64 {
    regularized_upper_gamma(k as f64, x).unwrap_or(f64::NAN)
}

/// Upper end of the first integration range for a `γ(shape, 1)` weight.
fn initial_range(shape: f64) -> f64 {
    shape + 10.0 * shape.sqrt() + 10.0
}

/// `∫₀^∞ f_{γ(M,1)}(t) · P(γ(N,1) > tτ) dt`.
pub fn quadrature_pfa_partial_multi(n_cut: u64, m_ref: u64, tau: ThresholdMultiplier, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if n_cut == 0 || m_ref == 0 {
        return Err(Error::domain("cell counts must be positive"));
    }
    let t = tau.value();
    let shape = m_ref as f64;
    let integral = integrate_to_infinity(
        |x| gamma_density(shape, x) * erlang_tail(n_cut, x * t),
        |x| erlang_tail(m_ref, x) * erlang_tail(n_cut, x * t),
        initial_range(shape),
        tol,
        RELATIVE_GOAL,
    )?;
    Ok(integral.value.min(1.0))
}

/// `∫₀^∞ M e^{-Mt} E[P(γ(N,1) > Nt + τW₂)] dt` with `W₂` drawn from the
/// selected excess shape (a point mass at zero when the shape is 0).
pub fn quadrature_pfa_full_multi(
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    tol: f64,
    excess_shape: ExcessShape,
) -> Result<f64> {
    check_tol(tol)?;
    if n_cut == 0 || m_ref == 0 {
        return Err(Error::domain("cell counts must be positive"));
    }
    let t = tau.value();
    let n = n_cut as f64;
    let m = m_ref as f64;
    let shape = match excess_shape {
        ExcessShape::MMinusOne => m_ref - 1,
        ExcessShape::M => m_ref,
    };
    let inner_tol = 0.1 * tol;
    let inner_rel = 0.1 * RELATIVE_GOAL;
    let failure = std::cell::RefCell::new(None);
    let conditional_tail = |s: f64| -> f64 {
        let offset = n * s;
        if shape == 0 || t == 0.0 {
            return erlang_tail(n_cut, offset);
        }
        if failure.borrow().is_some() {
            return f64::NAN;
        }
        let sf = shape as f64;
        match adaptive_to_infinity(
            &|w| gamma_density(sf, w) * erlang_tail(n_cut, offset + t * w),
            &|w| erlang_tail(shape, w) * erlang_tail(n_cut, offset + t * w),
            initial_range(sf),
            inner_tol,
            inner_rel,
            true,
        ) {
            Ok(i) => i.value,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                f64::NAN
            }
        }
    };
    let outer = integrate_to_infinity(
        |s| m * (-m * s).exp() * conditional_tail(s),
        |s| (-m * s).exp() * erlang_tail(n_cut, n * s),
        initial_range(1.0) / m,
        tol,
        RELATIVE_GOAL,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(outer?.value.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(t: f64) -> ThresholdMultiplier {
        ThresholdMultiplier::new(t).unwrap()
    }

    #[test]
    fn integrates_polynomial_and_exponential() {
        let i = integrate(|x| x * x, 0.0, 3.0, 1e-12, 1e-12).unwrap();
        assert!((i.value - 9.0).abs() < 1e-12);
        let i = integrate_to_infinity(|x| (-x).exp(), |x| (-x).exp(), 1.0, 1e-13, 1e-13).unwrap();
        assert!((i.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_is_resolved() {
        // gamma(200) density over [0, 1000]; the mass outside is below 1e-100
        let norm = statrs::function::gamma::ln_gamma(200.0);
        let f = |x: f64| if x > 0.0 { (199.0 * x.ln() - x - norm).exp() } else { 0.0 };
        let i = integrate(f, 0.0, 1000.0, 1e-13, 1e-12).unwrap();
        assert!((i.value - 1.0).abs() < 1e-12, "{}", i.value);
    }

    #[test]
    fn partial_multi_examples() {
        let v = quadrature_pfa_partial_multi(2, 4, tau(1.0), 1e-10).unwrap();
        assert!((v - 0.1875).abs() < 1e-10);
        let v = quadrature_pfa_partial_multi(3, 5, tau(0.0), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = quadrature_pfa_partial_multi(1, 8, tau(1.0), 1e-10).unwrap();
        assert!((v - 2f64.powi(-8)).abs() < 1e-10);
    }

    #[test]
    fn rejects_loose_tolerance() {
        assert!(quadrature_pfa_partial_multi(1, 1, tau(1.0), 1e-3).is_err());
        assert!(quadrature_pfa_partial_multi(1, 1, tau(1.0), 0.0).is_err());
        assert!(quadrature_pfa_full_multi(1, 1, tau(1.0), 1e-5, ExcessShape::M).is_err());
    }

    #[test]
    fn full_multi_examples() {
        for t in [0.0, 0.3, 1.0, 7.0] {
            let v = quadrature_pfa_full_multi(1, 1, tau(t), 1e-10, ExcessShape::MMinusOne).unwrap();
            assert!((v - 0.5).abs() < 1e-10);
        }
        // 1-D reduction: ∫ M e^{-(M+1)t} dt · E[e^{-τW}] = M/(M+1) · (1+τ)^{-shape}
        let v = quadrature_pfa_full_multi(1, 8, tau(1.0), 1e-10, ExcessShape::MMinusOne).unwrap();
        assert!((v - 8.0 / 9.0 / 128.0).abs() < 1e-10);
        let v = quadrature_pfa_full_multi(1, 8, tau(1.0), 1e-10, ExcessShape::M).unwrap();
        assert!((v - 8.0 / 9.0 / 256.0).abs() < 1e-10);
    }

    #[test]
    fn halving_tolerance_is_stable() {
        for &(n, m, t) in &[(2u64, 4u64, 1.0), (4, 16, 0.5), (3, 2, 5.0)] {
            let mut tol = 1e-7;
            let mut prev = quadrature_pfa_full_multi(n, m, tau(t), tol, ExcessShape::MMinusOne).unwrap();
            for _ in 0..4 {
                let next = quadrature_pfa_full_multi(n, m, tau(t), tol / 2.0, ExcessShape::MMinusOne).unwrap();
                assert!((next - prev).abs() <= tol);
                prev = next;
                tol /= 2.0;
            }
        }
    }
}
