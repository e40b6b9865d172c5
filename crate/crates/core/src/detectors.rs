//! Geometric-mean sliding-window detectors.
//!
//! Every rule compares a product of cell-under-test values against a weighted
//! geometric mean of the reference cells. Products of Pareto variates overflow
//! quickly and the baseline exponent `N - Mτ` is often negative, so all four
//! rules are evaluated on logarithms. Each margin is written relative to the
//! baseline level (`ln β` or `ln Z_(1)`):
//!
//! ```text
//! margin = Σ (ln X_i - b) - τ · Σ (ln Z_j - b)
//! ```
//!
//! which is algebraically `Σ ln X_i - [(N - Mτ)·b + τ·Σ ln Z_j]` and gives an
//! exact zero when every cell sits at the baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One detection instance: `N` cell-under-test values and `M` reference cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    cut: Vec<f64>,
    reference: Vec<f64>,
}

impl Window {
    pub fn new(cut: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        if cut.is_empty() {
            return Err(Error::domain("window needs at least one cell under test"));
        }
        if reference.is_empty() {
            return Err(Error::domain("window needs at least one reference cell"));
        }
        if let Some(bad) = cut.iter().chain(&reference).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!("window values must be positive and finite, got {bad}")));
        }
        Ok(Self { cut, reference })
    }

    /// Single-pulse window: one cell under test `Z₀`.
    pub fn single(cut: f64, reference: Vec<f64>) -> Result<Self> {
        Self::new(vec![cut], reference)
    }

    pub fn cut(&self) -> &[f64] {
        &self.cut
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Multiplies every cell by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.cut.iter().map(|v| v * c).collect(),
            self.reference.iter().map(|v| v * c).collect(),
        )
    }

    fn logs(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.cut.iter().map(|v| v.ln()).collect(),
            self.reference.iter().map(|v| v.ln()).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    TargetAbsent,
    TargetPresent,
}

/// Outcome of a test together with its log-domain margin `ln LHS - ln RHS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub outcome: Outcome,
    pub margin: f64,
}

impl Decision {
    /// Strict inequality rejects `H₀`; a zero margin is `TargetAbsent`.
    pub fn from_margin(margin: f64) -> Self {
        let outcome = if margin > 0.0 {
            Outcome::TargetPresent
        } else {
            Outcome::TargetAbsent
        };
        Self { outcome, margin }
    }

    pub fn is_detection(&self) -> bool {
        self.outcome == Outcome::TargetPresent
    }
}

/// Threshold multiplier `τ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ThresholdMultiplier(f64);

impl ThresholdMultiplier {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::domain(format!("threshold multiplier must be finite and non-negative, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ThresholdMultiplier {
    type Error = Error;
    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<ThresholdMultiplier> for f64 {
    fn from(t: ThresholdMultiplier) -> f64 {
        t.0
    }
}

/// Baseline level of a rule: the known clutter scale or the reference minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Baseline {
    KnownScale(f64),
    ReferenceMinimum,
}

/// Core evaluation on log-cells, shared by the public rules and the simulators.
pub(crate) fn margin_from_logs(cut_logs: &[f64], ref_logs: &[f64], tau: f64, baseline: Baseline) -> f64 {
    let (cut_excess, ref_excess) = excess_from_logs(cut_logs, ref_logs, baseline);
    cut_excess - tau * ref_excess
}

/// `(Σ ln X_i - N·b, Σ ln Z_j - M·b)` for the baseline level `b`; the margin
/// at any `τ` is `cut - τ·ref`.
pub(crate) fn excess_from_logs(cut_logs: &[f64], ref_logs: &[f64], baseline: Baseline) -> (f64, f64) {
    let level = match baseline {
        Baseline::KnownScale(log_scale) => log_scale,
        Baseline::ReferenceMinimum => ref_logs.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let cut_excess: f64 = cut_logs.iter().map(|l| l - level).sum();
    let ref_excess: f64 = ref_logs.iter().map(|l| l - level).sum();
    (cut_excess, ref_excess)
}

fn checked_log_scale(scale: f64) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::domain(format!("clutter scale must be positive and finite, got {scale}")));
    }
    Ok(scale.ln())
}

fn require_single(window: &Window) -> Result<()> {
    if window.cut.len() != 1 {
        return Err(Error::domain(format!(
            "single-pulse detector expects one cell under test, got {}",
            window.cut.len()
        )));
    }
    Ok(())
}

/// `Z₀ > β^{1-Mτ} · Π Z_j^τ` with the clutter scale known.
pub fn gm_partial_single(window: &Window, tau: ThresholdMultiplier, scale: f64) -> Result<Decision> {
    require_single(window)?;
    gm_partial_multi(window, tau, scale)
}

/// `Z₀ > Z_(1)^{1-Mτ} · Π Z_j^τ`.
pub fn gm_full_single(window: &Window, tau: ThresholdMultiplier) -> Result<Decision> {
    require_single(window)?;
    gm_full_multi(window, tau)
}

/// `Π X_i > β^{N-Mτ} · Π Z_j^τ` with the clutter scale known.
pub fn gm_partial_multi(window: &Window, tau: ThresholdMultiplier, scale: f64) -> Result<Decision> {
    let log_scale = checked_log_scale(scale)?;
    let (cut, reference) = window.logs();
    Ok(Decision::from_margin(margin_from_logs(
        &cut,
        &reference,
        tau.value(),
        Baseline::KnownScale(log_scale),
    )))
}

/// `Π X_i > Z_(1)^{N-Mτ} · Π Z_j^τ`.
pub fn gm_full_multi(window: &Window, tau: ThresholdMultiplier) -> Result<Decision> {
    let (cut, reference) = window.logs();
    Ok(Decision::from_margin(margin_from_logs(
        &cut,
        &reference,
        tau.value(),
        Baseline::ReferenceMinimum,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau(t: f64) -> ThresholdMultiplier {
        ThresholdMultiplier::new(t).unwrap()
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(vec![], vec![1.0]).is_err());
        assert!(Window::new(vec![1.0], vec![]).is_err());
        assert!(Window::new(vec![0.0], vec![1.0]).is_err());
        assert!(Window::new(vec![1.0], vec![-2.0]).is_err());
        assert!(Window::new(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(ThresholdMultiplier::new(-0.1).is_err());
        assert!(ThresholdMultiplier::new(f64::NAN).is_err());
    }

    #[test]
    fn partial_single_examples() {
        // threshold 1^{1-2}·(2·3)^1 = 6
        let w = Window::single(7.0, vec![2.0, 3.0]).unwrap();
        let d = gm_partial_single(&w, tau(1.0), 1.0).unwrap();
        assert_eq!(d.outcome, Outcome::TargetPresent);
        assert!((d.margin - (7f64 / 6.0).ln()).abs() < 1e-15);
        let w = Window::single(5.0, vec![2.0, 3.0]).unwrap();
        assert_eq!(gm_partial_single(&w, tau(1.0), 1.0).unwrap().outcome, Outcome::TargetAbsent);
        assert!(gm_partial_single(&w, tau(1.0), 0.0).is_err());
        let multi = Window::new(vec![1.0, 2.0], vec![1.0]).unwrap();
        assert!(gm_partial_single(&multi, tau(1.0), 1.0).is_err());
    }

    #[test]
    fn cells_at_scale_tie_to_absent() {
        let beta = 0.37;
        let w = Window::single(beta, vec![beta; 5]).unwrap();
        for t in [0.0, 0.3, 1.0, 17.0] {
            let d = gm_partial_single(&w, tau(t), beta).unwrap();
            assert_eq!(d.margin, 0.0);
            assert_eq!(d.outcome, Outcome::TargetAbsent);
        }
    }

    #[test]
    fn full_single_examples() {
        // one reference cell: threshold is Z₁ whatever τ
        for t in [0.0, 0.5, 3.0, 100.0] {
            let above = Window::single(2.5, vec![2.0]).unwrap();
            let below = Window::single(1.5, vec![2.0]).unwrap();
            assert!(gm_full_single(&above, tau(t)).unwrap().is_detection());
            assert!(!gm_full_single(&below, tau(t)).unwrap().is_detection());
        }
        // threshold 2^0 · 16^0.5 = 4
        let w = Window::single(5.0, vec![2.0, 8.0]).unwrap();
        let d = gm_full_single(&w, tau(0.5)).unwrap();
        assert!(d.is_detection());
        assert!((d.margin - (5f64 / 4.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn partial_multi_examples() {
        let w = Window::new(vec![1.5, 1.2], vec![9.0, 4.0]).unwrap();
        let d = gm_partial_multi(&w, tau(0.0), 1.0).unwrap();
        assert!((d.margin - 1.8f64.ln()).abs() < 1e-15);
        assert!(d.is_detection());
        // ln 4 - ln 6
        let w = Window::new(vec![2.0, 2.0], vec![2.0, 3.0]).unwrap();
        let d = gm_partial_multi(&w, tau(1.0), 1.0).unwrap();
        assert!((d.margin - (4f64 / 6.0).ln()).abs() < 1e-15);
        assert_eq!(d.outcome, Outcome::TargetAbsent);
    }

    #[test]
    fn partial_accepts_cells_below_scale() {
        let w = Window::new(vec![0.5], vec![0.25, 2.0]).unwrap();
        assert!(gm_partial_multi(&w, tau(1.0), 1.0).is_ok());
    }

    #[test]
    fn full_multi_examples() {
        for t in [0.0, 0.7, 5.0] {
            let w = Window::new(vec![3.0], vec![2.0]).unwrap();
            assert!(gm_full_multi(&w, tau(t)).unwrap().is_detection());
        }
        let w = Window::new(vec![4.2; 3], vec![4.2; 6]).unwrap();
        let d = gm_full_multi(&w, tau(1.3)).unwrap();
        assert_eq!(d.margin, 0.0);
        assert_eq!(d.outcome, Outcome::TargetAbsent);
    }

    #[test]
    fn margin_matches_direct_formula() {
        // Σ ln X - [(N - Mτ) ln Z_(1) + τ Σ ln Z]
        let w = Window::new(vec![3.0, 0.9, 7.5], vec![1.1, 2.2, 0.8, 5.0]).unwrap();
        let t = 0.35;
        let lhs: f64 = w.cut().iter().map(|v| v.ln()).sum();
        let zmin = 0.8f64.ln();
        let rhs = (3.0 - 4.0 * t) * zmin + t * w.reference().iter().map(|v| v.ln()).sum::<f64>();
        assert!((gm_full_multi(&w, tau(t)).unwrap().margin - (lhs - rhs)).abs() < 1e-14);
        let rhs = (3.0 - 4.0 * t) * 0.5f64.ln() + t * w.reference().iter().map(|v| v.ln()).sum::<f64>();
        assert!((gm_partial_multi(&w, tau(t), 0.5).unwrap().margin - (lhs - rhs)).abs() < 1e-14);
    }

    fn window_strategy() -> impl Strategy<Value = Window> {
        (
            prop::collection::vec(1e-3f64..1e3, 1..6),
            prop::collection::vec(1e-3f64..1e3, 1..20),
        )
            .prop_map(|(c, r)| Window::new(c, r).unwrap())
    }

    proptest! {
        #[test]
        fn full_rules_are_scale_invariant(w in window_strategy(), t in 0.0f64..10.0, c in prop::sample::select(vec![1e-6, 1e-2, 3.0, 1e6])) {
            let before = gm_full_multi(&w, tau(t)).unwrap();
            let after = gm_full_multi(&w.scaled(c).unwrap(), tau(t)).unwrap();
            prop_assert!((before.margin - after.margin).abs() <= 1e-9 * before.margin.abs().max(1.0));
            if before.margin.abs() > 1e-9 {
                prop_assert_eq!(before.outcome, after.outcome);
            }
        }

        #[test]
        fn partial_rules_are_scale_equivariant(w in window_strategy(), t in 0.0f64..10.0, beta in 1e-3f64..10.0, c in prop::sample::select(vec![1e-6, 1e6])) {
            let before = gm_partial_multi(&w, tau(t), beta).unwrap();
            let after = gm_partial_multi(&w.scaled(c).unwrap(), tau(t), beta * c).unwrap();
            prop_assert!((before.margin - after.margin).abs() <= 1e-9 * before.margin.abs().max(1.0));
        }

        #[test]
        fn full_multi_margin_non_increasing_in_tau(w in window_strategy(), t in 0.0f64..10.0, dt in 0.0f64..5.0) {
            let a = gm_full_multi(&w, tau(t)).unwrap().margin;
            let b = gm_full_multi(&w, tau(t + dt)).unwrap().margin;
            prop_assert!(b <= a + 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn partial_multi_margin_non_increasing_when_reference_above_scale(w in window_strategy(), t in 0.0f64..10.0, dt in 0.0f64..5.0) {
            let beta = w.reference().iter().copied().fold(f64::INFINITY, f64::min);
            let a = gm_partial_multi(&w, tau(t), beta).unwrap().margin;
            let b = gm_partial_multi(&w, tau(t + dt), beta).unwrap().margin;
            prop_assert!(b <= a + 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn outcome_tracks_margin_sign(w in window_strategy(), t in 0.0f64..10.0) {
            let d = gm_full_multi(&w, tau(t)).unwrap();
            prop_assert_eq!(d.is_detection(), d.margin > 0.0);
        }
    }
}
