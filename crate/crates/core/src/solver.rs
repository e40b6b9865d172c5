//! Threshold inversion: the multiplier `τ` that yields a requested false-alarm
//! probability.

use serde::{Deserialize, Serialize};

use crate::analytic::DetectorKind;
use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};
use crate::oracles::{validated_pfa_with_tol, AdjudicationReport, Verdict, MAX_TOLERANCE, VALIDATED_QUADRATURE_TOL};

/// Smallest target accepted by the solvers.
pub const MIN_TARGET_PFA: f64 = 1e-12;

pub const DEFAULT_MAX_ITERATIONS: u32 = 200;

/// Tightest quadrature tolerance the solver requests; below it the nested
/// integrals hit their roundoff floor.
pub const QUADRATURE_TOL_FLOOR: f64 = 1e-13;

// Doubling steps before giving up on bracketing.
const MAX_DOUBLINGS: u32 = 1100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub target_pfa: f64,
    /// Absolute tolerance on the achieved Pfa.
    pub abs_tol: f64,
    pub max_iterations: u32,
    /// First upper end tried while bracketing.
    pub initial_upper: f64,
}

impl SolverConfig {
    /// Defaults: `abs_tol = 1e-12·target`, 200 bisection steps, `τ_hi = 1`.
    pub fn new(target_pfa: f64) -> Result<Self> {
        check_target(target_pfa)?;
        Ok(Self {
            target_pfa,
            abs_tol: 1e-12 * target_pfa,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            initial_upper: 1.0,
        })
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::domain(format!("solver tolerance must be positive, got {abs_tol}")));
        }
        self.abs_tol = abs_tol;
        Ok(self)
    }

    pub fn with_initial_upper(mut self, upper: f64) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::domain(format!("initial upper threshold must be positive, got {upper}")));
        }
        self.initial_upper = upper;
        Ok(self)
    }

    pub fn with_max_iterations(mut self, max_iterations: u32) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::domain("max_iterations must be positive"));
        }
        self.max_iterations = max_iterations;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        check_target(self.target_pfa)?;
        if !(self.abs_tol > 0.0) {
            return Err(Error::domain("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be positive"));
        }
        if !(self.initial_upper > 0.0 && self.initial_upper.is_finite()) {
            return Err(Error::domain("initial upper threshold must be positive"));
        }
        Ok(())
    }
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!("target Pfa must lie in (0, 1), got {target}")));
    }
    if target < MIN_TARGET_PFA {
        return Err(Error::domain(format!(
            "target Pfa {target:e} is below the supported minimum {MIN_TARGET_PFA:e}"
        )));
    }
    Ok(())
}

/// `target^{-1/n_ref} - 1`.
pub fn solve_tau_partial_single(n_ref: u64, target: f64) -> Result<ThresholdMultiplier> {
    if n_ref == 0 {
        return Err(Error::domain("reference window needs at least one cell"));
    }
    check_target(target)?;
    ThresholdMultiplier::new((-target.ln() / n_ref as f64).exp_m1())
}

/// Fails when no threshold changes the Pfa of the configuration.
pub fn check_controllable(kind: DetectorKind, n_cut: u64, m_ref: u64) -> Result<()> {
    kind.check_shape(n_cut, m_ref)?;
    if kind.is_full_cfar() && m_ref == 1 {
        return Err(Error::UnreachableTarget(format!(
            "{kind} with a single reference cell has Pfa {} for every threshold; no τ controls it",
            if kind.is_single() { "1/2".to_string() } else { format!("1 - ({n_cut}/{})^{n_cut}", n_cut + 1) }
        )));
    }
    Ok(())
}

/// Bracket-and-bisect inversion of the report's validated Pfa curve.
pub fn solve_tau_numeric(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    config: &SolverConfig,
    report: &AdjudicationReport,
) -> Result<ThresholdMultiplier> {
    config.validate()?;
    check_controllable(kind, n_cut, m_ref)?;
    let target = config.target_pfa;
    let quadrature_tol = match report.verdict {
        Verdict::Validated(_) => VALIDATED_QUADRATURE_TOL,
        _ => (config.abs_tol / 10.0).clamp(QUADRATURE_TOL_FLOOR, MAX_TOLERANCE),
    };
    let pfa = |t: f64| -> Result<f64> {
        validated_pfa_with_tol(kind, report, n_cut, m_ref, ThresholdMultiplier::new(t)?, quadrature_tol)
    };

    let at_zero = pfa(0.0)?;
    if at_zero < target {
        return Err(Error::UnreachableTarget(format!(
            "{kind} reaches at most Pfa {at_zero:e} (at τ = 0), below the target {target:e}"
        )));
    }
    if (at_zero - target).abs() <= config.abs_tol {
        return ThresholdMultiplier::new(0.0);
    }

    let (mut lo, mut hi) = (0.0, config.initial_upper);
    let mut f_hi = pfa(hi)?;
    let mut doublings = 0;
    while f_hi >= target {
        if doublings == MAX_DOUBLINGS || !(hi * 2.0).is_finite() {
            return Err(Error::UnreachableTarget(format!(
                "Pfa stays at or above {target:e} for every finite threshold"
            )));
        }
        lo = hi;
        hi *= 2.0;
        f_hi = pfa(hi)?;
        doublings += 1;
    }
    if (f_hi - target).abs() <= config.abs_tol {
        return ThresholdMultiplier::new(hi);
    }

    // pfa(lo) > target > pfa(hi)
    let mut best = (hi, (f_hi - target).abs());
    for _ in 0..config.max_iterations {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = pfa(mid)?;
        let miss = (f - target).abs();
        if miss < best.1 {
            best = (mid, miss);
        }
        if miss <= config.abs_tol {
            return ThresholdMultiplier::new(mid);
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericalFailure {
        message: format!(
            "bisection did not reach |Pfa - {target:e}| <= {:e}; final bracket [{lo}, {hi}], best τ = {}",
            config.abs_tol, best.0
        ),
        achieved: best.1,
    })
}

/// Threshold for `target`: closed form for the known-scale single-pulse rule,
/// bisection on the validated curve otherwise.
pub fn solve_tau(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    config: &SolverConfig,
    report: &AdjudicationReport,
) -> Result<ThresholdMultiplier> {
    if kind == DetectorKind::GmPartialSingle {
        config.validate()?;
        kind.check_shape(n_cut, m_ref)?;
        return solve_tau_partial_single(m_ref, config.target_pfa);
    }
    solve_tau_numeric(kind, n_cut, m_ref, config, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{pfa_gm_partial_single, PfaFormulaVariant};
    use crate::oracles::{default_grid, GridPoint, WithheldReason, REPORT_SCHEMA_VERSION};
    use proptest::prelude::*;

    fn report(kind: DetectorKind, verdict: Verdict) -> AdjudicationReport {
        AdjudicationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            detector: kind,
            trials: 10_000_000,
            seed: 0,
            tol: 1e-10,
            grid: vec![GridPoint::new(1, 2, 1.0).unwrap()],
            points: Vec::new(),
            internally_consistent: true,
            verdict,
        }
    }

    #[test]
    fn partial_single_examples() {
        assert_eq!(solve_tau_partial_single(1, 0.5).unwrap().value(), 1.0);
        let t = solve_tau_partial_single(16, 1.522_44e-3).unwrap().value();
        assert!((t - 0.5).abs() < 1e-5, "{t}");
        assert!(solve_tau_partial_single(4, 1.0 - 1e-12).unwrap().value() < 1e-12);
        for bad in [0.0, 1.0, -0.1, 1e-13, f64::NAN] {
            assert!(solve_tau_partial_single(4, bad).is_err());
        }
    }

    #[test]
    fn partial_multi_round_trips() {
        let r = report(DetectorKind::GmPartialMulti, Verdict::Validated(PfaFormulaVariant::PaperForm));
        let c = SolverConfig::new(0.1875).unwrap();
        let t = solve_tau_numeric(DetectorKind::GmPartialMulti, 2, 4, &c, &r).unwrap().value();
        assert!((t - 1.0).abs() < 1e-9, "{t}");
        let c = SolverConfig::new(2f64.powi(-8)).unwrap();
        let t = solve_tau_numeric(DetectorKind::GmPartialMulti, 1, 8, &c, &r).unwrap().value();
        assert!((t - 1.0).abs() < 1e-9, "{t}");
    }

    #[test]
    fn quadrature_verdict_round_trips() {
        let r = report(DetectorKind::GmFullMulti, Verdict::UseQuadrature);
        let c = SolverConfig::new(1e-3).unwrap();
        let t = solve_tau_numeric(DetectorKind::GmFullMulti, 2, 8, &c, &r).unwrap();
        let back = validated_pfa_with_tol(DetectorKind::GmFullMulti, &r, 2, 8, t, 1e-10).unwrap();
        assert!((back - 1e-3).abs() <= 1e-9 * 1e-3, "{back}");
    }

    #[test]
    fn unreachable_targets() {
        let r = report(DetectorKind::GmFullMulti, Verdict::Validated(PfaFormulaVariant::CandidateForm));
        let c = SolverConfig::new(1e-4).unwrap();
        assert!(matches!(
            solve_tau_numeric(DetectorKind::GmFullMulti, 2, 1, &c, &r),
            Err(Error::UnreachableTarget(_))
        ));
        let r = report(DetectorKind::GmFullSingle, Verdict::Validated(PfaFormulaVariant::CandidateForm));
        assert!(matches!(
            solve_tau_numeric(DetectorKind::GmFullSingle, 1, 1, &c, &r),
            Err(Error::UnreachableTarget(_))
        ));
        // Pfa(0) of the full rule is below 1
        let c = SolverConfig::new(0.999).unwrap();
        let r = report(DetectorKind::GmFullMulti, Verdict::Validated(PfaFormulaVariant::CandidateForm));
        assert!(matches!(
            solve_tau_numeric(DetectorKind::GmFullMulti, 4, 2, &c, &r),
            Err(Error::UnreachableTarget(_))
        ));
    }

    #[test]
    fn inconsistent_report_is_refused() {
        let r = report(DetectorKind::GmFullMulti, Verdict::Withheld(WithheldReason::OracleDisagreement));
        let c = SolverConfig::new(1e-3).unwrap();
        assert!(matches!(solve_tau_numeric(DetectorKind::GmFullMulti, 2, 8, &c, &r), Err(Error::Report(_))));
    }

    #[test]
    fn exhausted_iterations_report_the_bracket() {
        let r = report(DetectorKind::GmPartialMulti, Verdict::Validated(PfaFormulaVariant::PaperForm));
        let c = SolverConfig::new(0.01).unwrap().with_max_iterations(3).unwrap();
        match solve_tau_numeric(DetectorKind::GmPartialMulti, 2, 4, &c, &r) {
            Err(Error::NumericalFailure { message, .. }) => assert!(message.contains("bracket")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iteration_budget_suffices_on_default_grid() {
        let r = report(DetectorKind::GmFullMulti, Verdict::Validated(PfaFormulaVariant::CandidateForm));
        for p in default_grid(DetectorKind::GmFullMulti).iter().filter(|p| p.m_ref > 1) {
            for target in [1e-2, 1e-6] {
                let c = SolverConfig::new(target).unwrap();
                solve_tau_numeric(DetectorKind::GmFullMulti, p.n_cut, p.m_ref, &c, &r).unwrap();
            }
        }
    }

    proptest! {
        #[test]
        fn partial_single_inverse_is_tight(n in 1u64..64, log_target in -27.0f64..-0.01) {
            let target = log_target.exp();
            let t = solve_tau_partial_single(n, target).unwrap();
            let back = pfa_gm_partial_single(n, t).unwrap();
            prop_assert!((back - target).abs() <= 1e-14 * target, "{} vs {}", back, target);
        }

        #[test]
        fn independent_of_initial_upper(upper in 1e-3f64..1e3, log_target in -13.0f64..-0.5) {
            let target = log_target.exp();
            let r = report(DetectorKind::GmPartialMulti, Verdict::Validated(PfaFormulaVariant::PaperForm));
            let base = SolverConfig::new(target).unwrap();
            let a = solve_tau_numeric(DetectorKind::GmPartialMulti, 3, 6, &base, &r).unwrap().value();
            let c = base.with_initial_upper(upper).unwrap();
            let b = solve_tau_numeric(DetectorKind::GmPartialMulti, 3, 6, &c, &r).unwrap().value();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-3), "{} vs {}", a, b);
        }
    }
}
