//! Adjudication of competing closed forms against the oracles.
//!
//! For every grid point the dual-domain Monte Carlo estimate and the
//! quadrature value are computed first. They must agree within four standard
//! deviations everywhere before any closed form is judged; a closed form is
//! then validated only if it sits inside the band at every point while its
//! competitor falls outside at one point or more.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::montecarlo::mc_dual_pfa_taus;
use super::quadrature::{quadrature_pfa_full_multi, quadrature_pfa_partial_multi, ExcessShape};
use crate::analytic::{closed_form_pfa, pfa_gm_full_multi_with_convention, DetectorKind, PfaFormulaVariant};
use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};
use crate::stats::{EstimateWithCI, CONSISTENCY_SIGMAS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Fewer trials than this cannot separate the competing closed forms.
pub const MIN_ADJUDICATION_TRIALS: u64 = 1_000_000;
/// Tolerance of the quadrature fallback in [`validated_pfa`].
pub const VALIDATED_QUADRATURE_TOL: f64 = 1e-10;

pub const DEFAULT_N_VALUES: [u64; 3] = [1, 2, 4];
pub const DEFAULT_M_VALUES: [u64; 5] = [1, 2, 4, 8, 16];
pub const DEFAULT_TAU_VALUES: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_cut: u64,
    pub m_ref: u64,
    pub tau: ThresholdMultiplier,
}

impl GridPoint {
    pub fn new(n_cut: u64, m_ref: u64, tau: f64) -> Result<Self> {
        Ok(Self {
            n_cut,
            m_ref,
            tau: ThresholdMultiplier::new(tau)?,
        })
    }
}

/// Cartesian grid; single-pulse kinds keep only `N = 1`.
pub fn build_grid(kind: DetectorKind, n_values: &[u64], m_values: &[u64], taus: &[f64]) -> Result<Vec<GridPoint>> {
    let single = [1u64];
    let ns = if kind.is_single() { &single[..] } else { n_values };
    let mut grid = Vec::with_capacity(ns.len() * m_values.len() * taus.len());
    for &n in ns {
        for &m in m_values {
            for &t in taus {
                kind.check_shape(n, m)?;
                grid.push(GridPoint::new(n, m, t)?);
            }
        }
    }
    Ok(grid)
}

pub fn default_grid(kind: DetectorKind) -> Vec<GridPoint> {
    build_grid(kind, &DEFAULT_N_VALUES, &DEFAULT_M_VALUES, &DEFAULT_TAU_VALUES).expect("default grid is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointVerdict {
    Consistent,
    Inconsistent,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCheck {
    pub variant: PfaFormulaVariant,
    pub value: Option<f64>,
    pub verdict: PointVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub n_cut: u64,
    pub m_ref: u64,
    pub tau: f64,
    pub oracle: EstimateWithCI,
    pub sigma: f64,
    /// Quadrature of the detector's integral representation.
    pub quadrature: f64,
    pub oracle_agreement: bool,
    /// Full-CFAR kinds: quadrature with a `γ(M, 1)` excess in place of
    /// `γ(M-1, 1)`, and whether it agrees with the Monte Carlo estimate.
    pub quadrature_m_shape: Option<f64>,
    pub quadrature_m_shape_agreement: Option<bool>,
    pub variants: Vec<VariantCheck>,
    /// Whether the band at this point is narrow enough to tell the two
    /// closed forms apart (`None` when there is only one).
    pub discriminating: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WithheldReason {
    /// Monte Carlo and quadrature disagree somewhere on the grid.
    OracleDisagreement,
    /// Too few trials for the band to separate the closed forms.
    InsufficientPrecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Validated(PfaFormulaVariant),
    UseQuadrature,
    Withheld(WithheldReason),
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Validated(v) => write!(f, "validated {v}"),
            Verdict::UseQuadrature => f.write_str("none, use quadrature"),
            Verdict::Withheld(WithheldReason::OracleDisagreement) => f.write_str("withheld: oracles disagree"),
            Verdict::Withheld(WithheldReason::InsufficientPrecision) => f.write_str("withheld: insufficient precision"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationReport {
    pub schema_version: u32,
    pub detector: DetectorKind,
    pub trials: u64,
    pub seed: u64,
    pub tol: f64,
    pub grid: Vec<GridPoint>,
    pub points: Vec<PointRecord>,
    pub internally_consistent: bool,
    pub verdict: Verdict,
}

impl AdjudicationReport {
    /// Points where the Monte Carlo band cannot tell the closed forms apart.
    pub fn insufficient_points(&self) -> impl Iterator<Item = &PointRecord> {
        self.points.iter().filter(|p| p.discriminating == Some(false))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "unsupported report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Closed-form evaluator judged by the adjudication.
pub type ClosedFormFn = dyn Fn(DetectorKind, u64, u64, ThresholdMultiplier, PfaFormulaVariant) -> Result<f64> + Sync;

/// Closed forms as shipped. The multi-pulse full-CFAR forms are evaluated at
/// `M = 1` too, so that their behaviour there is judged like everywhere else.
pub fn shipped_closed_form(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    variant: PfaFormulaVariant,
) -> Result<f64> {
    match kind {
        DetectorKind::GmFullMulti => pfa_gm_full_multi_with_convention(n_cut, m_ref, tau, variant),
        _ => closed_form_pfa(kind, n_cut, m_ref, tau, variant),
    }
}

/// Quadrature of the integral representation of a detector's Pfa.
pub fn quadrature_pfa(kind: DetectorKind, n_cut: u64, m_ref: u64, tau: ThresholdMultiplier, tol: f64) -> Result<f64> {
    kind.check_shape(n_cut, m_ref)?;
    match kind {
        DetectorKind::GmPartialSingle | DetectorKind::GmPartialMulti => {
            quadrature_pfa_partial_multi(n_cut, m_ref, tau, tol)
        }
        DetectorKind::GmFullSingle | DetectorKind::GmFullMulti => {
            quadrature_pfa_full_multi(n_cut, m_ref, tau, tol, ExcessShape::MMinusOne)
        }
    }
}

pub fn adjudicate(kind: DetectorKind, grid: &[GridPoint], trials: u64, seed: u64, tol: f64) -> Result<AdjudicationReport> {
    adjudicate_with(kind, grid, trials, seed, tol, &shipped_closed_form)
}

/// [`adjudicate`] with an explicit closed-form evaluator.
pub fn adjudicate_with(
    kind: DetectorKind,
    grid: &[GridPoint],
    trials: u64,
    seed: u64,
    tol: f64,
    closed_form: &ClosedFormFn,
) -> Result<AdjudicationReport> {
    if grid.is_empty() {
        return Err(Error::domain("adjudication grid is empty"));
    }
    if trials == 0 {
        return Err(Error::domain("adjudication needs at least one trial"));
    }
    for p in grid {
        kind.check_shape(p.n_cut, p.m_ref)?;
    }

    // One Monte Carlo batch per (N, M); thresholds share trials.
    let mut groups: BTreeMap<(u64, u64), Vec<ThresholdMultiplier>> = BTreeMap::new();
    for p in grid {
        groups.entry((p.n_cut, p.m_ref)).or_default().push(p.tau);
    }
    let mut estimates: BTreeMap<(u64, u64), Vec<EstimateWithCI>> = BTreeMap::new();
    for (&(n, m), taus) in &groups {
        estimates.insert((n, m), mc_dual_pfa_taus(kind, n, m, taus, trials, seed)?);
    }
    let mut cursor: BTreeMap<(u64, u64), usize> = BTreeMap::new();

    let variants = kind.closed_form_variants();
    let mut points = Vec::with_capacity(grid.len());
    for p in grid {
        let slot = cursor.entry((p.n_cut, p.m_ref)).or_insert(0);
        let oracle = estimates[&(p.n_cut, p.m_ref)][*slot];
        *slot += 1;

        let sigma = oracle.sigma();
        let quadrature = quadrature_pfa(kind, p.n_cut, p.m_ref, p.tau, tol)?;
        let quadrature_m_shape = if kind.is_full_cfar() {
            Some(quadrature_pfa_full_multi(p.n_cut, p.m_ref, p.tau, tol, ExcessShape::M)?)
        } else {
            None
        };

        let checks: Vec<VariantCheck> = variants
            .iter()
            .map(|&variant| match closed_form(kind, p.n_cut, p.m_ref, p.tau, variant) {
                Ok(value) => VariantCheck {
                    variant,
                    value: Some(value),
                    verdict: if oracle.is_consistent_with(value) {
                        PointVerdict::Consistent
                    } else {
                        PointVerdict::Inconsistent
                    },
                },
                Err(_) => VariantCheck {
                    variant,
                    value: None,
                    verdict: PointVerdict::NotApplicable,
                },
            })
            .collect();
        let discriminating = match checks.as_slice() {
            [a, b] => match (a.value, b.value) {
                (Some(x), Some(y)) => Some((x - y).abs() > 2.0 * CONSISTENCY_SIGMAS * sigma),
                _ => Some(false),
            },
            _ => None,
        };

        points.push(PointRecord {
            n_cut: p.n_cut,
            m_ref: p.m_ref,
            tau: p.tau.value(),
            oracle,
            sigma,
            quadrature,
            oracle_agreement: oracle.is_consistent_with(quadrature),
            quadrature_m_shape,
            quadrature_m_shape_agreement: quadrature_m_shape.map(|q| oracle.is_consistent_with(q)),
            variants: checks,
            discriminating,
        });
    }

    let internally_consistent = points.iter().all(|p| p.oracle_agreement);
    let verdict = decide(&points, variants, internally_consistent, trials);
    Ok(AdjudicationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        detector: kind,
        trials,
        seed,
        tol,
        grid: grid.to_vec(),
        points,
        internally_consistent,
        verdict,
    })
}

fn decide(points: &[PointRecord], variants: &[PfaFormulaVariant], consistent: bool, trials: u64) -> Verdict {
    if !consistent {
        return Verdict::Withheld(WithheldReason::OracleDisagreement);
    }
    if trials < MIN_ADJUDICATION_TRIALS {
        return Verdict::Withheld(WithheldReason::InsufficientPrecision);
    }
    let verdicts = |v: PfaFormulaVariant| {
        points
            .iter()
            .map(move |p| p.variants.iter().find(|c| c.variant == v).map(|c| c.verdict))
    };
    // A form must be consistent wherever it applies, and apply somewhere.
    let holds = |v: PfaFormulaVariant| {
        verdicts(v).all(|x| x != Some(PointVerdict::Inconsistent))
            && verdicts(v).any(|x| x == Some(PointVerdict::Consistent))
    };
    let fails = |v: PfaFormulaVariant| verdicts(v).any(|x| x == Some(PointVerdict::Inconsistent));
    match variants {
        [only] if holds(*only) => Verdict::Validated(*only),
        [a, b] if holds(*a) && fails(*b) => Verdict::Validated(*a),
        [a, b] if holds(*b) && fails(*a) => Verdict::Validated(*b),
        _ => Verdict::UseQuadrature,
    }
}

/// Pfa through whatever the report validated: the closed form when one was
/// validated and covers the configuration, otherwise quadrature.
pub fn validated_pfa(
    kind: DetectorKind,
    report: &AdjudicationReport,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
) -> Result<f64> {
    validated_pfa_with_tol(kind, report, n_cut, m_ref, tau, VALIDATED_QUADRATURE_TOL)
}

/// [`validated_pfa`] with an explicit quadrature tolerance for the fallback.
pub fn validated_pfa_with_tol(
    kind: DetectorKind,
    report: &AdjudicationReport,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    quadrature_tol: f64,
) -> Result<f64> {
    if report.detector != kind {
        return Err(Error::Report(format!(
            "report covers {} but {} was requested",
            report.detector, kind
        )));
    }
    kind.check_shape(n_cut, m_ref)?;
    match report.verdict {
        Verdict::Withheld(WithheldReason::OracleDisagreement) => Err(Error::Report(format!(
            "the {kind} report is internally inconsistent (Monte Carlo and quadrature disagree); no Pfa is trusted"
        ))),
        Verdict::Validated(variant) => match closed_form_pfa(kind, n_cut, m_ref, tau, variant) {
            Err(Error::Unsupported(_)) => quadrature_pfa(kind, n_cut, m_ref, tau, quadrature_tol),
            other => other,
        },
        Verdict::UseQuadrature | Verdict::Withheld(WithheldReason::InsufficientPrecision) => {
            quadrature_pfa(kind, n_cut, m_ref, tau, quadrature_tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_have_expected_sizes() {
        assert_eq!(default_grid(DetectorKind::GmFullMulti).len(), 75);
        assert_eq!(default_grid(DetectorKind::GmPartialSingle).len(), 25);
        assert!(default_grid(DetectorKind::GmFullSingle).iter().all(|p| p.n_cut == 1));
    }

    #[test]
    fn full_single_paper_form_fails_forced_fixture() {
        let grid = build_grid(DetectorKind::GmFullSingle, &[1], &[1, 8], &[1.0]).unwrap();
        let report = adjudicate(DetectorKind::GmFullSingle, &grid, 1_000_000, 5, 1e-10).unwrap();
        assert!(report.internally_consistent);
        let first = &report.points[0];
        assert!(first.oracle.is_consistent_with(0.5));
        let paper = first.variants.iter().find(|v| v.variant == PfaFormulaVariant::PaperForm).unwrap();
        assert_eq!(paper.value, Some(0.25));
        assert_eq!(paper.verdict, PointVerdict::Inconsistent);
        assert_eq!(report.verdict, Verdict::Validated(PfaFormulaVariant::CandidateForm));
    }

    #[test]
    fn low_trial_counts_withhold_the_verdict() {
        let grid = build_grid(DetectorKind::GmFullMulti, &[1, 2], &[2, 8], &[1.0]).unwrap();
        let report = adjudicate(DetectorKind::GmFullMulti, &grid, 1000, 5, 1e-10).unwrap();
        assert_eq!(report.verdict, Verdict::Withheld(WithheldReason::InsufficientPrecision));
        assert!(report.insufficient_points().count() > 0);
    }

    #[test]
    fn tampered_closed_form_is_not_validated() {
        let grid = build_grid(DetectorKind::GmPartialMulti, &[2], &[4], &[0.5, 1.0]).unwrap();
        let tampered = |k: DetectorKind, n: u64, m: u64, t: ThresholdMultiplier, v: PfaFormulaVariant| {
            shipped_closed_form(k, n, m, t, v).map(|p| p * 1.05)
        };
        let report = adjudicate_with(DetectorKind::GmPartialMulti, &grid, 1_000_000, 1, 1e-10, &tampered).unwrap();
        assert_eq!(report.verdict, Verdict::UseQuadrature);
        let honest = adjudicate(DetectorKind::GmPartialMulti, &grid, 1_000_000, 1, 1e-10).unwrap();
        assert_eq!(honest.verdict, Verdict::Validated(PfaFormulaVariant::PaperForm));
    }

    #[test]
    fn disagreeing_oracles_block_every_verdict() {
        let mut report = adjudicate(
            DetectorKind::GmPartialSingle,
            &build_grid(DetectorKind::GmPartialSingle, &[1], &[4], &[1.0]).unwrap(),
            1_000_000,
            2,
            1e-10,
        )
        .unwrap();
        report.points[0].quadrature += 0.01;
        report.points[0].oracle_agreement = false;
        report.internally_consistent = false;
        report.verdict = decide(&report.points, DetectorKind::GmPartialSingle.closed_form_variants(), false, report.trials);
        assert_eq!(report.verdict, Verdict::Withheld(WithheldReason::OracleDisagreement));
        let t = ThresholdMultiplier::new(1.0).unwrap();
        assert!(matches!(
            validated_pfa(DetectorKind::GmPartialSingle, &report, 1, 4, t),
            Err(Error::Report(_))
        ));
    }

    #[test]
    fn validated_pfa_dispatch() {
        let t = ThresholdMultiplier::new(1.0).unwrap();
        let grid = build_grid(DetectorKind::GmPartialMulti, &[2], &[4], &[1.0]).unwrap();
        let report = adjudicate(DetectorKind::GmPartialMulti, &grid, 1_000_000, 8, 1e-10).unwrap();
        assert_eq!(validated_pfa(DetectorKind::GmPartialMulti, &report, 2, 4, t).unwrap(), 0.1875);
        assert!(validated_pfa(DetectorKind::GmFullMulti, &report, 2, 4, t).is_err());

        let mut forced = report.clone();
        forced.detector = DetectorKind::GmFullMulti;
        forced.verdict = Verdict::UseQuadrature;
        let q = validated_pfa(DetectorKind::GmFullMulti, &forced, 2, 4, t).unwrap();
        let direct = quadrature_pfa_full_multi(2, 4, t, 1e-10, ExcessShape::MMinusOne).unwrap();
        assert_eq!(q, direct);
    }

    #[test]
    fn report_json_round_trip() {
        let grid = build_grid(DetectorKind::GmFullSingle, &[1], &[2], &[0.5]).unwrap();
        let report = adjudicate(DetectorKind::GmFullSingle, &grid, 10_000, 3, 1e-10).unwrap();
        let text = report.to_json().unwrap();
        assert_eq!(AdjudicationReport::from_json(&text).unwrap(), report);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(AdjudicationReport::from_json(&bumped).is_err());
    }
}
