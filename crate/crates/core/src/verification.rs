//! End-to-end verification: adjudication of every detector, Pareto-domain
//! cross-checks, CFAR homogeneity and the single-pulse reductions, collected
//! into one bundle with a pass flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytic::{pfa_gm_full_multi, pfa_gm_partial_multi, DetectorKind, PfaFormulaVariant};
use crate::clutter::ParetoParams;
use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};
use crate::oracles::{
    adjudicate_with, build_grid, shipped_closed_form, AdjudicationReport, ClosedFormFn, Verdict, WithheldReason,
    DEFAULT_M_VALUES, DEFAULT_N_VALUES, DEFAULT_TAU_VALUES,
};
use crate::pareto_mc::{cfar_grid_check, empirical_pfa_taus, CfarReport, SweepSpec};
use crate::stats::EstimateWithCI;

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Relative tolerance of the reduction identities.
pub const REDUCTION_TOL: f64 = 1e-14;

pub const CFAR_ALPHAS: [f64; 3] = [2.0, 5.0, 10.0];
pub const CFAR_BETAS: [f64; 3] = [0.01, 1.0, 100.0];

/// Closed form each detector is expected to validate.
pub fn expected_verdict(kind: DetectorKind) -> Verdict {
    if kind.is_full_cfar() {
        Verdict::Validated(PfaFormulaVariant::CandidateForm)
    } else {
        Verdict::Validated(PfaFormulaVariant::PaperForm)
    }
}

// Clutter laws cycled over the (N, M) configurations of the detector checks.
const CHECK_LAWS: [(f64, f64); 3] = [(2.0, 0.01), (5.0, 1.0), (10.0, 100.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: u64,
    pub cfar_trials: u64,
    pub seed: u64,
    pub tol: f64,
    pub n_values: Vec<u64>,
    pub m_values: Vec<u64>,
    pub taus: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 10_000_000,
            cfar_trials: 1_000_000,
            seed: 0,
            tol: 1e-10,
            n_values: DEFAULT_N_VALUES.to_vec(),
            m_values: DEFAULT_M_VALUES.to_vec(),
            taus: DEFAULT_TAU_VALUES.to_vec(),
        }
    }
}

/// Pareto-domain simulation of the actual detector at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCheck {
    pub kind: DetectorKind,
    pub n_cut: u64,
    pub m_ref: u64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub estimate: EstimateWithCI,
    pub agrees_with_dual: bool,
    pub agrees_with_quadrature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCheck {
    pub name: String,
    pub kind: DetectorKind,
    pub n_cut: u64,
    pub m_ref: u64,
    pub expected: f64,
    pub estimates: Vec<EstimateWithCI>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCheck {
    pub identity: String,
    pub m_ref: u64,
    pub tau: f64,
    pub value: f64,
    pub expected: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationBundle {
    pub schema_version: u32,
    pub config: VerifyConfig,
    pub reports: Vec<AdjudicationReport>,
    pub detector_checks: Vec<DetectorCheck>,
    pub fixtures: Vec<FixtureCheck>,
    pub cfar: Vec<CfarReport>,
    pub reductions: Vec<ReductionCheck>,
    pub failures: Vec<String>,
    pub passed: bool,
}

impl VerificationBundle {
    pub fn report(&self, kind: DetectorKind) -> Option<&AdjudicationReport> {
        self.reports.iter().find(|r| r.detector == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if bundle.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "unsupported bundle schema version {} (expected {BUNDLE_SCHEMA_VERSION})",
                bundle.schema_version
            )));
        }
        Ok(bundle)
    }

    /// Plain-text summary with values to nine significant digits.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        out.push_str(&format!(
            "verification: trials {} (CFAR {}), seed {}, quadrature tol {:e}\n",
            c.trials, c.cfar_trials, c.seed, c.tol
        ));
        for r in &self.reports {
            out.push_str(&format!(
                "  {:<15} {} grid points, oracles {}, verdict: {}\n",
                r.detector.cli_name(),
                r.points.len(),
                if r.internally_consistent { "consistent" } else { "DISAGREE" },
                r.verdict
            ));
        }
        let agree = self
            .detector_checks
            .iter()
            .filter(|d| d.agrees_with_dual && d.agrees_with_quadrature)
            .count();
        out.push_str(&format!(
            "  Pareto-domain detector runs agreeing with both oracles: {agree}/{}\n",
            self.detector_checks.len()
        ));
        for f in &self.fixtures {
            out.push_str(&format!(
                "  fixture {} (N={}, M={}): expected {} -> {}\n",
                f.name,
                f.n_cut,
                f.m_ref,
                sig9(f.expected),
                if f.passed { "ok" } else { "FAIL" }
            ));
        }
        for r in &self.cfar {
            out.push_str(&format!(
                "  CFAR {} (N={}, M={}, tau={}): chi-square {} on {} dof, p = {} -> {}\n",
                r.kind.cli_name(),
                r.n_cut,
                r.m_ref,
                r.tau,
                sig9(r.chi_square.statistic),
                r.chi_square.degrees_of_freedom,
                sig9(r.chi_square.p_value),
                if r.homogeneous { "homogeneous" } else { "INHOMOGENEOUS" }
            ));
        }
        let worst = self.reductions.iter().map(|r| r.relative_error).fold(0.0, f64::max);
        out.push_str(&format!(
            "  reduction identities: {}/{} within {REDUCTION_TOL:e} (worst {})\n",
            self.reductions.iter().filter(|r| r.passed).count(),
            self.reductions.len(),
            sig9(worst)
        ));
        for f in &self.failures {
            out.push_str(&format!("  FAILED: {f}\n"));
        }
        out.push_str(if self.passed { "result: PASS\n" } else { "result: FAIL\n" });
        out
    }
}

pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn verify(config: &VerifyConfig) -> Result<VerificationBundle> {
    verify_with(config, &shipped_closed_form)
}

/// [`verify`] with an explicit closed-form evaluator.
pub fn verify_with(config: &VerifyConfig, closed_form: &ClosedFormFn) -> Result<VerificationBundle> {
    if config.trials == 0 || config.cfar_trials == 0 {
        return Err(Error::domain("verification needs at least one trial"));
    }
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    let mut detector_checks = Vec::new();
    let mut fixtures = Vec::new();

    for kind in DetectorKind::ALL {
        let grid = build_grid(kind, &config.n_values, &config.m_values, &config.taus)?;
        let report = adjudicate_with(kind, &grid, config.trials, config.seed, config.tol, closed_form)?;
        match report.verdict {
            Verdict::Withheld(WithheldReason::OracleDisagreement) => {
                for p in report.points.iter().filter(|p| !p.oracle_agreement) {
                    failures.push(format!(
                        "{kind}: Monte Carlo {} (sigma {}) vs quadrature {} at N={}, M={}, tau={}",
                        sig9(p.oracle.estimate),
                        sig9(p.sigma),
                        sig9(p.quadrature),
                        p.n_cut,
                        p.m_ref,
                        p.tau
                    ));
                }
            }
            Verdict::Withheld(WithheldReason::InsufficientPrecision) => failures.push(format!(
                "{kind}: verdict withheld, {} trials cannot separate the closed forms",
                config.trials
            )),
            verdict if verdict != expected_verdict(kind) => failures.push(format!(
                "{kind}: verdict '{verdict}' where '{}' was expected",
                expected_verdict(kind)
            )),
            _ => {}
        }

        let checks = detector_runs(kind, &report, config)?;
        for d in checks.iter().filter(|d| !(d.agrees_with_dual && d.agrees_with_quadrature)) {
            failures.push(format!(
                "{kind}: Pareto-domain run {} at N={}, M={}, tau={} (alpha={}, beta={}) disagrees with the oracles",
                sig9(d.estimate.estimate),
                d.n_cut,
                d.m_ref,
                d.tau,
                d.alpha,
                d.beta
            ));
        }

        if kind.is_full_cfar() {
            for f in forced_fixtures(kind, &report, &checks) {
                if !f.passed {
                    failures.push(format!("{kind}: fixture {} fails at N={}, M={}", f.name, f.n_cut, f.m_ref));
                }
                fixtures.push(f);
            }
        }
        detector_checks.extend(checks);
        reports.push(report);
    }

    let mut cfar = Vec::new();
    for (kind, n_cut, m_ref, tau) in [(DetectorKind::GmFullMulti, 2, 8, 1.0), (DetectorKind::GmFullSingle, 1, 8, 0.5)] {
        let spec = SweepSpec {
            kind,
            n_cut,
            m_ref,
            tau: ThresholdMultiplier::new(tau)?,
            params_grid: SweepSpec::product_grid(&CFAR_ALPHAS, &CFAR_BETAS)?,
            detector_scale: None,
            trials: config.cfar_trials,
            seed: config.seed,
        };
        let report = cfar_grid_check(&spec)?;
        if !report.homogeneous {
            failures.push(format!(
                "{kind}: CFAR grid inhomogeneous (chi-square p = {})",
                sig9(report.chi_square.p_value)
            ));
        }
        cfar.push(report);
    }

    let reductions = reduction_checks()?;
    for r in reductions.iter().filter(|r| !r.passed) {
        failures.push(format!(
            "{} at M={}, tau={}: relative error {}",
            r.identity,
            r.m_ref,
            r.tau,
            sig9(r.relative_error)
        ));
    }

    Ok(VerificationBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        config: config.clone(),
        reports,
        detector_checks,
        fixtures,
        cfar,
        reductions,
        passed: failures.is_empty(),
        failures,
    })
}

fn relative(value: f64, expected: f64) -> f64 {
    if value == expected {
        0.0
    } else {
        (value - expected).abs() / expected.abs()
    }
}

fn detector_runs(kind: DetectorKind, report: &AdjudicationReport, config: &VerifyConfig) -> Result<Vec<DetectorCheck>> {
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, p) in report.points.iter().enumerate() {
        groups.entry((p.n_cut, p.m_ref)).or_default().push(i);
    }
    let mut checks = vec![None; report.points.len()];
    for (g, (&(n, m), indices)) in groups.iter().enumerate() {
        let (alpha, beta) = CHECK_LAWS[g % CHECK_LAWS.len()];
        let params = ParetoParams::new(alpha, beta)?;
        let taus = indices
            .iter()
            .map(|&i| ThresholdMultiplier::new(report.points[i].tau))
            .collect::<Result<Vec<_>>>()?;
        let estimates = empirical_pfa_taus(kind, n, m, &taus, &params, None, config.trials, config.seed)?;
        for (&i, estimate) in indices.iter().zip(estimates) {
            let p = &report.points[i];
            checks[i] = Some(DetectorCheck {
                kind,
                n_cut: n,
                m_ref: m,
                tau: p.tau,
                alpha,
                beta,
                estimate,
                agrees_with_dual: estimate.agrees_with(&p.oracle),
                agrees_with_quadrature: estimate.is_consistent_with(p.quadrature),
            });
        }
    }
    Ok(checks.into_iter().map(|c| c.expect("every point belongs to a group")).collect())
}

// Single reference cell: the full-CFAR threshold cancels, so every τ gives
// 1 - (N/(N+1))^N (1/2 for the single-pulse rule).
fn forced_fixtures(kind: DetectorKind, report: &AdjudicationReport, checks: &[DetectorCheck]) -> Vec<FixtureCheck> {
    let mut by_n: BTreeMap<u64, Vec<EstimateWithCI>> = BTreeMap::new();
    for (p, d) in report.points.iter().zip(checks) {
        if p.m_ref == 1 {
            by_n.entry(p.n_cut).or_default().extend([p.oracle, d.estimate]);
        }
    }
    by_n.into_iter()
        .map(|(n, estimates)| {
            let nf = n as f64;
            let expected = -(nf * (nf / (nf + 1.0)).ln()).exp_m1();
            let passed = estimates
                .iter()
                .all(|e| e.is_consistent_with(expected) && estimates.iter().all(|o| o.agrees_with(e)));
            FixtureCheck {
                name: if kind.is_single() {
                    "Pfa = 1/2 for every tau".into()
                } else {
                    "tau-invariance at M = 1".into()
                },
                kind,
                n_cut: n,
                m_ref: 1,
                expected,
                estimates,
                passed,
            }
        })
        .collect()
}

pub const REDUCTION_M_VALUES: [u64; 6] = [1, 2, 4, 8, 16, 32];
pub const REDUCTION_TAUS: [f64; 8] = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

/// The one-pulse identities of the multi-pulse forms.
pub fn reduction_checks() -> Result<Vec<ReductionCheck>> {
    let mut out = Vec::new();
    for m in REDUCTION_M_VALUES {
        for t in REDUCTION_TAUS {
            let tau = ThresholdMultiplier::new(t)?;
            let mf = m as f64;
            let power = (1.0 + t).powf(-mf);
            let mut push = |identity: &str, value: f64, expected: f64| {
                let relative_error = relative(value, expected);
                out.push(ReductionCheck {
                    identity: identity.into(),
                    m_ref: m,
                    tau: t,
                    value,
                    expected,
                    relative_error,
                    passed: relative_error <= REDUCTION_TOL,
                });
            };
            push("partial-multi(N=1) = (1+tau)^-M", pfa_gm_partial_multi(1, m, tau)?, power);
            if m >= 2 {
                push(
                    "full-multi paper(N=1) = M/(M+1) (1+tau)^-M",
                    pfa_gm_full_multi(1, m, tau, PfaFormulaVariant::PaperForm)?,
                    mf / (mf + 1.0) * power,
                );
            }
        }
    }
    Ok(out)
}
