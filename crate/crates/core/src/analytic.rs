//! Closed-form false-alarm probabilities of the GM detectors.
//!
//! Two single-pulse and two multi-pulse rules are covered. For the rules that
//! replace the clutter scale with the reference minimum, two closed forms are
//! provided: the expression as printed in the literature (`PaperForm`) and a
//! re-derivation from the conditional-minimum representation
//! (`CandidateForm`). Neither is trusted a priori; the oracles in
//! [`crate::oracles`] decide which one describes the detector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::ThresholdMultiplier;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    /// One cell under test, known clutter scale.
    GmPartialSingle,
    /// One cell under test, scale replaced by the reference minimum.
    GmFullSingle,
    /// `N` cells under test, known clutter scale.
    GmPartialMulti,
    /// `N` cells under test, scale replaced by the reference minimum.
    GmFullMulti,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::GmPartialSingle,
        DetectorKind::GmFullSingle,
        DetectorKind::GmPartialMulti,
        DetectorKind::GmFullMulti,
    ];

    pub fn is_single(self) -> bool {
        matches!(self, DetectorKind::GmPartialSingle | DetectorKind::GmFullSingle)
    }

    /// Scale replaced by the reference minimum (CFAR in both parameters).
    pub fn is_full_cfar(self) -> bool {
        matches!(self, DetectorKind::GmFullSingle | DetectorKind::GmFullMulti)
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            DetectorKind::GmPartialSingle => "partial-single",
            DetectorKind::GmFullSingle => "full-single",
            DetectorKind::GmPartialMulti => "partial-multi",
            DetectorKind::GmFullMulti => "full-multi",
        }
    }

    /// Closed-form variants that exist for this detector.
    pub fn closed_form_variants(self) -> &'static [PfaFormulaVariant] {
        if self.is_full_cfar() {
            &[PfaFormulaVariant::PaperForm, PfaFormulaVariant::CandidateForm]
        } else {
            &[PfaFormulaVariant::PaperForm]
        }
    }

    /// Checks `(n_cut, m_ref)` against the detector: single-pulse rules take
    /// exactly one cell under test.
    pub fn check_shape(self, n_cut: u64, m_ref: u64) -> Result<()> {
        if n_cut == 0 || m_ref == 0 {
            return Err(Error::domain(format!(
                "cell counts must be positive, got N = {n_cut}, M = {m_ref}"
            )));
        }
        if self.is_single() && n_cut != 1 {
            return Err(Error::domain(format!(
                "{} takes a single cell under test, got N = {n_cut}",
                self.cli_name()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.cli_name() == s || format!("{k:?}") == s)
            .ok_or_else(|| Error::domain(format!("unknown detector kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PfaFormulaVariant {
    /// The closed form as printed.
    PaperForm,
    /// Closed form re-derived from the conditional-minimum representation.
    CandidateForm,
    /// Numerical integration of the integral representation.
    OracleQuadrature,
}

impl PfaFormulaVariant {
    pub fn cli_name(self) -> &'static str {
        match self {
            PfaFormulaVariant::PaperForm => "paper",
            PfaFormulaVariant::CandidateForm => "candidate",
            PfaFormulaVariant::OracleQuadrature => "quadrature",
        }
    }
}

impl fmt::Display for PfaFormulaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PfaFormulaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            PfaFormulaVariant::PaperForm,
            PfaFormulaVariant::CandidateForm,
            PfaFormulaVariant::OracleQuadrature,
        ]
        .into_iter()
        .find(|v| v.cli_name() == s || format!("{v:?}") == s)
        .ok_or_else(|| Error::domain(format!("unknown formula variant '{s}'")))
    }
}

/// Upper tail of a `γ(k, 1)` variable at `x`, as the Poisson sum
/// `Σ_{l<k} x^l e^{-x} / l!`.
pub fn gamma_tail_poisson_sum(x: f64, k: u64) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::domain(format!("gamma tail argument must be finite and non-negative, got {x}")));
    }
    if k == 0 {
        return Err(Error::domain("gamma tail shape must be at least 1"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    // Σ x^l / l! with the running term rescaled whenever it grows too large.
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    for l in 1..k {
        term *= x / l as f64;
        sum += term;
        if sum > 1e280 {
            term *= 1e-280;
            sum *= 1e-280;
            log_scale += 280.0 * std::f64::consts::LN_10;
        }
        if term < sum * 1e-18 && l as f64 > x {
            break;
        }
    }
    let decay = (-x).exp();
    if log_scale == 0.0 && decay > 0.0 {
        Ok((sum * decay).min(1.0))
    } else {
        Ok((sum.ln() + log_scale - x).exp().min(1.0))
    }
}

/// Natural log of the binomial coefficient `C(a, b)`.
///
/// Summed as `Σ_{i=1}^{b'} ln((a - b' + i) / i)` with `b' = min(b, a - b)`;
/// every term is at least `ln 2`-ish in size relative to its rounding, so the
/// result carries a relative error of a few ulps.
pub fn log_binomial(a: u64, b: u64) -> Result<f64> {
    if b > a {
        return Err(Error::domain(format!("binomial C({a}, {b}) needs b <= a")));
    }
    let k = b.min(a - b);
    let base = (a - k) as f64;
    Ok((1..=k).map(|i| ((base + i as f64) / i as f64).ln()).sum())
}

/// `(1 + τ)^{-n_ref}`.
pub fn pfa_gm_partial_single(n_ref: u64, tau: ThresholdMultiplier) -> Result<f64> {
    if n_ref == 0 {
        return Err(Error::domain("reference window needs at least one cell"));
    }
    Ok(pow_one_plus(tau.value(), -(n_ref as f64)))
}

/// `(1 + τ)^p`, accurate for both small and large `τ`.
fn pow_one_plus(tau: f64, p: f64) -> f64 {
    if tau < 0.5 {
        (p * tau.ln_1p()).exp()
    } else {
        (1.0 + tau).powf(p)
    }
}

/// Single-pulse full-CFAR detector.
///
/// `PaperForm`: `n/(n+1) · (1+τ)^{-n}`.
/// `CandidateForm`: `n/(n+1) · (1+τ)^{-(n-1)}`, which equals `1/2` for every
/// `τ` at `n = 1` as the exponent algebra of the rule demands.
pub fn pfa_gm_full_single(n_ref: u64, tau: ThresholdMultiplier, variant: PfaFormulaVariant) -> Result<f64> {
    if n_ref == 0 {
        return Err(Error::domain("reference window needs at least one cell"));
    }
    let n = n_ref as f64;
    let power = match variant {
        PfaFormulaVariant::PaperForm => -n,
        PfaFormulaVariant::CandidateForm => -(n - 1.0),
        PfaFormulaVariant::OracleQuadrature => return Err(quadrature_not_closed_form()),
    };
    Ok(n / (n + 1.0) * pow_one_plus(tau.value(), power))
}

fn quadrature_not_closed_form() -> Error {
    Error::Unsupported("the quadrature variant is evaluated by the numeric oracles, not in closed form".into())
}

/// `Σ_{l=0}^{N-1} C(M+l-1, l) τ^l / (τ+1)^{M+l}`, the probability that a
/// `γ(N,1)` variable exceeds `τ` times an independent `γ(M,1)`.
pub fn pfa_gm_partial_multi(n_cut: u64, m_ref: u64, tau: ThresholdMultiplier) -> Result<f64> {
    if n_cut == 0 || m_ref == 0 {
        return Err(Error::domain("cell counts must be positive"));
    }
    let m = m_ref as f64;
    let series = BinomialSeries::new(tau.value(), m, m - 1.0);
    Ok(series.weighted_sum(n_cut, |_| 1.0, |_| 0.0).min(1.0))
}

/// Terms `C(top + n, n) · q^n · (1+τ)^{-power}` with `q = τ/(1+τ)`.
///
/// Evaluated by a linear recurrence from `n = 0` unless the leading term would
/// underflow, in which case every term is carried as a logarithm.
struct BinomialSeries {
    tau: f64,
    top: f64,
    power: f64,
    log_lead: f64,
    log_q: f64,
}

impl BinomialSeries {
    fn new(tau: f64, power: f64, top: f64) -> Self {
        let log_q = if tau > 0.0 { tau.ln() - tau.ln_1p() } else { f64::NEG_INFINITY };
        Self {
            tau,
            top,
            power,
            log_lead: -power * tau.ln_1p(),
            log_q,
        }
    }

    /// `Σ_{n<count} term_n · weight(n)`; `log_weight` must agree with `weight`.
    fn weighted_sum(&self, count: u64, weight: impl Fn(u64) -> f64, log_weight: impl Fn(u64) -> f64) -> f64 {
        if self.log_lead > -600.0 {
            let q = self.tau / (1.0 + self.tau);
            let mut term = pow_one_plus(self.tau, -self.power);
            let mut sum = term * weight(0);
            for n in 1..count {
                let k = n as f64;
                term *= q * (self.top + k) / k;
                if term == 0.0 {
                    break;
                }
                sum += term * weight(n);
            }
            sum
        } else {
            let mut log_c = 0.0;
            let logs = (0..count).map(|n| {
                if n == 0 {
                    return self.log_lead + log_weight(0);
                }
                let k = n as f64;
                log_c += ((self.top + k) / k).ln();
                self.log_lead + log_c + k * self.log_q + log_weight(n)
            });
            log_sum_exp(logs)
        }
    }
}

/// Multi-pulse full-CFAR detector, refusing a single reference cell.
///
/// With `N = n_cut`, `M = m_ref`:
///
/// `PaperForm`:
/// `M Σ_{l<N} Σ_{n≤l} C(M+n-1, n) (N+M)^{-(l-n+1)} τ^n / (τ+1)^{M+n}`.
///
/// `CandidateForm`:
/// `M Σ_{l<N} Σ_{n≤l} C(M+n-2, n) N^{l-n} (N+M)^{-(l-n+1)} τ^n (1+τ)^{-(M+n-1)}`.
///
/// At `M = 1` the rule no longer depends on `τ`; use
/// [`pfa_gm_full_multi_with_convention`] or the quadrature oracle there.
pub fn pfa_gm_full_multi(n_cut: u64, m_ref: u64, tau: ThresholdMultiplier, variant: PfaFormulaVariant) -> Result<f64> {
    if m_ref < 2 {
        return Err(Error::Unsupported(format!(
            "closed forms for the multi-pulse full-CFAR detector need M >= 2 (got M = {m_ref}); use the quadrature oracle"
        )));
    }
    pfa_gm_full_multi_with_convention(n_cut, m_ref, tau, variant)
}

/// As [`pfa_gm_full_multi`] but also evaluates `M = 1`, taking
/// `C(M+n-2, n)` as 1 for `n = 0` and 0 for `n ≥ 1` there.
pub fn pfa_gm_full_multi_with_convention(
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    variant: PfaFormulaVariant,
) -> Result<f64> {
    if n_cut == 0 || m_ref == 0 {
        return Err(Error::domain("cell counts must be positive"));
    }
    let candidate = match variant {
        PfaFormulaVariant::PaperForm => false,
        PfaFormulaVariant::CandidateForm => true,
        PfaFormulaVariant::OracleQuadrature => return Err(quadrature_not_closed_form()),
    };
    let (nf, mf) = (n_cut as f64, m_ref as f64);
    let total = nf + mf;
    // For fixed n the sum over l is geometric with ratio r and N - n terms:
    // Σ_{k<K} r^k = (1 - r^K) / (1 - r).
    let (log_r, one_minus_r) = if candidate {
        ((nf / total).ln(), mf / total)
    } else {
        (-total.ln(), (total - 1.0) / total)
    };
    let geometric = |n: u64| -> f64 {
        match n_cut - n {
            1 => 1.0,
            k => -(k as f64 * log_r).exp_m1() / one_minus_r,
        }
    };
    // (1+τ) exponent and binomial top index at n = 0
    let (power, top) = if candidate { (mf - 1.0, mf - 2.0) } else { (mf, mf - 1.0) };
    let count = if candidate && m_ref == 1 { 1 } else { n_cut };
    let series = BinomialSeries::new(tau.value(), power, top);
    let sum = series.weighted_sum(count, geometric, |n| geometric(n).ln());
    Ok((mf / total * sum).min(1.0))
}

/// Dispatches a closed-form variant for any detector kind.
///
/// Single-pulse kinds read the reference length from `m_ref`.
pub fn closed_form_pfa(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    variant: PfaFormulaVariant,
) -> Result<f64> {
    kind.check_shape(n_cut, m_ref)?;
    match (kind, variant) {
        (_, PfaFormulaVariant::OracleQuadrature) => Err(quadrature_not_closed_form()),
        (DetectorKind::GmPartialSingle, PfaFormulaVariant::PaperForm) => pfa_gm_partial_single(m_ref, tau),
        (DetectorKind::GmPartialMulti, PfaFormulaVariant::PaperForm) => pfa_gm_partial_multi(n_cut, m_ref, tau),
        (DetectorKind::GmFullSingle, v) => pfa_gm_full_single(m_ref, tau, v),
        (DetectorKind::GmFullMulti, v) => pfa_gm_full_multi(n_cut, m_ref, tau, v),
        (k, v) => Err(Error::Unsupported(format!("{k} has no {v} closed form"))),
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let logs: Vec<f64> = terms.collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    (max + sum.ln()).exp()
}
