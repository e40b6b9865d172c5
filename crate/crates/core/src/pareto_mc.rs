//! Pareto-domain simulation: draw clutter windows under `H₀`, run the
//! detectors on them and count false alarms.
//!
//! Unlike the dual-domain oracle this path forms the Pareto samples
//! themselves and hands their logarithms to the same evaluation core as the
//! public decision rules.

use serde::{Deserialize, Serialize};

use crate::analytic::DetectorKind;
use crate::clutter::{ParetoParams, RandomStream};
use crate::detectors::{excess_from_logs, Baseline, Decision, ThresholdMultiplier};
use crate::error::{Error, Result};
use crate::oracles::montecarlo::{configuration_stream, count_rejections};
use crate::stats::{chi_square_homogeneity, EstimateWithCI, Homogeneity};

const PARETO_DOMAIN: u64 = 0x9a7e;

/// Significance level of the homogeneity test.
pub const HOMOGENEITY_LEVEL: f64 = 0.001;

/// False-alarm rate of `kind` on `trials` simulated windows.
///
/// Partial kinds use `params.scale` as the detector's clutter scale. For the
/// single-pulse kinds `m_ref` is the reference length and `n_cut` must be 1.
pub fn empirical_pfa(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    tau: ThresholdMultiplier,
    params: &ParetoParams,
    trials: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    Ok(empirical_pfa_taus(kind, n_cut, m_ref, &[tau], params, None, trials, seed)?[0])
}

/// [`empirical_pfa`] for several thresholds on the same windows, optionally
/// with a detector scale that differs from the clutter's.
#[allow(clippy::too_many_arguments)]
pub fn empirical_pfa_taus(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    taus: &[ThresholdMultiplier],
    params: &ParetoParams,
    detector_scale: Option<f64>,
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateWithCI>> {
    let stream = configuration_stream(seed, PARETO_DOMAIN, kind, n_cut, m_ref);
    simulate(kind, n_cut, m_ref, taus, params, detector_scale, trials, seed, stream)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    kind: DetectorKind,
    n_cut: u64,
    m_ref: u64,
    taus: &[ThresholdMultiplier],
    params: &ParetoParams,
    detector_scale: Option<f64>,
    trials: u64,
    seed: u64,
    stream: RandomStream,
) -> Result<Vec<EstimateWithCI>> {
    kind.check_shape(n_cut, m_ref)?;
    if trials == 0 {
        return Err(Error::domain("simulation needs at least one trial"));
    }
    let baseline = if kind.is_full_cfar() {
        Baseline::ReferenceMinimum
    } else {
        let scale = detector_scale.unwrap_or(params.scale());
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!("detector scale must be positive and finite, got {scale}")));
        }
        Baseline::KnownScale(scale.ln())
    };
    let taus: Vec<f64> = taus.iter().map(|t| t.value()).collect();
    let (alpha, beta) = (params.shape(), params.scale());
    let n = n_cut as usize;
    let cells = n_cut + m_ref;
    let counts = count_rejections(stream, trials, cells, taus.len(), |cursor, logs, counts| {
        logs.clear();
        for _ in 0..cells {
            let x = beta * (cursor.exponential() / alpha).exp();
            logs.push(x.ln());
        }
        let (cut, reference) = excess_from_logs(&logs[..n], &logs[n..], baseline);
        for (count, &t) in counts.iter_mut().zip(&taus) {
            if Decision::from_margin(cut - t * reference).is_detection() {
                *count += 1;
            }
        }
    });
    Ok(counts
        .into_iter()
        .map(|c| EstimateWithCI::from_counts(c, trials, seed))
        .collect())
}

/// One detector configuration simulated over a grid of clutter laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: DetectorKind,
    pub n_cut: u64,
    pub m_ref: u64,
    pub tau: ThresholdMultiplier,
    pub params_grid: Vec<ParetoParams>,
    /// Partial kinds: fixed detector scale instead of each point's own.
    #[serde(default)]
    pub detector_scale: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

impl SweepSpec {
    /// `alphas × betas` in row-major order.
    pub fn product_grid(alphas: &[f64], betas: &[f64]) -> Result<Vec<ParetoParams>> {
        let mut grid = Vec::with_capacity(alphas.len() * betas.len());
        for &a in alphas {
            for &b in betas {
                grid.push(ParetoParams::new(a, b)?);
            }
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarPoint {
    pub alpha: f64,
    pub beta: f64,
    pub estimate: EstimateWithCI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarReport {
    pub kind: DetectorKind,
    pub n_cut: u64,
    pub m_ref: u64,
    pub tau: f64,
    pub trials: u64,
    pub seed: u64,
    pub points: Vec<CfarPoint>,
    pub chi_square: Homogeneity,
    pub homogeneous: bool,
}

pub const CFAR_CSV_HEADER: [&str; 7] = ["alpha", "beta", "trials", "rejections", "estimate", "ci_low", "ci_high"];

impl CfarReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Report(e.to_string());
        w.write_record(CFAR_CSV_HEADER).map_err(io)?;
        for p in &self.points {
            let e = &p.estimate;
            w.write_record([
                p.alpha.to_string(),
                p.beta.to_string(),
                e.trials.to_string(),
                e.rejections.to_string(),
                e.estimate.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }
}

/// Simulates every grid point on its own sub-stream and tests the rejection
/// counts for homogeneity.
pub fn cfar_grid_check(spec: &SweepSpec) -> Result<CfarReport> {
    if spec.params_grid.len() < 2 {
        return Err(Error::domain("a homogeneity check needs at least two grid points"));
    }
    let base = configuration_stream(spec.seed, PARETO_DOMAIN, spec.kind, spec.n_cut, spec.m_ref);
    let points = spec
        .params_grid
        .iter()
        .enumerate()
        .map(|(i, params)| {
            let estimate = simulate(
                spec.kind,
                spec.n_cut,
                spec.m_ref,
                &[spec.tau],
                params,
                spec.detector_scale,
                spec.trials,
                spec.seed,
                base.substream(i as u64),
            )?[0];
            Ok(CfarPoint {
                alpha: params.shape(),
                beta: params.scale(),
                estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<(u64, u64)> = points
        .iter()
        .map(|p| (p.estimate.rejections, p.estimate.trials))
        .collect();
    let chi_square = chi_square_homogeneity(&table);
    Ok(CfarReport {
        kind: spec.kind,
        n_cut: spec.n_cut,
        m_ref: spec.m_ref,
        tau: spec.tau.value(),
        trials: spec.trials,
        seed: spec.seed,
        points,
        homogeneous: chi_square.p_value > HOMOGENEITY_LEVEL,
        chi_square,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{pfa_gm_full_multi, pfa_gm_partial_single, PfaFormulaVariant};

    fn tau(t: f64) -> ThresholdMultiplier {
        ThresholdMultiplier::new(t).unwrap()
    }

    fn params(a: f64, b: f64) -> ParetoParams {
        ParetoParams::new(a, b).unwrap()
    }

    #[test]
    fn partial_multi_hand_value() {
        let e = empirical_pfa(DetectorKind::GmPartialMulti, 2, 4, tau(1.0), &params(5.0, 1.0), 1_000_000, 7).unwrap();
        assert!(e.is_consistent_with(0.1875), "{e:?}");
    }

    #[test]
    fn full_multi_single_reference_ignores_tau() {
        let es = empirical_pfa_taus(
            DetectorKind::GmFullMulti,
            1,
            1,
            &[tau(0.1), tau(1.0), tau(10.0)],
            &params(3.0, 2.0),
            None,
            1_000_000,
            11,
        )
        .unwrap();
        assert!(es.iter().all(|e| e.agrees_with(&es[0]) && e.is_consistent_with(0.5)));
    }

    #[test]
    fn zero_threshold_partial_rule_always_fires() {
        let e = empirical_pfa(DetectorKind::GmPartialMulti, 3, 4, tau(0.0), &params(2.0, 5.0), 100_000, 3).unwrap();
        assert_eq!(e.rejections, e.trials);
    }

    #[test]
    fn matches_closed_forms() {
        let e = empirical_pfa(DetectorKind::GmPartialSingle, 1, 6, tau(0.3), &params(10.0, 0.01), 500_000, 2).unwrap();
        assert!(e.is_consistent_with(pfa_gm_partial_single(6, tau(0.3)).unwrap()));
        let exact = pfa_gm_full_multi(3, 4, tau(0.5), PfaFormulaVariant::CandidateForm).unwrap();
        let e = empirical_pfa(DetectorKind::GmFullMulti, 3, 4, tau(0.5), &params(2.0, 100.0), 500_000, 2).unwrap();
        assert!(e.is_consistent_with(exact), "{e:?} vs {exact}");
    }

    #[test]
    fn cfar_grid_is_homogeneous_for_full_rule() {
        let spec = SweepSpec {
            kind: DetectorKind::GmFullMulti,
            n_cut: 2,
            m_ref: 8,
            tau: tau(1.0),
            params_grid: SweepSpec::product_grid(&[2.0, 10.0], &[0.01, 100.0]).unwrap(),
            detector_scale: None,
            trials: 200_000,
            seed: 5,
        };
        let report = cfar_grid_check(&spec).unwrap();
        assert!(report.homogeneous, "{report:?}");
        assert_eq!(report.chi_square.degrees_of_freedom, 3);
        // independent sub-streams: counts differ between points
        assert!(report.points.windows(2).any(|w| w[0].estimate.rejections != w[1].estimate.rejections));
    }

    #[test]
    fn mismatched_scale_is_flagged() {
        let spec = SweepSpec {
            kind: DetectorKind::GmPartialMulti,
            n_cut: 2,
            m_ref: 4,
            tau: tau(0.25),
            params_grid: vec![params(5.0, 1.0), params(5.0, 100.0)],
            detector_scale: Some(1.0),
            trials: 100_000,
            seed: 5,
        };
        let report = cfar_grid_check(&spec).unwrap();
        assert!(!report.homogeneous);
        // the margin shifts by (N - τM)·ln(100) > 0
        assert!(report.points[1].estimate.estimate > report.points[0].estimate.estimate);
    }

    #[test]
    fn repeated_point_is_self_consistent() {
        let spec = SweepSpec {
            kind: DetectorKind::GmFullMulti,
            n_cut: 2,
            m_ref: 8,
            tau: tau(1.0),
            params_grid: vec![params(5.0, 1.0); 2],
            detector_scale: None,
            trials: 200_000,
            seed: 8,
        };
        let report = cfar_grid_check(&spec).unwrap();
        let (a, b) = (&report.points[0].estimate, &report.points[1].estimate);
        assert_ne!(a.rejections, b.rejections);
        assert!(a.agrees_with(b));
        assert!(report.chi_square.p_value.is_finite());
    }

    #[test]
    fn csv_has_fixed_header_and_one_row_per_point() {
        let spec = SweepSpec {
            kind: DetectorKind::GmFullSingle,
            n_cut: 1,
            m_ref: 4,
            tau: tau(0.5),
            params_grid: SweepSpec::product_grid(&[2.0, 5.0], &[1.0]).unwrap(),
            detector_scale: None,
            trials: 1000,
            seed: 1,
        };
        let csv = cfar_grid_check(&spec).unwrap().to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "alpha,beta,trials,rejections,estimate,ci_low,ci_high");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,1,1000,"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(2.0, 1.0);
        assert!(empirical_pfa(DetectorKind::GmPartialMulti, 2, 4, tau(1.0), &p, 0, 1).is_err());
        assert!(empirical_pfa(DetectorKind::GmFullSingle, 2, 4, tau(1.0), &p, 10, 1).is_err());
        let spec = SweepSpec {
            kind: DetectorKind::GmFullMulti,
            n_cut: 1,
            m_ref: 2,
            tau: tau(1.0),
            params_grid: vec![p],
            detector_scale: None,
            trials: 10,
            seed: 1,
        };
        assert!(cfar_grid_check(&spec).is_err());
    }
}
