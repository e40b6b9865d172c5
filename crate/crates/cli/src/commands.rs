use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use gmcfar::analytic::closed_form_pfa;
use gmcfar::clutter::sample_pareto;
use gmcfar::oracles::{
    adjudicate, default_grid, quadrature_pfa, shipped_closed_form, validated_pfa, AdjudicationReport, Verdict,
    VALIDATED_QUADRATURE_TOL,
};
use gmcfar::pareto_mc::empirical_pfa_taus;
use gmcfar::solver::{check_controllable, solve_tau, SolverConfig};
use gmcfar::verification::{verify, VerificationBundle, VerifyConfig};
use gmcfar::{DetectorKind, ParetoParams, PfaFormulaVariant, RandomStream, ThresholdMultiplier};

use crate::output::{Cell, Table};
use crate::{
    Cli, Command, DetectorArgs, Format, PfaArgs, ReportArgs, SampleArgs, SimulateArgs, SweepArgs, ThresholdArgs,
    VerifyArgs,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFICATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

const SAMPLE_STREAM: u64 = 0x5a3b;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Verification(_) => EXIT_VERIFICATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Verification(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<gmcfar::Error> for CliError {
    fn from(e: gmcfar::Error) -> Self {
        use gmcfar::Error as E;
        match e {
            E::Domain(_) | E::Unsupported(_) => CliError::Usage(e.to_string()),
            E::Report(_) => CliError::Verification(e.to_string()),
            E::Overflow(_) | E::NumericalFailure { .. } | E::UnreachableTarget(_) => CliError::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult<u8> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Pfa(a) => emit(cmd_pfa(a, cli.seed)?, cli.format),
        Command::Threshold(a) => emit(cmd_threshold(a, cli.seed)?, cli.format),
        Command::Simulate(a) => emit(cmd_simulate(a, cli.seed)?, cli.format),
        Command::Sweep(a) => emit(cmd_sweep(a, cli.seed)?, cli.format),
        Command::Verify(a) => cmd_verify(a, cli.seed, cli.format),
        Command::Sample(a) => cmd_sample(a, cli.seed),
    }
}

fn emit(table: Table, format: Format) -> CliResult<u8> {
    write_stdout(&table.render(format))?;
    Ok(EXIT_OK)
}

fn write_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Usage(format!("cannot write to standard output: {e}")))
}

/// `(n_cut, m_ref)` from the flags.
fn shape(d: &DetectorArgs) -> CliResult<(u64, u64)> {
    let (n, m) = if d.kind.is_single() {
        if d.m.is_some() {
            return Err(CliError::Usage(format!(
                "{} takes its reference length from --n; --m is not accepted",
                d.kind
            )));
        }
        (1, d.n)
    } else {
        let m = d
            .m
            .ok_or_else(|| CliError::Usage(format!("{} needs --m", d.kind)))?;
        (d.n, m)
    };
    d.kind.check_shape(n, m)?;
    Ok((n, m))
}

fn tau(t: f64) -> CliResult<ThresholdMultiplier> {
    Ok(ThresholdMultiplier::new(t)?)
}

fn load_report(kind: DetectorKind, source: &ReportArgs, seed: u64) -> CliResult<AdjudicationReport> {
    let Some(path) = &source.report else {
        if source.adjudication_trials == 0 {
            return Err(CliError::Usage("--adjudication-trials must be positive".into()));
        }
        return Ok(adjudicate(
            kind,
            &default_grid(kind),
            source.adjudication_trials,
            seed,
            VALIDATED_QUADRATURE_TOL,
        )?);
    };
    let text = read(path)?;
    if let Ok(bundle) = VerificationBundle::from_json(&text) {
        return bundle
            .report(kind)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("{} holds no report for {kind}", path.display())));
    }
    let report = AdjudicationReport::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if report.detector != kind {
        return Err(CliError::Usage(format!(
            "{} covers {} but {kind} was requested",
            path.display(),
            report.detector
        )));
    }
    Ok(report)
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn source_name(report: &AdjudicationReport, kind: DetectorKind, n: u64, m: u64, t: ThresholdMultiplier) -> String {
    match report.verdict {
        Verdict::Validated(v) if closed_form_pfa(kind, n, m, t, v).is_ok() => v.cli_name().to_string(),
        _ => PfaFormulaVariant::OracleQuadrature.cli_name().to_string(),
    }
}

const PFA_HEADER: [&str; 6] = ["kind", "n_cut", "m_ref", "tau", "source", "pfa"];
const ALL_VARIANTS_HEADER: [&str; 7] = ["kind", "n_cut", "m_ref", "tau", "paper", "candidate", "quadrature"];

fn cmd_pfa(a: &PfaArgs, seed: u64) -> CliResult<Table> {
    let kind = a.detector.kind;
    let (n, m) = shape(&a.detector)?;
    let t = tau(a.tau)?;
    let prefix = || -> Vec<Cell> { vec![kind.cli_name().into(), n.into(), m.into(), a.tau.into()] };
    if a.all_variants {
        let variant = |v: PfaFormulaVariant| -> CliResult<Option<f64>> {
            if !kind.closed_form_variants().contains(&v) {
                return Ok(None);
            }
            match shipped_closed_form(kind, n, m, t, v) {
                Ok(p) => Ok(Some(p)),
                Err(gmcfar::Error::Unsupported(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let mut row = prefix();
        row.push(variant(PfaFormulaVariant::PaperForm)?.into());
        row.push(variant(PfaFormulaVariant::CandidateForm)?.into());
        row.push(quadrature_pfa(kind, n, m, t, VALIDATED_QUADRATURE_TOL)?.into());
        return Ok(Table::record(&ALL_VARIANTS_HEADER, row));
    }
    let (source, pfa) = match a.variant {
        Some(PfaFormulaVariant::OracleQuadrature) => (
            PfaFormulaVariant::OracleQuadrature.cli_name().to_string(),
            quadrature_pfa(kind, n, m, t, VALIDATED_QUADRATURE_TOL)?,
        ),
        Some(v) => (v.cli_name().to_string(), closed_form_pfa(kind, n, m, t, v)?),
        None => {
            let report = load_report(kind, &a.source, seed)?;
            (source_name(&report, kind, n, m, t), validated_pfa(kind, &report, n, m, t)?)
        }
    };
    let mut row = prefix();
    row.push(source.into());
    row.push(pfa.into());
    Ok(Table::record(&PFA_HEADER, row))
}

const THRESHOLD_HEADER: [&str; 6] = ["kind", "n_cut", "m_ref", "target_pfa", "tau", "achieved_pfa"];

fn cmd_threshold(a: &ThresholdArgs, seed: u64) -> CliResult<Table> {
    let kind = a.detector.kind;
    let (n, m) = shape(&a.detector)?;
    let config = SolverConfig::new(a.pfa)?;
    check_controllable(kind, n, m)?;
    let report = load_report(kind, &a.source, seed)?;
    let t = solve_tau(kind, n, m, &config, &report)?;
    let achieved = validated_pfa(kind, &report, n, m, t)?;
    Ok(Table::record(
        &THRESHOLD_HEADER,
        vec![kind.cli_name().into(), n.into(), m.into(), a.pfa.into(), t.value().into(), achieved.into()],
    ))
}

const SIMULATE_HEADER: [&str; 12] = [
    "kind",
    "n_cut",
    "m_ref",
    "tau",
    "alpha",
    "beta",
    "trials",
    "rejections",
    "estimate",
    "ci_low",
    "ci_high",
    "seed",
];

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> CliResult<Table> {
    let kind = a.detector.kind;
    let (n, m) = shape(&a.detector)?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let params = ParetoParams::new(a.alpha, a.beta)?;
    let e = empirical_pfa_taus(kind, n, m, &[tau(a.tau)?], &params, a.detector_scale, a.trials, seed)?[0];
    Ok(Table::record(
        &SIMULATE_HEADER,
        vec![
            kind.cli_name().into(),
            n.into(),
            m.into(),
            a.tau.into(),
            a.alpha.into(),
            a.beta.into(),
            e.trials.into(),
            e.rejections.into(),
            e.estimate.into(),
            e.ci_low.into(),
            e.ci_high.into(),
            e.seed.into(),
        ],
    ))
}

// Values from `start` towards `end`, including `end` when it is hit within
// rounding.
fn arithmetic_steps(start: f64, end: f64, step: f64) -> Vec<f64> {
    let span = end - start;
    let count = (span.abs() / step + 1e-9).floor() as u64;
    let sign = if span < 0.0 { -1.0 } else { 1.0 };
    (0..=count).map(|k| start + sign * k as f64 * step).collect()
}

fn geometric_steps(start: f64, end: f64, factor: f64) -> Vec<f64> {
    let (from, to) = (start.log10(), end.log10());
    let step = factor.log10() * if to < from { -1.0 } else { 1.0 };
    let count = ((to - from) / step + 1e-9).floor() as i32;
    (0..=count).map(|k| 10f64.powf(from + k as f64 * step)).collect()
}

fn cmd_sweep(a: &SweepArgs, seed: u64) -> CliResult<Table> {
    let kind = a.detector.kind;
    let (n, m) = shape(&a.detector)?;
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(CliError::Usage(format!("--step must be positive, got {}", a.step)));
    }
    let report = load_report(kind, &a.source, seed)?;
    if let Some((lo, hi)) = a.tau_range {
        if !(lo >= 0.0 && hi >= 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(CliError::Usage("--tau-range must lie in [0, inf)".into()));
        }
        let mut table = Table::new(&["tau", "pfa"]);
        for t in arithmetic_steps(lo, hi, a.step) {
            table.push(vec![t.into(), validated_pfa(kind, &report, n, m, tau(t)?)?.into()]);
        }
        return Ok(table);
    }
    let (lo, hi) = a.pfa_range.expect("clap requires one of the ranges");
    if !(lo > 0.0 && lo < 1.0 && hi > 0.0 && hi < 1.0) {
        return Err(CliError::Usage("--pfa-range must lie in (0, 1)".into()));
    }
    if a.step <= 1.0 {
        return Err(CliError::Usage("--step for a Pfa range is a factor and must exceed 1".into()));
    }
    check_controllable(kind, n, m)?;
    let mut table = Table::new(&["pfa", "tau"]);
    for p in geometric_steps(lo, hi, a.step) {
        let t = solve_tau(kind, n, m, &SolverConfig::new(p)?, &report)?;
        table.push(vec![p.into(), t.value().into()]);
    }
    Ok(table)
}

const VERIFY_HEADER: [&str; 12] = [
    "detector",
    "n_cut",
    "m_ref",
    "tau",
    "mc_estimate",
    "mc_sigma",
    "quadrature",
    "paper",
    "candidate",
    "pareto_estimate",
    "agreement",
    "verdict",
];

fn cmd_verify(a: &VerifyArgs, seed: u64, format: Format) -> CliResult<u8> {
    if a.trials == 0 || a.cfar_trials == 0 {
        return Err(CliError::Usage("--trials and --cfar-trials must be positive".into()));
    }
    let config = VerifyConfig {
        trials: a.trials,
        cfar_trials: a.cfar_trials,
        seed,
        tol: a.tol,
        n_values: a.n_values.clone(),
        m_values: a.m_values.clone(),
        taus: a.taus.clone(),
    };
    let bundle = verify(&config)?;
    let json = bundle.to_json()?;
    if let Some(path) = &a.out {
        fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    match format {
        Format::Json => write_stdout(&format!("{json}\n"))?,
        Format::Csv => {
            let mut table = Table::new(&VERIFY_HEADER);
            let mut checks = bundle.detector_checks.iter();
            for r in &bundle.reports {
                for p in &r.points {
                    let d = checks.next().expect("one detector run per point");
                    let value = |v: PfaFormulaVariant| -> Cell {
                        p.variants.iter().find(|c| c.variant == v).and_then(|c| c.value).into()
                    };
                    let agree = p.oracle_agreement && d.agrees_with_dual && d.agrees_with_quadrature;
                    table.push(vec![
                        r.detector.cli_name().into(),
                        p.n_cut.into(),
                        p.m_ref.into(),
                        p.tau.into(),
                        p.oracle.estimate.into(),
                        p.sigma.into(),
                        p.quadrature.into(),
                        value(PfaFormulaVariant::PaperForm),
                        value(PfaFormulaVariant::CandidateForm),
                        d.estimate.estimate.into(),
                        if agree { "yes" } else { "no" }.into(),
                        r.verdict.to_string().into(),
                    ]);
                }
            }
            write_stdout(&table.render(Format::Csv))?;
        }
    }
    eprint!("{}", bundle.summary());
    Ok(if bundle.passed { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_sample(a: &SampleArgs, seed: u64) -> CliResult<u8> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let params = ParetoParams::new(a.alpha, a.beta)?;
    let samples = sample_pareto(&params, &RandomStream::new(seed, SAMPLE_STREAM), a.count);
    let mut text = String::with_capacity(samples.len() * 20);
    for x in samples {
        text.push_str(&x.to_string());
        text.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?,
        None => write_stdout(&text)?,
    }
    Ok(EXIT_OK)
}
