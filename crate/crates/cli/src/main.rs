//! `gmcfar`: false-alarm probabilities, thresholds, simulation and
//! verification for geometric-mean CFAR detectors in Pareto clutter.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gmcfar::{DetectorKind, PfaFormulaVariant};

#[derive(Debug, Parser)]
#[command(name = "gmcfar", version, about = "Geometric-mean CFAR detection in Pareto clutter")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output document format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for Monte Carlo (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the false-alarm probability at a threshold.
    Pfa(PfaArgs),
    /// Solve for the threshold multiplier giving a target false-alarm probability.
    Threshold(ThresholdArgs),
    /// Simulate the detector on Pareto clutter and estimate its false-alarm rate.
    Simulate(SimulateArgs),
    /// Run the full verification pipeline.
    Verify(VerifyArgs),
    /// Tabulate Pfa over a threshold range or thresholds over a Pfa range.
    Sweep(SweepArgs),
    /// Draw Pareto samples, one per line.
    Sample(SampleArgs),
}

/// Detector configuration. For the single-pulse kinds `--n` is the
/// reference length and `--m` is not accepted.
#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: DetectorKind,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub m: Option<u64>,
}

/// Where validated Pfa values come from.
#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Verification bundle or adjudication report written by `verify`.
    #[arg(long)]
    pub report: Option<std::path::PathBuf>,
    /// Trials of the in-process adjudication used when no report is given.
    #[arg(long, default_value_t = 1_000_000)]
    pub adjudication_trials: u64,
}

#[derive(Debug, Args)]
pub struct PfaArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, value_parser = parse_variant, conflicts_with = "all_variants")]
    pub variant: Option<PfaFormulaVariant>,
    /// Print the printed form, the candidate form and quadrature side by side.
    #[arg(long)]
    pub all_variants: bool,
    #[command(flatten)]
    pub source: ReportArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub pfa: f64,
    #[command(flatten)]
    pub source: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    /// Clutter scale assumed by the known-scale detectors (default: --beta).
    #[arg(long)]
    pub detector_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub cfar_trials: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, value_delimiter = ',', default_values_t = gmcfar::oracles::DEFAULT_N_VALUES)]
    pub n_values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = gmcfar::oracles::DEFAULT_M_VALUES)]
    pub m_values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = gmcfar::oracles::DEFAULT_TAU_VALUES)]
    pub taus: Vec<f64>,
    /// Where to write the verification bundle (JSON).
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// `start:end` thresholds, `--step` apart.
    #[arg(long, value_parser = parse_range, required_unless_present = "pfa_range", conflicts_with = "pfa_range")]
    pub tau_range: Option<(f64, f64)>,
    /// `start:end` false-alarm probabilities, each a factor `--step` from the last.
    #[arg(long, value_parser = parse_range)]
    pub pfa_range: Option<(f64, f64)>,
    #[arg(long)]
    pub step: f64,
    #[command(flatten)]
    pub source: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn parse_kind(s: &str) -> Result<DetectorKind, String> {
    s.parse().map_err(|e: gmcfar::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<PfaFormulaVariant, String> {
    s.parse().map_err(|e: gmcfar::Error| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected start:end, got '{s}'"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
