//! Geometric-mean CFAR detection in Pareto Type I clutter.
//!
//! The crate provides the four GM sliding-window decision rules
//! ([`detectors`]), their closed-form false-alarm probabilities
//! ([`analytic`]), independent Monte Carlo and quadrature oracles together
//! with an adjudication workflow that decides which closed form to trust
//! ([`oracles`]), end-to-end Pareto-domain simulation ([`pareto_mc`]), and
//! inversion of the false-alarm curve for the threshold multiplier
//! ([`solver`]).

pub mod analytic;
pub mod clutter;
pub mod detectors;
pub mod error;
pub mod oracles;
pub mod pareto_mc;
pub mod solver;
pub mod stats;
pub mod verification;

pub use analytic::{DetectorKind, PfaFormulaVariant};
pub use clutter::{ParetoParams, RandomStream};
pub use detectors::{Decision, Outcome, ThresholdMultiplier, Window};
pub use error::{Error, Result};
pub use stats::EstimateWithCI;
