//! Independent brute-force evaluations of the false-alarm probabilities and
//! the adjudication that decides which closed form to trust.

mod adjudication;
mod incgamma;
pub(crate) mod montecarlo;
mod quadrature;

pub use adjudication::*;
pub use incgamma::{regularized_lower_gamma, regularized_upper_gamma};
pub use montecarlo::{mc_dual_pfa, mc_dual_pfa_taus, MonteCarloConfig};
pub use quadrature::{
    integrate, integrate_to_infinity, quadrature_pfa_full_multi, quadrature_pfa_partial_multi, ExcessShape,
    Integral, MAX_TOLERANCE, RELATIVE_GOAL,
};
