//! Regularized incomplete gamma functions by series and continued fraction.
//!
//! Used by the quadrature oracles instead of the Poisson-sum Erlang tail so
//! the two evaluations can check each other.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100_000;
const EPS: f64 = 1e-17;
const TINY: f64 = 1e-300;

/// `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn regularized_upper_gamma(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pair(a, x)?.1)
}

/// `P(a, x) = γ(a, x) / Γ(a)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pair(a, x)?.0)
}

fn gamma_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("incomplete gamma shape must be positive, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("incomplete gamma argument must be non-negative, got {x}")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let p = lower_series(a, x, log_prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = upper_continued_fraction(a, x, log_prefactor)?;
        Ok((1.0 - q, q))
    }
}

// P(a,x) = e^{-x} x^a / Γ(a+1) · Σ x^n / ((a+1)...(a+n))
fn lower_series(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok((sum.ln() + log_prefactor).exp().min(1.0));
        }
    }
    Err(Error::NumericalFailure {
        message: format!("incomplete gamma series did not converge for a = {a}, x = {x}"),
        achieved: term / sum,
    })
}

// Modified Lentz evaluation of the continued fraction for Q(a,x).
fn upper_continued_fraction(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok((h.ln() + log_prefactor).exp().min(1.0));
        }
    }
    Err(Error::NumericalFailure {
        message: format!("incomplete gamma continued fraction did not converge for a = {a}, x = {x}"),
        achieved: f64::NAN,
    })
}

/// Density of `γ(shape, 1)` at `w`.
pub(crate) fn gamma_density(shape: f64, w: f64) -> f64 {
    if w < 0.0 {
        return 0.0;
    }
    if w == 0.0 {
        return if shape == 1.0 { 1.0 } else if shape < 1.0 { f64::INFINITY } else { 0.0 };
    }
    ((shape - 1.0) * w.ln() - w - ln_gamma(shape)).exp()
}
