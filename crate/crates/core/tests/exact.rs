//! Closed forms against exact rational arithmetic.

use approx::assert_relative_eq;
use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use gmcfar::analytic::{log_binomial, pfa_gm_full_multi, pfa_gm_full_single, pfa_gm_partial_multi};
use gmcfar::{PfaFormulaVariant, ThresholdMultiplier};

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn binomial(a: u64, b: u64) -> BigInt {
    (1..=b).fold(BigInt::one(), |acc, i| acc * BigInt::from(a - b + i) / BigInt::from(i))
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

/// τ values with short binary expansions, so the f64 input is the rational.
fn taus() -> Vec<(f64, BigRational)> {
    [(1u64, 8u64), (1, 2), (1, 1), (2, 1), (5, 1), (37, 4)]
        .into_iter()
        .map(|(p, q)| (p as f64 / q as f64, int(p) / int(q)))
        .collect()
}

fn partial_multi(n: u64, m: u64, t: &BigRational) -> BigRational {
    let one_plus = BigRational::one() + t;
    (0..n).fold(BigRational::zero(), |acc, l| {
        acc + BigRational::from_integer(binomial(m + l - 1, l)) * pow(t, l) / pow(&one_plus, m + l)
    })
}

fn full_multi_candidate(n: u64, m: u64, t: &BigRational) -> BigRational {
    let one_plus = BigRational::one() + t;
    let mut sum = BigRational::zero();
    for l in 0..n {
        for k in 0..=l {
            sum += BigRational::from_integer(binomial(m + k - 2, k)) * pow(&int(n), l - k) * pow(t, k)
                / (pow(&int(n + m), l - k + 1) * pow(&one_plus, m + k - 1));
        }
    }
    int(m) * sum
}

fn full_multi_paper(n: u64, m: u64, t: &BigRational) -> BigRational {
    let one_plus = BigRational::one() + t;
    let mut sum = BigRational::zero();
    for l in 0..n {
        for k in 0..=l {
            sum += BigRational::from_integer(binomial(m + k - 1, k)) * pow(t, k)
                / (pow(&int(n + m), l - k + 1) * pow(&one_plus, m + k));
        }
    }
    int(m) * sum
}

#[test]
fn partial_multi_matches_rationals() {
    for n in 1..=8 {
        for m in [1, 2, 3, 4, 8, 16, 32] {
            for (tf, t) in taus() {
                let got = pfa_gm_partial_multi(n, m, ThresholdMultiplier::new(tf).unwrap()).unwrap();
                let want = partial_multi(n, m, &t).to_f64().unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-13);
            }
        }
    }
}

#[test]
fn full_multi_forms_match_rationals() {
    for n in 1..=6 {
        for m in [2, 3, 4, 8, 16] {
            for (tf, t) in taus() {
                let tau = ThresholdMultiplier::new(tf).unwrap();
                let cand = pfa_gm_full_multi(n, m, tau, PfaFormulaVariant::CandidateForm).unwrap();
                let paper = pfa_gm_full_multi(n, m, tau, PfaFormulaVariant::PaperForm).unwrap();
                assert_relative_eq!(cand, full_multi_candidate(n, m, &t).to_f64().unwrap(), max_relative = 1e-13);
                assert_relative_eq!(paper, full_multi_paper(n, m, &t).to_f64().unwrap(), max_relative = 1e-13);
            }
        }
    }
}

#[test]
fn full_single_candidate_is_exact() {
    for n in 1..=12u64 {
        for (tf, t) in taus() {
            let got = pfa_gm_full_single(n, ThresholdMultiplier::new(tf).unwrap(), PfaFormulaVariant::CandidateForm).unwrap();
            let want = int(n) / int(n + 1) / pow(&(BigRational::one() + &t), n - 1);
            assert_relative_eq!(got, want.to_f64().unwrap(), max_relative = 1e-14);
        }
    }
}

#[test]
fn log_binomial_matches_big_integers() {
    for a in [0u64, 1, 5, 17, 64, 200, 1000] {
        for b in [0, 1, 2, a / 3, a / 2, a] {
            if b > a {
                continue;
            }
            let want = binomial(a, b).to_f64().unwrap().ln();
            let got = log_binomial(a, b).unwrap();
            assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0), "C({a},{b}): {got} vs {want}");
        }
    }
}
