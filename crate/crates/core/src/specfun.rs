//! Gauss hypergeometric evaluation for the kernel family F_n(x) = F(n+1/2, n+1/2; 2n+1; x)
//! together with the Pochhammer symbol, digamma, and the closed form of the angular
//! integral ∫ cos(nθ)(A-cosθ)^{-β/2} dθ.
//!
//! The parameter pattern c = a + b puts F_n in the logarithmic case at x = 1: the
//! function behaves like -C ln(1-x) near the right endpoint. Two evaluation branches
//! are used: the defining power series away from 1, and the digamma connection series
//! in u = 1 - x close to 1. The connection series also exposes the exact splitting
//! F_n(x) = f_reg(x) + f_log(x) ln(1-x) that the singular quadrature relies on.

use thiserror::Error;

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const MAX_TERMS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SpecFunError {
    #[error("argument {x} outside domain {domain}")]
    Domain { x: f64, domain: &'static str },
    #[error("series did not converge within {0} terms")]
    NoConvergence(usize),
}

/// Evaluation branch taken by [`hyp_fn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Series,
    LogConnection,
}

/// Result of evaluating F_n, carrying the branch and the ln(1-x) coefficient
/// when the connection branch was used.
#[derive(Debug, Clone, Copy)]
pub struct HypEval {
    pub value: f64,
    /// Coefficient multiplying ln(1-x) in the near-boundary splitting;
    /// zero when the plain series branch was used.
    pub log_part_coefficient: f64,
    pub branch: Branch,
    pub terms_used: usize,
}

/// Pochhammer symbol (x)_n = x(x+1)...(x+n-1), with (x)_0 = 1.
///
/// Overflow to +inf is permitted for large n.
pub fn pochhammer(x: f64, n: u32) -> f64 {
    let mut p = 1.0;
    for k in 0..n {
        p *= x + k as f64;
    }
    p
}

/// Digamma function for positive arguments, by upward argument shift into the
/// asymptotic range followed by the Bernoulli tail. Only integer and half-integer
/// arguments occur in this crate, but the routine is valid for any x > 0.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    // ln z - 1/(2z) - sum B_{2k}/(2k z^{2k})
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    shift + z.ln() - 0.5 / z - tail
}

/// Branch switch point for [`hyp_fn`]. The plain series keeps all digits up to the
/// switch; beyond it the connection series in 1-x takes over. For large n the
/// reconstruction f_reg + f_log ln(1-x) loses roughly 2n(1-x)/ln(10) digits, so the
/// switch moves toward 1 to keep that loss below ~3 digits.
pub fn x_switch(n: u32) -> f64 {
    let n = n.max(1) as f64;
    (0.7f64).max(1.0 - 3.0 / n)
}

/// F_n(x) = F(n+1/2, n+1/2; 2n+1; x) for x in [0, 1).
pub fn hyp_fn(n: u32, x: f64) -> Result<HypEval, SpecFunError> {
    if n == 0 {
        return Err(SpecFunError::Domain {
            x: 0.0,
            domain: "n >= 1",
        });
    }
    if !(0.0..1.0).contains(&x) {
        return Err(SpecFunError::Domain { x, domain: "[0,1)" });
    }
    if x <= x_switch(n) {
        let (value, terms) = fn_series(n, x)?;
        Ok(HypEval {
            value,
            log_part_coefficient: 0.0,
            branch: Branch::Series,
            terms_used: terms,
        })
    } else {
        let (f_reg, f_log, terms) = hyp_fn_split(n, x)?;
        Ok(HypEval {
            value: f_reg + f_log * (1.0 - x).ln(),
            log_part_coefficient: f_log,
            branch: Branch::LogConnection,
            terms_used: terms,
        })
    }
}

/// Defining power series of F_n; all terms are nonnegative so there is no
/// cancellation, only slow convergence as x -> 1.
pub(crate) fn fn_series(n: u32, x: f64) -> Result<(f64, usize), SpecFunError> {
    let a = n as f64 + 0.5;
    let c = 2.0 * n as f64 + 1.0;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (a + kf) / ((c + kf) * (kf + 1.0)) * x;
        sum += term;
        if term < 1e-16 * sum {
            return Ok((sum, k + 1));
        }
    }
    Err(SpecFunError::NoConvergence(MAX_TERMS))
}

/// Connection-series prefactor Γ(2n+1)/Γ(n+1/2)^2 = (1/π) Π_{k=1..n} 8k/(2k-1).
fn conn_prefactor(n: u32) -> f64 {
    let mut c = 1.0 / std::f64::consts::PI;
    for k in 1..=n {
        c *= 8.0 * k as f64 / (2.0 * k as f64 - 1.0);
    }
    c
}

/// Exact splitting F_n(x) = f_reg(x) + f_log(x) ln(1-x) valid for x in (0, 1],
/// from the c = a + b connection formula. Returns (f_reg, f_log, terms).
///
/// Numerically trustworthy only when n(1-x) is moderate; the caller gates usage.
pub fn hyp_fn_split(n: u32, x: f64) -> Result<(f64, f64, usize), SpecFunError> {
    if n == 0 || !(0.0..=1.0).contains(&x) || x == 0.0 {
        return Err(SpecFunError::Domain { x, domain: "(0,1]" });
    }
    let a = n as f64 + 0.5;
    let u = 1.0 - x;
    let c = conn_prefactor(n);
    let mut term = 1.0_f64;
    let mut psi_k1 = -EULER_GAMMA; // psi(1)
    let mut psi_ak = digamma(a); // psi(a)
    let mut reg = 2.0 * (psi_k1 - psi_ak);
    let mut lg = 1.0_f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (a + kf) / ((kf + 1.0) * (kf + 1.0)) * u;
        psi_k1 += 1.0 / (kf + 1.0);
        psi_ak += 1.0 / (a + kf);
        let psi_part = 2.0 * (psi_k1 - psi_ak);
        reg += term * psi_part;
        lg += term;
        if term * (1.0 + psi_part.abs()) < 1e-17 * lg {
            return Ok((c * reg, -c * lg, k + 1));
        }
    }
    Err(SpecFunError::NoConvergence(MAX_TERMS))
}

/// General Gauss series F(a,b;c;z) for 0 <= z < 1; used by [`angular_integral`].
fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SpecFunError> {
    if !(0.0..1.0).contains(&z) {
        return Err(SpecFunError::Domain {
            x: z,
            domain: "[0,1)",
        });
    }
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NoConvergence(MAX_TERMS))
}

/// Closed form of ∫_0^{2π} cos(nθ) (A - cosθ)^{-β/2} dθ for A > 1:
///
///   2π (1+A)^{-β/2-n} (β/2)_n 2^n (1/2)_n / (2n)! · F(n+β/2, n+1/2; 2n+1; 2/(1+A)).
pub fn angular_integral(n: u32, beta: f64, a_param: f64) -> Result<f64, SpecFunError> {
    if a_param <= 1.0 {
        return Err(SpecFunError::Domain {
            x: a_param,
            domain: "A > 1",
        });
    }
    if beta < 0.0 {
        return Err(SpecFunError::Domain {
            x: beta,
            domain: "beta >= 0",
        });
    }
    let nf = n as f64;
    let z = 2.0 / (1.0 + a_param);
    let f = hyp2f1_series(nf + beta / 2.0, nf + 0.5, 2.0 * nf + 1.0, z)?;
    let mut fac = 2.0 * std::f64::consts::PI * (1.0 + a_param).powf(-beta / 2.0 - nf);
    // (β/2)_n 2^n (1/2)_n / (2n)!  accumulated termwise to avoid overflow
    for k in 0..n {
        let kf = k as f64;
        fac *= (beta / 2.0 + kf) * 2.0 * (0.5 + kf) / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
    }
    Ok(fac * f)
}

/// Kernel prefactor 2^{2n-1} (1/2)_n^2 / (2n)! = C(2n,n) / 2^{2n+1}.
pub fn kernel_prefactor(n: u32) -> f64 {
    let mut c = 0.5;
    for k in 1..=n {
        c *= (2.0 * k as f64 - 1.0) / (2.0 * k as f64);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pochhammer_basics() {
        assert_eq!(pochhammer(3.0, 0), 1.0);
        assert_eq!(pochhammer(3.0, 4), 360.0);
        assert!((pochhammer(0.5, 3) - 1.875).abs() < 1e-15);
    }

    #[test]
    fn digamma_known_values() {
        // psi(1) = -gamma, psi(1/2) = -gamma - 2 ln 2, psi(2) = 1 - gamma
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-13);
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * (2.0_f64).ln()).abs() < 1e-13);
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-13);
        // recurrence consistency at a half-integer
        assert!((digamma(7.5) - (digamma(6.5) + 1.0 / 6.5)).abs() < 1e-13);
    }

    #[test]
    fn hyp_fn_at_zero_is_one() {
        let r = hyp_fn(1, 0.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.branch, Branch::Series);
    }

    #[test]
    fn hyp_fn_domain_errors() {
        assert!(hyp_fn(1, -0.1).is_err());
        assert!(hyp_fn(1, 1.0).is_err());
        assert!(hyp_fn(0, 0.5).is_err());
    }

    #[test]
    fn branch_agreement_on_overlap_band() {
        // series and connection branches agree on a band around the switch point
        for n in [1u32, 2, 3, 5, 8] {
            let xs = x_switch(n);
            let mut x = xs - 0.05;
            while x <= xs + 0.05 {
                let (series, _) = fn_series(n, x.min(0.999)).unwrap();
                let (reg, lg, _) = hyp_fn_split(n, x.min(0.999)).unwrap();
                let conn = reg + lg * (1.0 - x.min(0.999)).ln();
                assert!(
                    (series - conn).abs() <= 1e-10 * series.abs(),
                    "n={n} x={x}: series={series} conn={conn}"
                );
                x += 0.01;
            }
        }
    }

    #[test]
    fn kernel_prefactor_values() {
        assert!((kernel_prefactor(1) - 0.25).abs() < 1e-16);
        assert!((kernel_prefactor(2) - 0.1875).abs() < 1e-16);
        // C(6,3)/2^7 = 20/128
        assert!((kernel_prefactor(3) - 20.0 / 128.0).abs() < 1e-16);
    }

    #[test]
    fn angular_integral_constant_case() {
        // beta = 0, n = 0: integrand is 1
        let v = angular_integral(0, 0.0, 2.0).unwrap();
        assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn angular_integral_rejects_bad_domain() {
        assert!(angular_integral(1, 1.0, 1.0).is_err());
        assert!(angular_integral(1, 1.0, 0.5).is_err());
    }

    #[test]
    fn hyp_fn_monotone_and_above_one() {
        for n in [1u32, 2, 6] {
            let mut prev = 1.0;
            for i in 1..=9 {
                let x = i as f64 * 0.1;
                let v = hyp_fn(n, x).unwrap().value;
                assert!(v >= prev, "F_n must increase in x");
                prev = v;
            }
        }
    }
}
