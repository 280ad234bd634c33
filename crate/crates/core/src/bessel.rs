//! Bessel functions of the first kind `J_ν(x)` for real order `ν ≥ 0` and
//! their positive zeros.
//!
//! Small arguments (`x²/4 ≤ ν + 1`) use the ascending series, whose terms then
//! decrease monotonically. Everything else uses Miller's backward recurrence,
//! normalized with the Neumann sum
//!
//! ```text
//! (x/2)^μ = Σ_{i≥0} (μ + 2i) Γ(μ + i) / i! · J_{μ+2i}(x),   0 ≤ μ < 1
//! ```
//!
//! which stays well conditioned for the moderate arguments (`x ≲ 100`) where
//! the large-argument Hankel expansion is not yet accurate for `ν ≈ 10`.

use crate::error::{Error, Result};

const RESCALE: f64 = 1e150;
const MAX_BISECT: usize = 200;

/// `J_ν(x)` for `ν ≥ 0`, `x ≥ 0`.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::validation(format!(
            "Bessel order must be >= 0 (got {nu})"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::validation(format!(
            "Bessel argument must be >= 0 (got {x})"
        )));
    }
    Ok(bessel_j_unchecked(nu, x))
}

pub(crate) fn bessel_j_unchecked(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if series_region(nu, x) {
        series(nu, x)
    } else {
        miller(nu, x)
    }
}

/// True where the ascending series is used.
pub(crate) fn series_region(nu: f64, x: f64) -> bool {
    0.25 * x * x <= nu + 1.0
}

/// Ascending series `Σ (-1)^k (x/2)^{ν+2k} / (k! Γ(ν+k+1))`.
pub(crate) fn series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = (nu * half.ln() - libm::lgamma(nu + 1.0)).exp();
    let q = -half * half;
    let mut sum = term;
    for k in 1..500 {
        let k = f64::from(k);
        term *= q / (k * (nu + k));
        sum += term;
        if term.abs() <= f64::EPSILON * 0.25 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller backward recurrence from a high starting order.
pub(crate) fn miller(nu: f64, x: f64) -> f64 {
    let n = nu.floor() as usize;
    let mu = nu - nu.floor();
    let reach = nu.max(x);
    let mut top = (reach + 30.0 + (40.0 * reach).sqrt()).ceil() as usize;
    top += top % 2; // even, so the normalization sum ends on an even index

    // Γ(μ+i)/i! for i >= 1; written so μ = 0 needs no special case.
    let gamma_mu1 = libm::tgamma(mu + 1.0);

    let mut upper = 0.0; // f_{k+1}
    let mut cur = 1e-300; // f_k, k = top
    let mut target = 0.0;
    let mut norm = 0.0;
    let mut d_top = gamma_mu1;
    for i in 2..=top / 2 {
        d_top *= (mu + i as f64 - 1.0) / i as f64;
    }
    let mut d = d_top; // Γ(μ+k/2)/(k/2)! while k is even
    for k in (0..=top).rev() {
        if k == n {
            target = cur;
        }
        if k % 2 == 0 {
            let i = k / 2;
            let coef = if i == 0 {
                gamma_mu1
            } else {
                (mu + 2.0 * i as f64) * d
            };
            norm += coef * cur;
            if i >= 2 {
                d /= (mu + i as f64 - 1.0) / i as f64;
            }
        }
        if k == 0 {
            break;
        }
        let lower = 2.0 * (mu + k as f64) / x * cur - upper;
        upper = cur;
        cur = lower;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            upper /= RESCALE;
            target /= RESCALE;
            norm /= RESCALE;
        }
    }
    target * (0.5 * x).powf(mu) / norm
}

/// `k`-th positive zero `j_{ν,k}` of `J_ν` (`k ≥ 1`).
///
/// Zeros are bracketed by scanning upward from `ν` (no zero lies below it)
/// in steps well under the minimal zero spacing, then polished by bisection
/// to machine precision.
pub fn bessel_zero(nu: f64, k: u32) -> Result<f64> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::validation(format!(
            "Bessel order must be >= 0 (got {nu})"
        )));
    }
    if k == 0 {
        return Err(Error::validation("Bessel zero index k must be >= 1"));
    }
    // McMahon's estimate bounds how far the scan may need to go.
    let beta = (f64::from(k) + 0.5 * nu - 0.25) * std::f64::consts::PI;
    let limit = 2.0 * beta + 4.0 * nu + 20.0;
    let step = 0.25;
    let mut x0 = nu.max(1e-3);
    let mut f0 = bessel_j_unchecked(nu, x0);
    let mut found = 0;
    while x0 < limit {
        let x1 = x0 + step;
        let f1 = bessel_j_unchecked(nu, x1);
        if f1 == 0.0 || f0.signum() != f1.signum() {
            found += 1;
            if found == k {
                let root = if f1 == 0.0 {
                    x1
                } else {
                    bisect(nu, x0, x1, f0)?
                };
                let residual = bessel_j_unchecked(nu, root).abs();
                if residual > 1e-10 {
                    return Err(Error::numeric(format!(
                        "Bessel zero j({nu},{k}) did not converge: |J(x)| = {residual:e}"
                    )));
                }
                return Ok(root);
            }
            if f1 == 0.0 {
                // Step off the exact zero so the next bracket starts clean.
                x0 = x1 + 1e-9;
                f0 = bessel_j_unchecked(nu, x0);
                continue;
            }
        }
        x0 = x1;
        f0 = f1;
    }
    Err(Error::numeric(format!(
        "no bracket found for Bessel zero j({nu},{k})"
    )))
}

fn bisect(nu: f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Result<f64> {
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = bessel_j_unchecked(nu, mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::numeric("Bessel zero bisection did not terminate"))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    // Reference values from a 40-digit arbitrary-precision evaluation.
    const J_REF: &[(f64, f64, f64)] = &[
        (12.5, 17.0, 0.040_241_033_843_221_409_616),
        (12.5, 5.0, 3.441_194_237_390_799_779_5e-5),
        (0.3, 40.0, 0.063_616_304_779_135_645_066),
        (12.5, 38.0, 0.092_692_890_422_271_674_798),
        (2.0, 10.0, 0.254_630_313_685_120_622_53),
        (7.25, 0.5, 5.113_407_114_348_451_252_9e-9),
        (30.5, 25.0, 0.008_392_647_246_492_912_010_3),
    ];

    #[test]
    fn values_match_reference() {
        for &(nu, x, want) in J_REF {
            let got = bessel_j(nu, x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-11);
        }
    }

    #[test]
    fn half_integer_closed_forms() {
        for &x in &[0.1, 1.0, 2.9, 7.5, 20.0, 55.0] {
            let j_half = (2.0 / (PI * x)).sqrt() * x.sin();
            assert!((bessel_j(0.5, x).unwrap() - j_half).abs() < 1e-13);
            let j_3half = (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos());
            assert!((bessel_j(1.5, x).unwrap() - j_3half).abs() < 1e-13);
        }
    }

    #[test]
    fn series_and_recurrence_agree_at_crossover() {
        for &nu in &[0.0, 0.5, 2.5, 7.3, 12.5, 20.0] {
            let x = 2.0 * (nu + 1.0f64).sqrt();
            let s = series(nu, x);
            let m = miller(nu, x);
            assert!(
                (s - m).abs() <= 1e-12 * s.abs().max(1e-3),
                "nu={nu}: {s} vs {m}"
            );
        }
    }

    #[test]
    fn zeros_of_half_order_are_multiples_of_pi() {
        assert_relative_eq!(bessel_zero(0.5, 1).unwrap(), PI, max_relative = 1e-14);
        assert_relative_eq!(bessel_zero(0.5, 3).unwrap(), 3.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn zeros_match_reference() {
        let cases = [
            (0.0, 1, 2.404_825_557_695_772_768_6),
            (0.0, 6, 18.071_063_967_910_922_543),
            (2.5, 2, 9.095_011_330_476_355_156_3),
            (12.5, 1, 17.250_454_784_125_965_410),
            (12.5, 2, 21.373_972_181_162_748_437),
            (12.5, 6, 35.478_013_175_177_898_878),
            (12.7, 6, 35.736_551_167_312_870_177),
        ];
        for (nu, k, want) in cases {
            assert_relative_eq!(bessel_zero(nu, k).unwrap(), want, max_relative = 1e-13);
        }
    }

    #[test]
    fn zeros_interlace() {
        for &nu in &[0.5, 2.5, 12.5] {
            let mut prev = 0.0;
            for k in 1..=10 {
                let z = bessel_zero(nu, k).unwrap();
                assert!(z > prev);
                assert!(z < bessel_zero(nu + 1.0, k).unwrap());
                prev = z;
            }
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(bessel_zero(1.0, 0).is_err());
        assert!(bessel_zero(-0.5, 1).is_err());
        assert!(bessel_j(1.0, -2.0).is_err());
    }
}
