//! Jacobi polynomials `P_j^(α,β)` on `[-1, 1]` and their weighted norms.
//!
//! The polynomials are orthogonal under `w(ν) = (1-ν)^α (1+ν)^β`. Evaluation
//! uses the standard three-term recurrence; derivatives use the shift identity
//!
//! ```text
//! d^m/dν^m P_j^(α,β)(ν) = Γ(α+β+j+1+m) / (2^m Γ(α+β+j+1)) · P_{j-m}^(α+m,β+m)(ν)
//! ```

use crate::error::{Error, Result};

fn check_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > -1.0 && beta > -1.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::validation(format!(
            "Jacobi parameters must satisfy alpha > -1 and beta > -1 (got alpha={alpha}, beta={beta})"
        )));
    }
    Ok(())
}

/// Evaluate `P_j^(α,β)(ν)`.
pub fn jacobi_poly_eval(j: u32, alpha: f64, beta: f64, nu: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    Ok(jacobi_unchecked(j, alpha, beta, nu))
}

pub(crate) fn jacobi_unchecked(j: u32, a: f64, b: f64, x: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let p1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    if j == 1 {
        return p1;
    }
    let ab = a + b;
    let (mut prev, mut cur) = (1.0, p1);
    for n in 2..=j {
        let n = f64::from(n);
        let s = 2.0 * n + ab;
        let c0 = 2.0 * n * (n + ab) * (s - 2.0);
        let c1 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c2 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * s;
        let next = (c1 * cur - c2 * prev) / c0;
        prev = cur;
        cur = next;
    }
    cur
}

/// `m`-th derivative of `P_j^(α,β)` at `ν`.
pub fn jacobi_derivative(j: u32, m: u32, alpha: f64, beta: f64, nu: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    Ok(jacobi_derivative_unchecked(j, m, alpha, beta, nu))
}

pub(crate) fn jacobi_derivative_unchecked(j: u32, m: u32, a: f64, b: f64, x: f64) -> f64 {
    if m > j {
        return 0.0;
    }
    let base = a + b + f64::from(j) + 1.0;
    let scale: f64 = (0..m).map(|r| 0.5 * (base + f64::from(r))).product();
    scale * jacobi_unchecked(j - m, a + f64::from(m), b + f64::from(m), x)
}

/// Weighted squared norm `∫ P_j(ν)² (1-ν)^α (1+ν)^β dν` in closed form.
pub fn jacobi_norm_sq(j: u32, alpha: f64, beta: f64) -> Result<f64> {
    check_params(alpha, beta)?;
    Ok(jacobi_norm_sq_unchecked(j, alpha, beta))
}

pub(crate) fn jacobi_norm_sq_unchecked(j: u32, a: f64, b: f64) -> f64 {
    let n = f64::from(j);
    let ab = a + b;
    let log_pow = (ab + 1.0) * std::f64::consts::LN_2;
    let ln = if j == 0 {
        // (2n+α+β+1)Γ(n+α+β+1) collapses to Γ(α+β+2), which avoids the
        // pole of Γ(α+β+1) at α+β = -1.
        log_pow + libm::lgamma(a + 1.0) + libm::lgamma(b + 1.0) - libm::lgamma(ab + 2.0)
    } else {
        log_pow - (2.0 * n + ab + 1.0).ln() + libm::lgamma(n + a + 1.0) + libm::lgamma(n + b + 1.0)
            - libm::lgamma(n + ab + 1.0)
            - libm::lgamma(n + 1.0)
    };
    ln.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson rule on [-1, 1]; integrands here are smooth.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn low_order_values() {
        assert_eq!(jacobi_poly_eval(0, 3.2, -0.4, 0.3).unwrap(), 1.0);
        assert_relative_eq!(jacobi_poly_eval(1, 0.0, 0.0, 0.5).unwrap(), 0.5);
        // Legendre P2 = (3ν² - 1)/2
        assert_relative_eq!(
            jacobi_poly_eval(2, 0.0, 0.0, 0.5).unwrap(),
            -0.125,
            epsilon = 1e-15
        );
    }

    #[test]
    fn recurrence_matches_explicit_sum() {
        // P_n^(a,b)(x) = Σ_s C(n+a, n-s) C(n+b, s) ((x-1)/2)^s ((x+1)/2)^(n-s)
        fn binom(top: f64, k: u32) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (top - f64::from(i)) / f64::from(i + 1))
        }
        for &(a, b) in &[
            (0.0, 0.0),
            (2.0, 2.0),
            (12.0, 12.0),
            (0.5, -0.5),
            (3.7, 1.2),
        ] {
            for n in 0..8u32 {
                for &x in &[-0.9, -0.3, 0.0, 0.41, 0.95] {
                    let explicit: f64 = (0..=n)
                        .map(|s| {
                            binom(f64::from(n) + a, n - s)
                                * binom(f64::from(n) + b, s)
                                * ((x - 1.0) / 2.0f64).powi(s as i32)
                                * ((x + 1.0) / 2.0f64).powi((n - s) as i32)
                        })
                        .sum();
                    let got = jacobi_poly_eval(n, a, b, x).unwrap();
                    assert!(
                        (got - explicit).abs() <= 1e-11 * explicit.abs().max(1.0),
                        "n={n} a={a} b={b} x={x}"
                    );
                }
            }
        }
    }

    #[test]
    fn norms_match_quadrature() {
        assert_relative_eq!(jacobi_norm_sq(0, 0.0, 0.0).unwrap(), 2.0, epsilon = 1e-14);
        let q = simpson(|x| x * x, 2000);
        assert_relative_eq!(q, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(jacobi_norm_sq(1, 0.0, 0.0).unwrap(), q, epsilon = 1e-12);
        let q = simpson(|x| 1.0 - x * x, 2000);
        assert_relative_eq!(jacobi_norm_sq(0, 1.0, 1.0).unwrap(), q, epsilon = 1e-12);
        assert_relative_eq!(q, 4.0 / 3.0, epsilon = 1e-12);
        // j=2, α=β=2: integrate P2² w with P2 from the recurrence-free explicit form.
        let p2 = |x: f64| {
            let u = (x - 1.0) / 2.0;
            let v = (x + 1.0) / 2.0;
            // C(4,2) v² + C(4,1)C(4,1) u v + C(4,2) u²
            6.0 * v * v + 16.0 * u * v + 6.0 * u * u
        };
        let q = simpson(|x| p2(x).powi(2) * (1.0 - x * x).powi(2), 20000);
        assert_relative_eq!(
            jacobi_norm_sq(2, 2.0, 2.0).unwrap(),
            q,
            max_relative = 1e-10
        );
    }

    #[test]
    fn derivative_identity_matches_finite_difference() {
        let (a, b) = (3.5, 2.0);
        for j in 0..6 {
            for m in 0..4 {
                let x = 0.2;
                let h = 1e-3;
                // Central differences of the previous derivative order.
                let d = if m == 0 {
                    jacobi_poly_eval(j, a, b, x).unwrap()
                } else {
                    let f = |y| jacobi_derivative(j, m - 1, a, b, y).unwrap();
                    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
                };
                let got = jacobi_derivative(j, m, a, b, x).unwrap();
                assert!(
                    (got - d).abs() <= 1e-7 * d.abs().max(1.0),
                    "j={j} m={m}: {got} vs {d}"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            jacobi_poly_eval(2, -1.0, 0.0, 0.0),
            Err(Error::Validation(_))
        ));
        assert!(jacobi_norm_sq(0, 0.0, -1.5).is_err());
    }
}
