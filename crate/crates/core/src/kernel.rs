//! Algebraic differentiator kernels.
//!
//! The smoothing kernel on the support `[0, T]` is
//!
//! ```text
//! g(τ) = (2/T) · w(ν(τ)) · Σ_{j=0}^{N} P_j(ϑ) / ‖P_j‖² · P_j(ν(τ)),    ν(τ) = 1 - 2τ/T
//! ```
//!
//! with `w(ν) = (1-ν)^α (1+ν)^β`. Convolving a signal with the `n`-th
//! derivative `g^(n)` estimates its `n`-th time derivative, delayed by
//! `T(1-ϑ)/2`.

use serde::{Deserialize, Serialize};

use crate::bessel::bessel_zero;
use crate::error::{Error, Result};
use crate::jacobi::{jacobi_derivative_unchecked, jacobi_norm_sq_unchecked, jacobi_unchecked};

/// Continuous-time differentiator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Derivative order `n` the kernel is meant for.
    pub deriv_order: u32,
    /// Truncation degree `N` of the Jacobi expansion.
    pub poly_degree: u32,
    pub alpha: f64,
    pub beta: f64,
    /// Delay parameter `ϑ ∈ [-1, 1]`.
    pub theta: f64,
    /// Support length `T` in seconds.
    pub window: f64,
}

impl KernelSpec {
    /// Symmetric (`α = β`), zeroth-degree kernel evaluated at `ϑ = 1`.
    pub fn symmetric(deriv_order: u32, alpha: f64, window: f64) -> Self {
        Self {
            deriv_order,
            poly_degree: 0,
            alpha,
            beta: alpha,
            theta: 1.0,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.theta, self.window]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("kernel parameters must be finite"));
        }
        if self.alpha <= -1.0 || self.beta <= -1.0 {
            return Err(Error::validation(format!(
                "kernel weight exponents must exceed -1 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if self.window <= 0.0 {
            return Err(Error::validation(format!(
                "window T must be > 0 (got {})",
                self.window
            )));
        }
        if !(-1.0..=1.0).contains(&self.theta) {
            return Err(Error::validation(format!(
                "theta must lie in [-1, 1] (got {})",
                self.theta
            )));
        }
        self.validate_order(self.deriv_order)
    }

    /// The `order`-th kernel derivative only vanishes at both support ends
    /// when `α, β > order - 1`.
    pub fn validate_order(&self, order: u32) -> Result<()> {
        let bound = f64::from(order) - 1.0;
        if order > 0 && (self.alpha <= bound || self.beta <= bound) {
            return Err(Error::validation(format!(
                "derivative order {order} requires alpha > {bound} and beta > {bound} (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// `δ = T(1 - ϑ)/2`.
    pub fn estimation_delay(&self) -> f64 {
        estimation_delay(self)
    }
}

/// Time inside the window at which the derivative estimate applies.
pub fn estimation_delay(spec: &KernelSpec) -> f64 {
    0.5 * spec.window * (1.0 - spec.theta)
}

/// Precomputed evaluator for a validated [`KernelSpec`].
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    /// `P_j(ϑ) / ‖P_j‖²` for `j = 0..=N`.
    coeffs: Vec<f64>,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let coeffs = (0..=spec.poly_degree)
            .map(|j| {
                jacobi_unchecked(j, spec.alpha, spec.beta, spec.theta)
                    / jacobi_norm_sq_unchecked(j, spec.alpha, spec.beta)
            })
            .collect();
        Ok(Self { spec, coeffs })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// `g(τ)`; zero outside `[0, T]`.
    pub fn eval(&self, tau: f64) -> f64 {
        let t = self.spec.window;
        if !(0.0..=t).contains(&tau) {
            return 0.0;
        }
        let nu = 1.0 - 2.0 * tau / t;
        let w =
            (1.0 - nu).max(0.0).powf(self.spec.alpha) * (1.0 + nu).max(0.0).powf(self.spec.beta);
        let poly: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * jacobi_unchecked(j as u32, self.spec.alpha, self.spec.beta, nu))
            .sum();
        2.0 / t * w * poly
    }

    /// `g^(order)(τ)`, evaluated analytically by the Leibniz rule on `w·P_j`.
    ///
    /// For `order ≥ 1` the result is zero outside the open interval `(0, T)`.
    pub fn derivative(&self, order: u32, tau: f64) -> Result<f64> {
        self.spec.validate_order(order)?;
        Ok(self.derivative_unchecked(order, tau))
    }

    pub(crate) fn derivative_unchecked(&self, order: u32, tau: f64) -> f64 {
        if order == 0 {
            return self.eval(tau);
        }
        let t = self.spec.window;
        if tau <= 0.0 || tau >= t {
            return 0.0;
        }
        let nu = 1.0 - 2.0 * tau / t;
        let (a, b) = (self.spec.alpha, self.spec.beta);

        // w^(r)(ν) for r = 0..=order
        let weight_derivs: Vec<f64> = (0..=order)
            .map(|r| weight_derivative(a, b, r, nu))
            .collect();

        let mut acc = 0.0;
        for (j, c) in self.coeffs.iter().enumerate() {
            let mut term = 0.0;
            for r in 0..=order {
                let p = jacobi_derivative_unchecked(j as u32, order - r, a, b, nu);
                term += binomial(order, r) * weight_derivs[r as usize] * p;
            }
            acc += c * term;
        }
        // dν/dτ = -2/T, applied `order` times.
        2.0 / t * (-2.0 / t).powi(order as i32) * acc
    }
}

/// `d^r/dν^r [(1-ν)^α (1+ν)^β]` for `ν ∈ (-1, 1)`.
fn weight_derivative(a: f64, b: f64, r: u32, nu: f64) -> f64 {
    let (left, right) = (1.0 - nu, 1.0 + nu);
    (0..=r)
        .map(|s| {
            let da = falling(a, s) * left.powf(a - f64::from(s));
            let db = falling(b, r - s) * right.powf(b - f64::from(r - s));
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            binomial(r, s) * sign * da * db
        })
        .sum()
}

fn falling(x: f64, k: u32) -> f64 {
    (0..k).map(|i| x - f64::from(i)).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `g(τ)` for `spec`.
pub fn kernel_eval(spec: &KernelSpec, tau: f64) -> Result<f64> {
    Ok(Kernel::new(*spec)?.eval(tau))
}

/// `g^(order)(τ)` for `spec`.
pub fn kernel_derivative_eval(spec: &KernelSpec, order: u32, tau: f64) -> Result<f64> {
    Kernel::new(*spec)?.derivative(order, tau)
}

/// Window length placing the `k`-th Fourier null of the symmetric `N = 0`
/// kernel at `f0`: `T = 2 j_{α+1/2,k} / (2π f0)`.
pub fn design_window(alpha: f64, k: u32, f0: f64) -> Result<f64> {
    if !(alpha > -1.0) || !alpha.is_finite() {
        return Err(Error::validation(format!(
            "alpha must exceed -1 (got {alpha})"
        )));
    }
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::validation(format!("f0 must be > 0 (got {f0})")));
    }
    let zero = bessel_zero(alpha + 0.5, k)?;
    Ok(2.0 * zero / (2.0 * std::f64::consts::PI * f0))
}

/// How the window length of a design is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowChoice {
    /// `k`-th Bessel null at the powerline frequency.
    BesselZero { k: u32 },
    /// Explicit window length in seconds.
    Explicit { seconds: f64 },
}

/// Resolve a window choice for a kernel with weight exponents `alpha`, `beta`.
///
/// The Bessel-null design only holds for symmetric weights.
pub fn resolve_window(choice: WindowChoice, alpha: f64, beta: f64, f0: f64) -> Result<f64> {
    match choice {
        WindowChoice::BesselZero { k } => {
            if alpha != beta {
                return Err(Error::validation(format!(
                    "Bessel-null window design requires alpha == beta (got {alpha} vs {beta})"
                )));
            }
            design_window(alpha, k, f0)
        }
        WindowChoice::Explicit { seconds } => {
            if !(seconds > 0.0) || !seconds.is_finite() {
                return Err(Error::validation(format!(
                    "explicit window must be > 0 (got {seconds})"
                )));
            }
            Ok(seconds)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(n: u32, big_n: u32, a: f64, b: f64, theta: f64, t: f64) -> KernelSpec {
        KernelSpec {
            deriv_order: n,
            poly_degree: big_n,
            alpha: a,
            beta: b,
            theta,
            window: t,
        }
    }

    #[test]
    fn moving_average_degenerate_case() {
        let s = spec(0, 0, 0.0, 0.0, 1.0, 0.1);
        assert_relative_eq!(kernel_eval(&s, 0.05).unwrap(), 10.0, epsilon = 1e-12);
        assert_eq!(kernel_eval(&s, -0.01).unwrap(), 0.0);
        assert_eq!(kernel_eval(&s, 0.1001).unwrap(), 0.0);
    }

    #[test]
    fn weighted_case_matches_quadrature_normalization() {
        // Oracle: (2/T) w(0) / ∫(1-ν²)² dν, integral by composite Simpson.
        let n = 4000;
        let h = 2.0 / n as f64;
        let f = |x: f64| (1.0 - x * x).powi(2);
        let mut q = f(-1.0) + f(1.0);
        for i in 1..n {
            q += if i % 2 == 1 { 4.0 } else { 2.0 } * f(-1.0 + i as f64 * h);
        }
        q *= h / 3.0;
        let want = 2.0 / 0.1 * 1.0 / q;
        let s = spec(0, 0, 2.0, 2.0, 1.0, 0.1);
        assert_relative_eq!(kernel_eval(&s, 0.05).unwrap(), want, max_relative = 1e-12);
        assert_relative_eq!(want, 18.75, max_relative = 1e-12);
    }

    #[test]
    fn kernel_integrates_to_one() {
        for s in [
            spec(0, 0, 12.0, 12.0, 1.0, 0.11),
            spec(0, 2, 3.0, 1.5, 0.3, 0.2),
            spec(0, 3, 4.0, 4.0, -1.0, 0.05),
        ] {
            let k = Kernel::new(s).unwrap();
            let m = 20000;
            let h = s.window / m as f64;
            let integral: f64 = (0..m).map(|i| k.eval((i as f64 + 0.5) * h) * h).sum();
            assert_relative_eq!(integral, 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn derivative_zeroth_order_is_kernel() {
        let s = spec(3, 1, 12.0, 12.0, 0.5, 0.1129);
        let k = Kernel::new(s).unwrap();
        for &tau in &[0.0, 0.01, 0.05, 0.1] {
            assert_eq!(k.derivative(0, tau).unwrap(), k.eval(tau));
        }
    }

    #[test]
    fn derivative_vanishes_at_endpoints() {
        let s = spec(1, 0, 2.0, 2.0, 1.0, 0.1);
        assert_eq!(kernel_derivative_eval(&s, 1, 0.0).unwrap(), 0.0);
        assert_eq!(kernel_derivative_eval(&s, 1, 0.1).unwrap(), 0.0);
        // Approaches zero from inside as τ^(α-1).
        let peak = kernel_derivative_eval(&s, 1, 0.05 * (1.0 - 1.0 / 3f64.sqrt()))
            .unwrap()
            .abs();
        assert!(kernel_derivative_eval(&s, 1, 1e-6).unwrap().abs() < 1e-3 * peak);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        // Sixth-order central stencils applied to kernel_eval only.
        let d1 = |f: &dyn Fn(f64) -> f64, x: f64, h: f64| {
            (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h)
                - 9.0 * f(x + 2.0 * h)
                + f(x + 3.0 * h))
                / (60.0 * h)
        };
        let d2 = |f: &dyn Fn(f64) -> f64, x: f64, h: f64| {
            (2.0 * f(x - 3.0 * h) - 27.0 * f(x - 2.0 * h) + 270.0 * f(x - h) - 490.0 * f(x)
                + 270.0 * f(x + h)
                - 27.0 * f(x + 2.0 * h)
                + 2.0 * f(x + 3.0 * h))
                / (180.0 * h * h)
        };
        for s in [
            spec(2, 0, 4.0, 4.0, 1.0, 0.1),
            spec(2, 2, 5.0, 3.0, 0.2, 0.08),
            spec(3, 1, 12.0, 12.0, 1.0, 0.1129),
        ] {
            let k = Kernel::new(s).unwrap();
            let f = |x: f64| k.eval(x);
            let tau = s.window / 3.0;
            let h = 1e-3 * s.window;
            let fd1 = d1(&f, tau, h);
            let fd2 = d2(&f, tau, h);
            assert_relative_eq!(k.derivative(1, tau).unwrap(), fd1, max_relative = 1e-6);
            assert_relative_eq!(k.derivative(2, tau).unwrap(), fd2, max_relative = 1e-6);
        }
    }

    #[test]
    fn order_constraint_is_enforced() {
        let s = spec(0, 0, 2.0, 2.0, 1.0, 0.1);
        let k = Kernel::new(s).unwrap();
        assert!(k.derivative(2, 0.05).is_ok());
        assert!(matches!(k.derivative(3, 0.05), Err(Error::Validation(_))));
        let bad = spec(3, 0, 2.0, 2.0, 1.0, 0.1);
        assert!(Kernel::new(bad).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(spec(0, 0, -1.0, 0.0, 1.0, 0.1).validate().is_err());
        assert!(spec(0, 0, 0.0, 0.0, 1.5, 0.1).validate().is_err());
        assert!(spec(0, 0, 0.0, 0.0, 1.0, 0.0).validate().is_err());
        assert!(spec(0, 0, 0.0, 0.0, 1.0, f64::NAN).validate().is_err());
    }

    #[test]
    fn estimation_delays() {
        assert_eq!(spec(0, 0, 0.0, 0.0, 1.0, 0.1).estimation_delay(), 0.0);
        assert_relative_eq!(spec(0, 0, 0.0, 0.0, -1.0, 0.1).estimation_delay(), 0.1);
        assert_relative_eq!(
            spec(0, 0, 0.0, 0.0, 0.0, 0.1129).estimation_delay(),
            0.05645,
            epsilon = 1e-15
        );
    }

    #[test]
    fn window_design() {
        assert_relative_eq!(
            design_window(0.0, 1, 50.0).unwrap(),
            0.020,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            design_window(0.0, 2, 50.0).unwrap(),
            0.040,
            max_relative = 1e-13
        );
        // 2 j_{12.5,k} / (100π) with reference zeros 17.2504547841259654 and 35.4780131751778989
        assert_relative_eq!(
            design_window(12.0, 1, 50.0).unwrap(),
            0.109_819_805_979_075_27,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            design_window(12.0, 6, 50.0).unwrap(),
            0.225_860_046_716_358_06,
            max_relative = 1e-12
        );
        assert!(design_window(-1.0, 1, 50.0).is_err());
        assert!(design_window(1.0, 1, 0.0).is_err());
    }

    #[test]
    fn asymmetric_weights_rejected_by_bessel_design() {
        assert!(resolve_window(WindowChoice::BesselZero { k: 1 }, 2.0, 3.0, 50.0).is_err());
        assert_eq!(
            resolve_window(WindowChoice::Explicit { seconds: 0.1129 }, 2.0, 3.0, 50.0).unwrap(),
            0.1129
        );
    }
}
