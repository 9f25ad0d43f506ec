//! The nearest-neighbour survival kernel
//!
//! ```text
//! K(w) = ∫₀^∞ exp(-t - w t⁻²) dt
//! ```
//!
//! which is what remains of the pair-distance average once the radial
//! coordinate is mapped to the unit-mean exponential variable `t`. The same
//! function, rescaled, is the Meijer-G value G^{3,0}_{0,3}(z | -; 0, 1/2, 1)
//! = √π · K(4z), exposed as [`meijer_g_3003`] for cross-checks against
//! special-function tables.

use crate::error::{Error, Result};
use crate::numerics::quad::{adaptive_gk15, QuadOptions};

/// √π to f64 precision.
pub const SQRT_PI: f64 = 1.772_453_850_905_516_027_3;

/// Largest exponent magnitude before `exp(-x)` underflows to zero.
const EXP_UNDERFLOW: f64 = 745.0;

/// Truncation bounds for the kernel integrand at parameter `w`.
///
/// Below `t_min` the barrier term alone underflows; beyond `t_max` the
/// exponential tail is below 1e-17 of the integral (the integrand peaks at
/// t* = (2w)^(1/3) with exponent 1.5·t*, and we allow 45 e-foldings past
/// that).
pub(crate) fn truncation_bounds(w: f64) -> (f64, f64) {
    let t_min = (w / EXP_UNDERFLOW).sqrt();
    let t_peak = (2.0 * w).cbrt();
    let t_max = (1.5 * t_peak + 45.0).max(45.0);
    (t_min, t_max)
}

/// Evaluates K(w) by adaptive quadrature to a relative accuracy of 1e-10
/// or better.
///
/// K(0) = 1 exactly, K is strictly decreasing, and K(w) → 0 as w → ∞.
/// Negative or non-finite `w` is a domain error.
pub fn k_integral(w: f64) -> Result<f64> {
    if !w.is_finite() || w < 0.0 {
        return Err(Error::domain(format!(
            "kernel parameter must be finite and non-negative, got {w}"
        )));
    }
    if w == 0.0 {
        return Ok(1.0);
    }
    // Entire integrand underflows: the peak exponent already exceeds the
    // representable range, so the integral is zero to f64.
    if 1.5 * (2.0 * w).cbrt() >= EXP_UNDERFLOW {
        return Ok(0.0);
    }

    let (t_min, t_max) = truncation_bounds(w);
    let opts = QuadOptions {
        rel_tol: 1e-11,
        ..QuadOptions::default()
    };
    let result = adaptive_gk15(|t| (-t - w / (t * t)).exp(), t_min, t_max, &opts)?;
    Ok(result.value)
}

/// Meijer-G value G^{3,0}_{0,3}(z | -; 0, 1/2, 1) = √π · K(4z).
///
/// Provided so results can be checked against special-function references;
/// `meijer_g_3003(0)` = √π.
pub fn meijer_g_3003(z: f64) -> Result<f64> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::domain(format!(
            "Meijer-G argument must be finite and non-negative, got {z}"
        )));
    }
    Ok(SQRT_PI * k_integral(4.0 * z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad::adaptive_bisect_gk15;
    use approx::assert_relative_eq;

    #[test]
    fn k_at_zero_is_exactly_one() {
        assert_eq!(k_integral(0.0).unwrap(), 1.0);
    }

    /// Reference values computed with 50-digit arithmetic via
    /// mpmath.quad of exp(-t - w/t^2) over [0, inf].
    #[test]
    fn k_matches_high_precision_references() {
        let cases = [
            (0.1, 0.634283037975113899839762756027),
            (0.25, 0.506352347764540717343494405606),
            (2.0 / 3.0, 0.355155060942185869870105105069),
            (1.0, 0.29312676277195555086224784894),
            (5.0, 0.0938758557252393560417041135762),
            (20.0, 0.0170561647139089431180693140532),
        ];
        for (w, expected) in cases {
            let got = k_integral(w).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-10);
        }
    }

    /// Independent brute-force check: midpoint Riemann sum with 1e7 panels
    /// over the full support.
    #[test]
    fn k_matches_riemann_sum() {
        let w = 2.0 / 3.0;
        let n = 10_000_000usize;
        let upper = 50.0;
        let h = upper / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            sum += (-t - w / (t * t)).exp();
        }
        sum *= h;
        assert_relative_eq!(k_integral(w).unwrap(), sum, max_relative = 1e-8);
    }

    #[test]
    fn k_is_strictly_decreasing() {
        let grid = [0.0, 1e-6, 1e-3, 0.05, 0.3, 1.0, 3.0, 10.0, 50.0, 300.0];
        let values: Vec<f64> = grid.iter().map(|&w| k_integral(w).unwrap()).collect();
        for pair in values.windows(2) {
            assert!(pair[1] < pair[0], "K not decreasing: {values:?}");
        }
    }

    #[test]
    fn k_stays_in_unit_interval() {
        for &w in &[1e-12, 1e-4, 0.5, 2.0, 100.0, 1e6] {
            let v = k_integral(w).unwrap();
            assert!((0.0..=1.0).contains(&v), "K({w}) = {v}");
        }
    }

    #[test]
    fn k_underflows_to_zero_for_huge_parameter() {
        assert_eq!(k_integral(1e12).unwrap(), 0.0);
    }

    #[test]
    fn k_rejects_invalid_parameter() {
        assert!(k_integral(-0.5).is_err());
        assert!(k_integral(f64::NAN).is_err());
        assert!(k_integral(f64::INFINITY).is_err());
    }

    /// The two subdivision strategies must agree on the kernel integrals.
    #[test]
    fn subdivision_strategies_agree_on_kernel() {
        let opts = QuadOptions {
            rel_tol: 1e-11,
            ..QuadOptions::default()
        };
        for &w in &[0.01, 0.25, 2.0 / 3.0, 1.5, 8.0, 40.0] {
            let (t_min, t_max) = truncation_bounds(w);
            let f = |t: f64| (-t - w / (t * t)).exp();
            let a = adaptive_gk15(f, t_min, t_max, &opts).unwrap();
            let b = adaptive_bisect_gk15(f, t_min, t_max, &opts).unwrap();
            assert_relative_eq!(a.value, b.value, max_relative = 1e-9);
            assert_relative_eq!(k_integral(w).unwrap(), a.value, max_relative = 1e-12);
        }
    }

    /// Reference values computed with mpmath.meijerg
    /// ([[], [0, 0.5, 1]], z) at 50 digits.
    #[test]
    fn meijer_g_matches_special_function_tables() {
        let cases = [
            (1.0 / 6.0, 0.629495955435560572326073510252),
            (0.25, 0.519553659478620269874695586455),
            (1.0, 0.203642945525255609808397316543),
            (4.0, 0.0422935966140066177537603767834),
        ];
        for (z, expected) in cases {
            let got = meijer_g_3003(z).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn meijer_g_at_zero_is_sqrt_pi() {
        assert_relative_eq!(meijer_g_3003(0.0).unwrap(), SQRT_PI, max_relative = 1e-15);
        assert_relative_eq!(
            SQRT_PI,
            std::f64::consts::PI.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn meijer_g_rejects_negative_argument() {
        assert!(meijer_g_3003(-1.0).is_err());
    }
}
