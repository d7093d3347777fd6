//! Scalar root finding for the stationarity conditions of the block solver.
//!
//! For a cubic power model the first-order condition of
//! `a/x + b·x² + m·x` (and of its power analogue in `sqrt(p)`) is the cubic
//! `2b·x³ + m·x² − a = 0`, which has exactly one positive root whenever
//! `a > 0`. It is solved in closed form after the substitution `y = 1/x`,
//! which turns it into the depressed cubic `y³ − (m/a)·y − 2b/a = 0`; the
//! sign of the discriminant selects Cardano's formula, the repeated-root
//! boundary, or the trigonometric form. Other exponents go through a
//! bracketed bisection on the monotone derivative.

use crate::error::{Error, Result};

/// Which closed-form branch produced a cubic root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubicBranch {
    /// One real root, Cardano's formula.
    Cardano,
    /// Vanishing discriminant.
    Repeated,
    /// Three real roots, trigonometric form.
    Trigonometric,
    /// Leading coefficient zero, the condition is quadratic.
    Quadratic,
    /// Quadratic coefficient zero, plain cube root.
    Pure,
}

/// Unique positive root of `c3·x³ + c2·x² − c0 = 0`.
///
/// Requires `c0 > 0` and `c3, c2 >= 0`. Returns `None` when both `c3` and
/// `c2` vanish (the polynomial is negative for every `x`).
pub fn positive_root(c3: f64, c2: f64, c0: f64) -> Option<(f64, CubicBranch)> {
    debug_assert!(c0 > 0.0 && c3 >= 0.0 && c2 >= 0.0);
    if c3 == 0.0 {
        if c2 == 0.0 {
            return None;
        }
        return Some(((c0 / c2).sqrt(), CubicBranch::Quadratic));
    }
    if c2 == 0.0 {
        return Some(((c0 / c3).cbrt(), CubicBranch::Pure));
    }
    // y = 1/x: y³ + p·y + q = 0 with p < 0, q < 0.
    let p = -c2 / c0;
    let q = -c3 / c0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let scale = (q * q / 4.0).max((p * p * p / 27.0).abs());
    let (mut y, branch) = if disc.abs() <= 4.0 * f64::EPSILON * scale {
        (3.0 * q / p, CubicBranch::Repeated)
    } else if disc > 0.0 {
        // Product of the two cube roots is -p/3, so the second one is
        // recovered without cancellation.
        let u = (-q / 2.0 + disc.sqrt()).cbrt();
        (u - p / (3.0 * u), CubicBranch::Cardano)
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        (2.0 * r * (arg.acos() / 3.0).cos(), CubicBranch::Trigonometric)
    };
    // Two Newton steps clean up rounding in the closed forms.
    for _ in 0..2 {
        let g = y * y * y + p * y + q;
        let dg = 3.0 * y * y + p;
        if dg > 0.0 {
            let next = y - g / dg;
            if next > 0.0 && next.is_finite() {
                y = next;
            }
        }
    }
    Some((1.0 / y, branch))
}

/// Root of a non-decreasing function on `[lo, hi]` by bisection.
///
/// Returns `lo` or `hi` when the function does not change sign there (the
/// minimizer then sits on that end), and a bracket error when an end value
/// is not finite.
pub fn bracketed_root<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64) -> Result<f64> {
    let (glo, ghi) = (g(lo), g(hi));
    if glo.is_nan() || ghi.is_nan() {
        return Err(Error::NumericalBracket { lo, hi });
    }
    if glo >= 0.0 {
        return Ok(lo);
    }
    if ghi <= 0.0 {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if g(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
