//! Small root-finding, optimization, and quadrature toolkit.
//!
//! All routines are derivative-free. Root finding is bracketing + bisection
//! (the functions we search have proved sign structure, so bisection is
//! globally safe); 1-D maximization is golden-section on a bracket.

use crate::error::{Error, Result};
use alloc::format;
#[allow(unused_imports)]
use num_traits::Float;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Grow `hi` geometrically from `hi0` until `f` changes sign against `f(lo)`.
pub fn grow_bracket<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi0: f64,
    what: &'static str,
) -> Result<(f64, f64)> {
    let f_lo = f(lo);
    let mut hi = hi0;
    for _ in 0..200 {
        let f_hi = f(hi);
        if f_lo * f_hi <= 0.0 && f_hi.is_finite() {
            return Ok((lo, hi));
        }
        hi *= 2.0;
    }
    Err(Error::Bracketing {
        what,
        lo,
        hi,
        f_lo,
        f_hi: f(hi),
    })
}

/// Bisection on a sign-changing bracket. Stops when |f| < `tol_residual`
/// or the bracket width shrinks below machine scale.
pub fn bisect<F: Fn(f64) -> f64>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    tol_residual: f64,
    what: &'static str,
) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::Bracketing {
            what,
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < tol_residual || (hi - lo).abs() < f64::EPSILON * mid.abs().max(1e-300) {
            return Ok(mid);
        }
        if f_lo * f_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() < tol_residual * 1e3 {
        return Ok(mid);
    }
    Err(Error::NonConvergent {
        what,
        detail: format!("bisection stalled at {mid}, residual {}", f(mid)),
    })
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)` once the bracket width drops below `tol_x`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol_x: f64) -> (f64, f64) {
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol_x {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Composite Simpson rule with `n` subintervals (`n` is rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = if n % 2 == 0 { n.max(2) } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Exact integral of the linear segment through `(0, y0)`–`(h, y1)` against
/// the weight `c * exp(-c x)` over `[0, h]`.
///
/// Used wherever an exponential density is integrated against a piecewise
/// linear interpolant; keeps the quadrature of those products exact per cell.
pub fn exp_weighted_linear(y0: f64, y1: f64, h: f64, c: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    if c * h < 1e-12 {
        // Weight is flat at this scale; fall back to trapezoid times mass.
        return 0.5 * (y0 + y1) * c * h;
    }
    let e = (-c * h).exp();
    let i0 = 1.0 - e; // ∫ c e^{-cx}
    let i1 = i0 / c - h * e; // ∫ x c e^{-cx}
    y0 * i0 + (y1 - y0) * i1 / h
}
