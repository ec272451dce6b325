//! Numerical Laplace inversion of the ruin-probability transforms.
//!
//! The default algorithm is Bromwich inversion with Euler summation: the
//! damped trapezoid of the inversion integral on the line `Re s = A / (2x)`
//! gives the alternating series
//!
//! ```text
//! f(x) ~= e^{A/2} / (2x) * sum_k (-1)^k F((A + 2 pi i k) / (2x)),
//! ```
//!
//! whose tail is accelerated by binomial (Euler) averaging of consecutive
//! partial sums. The discretization error is of order `e^{-A}` for targets
//! bounded by 1, which ruin probabilities are. A fixed-Talbot rule is
//! available as a cross-check.
//!
//! Fixed-horizon probabilities come from the iterated inversion of the
//! double transform: the horizon direction carries the killing-rate
//! prefactor (`theta` times the Laplace transform in `t`), so the inner
//! result is divided by `theta` before the outer inversion. The inner pass
//! then runs at complex `theta`, which is why the whole machinery works on
//! complex values throughout.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// Inversion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionAlgorithm {
    /// Bromwich contour with Euler summation (default).
    BromwichEuler,
    /// Fixed Talbot contour (cross-check; real one-dimensional targets).
    FixedTalbot,
}

/// Tuning knobs for the inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    pub algorithm: InversionAlgorithm,
    /// Series terms before averaging starts.
    pub series_terms: usize,
    /// Euler averaging terms.
    pub euler_terms: usize,
    /// Requested absolute accuracy; floored at 1e-10 (the contour damping
    /// and double-precision roundoff meet around there).
    pub target_precision: f64,
    /// Contour shift `A`; discretization error scales like `e^{-A}`.
    pub contour_shift: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            algorithm: InversionAlgorithm::BromwichEuler,
            series_terms: 40,
            euler_terms: 12,
            target_precision: 1e-8,
            contour_shift: 28.0,
        }
    }
}

impl InversionSettings {
    fn validate(&self) -> Result<()> {
        if self.series_terms < 10 {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 series terms, got {}",
                self.series_terms
            )));
        }
        if self.euler_terms < 2 || self.euler_terms > 60 {
            return Err(Error::InvalidArgument(format!(
                "Euler terms out of range: {}",
                self.euler_terms
            )));
        }
        Ok(())
    }

    fn floor_precision(&self) -> f64 {
        self.target_precision.max(1e-10)
    }
}

/// Outer contour shift of the iterated two-sided inversion. Kept below the
/// single-pass shift: every inner error is amplified by roughly
/// `e^{A_outer / 2}`, so the outer pass trades discretization error against
/// that amplification.
const OUTER_SHIFT: f64 = 18.4;

/// An inverted value: clamped to `[0, 1]`, with the raw pre-clamp value and
/// the Euler tail estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverted {
    /// Clamped probability.
    pub value: f64,
    /// Raw inversion output; overshoot on near-zero probabilities is
    /// expected and visible here.
    pub raw: f64,
    /// Difference of the last two Euler averages: the tail estimate.
    pub est_error: f64,
}

/// Euler-accelerated Bromwich sum at `x > 0` for a complex-valued target.
/// Returns the value and the tail estimate.
fn bromwich_euler<F>(transform: &F, x: f64, shift: f64, m1: usize, m2: usize) -> Result<(Complex64, f64)>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    let scale = (0.5 * shift).exp() / (2.0 * x);
    let node = |k: i64| -> Complex64 {
        Complex64::new(shift / (2.0 * x), k as f64 * core::f64::consts::PI / x)
    };
    // Partial sums S_m1 .. S_{m1+m2}.
    let mut sums = Vec::with_capacity(m2 + 1);
    let mut acc = Complex64::from(transform(node(0))?);
    for k in 1..=(m1 + m2) as i64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (transform(node(k))? + transform(node(-k))?);
        if k >= m1 as i64 {
            sums.push(acc);
        }
    }
    // Binomial averaging over the stored tail.
    let mut avg_full = Complex64::new(0.0, 0.0);
    let mut avg_drop = Complex64::new(0.0, 0.0);
    let mut binom = 1.0f64;
    for (j, &s) in sums.iter().enumerate() {
        if j > 0 {
            binom = binom * (m2 - j + 1) as f64 / j as f64;
        }
        avg_full += binom * s;
        if j < m2 {
            // Averaging with one fewer term, for the tail estimate.
            let mut b = 1.0f64;
            for i in 1..=j {
                b = b * (m2 - i) as f64 / i as f64;
            }
            avg_drop += b * s;
        }
    }
    let avg_full = avg_full / 2.0f64.powi(m2 as i32);
    let avg_drop = avg_drop / 2.0f64.powi((m2 - 1) as i32);
    let value = scale * avg_full;
    let est = scale * (avg_full - avg_drop).norm();
    Ok((value, est))
}

/// Fixed-Talbot rule for real one-dimensional targets.
fn fixed_talbot<F>(transform: &F, x: f64, m: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    let r = 2.0 * m as f64 / (5.0 * x);
    let mut acc = 0.5 * (r * x).exp() * transform(Complex64::from(r))?.re;
    for k in 1..m {
        let theta = k as f64 * core::f64::consts::PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let weight = Complex64::new(1.0, sigma);
        acc += ((s * x).exp() * transform(s)? * weight).re;
    }
    Ok(r / m as f64 * acc)
}

fn finish(raw: f64, est: f64, settings: &InversionSettings) -> Result<Inverted> {
    if !raw.is_finite() || est > 1e3 * settings.floor_precision().max(1e-6) {
        return Err(Error::NonConvergent {
            what: "Laplace inversion",
            detail: format!("raw value {raw}, Euler tail estimate {est}"),
        });
    }
    Ok(Inverted {
        value: raw.clamp(0.0, 1.0),
        raw,
        est_error: est,
    })
}

/// Invert a reserve-direction transform at `u > 0`. The transform must be
/// analytic on the right half-plane and bounded like the transform of a
/// probability (so `|F(s)| ~ 1/|s|`); both hold for the recursion outputs.
pub fn invert_in_u<F>(transform: &F, u: f64, settings: &InversionSettings) -> Result<Inverted>
where
    F: Fn(Complex64) -> Result<Complex64> + ?Sized,
{
    settings.validate()?;
    if !(u > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inversion point must be positive, got {u}"
        )));
    }
    match settings.algorithm {
        InversionAlgorithm::BromwichEuler => {
            let (value, est) = bromwich_euler(
                transform,
                u,
                settings.contour_shift,
                settings.series_terms,
                settings.euler_terms,
            )?;
            finish(value.re, est, settings)
        }
        InversionAlgorithm::FixedTalbot => {
            let m = settings.series_terms.max(24);
            let value = fixed_talbot(transform, u, m)?;
            // Cross-check rule: tail estimate from a coarser node count.
            let coarse = fixed_talbot(transform, u, m - 8)?;
            finish(value, (value - coarse).abs(), settings)
        }
    }
}

/// Invert a double transform to the fixed-horizon probability `p(u, t)`.
///
/// The callable receives `(gamma, theta)`. Writing `g(u, theta)` for the
/// inner inversion of `gamma -> Psi(gamma, theta)`, the value
/// `g(u, theta) / theta` is the Laplace transform of `t -> p(u, t)`, which
/// the outer pass inverts at `t`.
pub fn invert_in_u_t<F>(
    double_transform: &F,
    u: f64,
    t: f64,
    settings: &InversionSettings,
) -> Result<Inverted>
where
    F: Fn(Complex64, Complex64) -> Result<Complex64> + ?Sized,
{
    settings.validate()?;
    if !(u > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inversion point must be positive, got u = {u}, t = {t}"
        )));
    }
    let inner = |theta: Complex64| -> Result<Complex64> {
        let slice = |gamma: Complex64| double_transform(gamma, theta);
        let (g, _) = bromwich_euler(
            &slice,
            u,
            settings.contour_shift,
            settings.series_terms,
            settings.euler_terms,
        )?;
        Ok(g / theta)
    };
    let (value, est) = bromwich_euler(
        &inner,
        t,
        OUTER_SHIFT,
        settings.series_terms,
        settings.euler_terms,
    )?;
    finish(value.re, est, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::p1_exact;
    use crate::model::{validate, LossDistribution, PortfolioModel};
    use crate::transforms;

    fn settings() -> InversionSettings {
        InversionSettings::default()
    }

    #[test]
    fn inverts_constant_function() {
        // L[1](s) = 1/s.
        let f = |s: Complex64| Ok(1.0 / s);
        for u in [0.3, 1.0, 5.0, 20.0] {
            let got = invert_in_u(&f, u, &settings()).unwrap();
            assert!((got.value - 1.0).abs() < 1e-8, "u = {u}: {got:?}");
        }
    }

    #[test]
    fn inverts_exponential() {
        // L[e^{-x}](s) = 1/(s + 1).
        let f = |s: Complex64| Ok(1.0 / (s + 1.0));
        for u in [0.5, 2.0, 6.0] {
            let got = invert_in_u(&f, u, &settings()).unwrap();
            assert!(
                (got.value - (-u).exp()).abs() < 1e-9,
                "u = {u}: {}",
                got.value
            );
        }
    }

    #[test]
    fn talbot_agrees_with_euler() {
        let f = |s: Complex64| Ok(1.0 / (s + 1.0) + 0.4 / (s + 0.3));
        let talbot = InversionSettings {
            algorithm: InversionAlgorithm::FixedTalbot,
            ..settings()
        };
        for u in [0.5, 1.7, 4.0] {
            let a = invert_in_u(&f, u, &settings()).unwrap().raw;
            let b = invert_in_u(&f, u, &talbot).unwrap().raw;
            assert!((a - b).abs() < 1e-8, "u = {u}: {a} vs {b}");
        }
    }

    #[test]
    fn exp_horizon_ruin_probability_level_one() {
        // psi_1(g) = lam / ((g + mu)(lam + mu r + theta)); the inverse is
        // lam e^{-mu u} / (lam + mu r + theta).
        let (lam, r, mu, theta) = (0.9, 1.0, 1.0, 0.5);
        let f = move |g: Complex64| Ok(lam / ((g + mu) * (lam + mu * r + theta)));
        let got = invert_in_u(&f, 5.0, &settings()).unwrap();
        let expect = lam * (-5.0f64).exp() / (lam + mu * r + theta);
        assert!((got.value - expect).abs() < 1e-10, "{got:?} vs {expect}");
        assert!((expect - 2.526_730_124_657_05e-3).abs() < 1e-15);

        // Same through the actual recursion.
        let m = validate(PortfolioModel::proportional(
            1,
            lam,
            r,
            LossDistribution::Exponential { rate: mu },
        ))
        .unwrap();
        let f = |g: Complex64| transforms::psi_complex(&m, 1, Complex64::from(theta), g);
        let got = invert_in_u(&f, 5.0, &settings()).unwrap();
        assert!((got.value - expect).abs() < 1e-10, "{got:?} vs {expect}");
    }

    #[test]
    fn fixed_horizon_level_one_matches_closed_form() {
        let (lam, r, mu) = (0.9, 1.0, 1.0);
        let f = move |g: Complex64, th: Complex64| Ok(lam / ((g + mu) * (lam + mu * r + th)));
        let got = invert_in_u_t(&f, 5.0, 1.0, &settings()).unwrap();
        let expect = p1_exact(lam, r, mu, 5.0, 1.0);
        assert!(
            (got.value - expect).abs() < 1e-6,
            "{} vs {expect}",
            got.value
        );
        // Long horizons approach the open-horizon value.
        let got = invert_in_u_t(&f, 5.0, 50.0, &settings()).unwrap();
        let expect = p1_exact(lam, r, mu, 5.0, f64::INFINITY);
        assert!((got.value - expect).abs() < 1e-5);
        // Far reserves: essentially zero.
        let got = invert_in_u_t(&f, 60.0, 1.0, &settings()).unwrap();
        assert!(got.value < 1e-8, "{got:?}");
    }

    #[test]
    fn doubling_series_terms_is_stable() {
        let m = validate(PortfolioModel::proportional(
            3,
            0.9,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        let f = |g: Complex64| transforms::psi_complex(&m, 3, Complex64::from(0.5), g);
        let doubled = InversionSettings {
            series_terms: 80,
            ..settings()
        };
        for u in [1.0, 3.0, 5.0] {
            let a = invert_in_u(&f, u, &settings()).unwrap().raw;
            let b = invert_in_u(&f, u, &doubled).unwrap().raw;
            assert!((a - b).abs() < 1e-7, "u = {u}: {a} vs {b}");
        }
    }

    #[test]
    fn monotone_in_horizon_and_reserve() {
        let m = validate(PortfolioModel::proportional(
            2,
            0.9,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        let f = |g: Complex64, th: Complex64| transforms::psi_complex(&m, 2, th, g);
        let mut prev = 0.0;
        for t in [1.0, 2.0, 3.0] {
            let v = invert_in_u_t(&f, 5.0, t, &settings()).unwrap().value;
            assert!(v >= prev - 1e-6, "t = {t}");
            prev = v;
        }
        let mut prev = 1.0;
        for u in [4.0, 5.0, 6.0] {
            let v = invert_in_u_t(&f, u, 2.0, &settings()).unwrap().value;
            assert!(v <= prev + 1e-6, "u = {u}");
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = |s: Complex64| Ok(1.0 / s);
        assert!(invert_in_u(&f, 0.0, &settings()).is_err());
        let bad = InversionSettings {
            series_terms: 4,
            ..settings()
        };
        assert!(invert_in_u(&f, 1.0, &bad).is_err());
    }
}
