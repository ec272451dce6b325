//! Large-deviations decay rates and the Lundberg-type uniform bound.
//!
//! For a proportional portfolio, the per-obligor net loss at time `s` is
//! `W(s) = 1{T <= s} L - r min{T, s}` with moment generating function
//!
//! ```text
//! omega_s(a) = lbar(a) INT_0^s f(v) e^{-r a v} dv + e^{-r a s} (1 - F(s)),
//! ```
//!
//! where `lbar` is the loss MGF and `f`, `F` describe the time-to-default.
//! The probability that the average of `n` such terms ever exceeds `u`
//! decays exponentially in `n`; the decay rate at time `s` is the Legendre
//! transform `I(s) = sup_a (a u - log omega_s(a))`, and the decisive rate
//! over a horizon is `I(t*)` at the most likely exceedance time
//! `t* = arg inf_{s in [0, t]} I(s)`.

use crate::error::{Error, Result};
use crate::model::{
    DefaultTimeDistribution, LossDistribution, MgfValue, PerObligor, ValidatedModel,
};
use crate::numerics;
use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// MGF of the per-obligor net loss at time `t` (which may be infinite),
/// evaluated at `alpha`. Returns `Infinite` at or beyond the loss MGF
/// domain boundary; below it the value is finite for all `alpha >= 0`.
pub fn omega(ob: &PerObligor, t: f64, alpha: f64) -> Result<MgfValue> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    let lbar = match ob.loss.mgf(alpha) {
        MgfValue::Finite(v) => v,
        MgfValue::Infinite => return Ok(MgfValue::Infinite),
    };
    if t == 0.0 {
        return Ok(MgfValue::Finite(1.0));
    }
    let r = ob.income_rate;
    let value = match &ob.default_time {
        DefaultTimeDistribution::Exponential { rate } => {
            let lam = *rate;
            let c = lam + r * alpha;
            if t.is_infinite() {
                if c <= 0.0 {
                    return Ok(MgfValue::Infinite);
                }
                lbar * lam / c
            } else if c.abs() < 1e-12 {
                // Removable: (1 - e^{-ct})/c -> t.
                lbar * lam * t + 1.0
            } else {
                let decay = (-c * t).exp();
                (1.0 - decay) * lam / c * lbar + decay
            }
        }
        DefaultTimeDistribution::Tabulated(tab) => {
            let horizon = if t.is_infinite() { tab.upper() } else { t };
            let body = lbar * tab.exp_weighted_cdf(r * alpha, horizon);
            let tail = if t.is_infinite() {
                // Mass never defaulting inside the table keeps paying income
                // forever; its contribution vanishes for alpha > 0 and is
                // unbounded for alpha < 0.
                let mass = 1.0 - tab.cdf(tab.upper());
                if mass <= 0.0 || alpha > 0.0 {
                    0.0
                } else if alpha == 0.0 {
                    mass
                } else {
                    return Ok(MgfValue::Infinite);
                }
            } else {
                (-r * alpha * t).exp() * (1.0 - tab.cdf(t))
            };
            body + tail
        }
    };
    Ok(MgfValue::Finite(value))
}

fn omega_finite(ob: &PerObligor, t: f64, alpha: f64) -> Option<f64> {
    omega(ob, t, alpha).ok().and_then(MgfValue::finite)
}

/// Legendre transform sample: the maximizing tilt and the rate at time `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreResult {
    pub s: f64,
    pub alpha_star: f64,
    pub rate: f64,
    pub converged: bool,
}

/// First-order residual `u - omega'(a)/omega(a)` by central differences.
fn stationarity_residual(ob: &PerObligor, u: f64, s: f64, alpha: f64, sup: f64) -> f64 {
    let width = if sup.is_finite() { sup } else { alpha + 1.0 };
    let step = (1e-6 * width).min((sup - alpha) / 4.0).min(alpha / 4.0);
    let hi = omega_finite(ob, s, alpha + step);
    let lo = omega_finite(ob, s, alpha - step);
    let mid = omega_finite(ob, s, alpha);
    match (hi, lo, mid) {
        (Some(hi), Some(lo), Some(mid)) if mid > 0.0 => u - (hi - lo) / (2.0 * step) / mid,
        _ => f64::INFINITY,
    }
}

pub(crate) fn legendre_unchecked(ob: &PerObligor, u: f64, s: f64) -> Result<LegendreResult> {
    let sup = ob.loss.mgf_domain_sup();
    if s == 0.0 {
        // omega_0 = 1, so the objective is a u and the supremum sits at the
        // domain boundary (infinite for a point-mass loss).
        return Ok(LegendreResult {
            s,
            alpha_star: sup,
            rate: if sup.is_finite() {
                sup * u
            } else {
                f64::INFINITY
            },
            converged: true,
        });
    }
    let objective = |alpha: f64| match omega(ob, s, alpha) {
        Ok(MgfValue::Finite(v)) if v > 0.0 => alpha * u - v.ln(),
        _ => f64::NEG_INFINITY,
    };
    let (lo, hi) = if sup.is_finite() {
        let eps = 1e-9 * sup;
        (eps, sup - eps)
    } else {
        // Point-mass losses: net loss is bounded by the loss value, so the
        // rate is infinite once u reaches it; otherwise grow a bracket.
        if let LossDistribution::Deterministic { value } = ob.loss {
            if u >= value {
                return Ok(LegendreResult {
                    s,
                    alpha_star: f64::INFINITY,
                    rate: f64::INFINITY,
                    converged: true,
                });
            }
        }
        let mut hi = 1.0;
        for _ in 0..200 {
            if objective(2.0 * hi) < objective(hi) {
                break;
            }
            hi *= 2.0;
        }
        (1e-12, 2.0 * hi)
    };
    let width = hi - lo;
    let (mut alpha, _) = numerics::golden_max(&objective, lo, hi, 1e-10 * width);
    // Two Newton steps on the first-order condition sharpen the maximizer.
    for _ in 0..2 {
        let step = (1e-6 * width)
            .min((hi - alpha) / 4.0)
            .min((alpha - lo) / 4.0);
        if step <= 0.0 {
            break;
        }
        let phi = |a: f64| {
            let h = omega_finite(ob, s, a + step);
            let l = omega_finite(ob, s, a - step);
            let m = omega_finite(ob, s, a);
            match (h, l, m) {
                (Some(h), Some(l), Some(m)) if m > 0.0 => Some(u - (h - l) / (2.0 * step) / m),
                _ => None,
            }
        };
        let (f0, f1) = match (phi(alpha), phi(alpha + step)) {
            (Some(a), Some(b)) => (a, b),
            _ => break,
        };
        let slope = (f1 - f0) / step;
        if slope.abs() < 1e-300 {
            break;
        }
        let next = alpha - f0 / slope;
        if next > lo && next < hi && objective(next) >= objective(alpha) {
            alpha = next;
        }
    }
    let rate = objective(alpha);
    let interior = alpha > lo + 10.0 * width * 1e-10 && alpha < hi - 10.0 * width * 1e-10;
    let converged = if interior {
        stationarity_residual(ob, u, s, alpha, sup).abs() < 1e-8
    } else {
        true
    };
    Ok(LegendreResult {
        s,
        alpha_star: alpha,
        rate,
        converged,
    })
}

/// Legendre transform `I(s) = sup_a (a u - log omega_s(a))` for a single
/// time `s` (which may be infinite). Requires the rarity condition.
pub fn legendre(model: &ValidatedModel, u: f64, s: f64) -> Result<LegendreResult> {
    let rarity = crate::model::rarity_margin(model, u)?;
    if !rarity.satisfied {
        return Err(Error::RarityViolated {
            margin: rarity.margin,
        });
    }
    let ob = model.per_obligor()?;
    if s.is_infinite() {
        return legendre_infinite(&ob, u);
    }
    legendre_unchecked(&ob, u, s)
}

/// Infinite-horizon Legendre transform. For exponential losses and
/// exponential times-to-default the maximizer solves the quadratic
/// `r u a^2 + ((lam - r mu) u + 2 r) a - lam mu (u - m_inf) = 0` in closed
/// form; other laws are maximized numerically against the limiting MGF.
fn legendre_infinite(ob: &PerObligor, u: f64) -> Result<LegendreResult> {
    if let (
        LossDistribution::Exponential { rate: mu },
        DefaultTimeDistribution::Exponential { rate: lam },
    ) = (&ob.loss, &ob.default_time)
    {
        let (mu, lam, r) = (*mu, *lam, ob.income_rate);
        let m_inf = 1.0 / mu - r / lam;
        let a_coef = r * u;
        let b_coef = (lam - r * mu) * u + 2.0 * r;
        let c_coef = -lam * mu * (u - m_inf);
        let disc = b_coef * b_coef - 4.0 * a_coef * c_coef;
        let alpha = (-b_coef + disc.sqrt()) / (2.0 * a_coef);
        let delta = lam / (lam + r * alpha) * mu / (mu - alpha);
        return Ok(LegendreResult {
            s: f64::INFINITY,
            alpha_star: alpha,
            rate: alpha * u - delta.ln(),
            converged: true,
        });
    }
    legendre_unchecked(ob, u, f64::INFINITY)
}

/// Flags qualifying where the rate minimum was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointFlags {
    /// The minimum sat at the upper end of the searched horizon.
    pub minimum_at_upper_endpoint: bool,
    /// Sign of the rate's slope at infinity, where a closed form exists
    /// (exponential losses and times-to-default): `true` means the rate
    /// keeps decreasing, so the unconstrained minimizer is `t = inf`.
    pub decreasing_at_infinity: Option<bool>,
}

/// Most likely exceedance time and the decay rate there.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Minimizer of `I` over `[0, t]`; may be infinite.
    pub t_star: f64,
    /// `I(t_star)`.
    pub rate: f64,
    /// Supremum of the maximizing tilt over the evaluation grid (including
    /// the analytic `s = 0` endpoint); the constant that bounds the
    /// importance-sampling likelihood ratios.
    pub alpha_star_sup: f64,
    pub flags: EndpointFlags,
    /// The evaluation grid.
    pub samples: Vec<LegendreResult>,
}

/// Minimize the Legendre transform over `s in [0, t]` (`t` may be infinite):
/// a geometric scan refined by golden-section around the best grid point.
pub fn decay_rate(model: &ValidatedModel, u: f64, t: f64) -> Result<DecayReport> {
    let rarity = crate::model::rarity_margin(model, u)?;
    if !rarity.satisfied {
        return Err(Error::RarityViolated {
            margin: rarity.margin,
        });
    }
    let ob = model.per_obligor()?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {t}"
        )));
    }

    // Effective scan end: several mean lifetimes when the horizon is open.
    let lam_scale = match &ob.default_time {
        DefaultTimeDistribution::Exponential { rate } => *rate,
        DefaultTimeDistribution::Tabulated(tab) => 2.0 / tab.upper(),
    };
    let scan_end = if t.is_infinite() { 40.0 / lam_scale } else { t };

    let mut samples = Vec::with_capacity(203);
    samples.push(legendre_unchecked(&ob, u, 0.0)?);
    let lo = 1e-3_f64.min(scan_end / 2.0);
    let ratio = (scan_end / lo).powf(1.0 / 199.0);
    let mut s = lo;
    for _ in 0..200 {
        samples.push(legendre_unchecked(&ob, u, s.min(scan_end))?);
        s *= ratio;
    }
    if t.is_infinite() {
        samples.push(legendre_infinite(&ob, u)?);
    }

    let mut best = 0usize;
    for (i, smp) in samples.iter().enumerate() {
        if smp.rate < samples[best].rate {
            best = i;
        }
    }

    let tail = samples.last().unwrap();
    // Ties between the scan end and the limit value count as an endpoint
    // minimum (the rate flattens exponentially fast there).
    let minimum_at_end = best + 1 == samples.len()
        || tail.rate - samples[best].rate <= 1e-9 * (1.0 + samples[best].rate.abs());
    let decreasing_at_infinity = match (&ob.loss, &ob.default_time) {
        (
            LossDistribution::Exponential { rate: mu },
            DefaultTimeDistribution::Exponential { rate: lam },
        ) => Some(lam - ob.income_rate * mu > -lam * mu * u),
        _ => None,
    };

    let (t_star, rate) = if minimum_at_end {
        if t.is_infinite() {
            (f64::INFINITY, tail.rate)
        } else {
            (t, tail.rate)
        }
    } else if best == 0 {
        (0.0, samples[0].rate)
    } else {
        // Golden refinement of s -> I(s) on the bracketing grid interval.
        let left = samples[best - 1].s;
        let right = samples[(best + 1).min(samples.len() - 1)].s;
        let right = if right.is_infinite() { scan_end } else { right };
        let obj = |s: f64| -> f64 {
            legendre_unchecked(&ob, u, s)
                .map(|r| -r.rate)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let (s_min, neg_rate) = numerics::golden_max(&obj, left, right, 1e-6 * (right - left));
        (s_min, -neg_rate)
    };

    let alpha_star_sup = samples
        .iter()
        .map(|r| r.alpha_star)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(DecayReport {
        t_star,
        rate,
        alpha_star_sup,
        flags: EndpointFlags {
            minimum_at_upper_endpoint: minimum_at_end,
            decreasing_at_infinity,
        },
        samples,
    })
}

/// Sampled curves `s -> (alpha*(s), I(s))` with interpolation, plus the
/// horizon summary. The grid is quadratically clustered near `s = 0`, where
/// the tilt varies fastest; the importance sampler interpolates on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurves {
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
    pub rate: Vec<f64>,
    pub t_star: f64,
    pub rate_at_t_star: f64,
    pub sup_alpha: f64,
}

impl RateCurves {
    fn interp(&self, xs: &[f64], s: f64) -> f64 {
        if s <= self.s[0] {
            return xs[0];
        }
        let last = self.s.len() - 1;
        if s >= self.s[last] {
            return xs[last];
        }
        let hi = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => return xs[i],
            Err(i) => i.max(1),
        };
        let w = (s - self.s[hi - 1]) / (self.s[hi] - self.s[hi - 1]);
        xs[hi - 1] * (1.0 - w) + xs[hi] * w
    }

    pub fn alpha_at(&self, s: f64) -> f64 {
        self.interp(&self.alpha, s)
    }

    pub fn rate_at(&self, s: f64) -> f64 {
        self.interp(&self.rate, s)
    }
}

/// Build tilt and rate curves over `[0, t]` on `points + 1` nodes.
pub fn rate_curves(model: &ValidatedModel, u: f64, t: f64, points: usize) -> Result<RateCurves> {
    if !(t > 0.0) || t.is_infinite() {
        return Err(Error::InvalidArgument(format!(
            "curve horizon must be positive and finite, got {t}"
        )));
    }
    let report = decay_rate(model, u, t)?;
    let ob = model.per_obligor()?;
    let points = points.max(16);
    let mut s_grid = Vec::with_capacity(points + 1);
    let mut alpha = Vec::with_capacity(points + 1);
    let mut rate = Vec::with_capacity(points + 1);
    for j in 0..=points {
        let frac = j as f64 / points as f64;
        let s = t * frac * frac;
        let res = legendre_unchecked(&ob, u, s)?;
        s_grid.push(s);
        alpha.push(res.alpha_star);
        rate.push(res.rate);
    }
    Ok(RateCurves {
        s: s_grid,
        alpha,
        rate,
        t_star: report.t_star,
        rate_at_t_star: report.rate,
        sup_alpha: report.alpha_star_sup,
    })
}

/// Positive root of `lbar(g) lambda_n / (lambda_n + g r_n) = 1`: the level-n
/// adjustment coefficient of the Lundberg-type bound. Exists whenever the
/// level satisfies the net-profit condition `lambda_n E L < r_n`.
pub fn lundberg_gamma(model: &ValidatedModel, n: usize) -> Result<f64> {
    if n == 0 || n > model.n_max() {
        return Err(Error::InvalidArgument(format!(
            "level {n} out of range 1..={}",
            model.n_max()
        )));
    }
    let lam = model.lambda()[n - 1];
    let r = model.income()[n - 1];
    let loss = model.loss();
    if lam * loss.mean() >= r {
        return Err(Error::NetProfitViolated(format!(
            "level {n}: lambda E L = {} >= r = {r}",
            lam * loss.mean()
        )));
    }
    let sup = loss.mgf_domain_sup();
    let g = |gamma: f64| match loss.mgf(gamma) {
        MgfValue::Finite(lbar) => lbar * lam / (lam + gamma * r) - 1.0,
        MgfValue::Infinite => f64::INFINITY,
    };
    // g(0) = 0 with negative slope under net profit; find a point inside the
    // dip, then a sign change toward the domain boundary.
    let mut lo = if sup.is_finite() { sup * 1e-3 } else { 1e-3 };
    for _ in 0..120 {
        if g(lo) < 0.0 {
            break;
        }
        lo /= 2.0;
    }
    if g(lo) >= 0.0 {
        return Err(Error::Bracketing {
            what: "adjustment coefficient",
            lo: 0.0,
            hi: lo,
            f_lo: 0.0,
            f_hi: g(lo),
        });
    }
    let hi = if sup.is_finite() {
        let mut hi = sup * 0.5;
        let mut k = 0;
        while g(hi) <= 0.0 && k < 200 {
            hi = sup - (sup - hi) / 2.0;
            k += 1;
        }
        hi
    } else {
        let mut hi = lo.max(1.0);
        let mut k = 0;
        while g(hi) <= 0.0 && k < 200 {
            hi *= 2.0;
            k += 1;
        }
        hi
    };
    if g(hi) <= 0.0 {
        return Err(Error::Bracketing {
            what: "adjustment coefficient",
            lo,
            hi,
            f_lo: g(lo),
            f_hi: g(hi),
        });
    }
    numerics::bisect(&g, lo, hi, 1e-12, "adjustment coefficient")
}

/// The Lundberg-type bound and its monotonicity hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `exp(-gamma_n u)`, an upper bound for the ruin probability at every
    /// horizon when the hypothesis holds.
    pub bound: f64,
    /// Whether `gamma_1 >= gamma_2 >= ... >= gamma_n` (up to 1e-12); the
    /// bound's proof needs it. Reported, never assumed.
    pub hypothesis_ok: bool,
    pub gammas: Vec<f64>,
}

/// Uniform bound `p_n(u, t) <= p_n(u, inf) <= exp(-gamma_n u)`.
pub fn lundberg_bound(model: &ValidatedModel, n: usize, u: f64) -> Result<BoundReport> {
    if u < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "reserve must be nonnegative, got {u}"
        )));
    }
    let mut gammas = Vec::with_capacity(n);
    for k in 1..=n {
        gammas.push(lundberg_gamma(model, k)?);
    }
    let mut hypothesis_ok = true;
    for pair in gammas.windows(2) {
        if pair[1] > pair[0] + 1e-12 {
            hypothesis_ok = false;
        }
    }
    let bound = (-gammas[n - 1] * u).exp();
    Ok(BoundReport {
        bound,
        hypothesis_ok,
        gammas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, PortfolioModel};
    use alloc::vec;

    fn spec_model() -> ValidatedModel {
        validate(PortfolioModel::proportional(
            10,
            0.9,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap()
    }

    #[test]
    fn omega_examples() {
        let ob = spec_model().per_obligor().unwrap();
        for alpha in [-0.4, 0.0, 0.5, 0.99] {
            assert_eq!(omega(&ob, 0.0, alpha).unwrap(), MgfValue::Finite(1.0));
        }
        // t = inf, alpha = 0.5: lbar(0.5) lam/(lam + r alpha) = 2 * 0.9/1.4.
        match omega(&ob, f64::INFINITY, 0.5).unwrap() {
            MgfValue::Finite(v) => assert!((v - 2.0 * 0.9 / 1.4).abs() < 1e-14),
            MgfValue::Infinite => panic!(),
        }
        assert!(omega(&ob, 2.0, 1.0).unwrap().is_infinite());
        assert!(omega(&ob, 2.0, 1.7).unwrap().is_infinite());
        // omega_s(0) = 1 for every s.
        for s in [0.1, 1.0, 4.0, 33.0] {
            match omega(&ob, s, 0.0).unwrap() {
                MgfValue::Finite(v) => assert!((v - 1.0).abs() < 1e-12, "s = {s}: {v}"),
                MgfValue::Infinite => panic!(),
            }
        }
    }

    #[test]
    fn omega_matches_quadrature() {
        let ob = spec_model().per_obligor().unwrap();
        for (s, alpha) in [(1.0, 0.4), (2.3, 0.8), (0.3, -0.5), (6.0, 0.2)] {
            let lbar = match ob.loss.mgf(alpha) {
                MgfValue::Finite(v) => v,
                _ => panic!(),
            };
            let f = |v: f64| 0.9 * (-0.9 * v).exp() * (-alpha * v).exp();
            let integral = crate::numerics::simpson(&f, 0.0, s, 4000);
            let expect = lbar * integral + (-alpha * s).exp() * (-0.9 * s).exp();
            match omega(&ob, s, alpha).unwrap() {
                MgfValue::Finite(v) => {
                    assert!((v - expect).abs() < 1e-9, "({s}, {alpha}): {v} vs {expect}")
                }
                MgfValue::Infinite => panic!(),
            }
        }
    }

    #[test]
    fn log_omega_is_convex_in_alpha() {
        let ob = spec_model().per_obligor().unwrap();
        for s in [0.2, 1.0, 2.3, 10.0] {
            let ln_omega = |a: f64| match omega(&ob, s, a).unwrap() {
                MgfValue::Finite(v) => v.ln(),
                MgfValue::Infinite => f64::INFINITY,
            };
            for k in 0..60 {
                let a = -0.4 + 0.022 * k as f64;
                let mid = ln_omega(a + 0.011);
                let avg = 0.5 * (ln_omega(a) + ln_omega(a + 0.022));
                assert!(mid <= avg + 1e-12, "s = {s}, a = {a}");
            }
        }
    }

    #[test]
    fn legendre_boundary_and_interior() {
        let m = spec_model();
        // s = 0: alpha* = mu, I = mu u, analytically.
        let res = legendre(&m, 5.0, 0.0).unwrap();
        assert_eq!(res.alpha_star, 1.0);
        assert_eq!(res.rate, 5.0);
        // Interior s: first-order residual below 1e-8 and nonnegative rate.
        let ob = m.per_obligor().unwrap();
        for s in [0.3, 1.0, 2.3, 5.0] {
            let res = legendre(&m, 5.0, s).unwrap();
            assert!(res.converged, "not converged at s = {s}");
            assert!(res.rate >= 0.0);
            let resid = stationarity_residual(&ob, 5.0, s, res.alpha_star, 1.0);
            assert!(resid.abs() < 1e-8, "residual {resid} at s = {s}");
        }
    }

    #[test]
    fn legendre_infinite_matches_quadratic_root() {
        let m = spec_model();
        let res = legendre(&m, 5.0, f64::INFINITY).unwrap();
        assert!(
            (res.alpha_star - 0.820_824_391_947_379_9).abs() < 1e-12,
            "alpha {res:?}"
        );
        // Independent golden-section maximization of the limiting objective.
        let objective = |a: f64| a * 5.0 - (0.9 / (0.9 + a) / (1.0 - a)).ln();
        let (alpha, rate) = numerics::golden_max(&objective, 1e-9, 1.0 - 1e-9, 1e-12);
        assert!(
            (res.alpha_star - alpha).abs() < 1e-8,
            "{} vs {alpha}",
            res.alpha_star
        );
        assert!((res.rate - rate).abs() < 1e-9);
    }

    #[test]
    fn legendre_requires_rarity() {
        let heavy = validate(PortfolioModel::proportional(
            3,
            2.0,
            0.5,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        assert!(matches!(
            legendre(&heavy, 0.2, 1.0),
            Err(Error::RarityViolated { .. })
        ));
    }

    #[test]
    fn decay_rate_small_reserve_dips_at_interior_time() {
        // u = 0.1: the rate has an interior minimum near s = 2.3.
        let m = spec_model();
        let rep = decay_rate(&m, 0.1, 5.0).unwrap();
        assert!(
            (rep.t_star - 2.3).abs() <= 0.05,
            "t* = {} (rate {})",
            rep.t_star,
            rep.rate
        );
        assert!(rep.rate > 0.0095 && rep.rate < 0.011, "rate {}", rep.rate);
        assert!(!rep.flags.minimum_at_upper_endpoint);
        assert_eq!(rep.flags.decreasing_at_infinity, Some(false));
        assert!((rep.alpha_star_sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_large_reserve_decreases_to_the_horizon() {
        let m = spec_model();
        let rep = decay_rate(&m, 5.0, 5.0).unwrap();
        assert!(rep.flags.minimum_at_upper_endpoint, "t* = {}", rep.t_star);
        assert_eq!(rep.flags.decreasing_at_infinity, Some(true));
        assert_eq!(rep.t_star, 5.0);
        // Open horizon: the minimum moves to infinity with the closed-form
        // rate at the limiting tilt.
        let rep = decay_rate(&m, 5.0, f64::INFINITY).unwrap();
        assert!(rep.t_star.is_infinite());
        assert!(
            (rep.rate - 3.032_897_045_553_797).abs() < 1e-9,
            "{}",
            rep.rate
        );
    }

    #[test]
    fn decay_rate_samples_are_continuous() {
        let m = spec_model();
        let rep = decay_rate(&m, 0.1, 5.0).unwrap();
        let finite: Vec<_> = rep.samples.iter().filter(|r| r.s > 0.0).collect();
        for w in finite.windows(3) {
            let slope = ((w[2].rate - w[0].rate) / (w[2].s - w[0].s)).abs();
            let jump = (w[1].rate - w[0].rate).abs();
            let allowed = 3.0 * (slope + 1.0) * (w[1].s - w[0].s);
            assert!(jump <= allowed, "jump {jump} at s = {}", w[1].s);
        }
    }

    #[test]
    fn rate_curve_interpolation_is_tight() {
        let m = spec_model();
        let curves = rate_curves(&m, 0.1, 5.0, 512).unwrap();
        let ob = m.per_obligor().unwrap();
        for s in [0.013, 0.3, 1.17, 2.34, 4.99] {
            let exact = legendre_unchecked(&ob, 0.1, s).unwrap();
            let rel = (curves.alpha_at(s) - exact.alpha_star).abs() / exact.alpha_star;
            assert!(rel < 1e-3, "alpha interpolation off by {rel} at s = {s}");
        }
        assert!((curves.t_star - 2.3).abs() < 0.05);
    }

    #[test]
    fn lundberg_gamma_spec_values() {
        let m = spec_model();
        for n in 1..=10 {
            let g = lundberg_gamma(&m, n).unwrap();
            assert!((g - 0.1).abs() < 1e-9, "gamma_{n} = {g}");
        }
        let flat = validate(PortfolioModel::proportional(
            2,
            0.5,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        assert!((lundberg_gamma(&flat, 1).unwrap() - 0.5).abs() < 1e-9);
        // Near criticality the root degenerates to zero.
        let critical = validate(PortfolioModel::proportional(
            2,
            0.999,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        let g = lundberg_gamma(&critical, 1).unwrap();
        assert!(g > 0.0 && g < 2e-3, "gamma = {g}");
        // Net-profit violation: no positive root.
        let bad = validate(PortfolioModel::proportional(
            2,
            2.0,
            1.0,
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        assert!(matches!(
            lundberg_gamma(&bad, 1),
            Err(Error::NetProfitViolated(_))
        ));
    }

    #[test]
    fn lundberg_bound_examples() {
        let m = spec_model();
        let rep = lundberg_bound(&m, 10, 5.0).unwrap();
        assert!((rep.bound - (-0.5f64).exp()).abs() < 1e-9);
        assert!(rep.hypothesis_ok);
        assert_eq!(lundberg_bound(&m, 3, 0.0).unwrap().bound, 1.0);
        // Crafted increasing gamma sequence: flag drops, bound still given.
        let crafted = validate(PortfolioModel::with_levels(
            vec![0.8, 0.5],
            vec![1.0, 1.0],
            LossDistribution::Exponential { rate: 1.0 },
        ))
        .unwrap();
        let rep = lundberg_bound(&crafted, 2, 1.0).unwrap();
        assert!(!rep.hypothesis_ok);
        assert!((rep.gammas[0] - 0.2).abs() < 1e-9);
        assert!((rep.gammas[1] - 0.5).abs() < 1e-9);
        assert!((rep.bound - (-0.5f64).exp()).abs() < 1e-9);
    }
}
