//! Path-level Monte Carlo: direct estimation of the ruin probability and a
//! logarithmically efficient importance-sampling estimator.
//!
//! Ruin can only happen at a default epoch (the reserve rises between
//! defaults), so both estimators watch the aggregate net loss
//! `Z_n(v) = sum_i W_i(v)`, `W_i(v) = 1{T_i <= v} L_i - r min{T_i, v}`, at
//! the finitely many default times.
//!
//! The importance sampler splits the ruin event by the index of the obligor
//! whose default first breaches the reserve. For anchor `j` it draws `T_j`
//! from the plain law, tilts the anchor loss and every other obligor's net
//! loss at time `s = T_j` exponentially with the maximizing tilt
//! `alpha*(s)` of the decay-rate analysis, scores the indicator of
//!
//! ```text
//! F_j = E_j  minus all earlier  E_i,
//! E_j = { T_j <= t,  sum_{i != j} W_i(T_j) + L_j - r T_j >= u }
//! ```
//!
//! with the likelihood ratio
//! `L_j = e^{-a W_j(s)} lbar(a) prod_{i!=j} e^{-a W_i(s)} omega_s(a)`, and
//! averages the per-run totals. On the scored event the ratio obeys
//! `L_j <= lbar(a) e^{-(n-1)(a u/n - log omega_s(a))}`, which the sampler
//! asserts on every accepted sample.
//!
//! Runs are deterministic: run `k` draws from an independent counter-based
//! substream (`set_stream(k)` of a seeded ChaCha generator), and totals are
//! reduced in fixed-size chunks in index order, so results are bit-identical
//! for a given seed regardless of how chunks are scheduled across workers.

use crate::asymptotics::{self, RateCurves};
use crate::error::{Error, Result};
use crate::model::{
    uniform_open, DefaultTimeDistribution, MgfValue, PerObligor, ValidatedModel,
};
use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Runs per reduction chunk; fixed so that the summation order (and thus
/// the result bits) do not depend on the worker count.
pub const CHUNK: u64 = 8192;

/// A sampled family of default times and losses for `n` obligors, with the
/// proportional income rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub default_times: Vec<f64>,
    pub losses: Vec<f64>,
    pub income_rate: f64,
}

impl PathSample {
    /// Net loss of obligor `i` at time `v`.
    pub fn net_loss(&self, i: usize, v: f64) -> f64 {
        let t_i = self.default_times[i];
        let hit = if t_i <= v { self.losses[i] } else { 0.0 };
        hit - self.income_rate * t_i.min(v)
    }

    /// Aggregate net loss at time `v`.
    pub fn aggregate(&self, v: f64) -> f64 {
        (0..self.default_times.len())
            .map(|i| self.net_loss(i, v))
            .sum()
    }

    /// First default epoch `<= t` at which the aggregate reaches `u`.
    /// The aggregate only jumps upward at epochs, so scanning them in time
    /// order is exact for this path shape.
    pub fn ruin_time(&self, u: f64, t: f64) -> Option<f64> {
        let n = self.default_times.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.default_times[a]
                .partial_cmp(&self.default_times[b])
                .unwrap()
        });
        let mut loss_sum = 0.0;
        let mut time_sum = 0.0;
        for (m, &i) in order.iter().enumerate() {
            let epoch = self.default_times[i];
            if epoch > t {
                break;
            }
            loss_sum += self.losses[i];
            time_sum += epoch;
            let alive = (n - m - 1) as f64;
            let z = loss_sum - self.income_rate * (time_sum + alive * epoch);
            if z >= u {
                return Some(epoch);
            }
        }
        None
    }
}

/// Which estimator produced a [`RuinEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    Direct,
    ImportanceSampling,
}

impl EstimatorMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorMethod::Direct => "direct",
            EstimatorMethod::ImportanceSampling => "is",
        }
    }
}

/// Point estimate with sampling uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuinEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub runs: u64,
    /// Per-run estimator variance (`std_error = sqrt(variance / runs)`).
    pub variance: f64,
    pub method: EstimatorMethod,
    pub seed: u64,
}

/// Partial sums of a contiguous run range; combining chunks in index order
/// reproduces the single-threaded reduction bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkSums {
    pub sum: f64,
    pub sum_sq: f64,
    pub runs: u64,
    pub max_likelihood_ratio: f64,
    pub max_bound_ratio: f64,
    pub bound_ok: bool,
    pub earlier_event_vetoes: u64,
}

impl ChunkSums {
    fn zero() -> Self {
        ChunkSums {
            sum: 0.0,
            sum_sq: 0.0,
            runs: 0,
            max_likelihood_ratio: 0.0,
            max_bound_ratio: 0.0,
            bound_ok: true,
            earlier_event_vetoes: 0,
        }
    }

    /// Fold `other` into `self`; associative, order fixed by the caller.
    pub fn merge(&mut self, other: &ChunkSums) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.runs += other.runs;
        self.max_likelihood_ratio = self.max_likelihood_ratio.max(other.max_likelihood_ratio);
        self.max_bound_ratio = self.max_bound_ratio.max(other.max_bound_ratio);
        self.bound_ok &= other.bound_ok;
        self.earlier_event_vetoes += other.earlier_event_vetoes;
    }
}

fn run_rng(seed: u64, run: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn estimate_from(sums: &ChunkSums, method: EstimatorMethod, seed: u64) -> RuinEstimate {
    let n = sums.runs as f64;
    let mean = sums.sum / n;
    let variance = if sums.runs > 1 {
        ((sums.sum_sq - sums.sum * sums.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let std_error = (variance / n).sqrt();
    let ci95 = if sums.sum == 0.0 {
        // Nothing observed: one-sided rule-of-three interval.
        (0.0, 3.0 / n)
    } else {
        ((mean - 1.96 * std_error).max(0.0), mean + 1.96 * std_error)
    };
    RuinEstimate {
        estimate: mean,
        std_error,
        ci95,
        runs: sums.runs,
        variance,
        method,
        seed,
    }
}

// ---------------------------------------------------------------------------
// Direct simulation.
// ---------------------------------------------------------------------------

/// Context for direct path simulation; reusable across run ranges.
#[derive(Debug, Clone)]
pub struct DirectContext {
    ob: PerObligor,
    n: usize,
    u: f64,
    t: f64,
}

impl DirectContext {
    pub fn new(model: &ValidatedModel, n: usize, u: f64, t: f64) -> Result<Self> {
        if n == 0 || n > model.n_max() {
            return Err(Error::InvalidArgument(format!(
                "obligor count {n} out of range 1..={}",
                model.n_max()
            )));
        }
        if u < 0.0 || t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "need u >= 0 and t >= 0, got u = {u}, t = {t}"
            )));
        }
        Ok(DirectContext {
            ob: model.per_obligor()?,
            n,
            u,
            t,
        })
    }

    /// Simulate runs `[from, to)` of the given seed.
    pub fn run_range(&self, seed: u64, from: u64, to: u64) -> ChunkSums {
        let mut sums = ChunkSums::zero();
        let mut times = Vec::with_capacity(self.n);
        for run in from..to {
            let mut rng = run_rng(seed, run);
            times.clear();
            for _ in 0..self.n {
                times.push(self.ob.default_time.sample(&mut rng));
            }
            // Walk epochs in time order, drawing each loss when its default
            // happens; the reserve only needs checking there.
            let mut order: Vec<usize> = (0..self.n).collect();
            order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
            let mut loss_sum = 0.0;
            let mut time_sum = 0.0;
            let mut ruined = false;
            for (m, &i) in order.iter().enumerate() {
                let epoch = times[i];
                if epoch > self.t {
                    break;
                }
                loss_sum += self.ob.loss.sample(&mut rng);
                time_sum += epoch;
                let alive = (self.n - m - 1) as f64;
                let z = loss_sum - self.ob.income_rate * (time_sum + alive * epoch);
                if z >= self.u {
                    ruined = true;
                    break;
                }
            }
            if ruined {
                sums.sum += 1.0;
                sums.sum_sq += 1.0;
            }
            sums.runs += 1;
        }
        sums
    }
}

/// Frequency estimate of `P(exists s in [0, t]: Z_n(s) >= u)`.
pub fn simulate_direct(
    model: &ValidatedModel,
    n: usize,
    u: f64,
    t: f64,
    runs: u64,
    seed: u64,
) -> Result<RuinEstimate> {
    if runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let ctx = DirectContext::new(model, n, u, t)?;
    let mut total = ChunkSums::zero();
    let mut from = 0;
    while from < runs {
        let to = (from + CHUNK).min(runs);
        total.merge(&ctx.run_range(seed, from, to));
        from = to;
    }
    Ok(estimate_from(&total, EstimatorMethod::Direct, seed))
}

// ---------------------------------------------------------------------------
// Exponential tilting.
// ---------------------------------------------------------------------------

/// The tilted law of one non-anchor obligor, conditioned on the anchor
/// defaulting at `s`: default times get density
/// `f_Q(v) = f(v) (e^{-a r v} lbar(a) 1{v <= s} + e^{-a r s} 1{v > s}) / omega_s(a)`
/// and losses are `a`-tilted exactly when the default lands before `s`.
#[derive(Debug, Clone)]
pub struct TiltedMeasure<'a> {
    ob: &'a PerObligor,
    pub s: f64,
    pub alpha: f64,
    /// `lbar(a) ∫_0^s f e^{-a r v} dv`: unnormalized mass of the tilted piece.
    tilted_mass: f64,
    /// `e^{-a r s} (1 - F(s))`: unnormalized mass of the untilted tail.
    tail_mass: f64,
}

impl<'a> TiltedMeasure<'a> {
    pub fn new(ob: &'a PerObligor, s: f64, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || alpha >= ob.loss.mgf_domain_sup() {
            return Err(Error::InvalidArgument(format!(
                "tilt {alpha} outside [0, {})",
                ob.loss.mgf_domain_sup()
            )));
        }
        let lbar = match ob.loss.mgf(alpha) {
            MgfValue::Finite(v) => v,
            MgfValue::Infinite => unreachable!("checked above"),
        };
        let r = ob.income_rate;
        let (tilted_mass, tail_mass) = match &ob.default_time {
            DefaultTimeDistribution::Exponential { rate } => {
                let c = rate + alpha * r;
                let e1 = rate * (1.0 - (-c * s).exp()) / c;
                (lbar * e1, (-(alpha * r) * s).exp() * (-rate * s).exp())
            }
            DefaultTimeDistribution::Tabulated(tab) => {
                let e1 = tab.exp_weighted_cdf(alpha * r, s);
                (
                    lbar * e1,
                    (-(alpha * r) * s).exp() * (1.0 - tab.cdf(s)),
                )
            }
        };
        Ok(TiltedMeasure {
            ob,
            s,
            alpha,
            tilted_mass,
            tail_mass,
        })
    }

    /// Normalized mixture weights (tilted piece, untilted tail); they sum
    /// to one and the normalizer is exactly `omega_s(alpha)`.
    pub fn mixture_weights(&self) -> (f64, f64) {
        let total = self.tilted_mass + self.tail_mass;
        (self.tilted_mass / total, self.tail_mass / total)
    }

    /// `omega_s(alpha)`, as implied by the mixture masses.
    pub fn normalizer(&self) -> f64 {
        self.tilted_mass + self.tail_mass
    }

    /// Draw a default time from the tilted density.
    pub fn sample_default_time(&self, rng: &mut dyn RngCore) -> f64 {
        let total = self.normalizer();
        let pick = uniform_open(rng) * total;
        match &self.ob.default_time {
            DefaultTimeDistribution::Exponential { rate } => {
                if pick < self.tilted_mass {
                    // Truncated exponential with rate lam + a r on [0, s].
                    let c = rate + self.alpha * self.ob.income_rate;
                    let cap = 1.0 - (-c * self.s).exp();
                    -(1.0 - uniform_open(rng) * cap).ln() / c
                } else {
                    self.s - (uniform_open(rng)).ln() / rate
                }
            }
            DefaultTimeDistribution::Tabulated(tab) => {
                if pick < self.tilted_mass {
                    // Invert v -> ∫_0^v f e^{-a r w} dw by bisection.
                    let c = self.alpha * self.ob.income_rate;
                    let target = uniform_open(rng) * tab.exp_weighted_cdf(c, self.s);
                    let (mut lo, mut hi) = (0.0, self.s);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if tab.exp_weighted_cdf(c, mid) < target {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                } else {
                    tab.sample_conditional(self.s, tab.upper(), rng)
                }
            }
        }
    }

    /// Draw a `(default time, loss)` pair: the loss is tilted exactly when
    /// the default happens before the conditioning time.
    pub fn sample_pair(&self, rng: &mut dyn RngCore) -> Result<(f64, f64)> {
        let time = self.sample_default_time(rng);
        let loss = if time <= self.s {
            self.ob.loss.sample_tilted(self.alpha, rng)?
        } else {
            self.ob.loss.sample(rng)
        };
        Ok((time, loss))
    }
}

/// Draw one default time from the tilted mixture (the anchor conditioning
/// time is `s`, the tilt `alpha`).
pub fn sample_tilted_default_time(
    ob: &PerObligor,
    s: f64,
    alpha: f64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    Ok(TiltedMeasure::new(ob, s, alpha)?.sample_default_time(rng))
}

// ---------------------------------------------------------------------------
// Importance sampling.
// ---------------------------------------------------------------------------

/// Diagnostics accumulated over an importance-sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsDiagnostics {
    /// Largest accepted likelihood ratio.
    pub max_likelihood_ratio: f64,
    /// Largest ratio of an accepted weight to `lbar(a) e^{-(n-1) I(t*)}`;
    /// stays at 1 + O(tilt interpolation error).
    pub max_bound_ratio: f64,
    /// Whether every accepted weight respected its almost-sure bound
    /// `lbar(a) e^{-(n-1)(a u/n - log omega_s(a))}`.
    pub bound_ok: bool,
    /// How many anchor events were vetoed by an earlier obligor's event
    /// (the disjointness bookkeeping of the split).
    pub earlier_event_vetoes: u64,
    /// `I(t*)` used in the diagnostics bound.
    pub rate_at_t_star: f64,
    /// Supremum of the tilt over the evaluation grid.
    pub sup_alpha: f64,
}

/// Context for the importance sampler; holds the tilt curves.
#[derive(Debug, Clone)]
pub struct IsContext {
    ob: PerObligor,
    n: usize,
    u_total: f64,
    u_per: f64,
    t: f64,
    curves: RateCurves,
}

impl IsContext {
    pub fn new(model: &ValidatedModel, n: usize, u_total: f64, t: f64) -> Result<Self> {
        if n == 0 || n > model.n_max() {
            return Err(Error::InvalidArgument(format!(
                "obligor count {n} out of range 1..={}",
                model.n_max()
            )));
        }
        if !(u_total > 0.0) || !(t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need u > 0 and t > 0, got u = {u_total}, t = {t}"
            )));
        }
        let ob = model.per_obligor()?;
        // The tilt targets the per-obligor exceedance.
        let u_per = u_total / n as f64;
        let curve_end = if t.is_finite() {
            t
        } else {
            match &ob.default_time {
                DefaultTimeDistribution::Exponential { rate } => 40.0 / rate,
                DefaultTimeDistribution::Tabulated(tab) => tab.upper(),
            }
        };
        let curves = asymptotics::rate_curves(model, u_per, curve_end, 1024)?;
        Ok(IsContext {
            ob,
            n,
            u_total,
            u_per,
            t,
            curves,
        })
    }

    pub fn rate_at_t_star(&self) -> f64 {
        self.curves.rate_at_t_star
    }

    pub fn sup_alpha(&self) -> f64 {
        self.curves.sup_alpha
    }

    /// Simulate runs `[from, to)`; each run spends one fresh family of
    /// samples on every anchor index.
    pub fn run_range(&self, seed: u64, from: u64, to: u64) -> ChunkSums {
        let n = self.n;
        let r = self.ob.income_rate;
        let sup = self.ob.loss.mgf_domain_sup();
        let mut sums = ChunkSums::zero();
        let mut times = Vec::with_capacity(n);
        let mut losses = Vec::with_capacity(n);
        for run in from..to {
            let mut rng = run_rng(seed, run);
            let mut run_total = 0.0;
            for anchor in 0..n {
                let t_anchor = self.ob.default_time.sample(&mut rng);
                if t_anchor > self.t {
                    continue;
                }
                let s = t_anchor;
                let alpha = self
                    .curves
                    .alpha_at(s)
                    .clamp(1e-12, sup * (1.0 - 1e-9));
                let tilted = match TiltedMeasure::new(&self.ob, s, alpha) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
                let anchor_loss = match self.ob.loss.sample_tilted(alpha, &mut rng) {
                    Ok(l) => l,
                    Err(_) => continue,
                };
                times.clear();
                losses.clear();
                let mut others_net = 0.0;
                let mut family_ok = true;
                for i in 0..n {
                    if i == anchor {
                        times.push(s);
                        losses.push(anchor_loss);
                        continue;
                    }
                    let (ti, li) = match tilted.sample_pair(&mut rng) {
                        Ok(p) => p,
                        Err(_) => {
                            family_ok = false;
                            break;
                        }
                    };
                    let w = if ti <= s { li - r * ti } else { -r * s };
                    others_net += w;
                    times.push(ti);
                    losses.push(li);
                }
                if !family_ok {
                    continue;
                }
                // E_anchor: the anchor's default breaches the reserve.
                let net_at_s = others_net + anchor_loss - r * s;
                if net_at_s < self.u_total {
                    continue;
                }
                // Disjointness: skip if any earlier-indexed obligor's event
                // already happened in this family.
                let sample = PathSample {
                    default_times: core::mem::take(&mut times),
                    losses: core::mem::take(&mut losses),
                    income_rate: r,
                };
                let mut vetoed = false;
                for earlier in 0..anchor {
                    let epoch = sample.default_times[earlier];
                    if epoch <= self.t && sample.aggregate(epoch) >= self.u_total {
                        vetoed = true;
                        break;
                    }
                }
                times = sample.default_times;
                losses = sample.losses;
                if vetoed {
                    sums.earlier_event_vetoes += 1;
                    continue;
                }
                // ln L = -a (L_anchor + sum_{i != anchor} W_i(s))
                //        + ln lbar + (n-1) ln omega: the anchor's default
                // time is drawn from the plain law, so only its loss is
                // tilted; the -r s part of its net loss carries no
                // correction.
                let lbar = match self.ob.loss.mgf(alpha) {
                    MgfValue::Finite(v) => v,
                    MgfValue::Infinite => continue,
                };
                let omega_s = tilted.normalizer();
                let ln_weight = -alpha * (others_net + anchor_loss)
                    + lbar.ln()
                    + (n as f64 - 1.0) * omega_s.ln();
                let weight = ln_weight.exp();
                // Almost-sure bound at the tilt actually used.
                let tilt_rate = alpha * self.u_per - omega_s.ln();
                let ln_bound = lbar.ln() - (n as f64 - 1.0) * tilt_rate;
                if ln_weight > ln_bound + 1e-9 {
                    sums.bound_ok = false;
                }
                let ln_star_bound = lbar.ln() - (n as f64 - 1.0) * self.curves.rate_at_t_star;
                sums.max_bound_ratio = sums.max_bound_ratio.max((ln_weight - ln_star_bound).exp());
                sums.max_likelihood_ratio = sums.max_likelihood_ratio.max(weight);
                run_total += weight;
            }
            sums.sum += run_total;
            sums.sum_sq += run_total * run_total;
            sums.runs += 1;
        }
        sums
    }
}

/// Importance-sampling estimate of `P(exists s in [0, t]: Z_n(s) >= u_total)`.
pub fn simulate_is(
    model: &ValidatedModel,
    n: usize,
    u_total: f64,
    t: f64,
    runs: u64,
    seed: u64,
) -> Result<(RuinEstimate, IsDiagnostics)> {
    if runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let ctx = IsContext::new(model, n, u_total, t)?;
    let mut total = ChunkSums::zero();
    let mut from = 0;
    while from < runs {
        let to = (from + CHUNK).min(runs);
        total.merge(&ctx.run_range(seed, from, to));
        from = to;
    }
    let estimate = estimate_from(&total, EstimatorMethod::ImportanceSampling, seed);
    let diagnostics = IsDiagnostics {
        max_likelihood_ratio: total.max_likelihood_ratio,
        max_bound_ratio: total.max_bound_ratio,
        bound_ok: total.bound_ok,
        earlier_event_vetoes: total.earlier_event_vetoes,
        rate_at_t_star: ctx.rate_at_t_star(),
        sup_alpha: ctx.sup_alpha(),
    };
    Ok((estimate, diagnostics))
}

/// One entry of the decay-rate sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayPoint {
    pub n: usize,
    /// `-log(q_n) / n`; infinite when nothing was observed.
    pub log_rate: f64,
    pub estimate: RuinEstimate,
}

/// Estimate `q_n(t) = p_n(n u, t)` along `n_list` and report the per-obligor
/// decay `-log q_n / n`. Each entry reseeds its substreams so the sequence
/// entries are independent.
pub fn decay_sequence(
    model: &ValidatedModel,
    u_per_obligor: f64,
    t: f64,
    n_list: &[usize],
    runs: u64,
    seed: u64,
) -> Result<Vec<DecayPoint>> {
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let entry_seed = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let (estimate, _) = simulate_is(model, n, u_per_obligor * n as f64, t, runs, entry_seed)?;
        let log_rate = if estimate.estimate > 0.0 {
            -estimate.estimate.ln() / n as f64
        } else {
            f64::INFINITY
        };
        out.push(DecayPoint {
            n,
            log_rate,
            estimate,
        });
    }
    Ok(out)
}
