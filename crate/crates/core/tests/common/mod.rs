//! Standalone Monte Carlo oracles for transform cross-checks.
//!
//! These simulators are deliberately independent of the library's own
//! `simulate` module: they integrate the level-based process directly
//! (competing exponential clocks, one event at a time) and only share the
//! random number generator crate. `1 - gamma psi_n(gamma) = E e^{-gamma Z}`
//! with `Z` the running maximum of the net loss over an exponentially
//! killed window, so transform values can be checked against sample means
//! of `e^{-gamma Z}` without any inversion machinery.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn uniform(rng: &mut ChaCha12Rng) -> f64 {
    1.0 - (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn exp_sample(rate: f64, rng: &mut ChaCha12Rng) -> f64 {
    -uniform(rng).ln() / rate
}

/// Mean and standard error of `e^{-gamma Z}` for the base model with
/// per-level default rates `lambda[k]` and income rates `income[k]`
/// (level = number of obligors alive), exponential losses of rate `mu`,
/// and an exponential horizon clock of rate `theta` (0 = infinite).
pub fn transform_oracle_base(
    lambda: &[f64],
    income: &[f64],
    mu: f64,
    theta: f64,
    gamma: f64,
    runs: u64,
    seed: u64,
) -> (f64, f64) {
    let n = lambda.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..runs {
        let kill = if theta > 0.0 {
            exp_sample(theta, &mut rng)
        } else {
            f64::INFINITY
        };
        let mut z = 0.0f64;
        let mut zmax = 0.0f64;
        let mut clock = 0.0f64;
        let mut level = n;
        while level > 0 {
            let wait = exp_sample(lambda[level - 1], &mut rng);
            if clock + wait > kill {
                break;
            }
            clock += wait;
            z += exp_sample(mu, &mut rng) - income[level - 1] * wait;
            zmax = zmax.max(z);
            level -= 1;
        }
        let v = (-gamma * zmax).exp();
        sum += v;
        sq += v * v;
    }
    let mean = sum / runs as f64;
    let var = (sq - sum * sum / runs as f64) / (runs as f64 - 1.0);
    (mean, (var / runs as f64).sqrt())
}

/// Same statistic for the model with an extra non-default loss stream:
/// rates `extra[k]` and exponential extra losses of rate `mu_extra`.
pub fn transform_oracle_nondefault(
    lambda: &[f64],
    extra: &[f64],
    income: &[f64],
    mu: f64,
    mu_extra: f64,
    theta: f64,
    gamma: f64,
    runs: u64,
    seed: u64,
) -> (f64, f64) {
    let n = lambda.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..runs {
        let kill = if theta > 0.0 {
            exp_sample(theta, &mut rng)
        } else {
            f64::INFINITY
        };
        let mut z = 0.0f64;
        let mut zmax = 0.0f64;
        let mut clock = 0.0f64;
        let mut level = n;
        while level > 0 {
            let total = lambda[level - 1] + extra[level - 1];
            let wait = exp_sample(total, &mut rng);
            if clock + wait > kill {
                break;
            }
            clock += wait;
            z -= income[level - 1] * wait;
            if uniform(&mut rng) * total < lambda[level - 1] {
                z += exp_sample(mu, &mut rng);
                level -= 1;
            } else {
                z += exp_sample(mu_extra, &mut rng);
            }
            zmax = zmax.max(z);
        }
        let v = (-gamma * zmax).exp();
        sum += v;
        sq += v * v;
    }
    let mean = sum / runs as f64;
    let var = (sq - sum * sum / runs as f64) / (runs as f64 - 1.0);
    (mean, (var / runs as f64).sqrt())
}

/// Two-group oracle: per-obligor rates `(lambda_j, r_j)`, counts `n_j`,
/// exponential losses of rate `mu_j` per group.
#[allow(clippy::too_many_arguments)]
pub fn transform_oracle_two_groups(
    counts: [usize; 2],
    lambda: [f64; 2],
    income: [f64; 2],
    mu: [f64; 2],
    theta: f64,
    gamma: f64,
    runs: u64,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..runs {
        let kill = if theta > 0.0 {
            exp_sample(theta, &mut rng)
        } else {
            f64::INFINITY
        };
        let mut alive = counts;
        let mut z = 0.0f64;
        let mut zmax = 0.0f64;
        let mut clock = 0.0f64;
        while alive[0] + alive[1] > 0 {
            let rate0 = lambda[0] * alive[0] as f64;
            let rate1 = lambda[1] * alive[1] as f64;
            let total_rate = rate0 + rate1;
            let pay = income[0] * alive[0] as f64 + income[1] * alive[1] as f64;
            let wait = exp_sample(total_rate, &mut rng);
            if clock + wait > kill {
                break;
            }
            clock += wait;
            z -= pay * wait;
            let group = if uniform(&mut rng) * total_rate < rate0 {
                0
            } else {
                1
            };
            z += exp_sample(mu[group], &mut rng);
            alive[group] -= 1;
            zmax = zmax.max(z);
        }
        let v = (-gamma * zmax).exp();
        sum += v;
        sq += v * v;
    }
    let mean = sum / runs as f64;
    let var = (sq - sum * sum / runs as f64) / (runs as f64 - 1.0);
    (mean, (var / runs as f64).sqrt())
}

/// Ruin frequency before an exponential clock: `P(Z >= u)` for the base
/// proportional model.
pub fn ruin_oracle_exp_horizon(
    lambda: &[f64],
    income: &[f64],
    mu: f64,
    theta: f64,
    u: f64,
    runs: u64,
    seed: u64,
) -> (f64, f64) {
    let n = lambda.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..runs {
        let kill = if theta > 0.0 {
            exp_sample(theta, &mut rng)
        } else {
            f64::INFINITY
        };
        let mut z = 0.0f64;
        let mut clock = 0.0f64;
        let mut level = n;
        while level > 0 {
            let wait = exp_sample(lambda[level - 1], &mut rng);
            if clock + wait > kill {
                break;
            }
            clock += wait;
            z += exp_sample(mu, &mut rng) - income[level - 1] * wait;
            if z >= u {
                hits += 1;
                break;
            }
            level -= 1;
        }
    }
    let p = hits as f64 / runs as f64;
    (p, (p * (1.0 - p) / runs as f64).sqrt())
}
