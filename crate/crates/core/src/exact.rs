//! Direct fixed-horizon ruin probabilities for exponential losses.
//!
//! Conditioning on the first default turns `p_n(u, t)` into an integral of
//! `p_{n-1}` against the default-epoch and loss densities:
//!
//! ```text
//! p_n(u,t) = 1 - e^{-L_n t}
//!          - INT_0^t INT_0^{u + r_n s} L_n e^{-L_n s} (1 - p_{n-1}(u + r_n s - x, t - s))
//!                 mu e^{-mu x} dx ds
//! ```
//!
//! The one-obligor seed has the closed form
//! `p_1(u,t) = L_1 e^{-mu u} / (L_1 + mu r_1) (1 - e^{-(L_1 + mu r_1) t})`,
//! and higher levels are built on a tensor grid: the inner loss convolution
//! integrates the piecewise linear interpolant against `mu e^{-mu x}`
//! exactly per cell (a running recurrence along the reserve axis), and the
//! outer epoch integral uses composite Simpson. Splitting off the
//! first-default-causes-ruin part in closed form leaves
//!
//! ```text
//! p_n(u,t) = p1-like(L_n, r_n; u, t) + INT_0^t L_n e^{-L_n s} q_n(u + r_n s, t - s) ds,
//! q_n(w, tau) = INT_0^w p_{n-1}(w - x, tau) mu e^{-mu x} dx.
//! ```

use crate::error::{Error, Result};
use crate::model::{LossDistribution, ValidatedModel};
use crate::numerics;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Grid resolution for the quadrature recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub u_max: f64,
    pub t_max: f64,
    /// Number of reserve-axis cells (nodes are `n_u + 1`).
    pub n_u: usize,
    /// Number of time-axis cells.
    pub n_t: usize,
}

impl GridSpec {
    /// Default grid for a query at reserve `u_query` up to horizon `t_max`:
    /// the reserve axis covers the income earned over the horizon plus an
    /// exponential-tail allowance of `40 / mu`.
    pub fn covering(model: &ValidatedModel, n: usize, u_query: f64, t_max: f64) -> Result<Self> {
        let mu = exponential_rate(model)?;
        let r_top = model.income()[..n.max(1)]
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        Ok(GridSpec {
            u_max: u_query + r_top * t_max + 40.0 / mu,
            t_max,
            n_u: 512,
            n_t: 256,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u < 16 || self.n_t < 16 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 16 cells per axis, got {} x {}",
                self.n_u, self.n_t
            )));
        }
        if !(self.u_max > 0.0) || !(self.t_max > 0.0) {
            return Err(Error::InvalidArgument(String::from(
                "grid extents must be positive",
            )));
        }
        Ok(())
    }

    fn halved(&self) -> GridSpec {
        GridSpec {
            n_u: (self.n_u / 2).max(16),
            n_t: (self.n_t / 2).max(16),
            ..*self
        }
    }
}

fn exponential_rate(model: &ValidatedModel) -> Result<f64> {
    match model.loss() {
        LossDistribution::Exponential { rate } => Ok(*rate),
        other => Err(Error::Inapplicable(format!(
            "the quadrature recursion needs exponential losses, got {other:?}; \
             use transform inversion or simulation instead"
        ))),
    }
}

/// Ruin probabilities of one level tabulated over the `(u, t)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RuinGrid {
    pub level: usize,
    pub u_max: f64,
    pub t_max: f64,
    pub n_u: usize,
    pub n_t: usize,
    /// Row-major by time index: `values[j * (n_u + 1) + i]`.
    values: Vec<f64>,
    /// Whether `p(u_max, t_max) < 1e-10`, i.e. the reserve axis is long
    /// enough that the tail truncation is invisible.
    pub tail_ok: bool,
    /// Cells whose raw quadrature value escaped `[0, 1]` and were clamped.
    pub clamped_cells: usize,
}

impl RuinGrid {
    pub fn u_step(&self) -> f64 {
        self.u_max / self.n_u as f64
    }

    pub fn t_step(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn u_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_u).map(|i| i as f64 * self.u_step())
    }

    pub fn t_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_t).map(|j| j as f64 * self.t_step())
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.n_u + 1) + i]
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.values[j * (self.n_u + 1)..(j + 1) * (self.n_u + 1)]
    }

    /// Bilinear interpolation; arguments are clamped into the grid box.
    pub fn value_at(&self, u: f64, t: f64) -> f64 {
        let fu = (u.max(0.0) / self.u_step()).min(self.n_u as f64);
        let ft = (t.max(0.0) / self.t_step()).min(self.n_t as f64);
        let i = (fu as usize).min(self.n_u - 1);
        let j = (ft as usize).min(self.n_t - 1);
        let wu = fu - i as f64;
        let wt = ft - j as f64;
        let w = self.n_u + 1;
        let base = j * w + i;
        (1.0 - wt) * ((1.0 - wu) * self.values[base] + wu * self.values[base + 1])
            + wt * ((1.0 - wu) * self.values[base + w] + wu * self.values[base + w + 1])
    }
}

/// Closed-form one-obligor ruin probability for exponential losses; `t` may
/// be infinite.
pub fn p1_exact(lambda1: f64, r1: f64, mu: f64, u: f64, t: f64) -> f64 {
    if t <= 0.0 || u < 0.0 {
        return 0.0;
    }
    let head = lambda1 * (-mu * u).exp() / (lambda1 + mu * r1);
    if t.is_infinite() {
        head
    } else {
        head * (1.0 - (-(lambda1 + mu * r1) * t).exp())
    }
}

/// Level-by-level quadrature recursion; returns the grids for levels
/// `1..=n`.
pub fn pn_grids(model: &ValidatedModel, n: usize, spec: &GridSpec) -> Result<Vec<RuinGrid>> {
    spec.validate()?;
    let mu = exponential_rate(model)?;
    if n == 0 || n > model.n_max() {
        return Err(Error::InvalidArgument(format!(
            "level {n} out of range 1..={}",
            model.n_max()
        )));
    }
    let n_u = spec.n_u;
    let n_t = spec.n_t;
    let h_u = spec.u_max / n_u as f64;
    let h_t = spec.t_max / n_t as f64;
    let width = n_u + 1;

    let mut grids: Vec<RuinGrid> = Vec::with_capacity(n);
    for level in 1..=n {
        let lam = model.lambda()[level - 1];
        let r = model.income()[level - 1];
        let mut values = vec![0.0f64; width * (n_t + 1)];
        let mut clamped = 0usize;

        if level == 1 {
            for j in 0..=n_t {
                let t = j as f64 * h_t;
                for i in 0..=n_u {
                    values[j * width + i] = p1_exact(lam, r, mu, i as f64 * h_u, t);
                }
            }
        } else {
            let prev = grids.last().unwrap();
            // Loss convolution q(w, tau) on the same grid, by the exact
            // per-cell recurrence along the reserve axis.
            let decay = (-mu * h_u).exp();
            let mut q = vec![0.0f64; width * (n_t + 1)];
            for j in 0..=n_t {
                let p_row = prev.row(j);
                let q_row = &mut q[j * width..(j + 1) * width];
                for i in 1..=n_u {
                    q_row[i] = decay * q_row[i - 1]
                        + numerics::exp_weighted_linear(p_row[i], p_row[i - 1], h_u, mu);
                }
            }
            let q_at = |w: f64, tau: f64| -> f64 {
                let ft = (tau.max(0.0) / h_t).min(n_t as f64);
                let j = (ft as usize).min(n_t - 1);
                let wt = ft - j as f64;
                let col = |jj: usize, w: f64| -> f64 {
                    let row = &q[jj * width..(jj + 1) * width];
                    if w >= spec.u_max {
                        // Beyond the table the convolution tail decays like
                        // the loss density itself.
                        row[n_u] * (-mu * (w - spec.u_max)).exp()
                    } else {
                        let fu = w.max(0.0) / h_u;
                        let i = (fu as usize).min(n_u - 1);
                        let wu = fu - i as f64;
                        row[i] * (1.0 - wu) + row[i + 1] * wu
                    }
                };
                col(j, w) * (1.0 - wt) + col(j + 1, w) * wt
            };

            for j in 1..=n_t {
                let t = j as f64 * h_t;
                let m = (2 * j).max(16);
                for i in 0..=n_u {
                    let u = i as f64 * h_u;
                    let integrand =
                        |s: f64| lam * (-lam * s).exp() * q_at(u + r * s, t - s);
                    let tail = numerics::simpson(&integrand, 0.0, t, m);
                    let mut v = p1_exact(lam, r, mu, u, t) + tail;
                    if !(0.0..=1.0).contains(&v) {
                        clamped += 1;
                        v = v.clamp(0.0, 1.0);
                    }
                    values[j * width + i] = v;
                }
            }
        }

        let tail_ok = (0..=n_t).all(|j| values[j * width + n_u] < 1e-10);
        grids.push(RuinGrid {
            level,
            u_max: spec.u_max,
            t_max: spec.t_max,
            n_u,
            n_t,
            values,
            tail_ok,
            clamped_cells: clamped,
        });
    }
    Ok(grids)
}

/// Level-`n` grid only.
pub fn pn_grid(model: &ValidatedModel, n: usize, spec: &GridSpec) -> Result<RuinGrid> {
    Ok(pn_grids(model, n, spec)?.pop().expect("n >= 1"))
}

/// Level-`n` grid plus a Richardson-style discretization estimate: the
/// largest gap to a half-resolution rerun over its nodes.
pub fn pn_grid_refined(
    model: &ValidatedModel,
    n: usize,
    spec: &GridSpec,
) -> Result<(RuinGrid, f64)> {
    let fine = pn_grid(model, n, spec)?;
    let coarse = pn_grid(model, n, &spec.halved())?;
    let mut gap = 0.0f64;
    for j in 0..=coarse.n_t {
        let t = j as f64 * coarse.t_step();
        for i in 0..=coarse.n_u {
            let u = i as f64 * coarse.u_step();
            gap = gap.max((coarse.node(i, j) - fine.value_at(u, t)).abs());
        }
    }
    Ok((fine, gap))
}
