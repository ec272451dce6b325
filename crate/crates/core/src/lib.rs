//! Ruin probabilities for a transient compound-Poisson risk process with
//! finitely many obligors.
//!
//! Each obligor earns income until its time-to-default, at which point it
//! leaves the portfolio and causes a loss. The crate computes the probability
//! that the aggregate net loss ever exceeds the initial reserve, by four
//! mutually cross-checking routes:
//!
//! - [`transforms`]: recursions for the double transform of the ruin
//!   probability (in reserve and horizon), including model variants with
//!   non-default losses, Brownian perturbation, and multiple obligor groups;
//! - [`inversion`]: numerical Laplace inversion of those transforms;
//! - [`exact`]: a direct fixed-horizon quadrature recursion for exponential
//!   losses;
//! - [`asymptotics`] and [`simulate`]: large-deviations decay rates, a
//!   Lundberg-type bound, and Monte Carlo with a logarithmically efficient
//!   importance-sampling estimator.
//!
//! The crate is `no_std`-compatible (with `alloc`); disable the default
//! `std` feature for embedded use. All public operations are pure functions
//! over immutable inputs and safe to call from concurrent threads.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod asymptotics;
pub mod error;
pub mod exact;
pub mod inversion;
pub mod model;
pub mod numerics;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result};
