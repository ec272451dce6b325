//! Property-based invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use ruin_core::model::{validate, LossDistribution, MgfValue, PortfolioModel};
use ruin_core::simulate::PathSample;
use ruin_core::transforms;

fn loss_strategy() -> impl Strategy<Value = LossDistribution> {
    prop_oneof![
        (0.2f64..4.0).prop_map(|rate| LossDistribution::Exponential { rate }),
        (0.0f64..5.0).prop_map(|value| LossDistribution::Deterministic { value }),
        ((1u32..5), (0.2f64..4.0))
            .prop_map(|(shape, rate)| LossDistribution::Erlang { shape, rate }),
    ]
}

proptest! {
    #[test]
    fn laplace_equals_mgf_at_negated_argument(loss in loss_strategy(), gamma in 0.0f64..20.0) {
        let lap = loss.laplace(gamma).unwrap();
        match loss.mgf(-gamma) {
            MgfValue::Finite(m) => prop_assert_eq!(lap, m),
            MgfValue::Infinite => prop_assert!(false, "mgf must be finite at nonpositive arguments"),
        }
        prop_assert!((0.0..=1.0).contains(&lap));
    }

    #[test]
    fn laplace_is_decreasing(loss in loss_strategy(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(loss.laplace(lo).unwrap() >= loss.laplace(hi).unwrap() - 1e-15);
    }

    #[test]
    fn validate_is_idempotent(
        n in 1usize..8,
        lambda in 0.05f64..3.0,
        r in 0.05f64..3.0,
        mu in 0.2f64..3.0,
    ) {
        let once = validate(PortfolioModel::proportional(
            n, lambda, r, LossDistribution::Exponential { rate: mu },
        )).unwrap();
        let twice = validate(once.inner().clone()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn ruin_scan_agrees_with_aggregate_maximum(
        seed in 0u64..1000,
        n in 1usize..6,
        u in 0.0f64..6.0,
        horizon in 0.1f64..8.0,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let loss = LossDistribution::Exponential { rate: 1.0 };
        let time = |rng: &mut ChaCha12Rng| loss.sample(rng) / 0.7;
        let sample = PathSample {
            default_times: (0..n).map(|_| time(&mut rng)).collect(),
            losses: (0..n).map(|_| loss.sample(&mut rng)).collect(),
            income_rate: 0.9,
        };
        // Brute force: the aggregate evaluated at every epoch in the window.
        let brute = sample
            .default_times
            .iter()
            .copied()
            .filter(|&e| e <= horizon)
            .filter(|&e| sample.aggregate(e) >= u)
            .fold(f64::INFINITY, f64::min);
        match sample.ruin_time(u, horizon) {
            Some(epoch) => prop_assert!((epoch - brute).abs() < 1e-12),
            None => prop_assert!(brute.is_infinite()),
        }
    }

    #[test]
    fn transform_range_on_random_proportional_models(
        lambda in 0.2f64..1.5,
        margin in 1.05f64..3.0,
        mu in 0.5f64..2.0,
        gamma in 0.05f64..6.0,
        theta in 0.0f64..2.0,
        n in 1usize..6,
    ) {
        // Keep the net-profit side sensible: r above lambda E L.
        let r = margin * lambda / mu;
        let m = validate(PortfolioModel::proportional(
            n, lambda, r, LossDistribution::Exponential { rate: mu },
        )).unwrap();
        if let Ok(psi) = transforms::psi(&m, n, theta, gamma) {
            let v = gamma * psi;
            prop_assert!((-1e-6..=1.0 + 1e-6).contains(&v), "gamma psi = {}", v);
        }
    }
}
