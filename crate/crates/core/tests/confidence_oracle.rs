mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sparsebandit::confidence::{
    gamma_delta, safe_index, seqsew_regret_bound, ConversionParams, RadiusLadder,
};
use sparsebandit::{CovarianceState, Error};

fn gamma(b_t: f64, delta: f64) -> f64 {
    gamma_delta(&ConversionParams {
        b_t,
        delta,
        c_universal: 1.0,
        t_horizon: 1,
    })
    .unwrap()
}

#[test]
fn matches_high_precision_fixtures() {
    let fixtures = conversion_fixtures();
    assert_eq!(fixtures.len(), 100);
    for fx in fixtures {
        let (got, want) = match fx {
            Fixture::Gamma { b_t, delta, value } => (gamma(b_t, delta), value),
            Fixture::SeqSew { l0, l1, horizon, c, value } => {
                (seqsew_regret_bound(l0, l1, horizon, c).unwrap(), value)
            }
        };
        assert!(((got - want) / want).abs() <= 1e-10, "{fx:?}: got {got}");
    }
}

#[test]
fn pinned_values() {
    assert!((gamma(3.0, 1e-4) - 353.11555646578147).abs() <= 1e-9);
    assert!((seqsew_regret_bound(1, 1.0, 10_000, 1.0).unwrap() - 7.551271079954694).abs() <= 1e-12);
    let diff = gamma(0.0, 0.125) - gamma(0.0, 0.25);
    assert!((diff - 32.0 * 2f64.ln()).abs() <= 1e-12);
}

#[test]
fn safe_index_boundaries() {
    let ladder = RadiusLadder::fixed_horizon(5, 10_000).unwrap();
    let t = ladder.horizon();
    assert_eq!(safe_index(&ladder, 89.33).unwrap(), 4);
    assert_eq!(safe_index(&ladder, ladder.radius(1, t).unwrap()).unwrap(), 1);
    assert_eq!(safe_index(&ladder, ladder.radius(5, t).unwrap()).unwrap(), 5);
    assert!(matches!(
        safe_index(&ladder, ladder.radius(5, t).unwrap() * 1.0001),
        Err(Error::LadderTooShort { .. })
    ));
    let td = RadiusLadder::time_dependent(5, 10_000).unwrap();
    assert!(safe_index(&td, 1.0).is_err());
}

proptest! {
    #[test]
    fn safe_index_matches_scan(n in 1usize..12, horizon in 2u64..1_000_000, gamma in 0.0f64..5000.0) {
        let ladder = RadiusLadder::fixed_horizon(n, horizon).unwrap();
        match (safe_index(&ladder, gamma), scan_safe_level(n, horizon, gamma)) {
            (Ok(o), Some(expected)) => prop_assert_eq!(o, expected),
            (Err(Error::LadderTooShort { .. }), None) => {}
            (got, expected) => prop_assert!(false, "{:?} vs {:?}", got, expected),
        }
    }

    #[test]
    fn safe_index_is_monotone(n in 1usize..10, horizon in 2u64..100_000, g1 in 0.0f64..3000.0, g2 in 0.0f64..3000.0) {
        let ladder = RadiusLadder::fixed_horizon(n, horizon).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        if let Ok(high) = safe_index(&ladder, hi) {
            prop_assert!(safe_index(&ladder, lo).unwrap() <= high);
        }
    }

    #[test]
    fn gamma_within_bracket(b in 0.0f64..50.0, horizon in 4u64..10_000_000, frac in 0.0f64..1.0) {
        let t = horizon as f64;
        let delta = 1.0 / t + frac * (0.25 - 1.0 / t);
        let g = gamma(b, delta);
        let upper = 2.0 + 2.0 * b + 32.0 * ((8f64.sqrt() + (1.0 + b).sqrt()) * 4.0 * t).ln();
        prop_assert!(g >= 2.0 + 2.0 * b && g <= upper + 1e-9);
        prop_assert!(gamma(b + 0.5, delta) > g);
    }

    #[test]
    fn seqsew_monotone_and_linear(l0 in 1usize..50, l1 in 0.0f64..100.0, horizon in 1u64..1_000_000) {
        let base = seqsew_regret_bound(l0, l1, horizon, 1.0).unwrap();
        prop_assert!(seqsew_regret_bound(l0 + 1, l1, horizon, 1.0).unwrap() >= base);
        prop_assert!(seqsew_regret_bound(l0, l1 + 1.0, horizon, 1.0).unwrap() >= base);
        prop_assert!(seqsew_regret_bound(l0, l1, horizon + 1, 1.0).unwrap() >= base);
        let doubled = seqsew_regret_bound(2 * l0, 2.0 * l1, horizon, 1.0).unwrap();
        prop_assert!((doubled - 2.0 * base).abs() <= 1e-9 * base.max(1.0));
    }
}

/// Every θ in the regression-loss set of radius `γ(1/T)` lies in the
/// ellipsoid of the safe level.
#[test]
fn containment_chain() {
    let horizon = 2000u64;
    let dim = 4;
    let g = gamma_delta(&ConversionParams::at_horizon(0.0, horizon).unwrap()).unwrap();
    let ladder = RadiusLadder::fixed_horizon(6, horizon).unwrap();
    let o = safe_index(&ladder, g).unwrap();
    let alpha_o = ladder.radius(o, horizon).unwrap();

    let mut r = rng(5);
    let theta_star = sphere(dim, &mut r);
    let mut state = CovarianceState::new(dim).unwrap();
    let mut actions = Vec::new();
    let mut xs = Vec::new();
    let mut checked = 0;
    for t in 1..=horizon {
        if t % 100 == 0 {
            let hat = state.theta_hat().clone();
            let loss = |th: &Vec64| -> f64 {
                th.norm_squared()
                    + actions
                        .iter()
                        .zip(&xs)
                        .map(|(a, x): (&Vec64, &f64)| (x - a.dot(th)).powi(2))
                        .sum::<f64>()
            };
            for _ in 0..50 {
                let theta = &hat + sphere(dim, &mut r) * r.random_range(0.0..2.0);
                if loss(&theta) <= g {
                    let diff = &theta - &hat;
                    assert!(diff.dot(&(state.v() * &diff)) <= alpha_o + 1e-9);
                    checked += 1;
                }
            }
        }
        let a = sphere(dim, &mut r);
        let x = a.dot(&theta_star) + r.random_range(-1.0..=1.0);
        state.observe(&a, x).unwrap();
        actions.push(a);
        xs.push(x);
    }
    assert!(checked > 100, "only {checked} points fell inside the loss set");
}
