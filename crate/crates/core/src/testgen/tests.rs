use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn e0() -> EnvironmentConfig {
    EnvironmentConfig::cartpole()
}

/// Different outside an axis-aligned ellipse around the defaults.
fn ellipse(a: f64, b: f64) -> impl FnMut(&EnvironmentConfig) -> bool {
    move |env| {
        let (x, y) = (env.get("cart_mass") - 1.0, env.get("pole_mass") - 0.1);
        (x / a).powi(2) + (y / b).powi(2) > 1.0
    }
}

#[test]
fn bisection_recovers_scripted_threshold() {
    let mut oracle = |env: &EnvironmentConfig| env.get("cart_mass") > 5.0;
    let b = axis_bisect(&mut oracle, &e0(), "cart_mass", 9.0, 0.01).unwrap();
    let v = b.env.get("cart_mass");
    assert!((4.99..=5.0).contains(&v), "{v}");
    assert!(b.iterations <= (8.0f64 / 0.01).log2().ceil() as u32);
    assert_eq!(b.env.get("pole_mass"), 0.1);
    let w = b.witness.unwrap().get("cart_mass");
    assert!(w > 5.0 && w - v <= 0.01);
}

#[test]
fn bisection_over_random_thresholds() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let threshold = rng.random_range(1.05..49.9);
        let precision = rng.random_range(0.001..0.5);
        let mut oracle = |env: &EnvironmentConfig| env.get("cart_mass") > threshold;
        let b = axis_bisect(&mut oracle, &e0(), "cart_mass", 50.0, precision).unwrap();
        let v = b.env.get("cart_mass");
        assert!(v <= threshold && threshold - v <= precision, "{threshold} {v}");
        assert!(b.iterations <= (49.0 / precision).log2().ceil() as u32);
    }
}

#[test]
fn lower_side_bisection() {
    let mut oracle = |env: &EnvironmentConfig| env.get("pole_mass") < 0.04;
    let b = axis_bisect(&mut oracle, &e0(), "pole_mass", 0.01, 0.001).unwrap();
    let v = b.env.get("pole_mass");
    assert!((0.04..=0.041).contains(&v), "{v}");
}

#[test]
fn limit_not_different_is_returned_directly() {
    let mut oracle = |_: &EnvironmentConfig| false;
    let b = axis_bisect(&mut oracle, &e0(), "cart_mass", 50.0, 0.1).unwrap();
    assert_eq!(b.env.get("cart_mass"), 50.0);
    assert_eq!((b.iterations, b.witness), (0, None));
}

#[test]
fn e0_at_limit_returns_e0() {
    let mut calls = 0;
    let mut oracle = |_: &EnvironmentConfig| {
        calls += 1;
        true
    };
    let b = axis_bisect(&mut oracle, &e0(), "cart_mass", 1.0, 0.1).unwrap();
    assert_eq!(b.env, e0());
    assert_eq!(calls, 0);
}

#[test]
fn depth_controls_cardinality() {
    for (depth, expected) in [(0, 5), (1, 9), (2, 17)] {
        let space = SearchSpace { depth, ..SearchSpace::default_for(EnvId::CartPole) };
        let set = generate_bounds_environments(&mut ellipse(10.0, 1.0), &e0(), &space).unwrap();
        assert_eq!(set.len(), expected, "depth {depth}");
        assert_eq!(set.environments.last().unwrap().config(), e0());
        assert_eq!(set.environments.iter().filter(|g| g.config() == e0()).count(), 1);
    }
}

#[test]
fn frontier_property_holds() {
    let space = SearchSpace::default_for(EnvId::CartPole);
    let mut oracle = ellipse(0.5, 0.05);
    let set = generate_bounds_environments(&mut ellipse(0.5, 0.05), &e0(), &space).unwrap();
    for g in &set.environments[..set.len() - 1] {
        let env = g.config();
        assert!(!oracle(&env));
        let Some(w) = g.provenance.witness.as_ref() else {
            // a midpoint inside the region is kept as is
            assert!(matches!(g.provenance.origin, Origin::Between { .. }));
            continue;
        };
        assert!(oracle(w));
        for axis in &space.axes {
            assert!((w.get(&axis.param) - env.get(&axis.param)).abs() <= axis.precision);
        }
    }
}

#[test]
fn e0_on_a_limit_is_deduplicated() {
    let mut space = SearchSpace::default_for(EnvId::CartPole);
    space.axes[0].lower = 1.0;
    space.depth = 0;
    let set = generate_bounds_environments(&mut ellipse(10.0, 1.0), &e0(), &space).unwrap();
    assert_eq!(set.len(), 4);
}

#[test]
fn rejects_bad_spaces() {
    let mut space = SearchSpace::default_for(EnvId::CartPole);
    space.axes[0].precision = 0.0;
    assert!(generate_bounds_environments(&mut ellipse(1.0, 1.0), &e0(), &space).is_err());
    let mut space = SearchSpace::default_for(EnvId::CartPole);
    space.axes.pop();
    assert!(generate_bounds_environments(&mut ellipse(1.0, 1.0), &e0(), &space).is_err());
    let space = SearchSpace::default_for(EnvId::MiniLander);
    assert!(generate_bounds_environments(&mut ellipse(1.0, 1.0), &e0(), &space).is_err());
}

#[test]
fn json_round_trip() {
    let set = generate_bounds_environments(&mut ellipse(5.0, 0.5), &e0(), &SearchSpace::default_for(EnvId::CartPole)).unwrap();
    let json = set.to_json();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let first = &value.as_array().unwrap()[0];
    for key in ["env_id", "params", "provenance"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(TestEnvironmentSet::from_json(&json).unwrap(), set);
}

proptest! {
    #[test]
    fn generation_is_bounded_and_deterministic(a in 0.5f64..60.0, b in 0.02f64..6.0, depth in 0usize..3) {
        let space = SearchSpace { depth, ..SearchSpace::default_for(EnvId::CartPole) };
        let first = generate_bounds_environments(&mut ellipse(a, b), &e0(), &space).unwrap();
        let second = generate_bounds_environments(&mut ellipse(a, b), &e0(), &space).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert!(first.len() <= 4 * (1 << depth) + 1);
        let mut oracle = ellipse(a, b);
        for (i, g) in first.environments.iter().enumerate() {
            prop_assert!(!oracle(&g.config()));
            for h in &first.environments[i + 1..] {
                prop_assert_ne!(&g.params, &h.params);
            }
        }
    }
}
