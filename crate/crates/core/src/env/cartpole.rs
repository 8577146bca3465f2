//! Classic cart-pole dynamics, explicit Euler integration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAVITY: f64 = 9.8;
const HALF_LENGTH: f64 = 0.5;
const FORCE: f64 = 10.0;
const DT: f64 = 0.02;
const POSITION_LIMIT: f64 = 2.4;
/// Pole angle (radians) beyond which the episode fails: 12 degrees.
pub const CARTPOLE_ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const INIT_RANGE: f64 = 0.05;

pub(super) fn reset(seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
}

/// Returns `(next_state, reward, failed)`. State is `(x, x_dot, theta, theta_dot)`.
pub(super) fn step(cart_mass: f64, pole_mass: f64, s: [f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let [x, x_dot, theta, theta_dot] = s;
    let force = if action == 1 { FORCE } else { -FORCE };
    let total_mass = cart_mass + pole_mass;
    let pole_mass_length = pole_mass * HALF_LENGTH;
    let (sin, cos) = theta.sin_cos();

    let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;

    let next = [
        x + DT * x_dot,
        x_dot + DT * x_acc,
        theta + DT * theta_dot,
        theta_dot + DT * theta_acc,
    ];
    let failed = next[0].abs() > POSITION_LIMIT || next[2].abs() > CARTPOLE_ANGLE_LIMIT;
    (next, 1.0, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_and_bounded() {
        assert_eq!(reset(7), reset(7));
        for seed in 0..1000 {
            for v in reset(seed) {
                assert!(v.abs() <= INIT_RANGE, "seed {seed}: {v}");
            }
        }
        assert_ne!(reset(1), reset(2));
    }

    #[test]
    fn euler_step_from_rest_pushing_right() {
        // Hand evaluation with m_c = 1.0, m_p = 0.1, l = 0.5, F = 10, theta = 0:
        //   temp = F / 1.1
        //   theta_acc = -temp / (l * (4/3 - 0.1 / 1.1))
        //   x_acc = temp - 0.05 * theta_acc / 1.1
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        let expected = [0.0, 0.02 * x_acc, 0.0, 0.02 * theta_acc];
        let (next, reward, failed) = step(1.0, 0.1, [0.0; 4], 1);
        for (a, b) in next.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((next[1] - 0.195_121_951_219_512_2).abs() < 1e-12);
        assert!((next[3] + 0.292_682_926_829_268_3).abs() < 1e-12);
        assert_eq!(reward, 1.0);
        assert!(!failed);
    }

    #[test]
    fn tilted_pole_fails() {
        let limit_deg = 12.0_f64;
        let theta = (limit_deg + 0.5).to_radians();
        let (next, reward, failed) = step(1.0, 0.1, [0.0, 0.0, theta, 0.0], 0);
        let predicate = next[0].abs() > 2.4 || next[2].abs() > limit_deg.to_radians();
        assert!(predicate);
        assert!(failed);
        assert_eq!(reward, 1.0);
    }

    #[test]
    fn cart_mass_perturbation_is_continuous() {
        let s = reset(11);
        let (a, _, _) = step(1.0, 0.1, s, 1);
        let (b, _, _) = step(1.0 + 1e-10, 0.1, s, 1);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
