//! One-dimensional vertical lander.
//!
//! State is `(height, velocity, fuel_fraction)`. Thrust accelerates the unit
//! mass craft upward by `engine_power` while fuel remains; a full tank lasts
//! 100 thrust steps.

const DT: f64 = 0.05;
const INITIAL_HEIGHT: f64 = 10.0;
const FUEL_PER_THRUST: f64 = 0.01;
const STEP_COST: f64 = -0.1;
const LANDING_BONUS: f64 = 100.0;
const VELOCITY_PENALTY: f64 = 50.0;
const CRASH_SPEED: f64 = 2.0;
const CRASH_REWARD: f64 = -100.0;

pub(super) fn reset() -> [f64; 3] {
    [INITIAL_HEIGHT, 0.0, 1.0]
}

/// Reward collected at ground contact with the given velocity, excluding the step cost.
pub(super) fn contact_reward(velocity: f64) -> f64 {
    let speed = velocity.abs();
    if speed > CRASH_SPEED {
        CRASH_REWARD
    } else {
        LANDING_BONUS - VELOCITY_PENALTY * speed
    }
}

pub(super) fn step(gravity: f64, engine_power: f64, s: [f64; 3], action: usize) -> ([f64; 3], f64, bool) {
    let [height, velocity, fuel] = s;
    let thrusting = action == 1 && fuel > 1e-9;
    let accel = if thrusting { engine_power - gravity } else { -gravity };
    let fuel = if thrusting { (fuel - FUEL_PER_THRUST).max(0.0) } else { fuel };

    let next_height = height + DT * velocity;
    if next_height <= 0.0 {
        // explicit Euler: the pre-step velocity is the one that carried the craft down
        return ([0.0, velocity, fuel], STEP_COST + contact_reward(velocity), true);
    }
    ([next_height, velocity + DT * accel, fuel], STEP_COST, false)
}
