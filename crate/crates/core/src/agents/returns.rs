use crate::scalar::Scalar;

/// Discounted returns `R_t = sum_k gamma^k r_{t+k}`, computed backward.
///
/// With `reversed` the reward list is reversed first, which pairs each
/// state with the wrong rewards (the NR fault).
pub fn compute_returns<T: Scalar>(rewards: &[T], gamma: T, reversed: bool) -> Vec<T> {
    bootstrap_returns(rewards, gamma, reversed, T::zero())
}

/// As [`compute_returns`] with `tail_value` standing in for the value after the last reward.
pub fn bootstrap_returns<T: Scalar>(rewards: &[T], gamma: T, reversed: bool, tail_value: T) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut running = tail_value;
    let at = |t: usize| if reversed { rewards[rewards.len() - 1 - t] } else { rewards[t] };
    for t in (0..rewards.len()).rev() {
        running = at(t) + gamma * running;
        out[t] = running;
    }
    out
}
