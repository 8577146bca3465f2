//! Q-learning with replay, epsilon-greedy exploration, and a target network.
//! Targets use the online network to pick the next action and the target
//! network to score it.

use rand::Rng;

use super::{argmax, AlgoSpec, TrainError, TrainingEnv, Transition, TransitionObserver};
use crate::nn::{network_update, RegressionSample};
use crate::seeding::rng_for;
use crate::{Mlp, Optimizer};

struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    fn new(capacity: usize) -> Self {
        ReplayBuffer { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, next: 0 }
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

fn epsilon_at(spec: &AlgoSpec, step: u64) -> f64 {
    let q = &spec.qnet;
    let horizon = (q.epsilon_fraction * spec.training_budget as f64).max(1.0);
    let frac = (step as f64 / horizon).min(1.0);
    q.epsilon_start + frac * (q.epsilon_end - q.epsilon_start)
}

pub(super) fn train(
    spec: &AlgoSpec,
    mut env: TrainingEnv<'_>,
    seed: u64,
    observer: &mut TransitionObserver<'_>,
) -> Result<Mlp, TrainError> {
    let env_id = env.config.env_id;
    let n_actions = env_id.n_actions();
    let mut online = Mlp::new(&spec.network_shape(env_id, n_actions), spec.activation, &mut rng_for(seed, "init"));
    let mut target = online.clone();
    let mut optimizer = Optimizer::new(spec.optimizer, spec.learning_rate, &online);
    let mut explore = rng_for(seed, "explore");
    let mut sampler = rng_for(seed, "replay");
    let mut buffer = ReplayBuffer::new(spec.qnet.replay_capacity);
    let batch_size = spec.qnet.batch_size;
    let mut batch = Vec::with_capacity(batch_size);

    for step in 0..spec.training_budget {
        let progress = step as f64 / spec.training_budget as f64;
        optimizer.learning_rate = spec.learning_rate * (1.0 - progress * (1.0 - spec.qnet.final_lr_fraction));
        let action = if explore.random::<f64>() < epsilon_at(spec, step) {
            explore.random_range(0..n_actions)
        } else {
            argmax(&online.forward(&env.view))
        };
        let first = env.first_state.clone();
        let out = env.step(action)?;
        observer(&out.transition, &first);
        buffer.push(out.transition);

        if step >= spec.qnet.learning_starts && step % spec.qnet.train_every == 0 && buffer.len() >= batch_size {
            batch.clear();
            for _ in 0..batch_size {
                let t = &buffer.items[sampler.random_range(0..buffer.len())];
                let target_value = if t.done {
                    t.reward
                } else {
                    let next_action = argmax(&online.forward(&t.next_state));
                    t.reward + spec.gamma * target.forward(&t.next_state)[next_action]
                };
                batch.push(RegressionSample { input: t.state.clone(), output: t.action, target: target_value });
            }
            network_update(&mut online, &mut optimizer, &batch, spec.loss, Some(spec.qnet.max_grad_norm))
                .map_err(|source| TrainError::Network { step, source })?;
            if spec.qnet.target_tau < 1.0 {
                let tau = spec.qnet.target_tau;
                for (t, o) in target.params_mut().zip(online.params()) {
                    *t += tau * (o - *t);
                }
            }
        }
        if spec.qnet.target_tau >= 1.0 && step % spec.qnet.target_sync_interval == 0 {
            target.clone_from(&online);
        }
    }
    if !online.is_finite() {
        return Err(TrainError::Network {
            step: spec.training_budget,
            source: crate::nn::NnError::NonFiniteGradient { context: "weights diverged".into() },
        });
    }
    Ok(online)
}
