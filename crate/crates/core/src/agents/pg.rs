//! Monte-Carlo policy gradient with a value-function baseline.

use rand::Rng;

use super::{bootstrap_returns, AlgoSpec, TrainError, TrainingEnv, Transition, TransitionObserver};
use crate::nn::{network_update, ForwardCache, Gradients, NnError, RegressionSample};
use crate::seeding::rng_for;
use crate::{Mlp, Optimizer};

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sample_action<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

struct Batch {
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    returns: Vec<f64>,
}

fn tail_value(value: Option<&Mlp>, last: &Transition) -> f64 {
    match value {
        Some(v) if !last.done => v.forward(&last.next_state)[0],
        _ => 0.0,
    }
}

fn assemble(spec: &AlgoSpec, segments: Vec<Vec<Transition>>, value: Option<&Mlp>) -> Batch {
    let reversed = spec.faults.reverse_returns;
    let mut batch = Batch { states: Vec::new(), actions: Vec::new(), returns: Vec::new() };
    let streams = if spec.faults.drop_terminal {
        // without terminal flags episode boundaries are invisible: one stream
        vec![segments.into_iter().flatten().collect::<Vec<_>>()]
    } else {
        segments
    };
    for stream in streams {
        let Some(last) = stream.last() else { continue };
        let tail = tail_value(value, last);
        let rewards: Vec<f64> = stream.iter().map(|t| t.reward).collect();
        batch.returns.extend(bootstrap_returns(&rewards, spec.gamma, reversed, tail));
        for t in stream {
            batch.states.push(t.state);
            batch.actions.push(t.action);
        }
    }
    batch
}

fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter_mut().for_each(|x| *x = (*x - mean) / (sd + 1e-8));
}

pub(super) fn train(
    spec: &AlgoSpec,
    mut env: TrainingEnv<'_>,
    seed: u64,
    observer: &mut TransitionObserver<'_>,
) -> Result<Mlp, TrainError> {
    let env_id = env.config.env_id;
    let n_actions = env_id.n_actions();
    let mut policy = Mlp::new(&spec.network_shape(env_id, n_actions), spec.activation, &mut rng_for(seed, "init"));
    let mut value = spec
        .pg
        .baseline
        .then(|| Mlp::new(&spec.network_shape(env_id, 1), spec.activation, &mut rng_for(seed, "init-value")));
    let mut policy_opt = Optimizer::new(spec.optimizer, spec.learning_rate, &policy);
    let mut value_opt = value.as_ref().map(|v| Optimizer::new(spec.optimizer, spec.learning_rate, v));
    let mut explore = rng_for(seed, "explore");
    let sign = spec.loss.surrogate_sign::<f64>();

    let mut steps = 0u64;
    let mut grads = Gradients::zeros_like(&policy);
    let mut cache = ForwardCache::default();
    while steps < spec.training_budget {
        let mut segments = Vec::with_capacity(spec.pg.episodes_per_update);
        for _ in 0..spec.pg.episodes_per_update {
            if steps >= spec.training_budget {
                break;
            }
            let mut segment = Vec::new();
            loop {
                let probs = softmax(&policy.forward(&env.view));
                let action = sample_action(&probs, &mut explore);
                let first = env.first_state.clone();
                let out = env.step(action)?;
                steps += 1;
                observer(&out.transition, &first);
                segment.push(out.transition);
                if out.episode_over || steps >= spec.training_budget {
                    break;
                }
            }
            segments.push(segment);
        }

        let batch = assemble(spec, segments, value.as_ref());
        let n = batch.states.len();
        let mut advantages = match &value {
            Some(v) => batch.states.iter().zip(&batch.returns).map(|(s, g)| g - v.forward(s)[0]).collect(),
            None => batch.returns.clone(),
        };
        normalize(&mut advantages);

        grads.reset();
        let scale = sign / n as f64;
        for ((state, &action), adv) in batch.states.iter().zip(&batch.actions).zip(&advantages) {
            policy.forward_cached(state, &mut cache);
            let probs = softmax(cache.output());
            // d/dz of -A log pi(a|s)
            let grad_logits: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(i, p)| scale * adv * (p - if i == action { 1.0 } else { 0.0 }))
                .collect();
            policy.backward(&cache, &grad_logits, &mut grads);
        }
        if !grads.is_finite() {
            return Err(TrainError::Network {
                step: steps,
                source: NnError::NonFiniteGradient { context: "policy-gradient update".into() },
            });
        }
        grads.clip_global_norm(spec.pg.max_grad_norm);
        policy_opt.step(&mut policy, &grads);

        if let (Some(v), Some(opt)) = (value.as_mut(), value_opt.as_mut()) {
            let samples: Vec<RegressionSample<f64>> = batch
                .states
                .into_iter()
                .zip(batch.returns)
                .map(|(input, target)| RegressionSample { input, output: 0, target })
                .collect();
            for _ in 0..spec.pg.value_steps {
                network_update(v, opt, &samples, spec.loss, Some(spec.pg.max_grad_norm))
                    .map_err(|source| TrainError::Network { step: steps, source })?;
            }
        }
    }
    if !policy.is_finite() {
        return Err(TrainError::Network {
            step: steps,
            source: NnError::NonFiniteGradient { context: "policy weights diverged".into() },
        });
    }
    Ok(policy)
}
