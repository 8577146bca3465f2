use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Level, MutationError, OpId, OperatorInstance};
use crate::env::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMutationOutcome {
    /// The probability draw kept the observation as is.
    Unchanged,
    Applied,
    /// The operator needed more history than available; observation kept.
    SkippedNoHistory,
}

/// Applies one environment-level operator to `obs`.
///
/// `history` holds the run's earlier (unmutated) observations, oldest first.
/// The application draw is always consumed from `rng`, so the random stream
/// does not depend on history length.
pub fn apply_env_mutation<R: Rng + ?Sized>(
    inst: &OperatorInstance,
    obs: &Observation,
    history: &[Observation],
    rng: &mut R,
) -> Result<(Observation, EnvMutationOutcome), MutationError> {
    if inst.level() != Level::Environment {
        return Err(MutationError::LevelMismatch { op: inst.op(), actual: inst.level(), expected: Level::Environment });
    }
    let p = inst.probability().unwrap_or(0.0);
    let draw: f64 = rng.random();
    if draw >= p {
        return Ok((obs.clone(), EnvMutationOutcome::Unchanged));
    }
    let mut out = obs.clone();
    match inst.op() {
        OpId::RN => {
            let sigma = inst.noise_sigma();
            let noise = Normal::new(0.0, sigma)
                .map_err(|e| MutationError::Invalid { op: OpId::RN, reason: e.to_string() })?
                .sample(rng);
            out.reward += noise;
        }
        OpId::M => {
            if history.len() < 2 {
                return Ok((out, EnvMutationOutcome::SkippedNoHistory));
            }
            let i = rng.random_range(0..history.len());
            let mut j = rng.random_range(0..history.len() - 1);
            if j >= i {
                j += 1;
            }
            out.next_state.clone_from(&history[i].next_state);
            out.reward = history[j].reward;
        }
        OpId::Ra => {
            if history.is_empty() {
                return Ok((out, EnvMutationOutcome::SkippedNoHistory));
            }
            let k = rng.random_range(0..history.len());
            out.next_state.clone_from(&history[k].next_state);
            out.reward = history[k].reward;
        }
        OpId::R => {
            let Some(prev) = history.last() else {
                return Ok((out, EnvMutationOutcome::SkippedNoHistory));
            };
            out.reward = prev.reward;
            out.next_state.clone_from(&prev.next_state);
        }
        _ => unreachable!("level checked above"),
    }
    Ok((out, EnvMutationOutcome::Applied))
}

/// Per-run interceptor composing environment-level operators in listed order.
#[derive(Debug, Clone)]
pub struct EnvInterceptor {
    ops: Vec<OperatorInstance>,
    rng: ChaCha8Rng,
    history: Vec<Observation>,
    pub applied: usize,
    pub skipped: usize,
}

impl EnvInterceptor {
    pub fn new(ops: Vec<OperatorInstance>, rng: ChaCha8Rng) -> Self {
        EnvInterceptor { ops, rng, history: Vec::new(), applied: 0, skipped: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    /// Mutates `raw` and records it in the history.
    pub fn intercept(&mut self, raw: Observation) -> Observation {
        let mut obs = raw.clone();
        for op in &self.ops {
            let (next, outcome) =
                apply_env_mutation(op, &obs, &self.history, &mut self.rng).expect("interceptor holds environment operators only");
            match outcome {
                EnvMutationOutcome::Applied => self.applied += 1,
                EnvMutationOutcome::SkippedNoHistory => {
                    self.skipped += 1;
                    log::trace!("{op} skipped: not enough history at step {}", self.history.len());
                }
                EnvMutationOutcome::Unchanged => {}
            }
            obs = next;
        }
        self.history.push(raw);
        obs
    }
}
