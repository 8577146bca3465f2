//! Two small learners over a from-scratch MLP.
//!
//! * `QNet`: off-policy Q-learning with a replay buffer, epsilon-greedy
//!   exploration, and a periodically synchronized target network.
//! * `PG`: on-policy Monte-Carlo policy gradient with a learned value baseline.
//!
//! Mutation hooks live here: environment-level operators intercept the
//! observations a learner sees during training, agent-level operators flip
//! [`TrainingFaults`] or change `gamma`/`loss`, policy-level operators swap
//! the activation or optimizer.

mod pg;
mod policy_io;
mod qnet;
mod returns;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, EnvError, EnvId, EnvironmentConfig};
use crate::mutation::{EnvInterceptor, MutationError, MutationSpec};
use crate::nn::{Activation, LossKind, NnError, OptimizerKind};
use crate::seeding::{content_hash, derive_seed, rng_for};
use crate::Mlp;

pub use policy_io::PolicyFormatError;
pub use returns::{bootstrap_returns, compute_returns};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("training diverged at step {step}: {source}")]
    Network { step: u64, source: NnError },
    #[error("invalid learner configuration: {0}")]
    InvalidSpec(String),
    #[error("policy expects {policy} observation features, {env} has {env_dim}")]
    DimensionMismatch { policy: usize, env: EnvId, env_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgoId {
    QNet,
    PG,
}

impl AlgoId {
    pub const ALL: [AlgoId; 2] = [AlgoId::QNet, AlgoId::PG];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoId::QNet => "QNet",
            AlgoId::PG => "PG",
        }
    }
}

impl fmt::Display for AlgoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "QNet" | "qnet" => Ok(AlgoId::QNet),
            "PG" | "pg" => Ok(AlgoId::PG),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetParams {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the budget over which epsilon decays linearly.
    pub epsilon_fraction: f64,
    pub target_sync_interval: u64,
    pub learning_starts: u64,
    pub train_every: u64,
    pub max_grad_norm: f64,
    /// Learning rate at the end of the budget, as a fraction of the initial rate.
    pub final_lr_fraction: f64,
    /// Polyak factor for soft target updates after every gradient step;
    /// 1.0 means hard copies every `target_sync_interval` steps.
    pub target_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgParams {
    pub episodes_per_update: usize,
    pub baseline: bool,
    /// Value-network gradient steps per update.
    pub value_steps: usize,
    pub max_grad_norm: f64,
}

/// Implementation faults injected by agent-level operators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFaults {
    /// Rewards reversed before computing returns.
    pub reverse_returns: bool,
    /// Terminal flags stored as false.
    pub drop_terminal: bool,
    /// The learner never updates its view of the state within an episode.
    pub stale_state: bool,
}

impl TrainingFaults {
    pub fn any(&self) -> bool {
        self.reverse_returns || self.drop_terminal || self.stale_state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSpec {
    pub algo_id: AlgoId,
    pub gamma: f64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    /// Total environment steps.
    pub training_budget: u64,
    pub qnet: QNetParams,
    pub pg: PgParams,
    #[serde(default)]
    pub faults: TrainingFaults,
}

impl AlgoSpec {
    pub fn default_for(algo: AlgoId, env: EnvId) -> Self {
        let qnet = QNetParams {
            replay_capacity: 10_000,
            batch_size: 64,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.1,
            target_sync_interval: 500,
            learning_starts: 1_000,
            train_every: 4,
            max_grad_norm: 10.0,
            final_lr_fraction: 1.0,
            target_tau: 0.01,
        };
        let pg = PgParams { episodes_per_update: 4, baseline: true, value_steps: 4, max_grad_norm: 1.0 };
        let (activation, loss, gamma, learning_rate) = match algo {
            AlgoId::QNet => (Activation::ReLU, LossKind::Huber, 0.98, 1e-3),
            AlgoId::PG => (Activation::Tanh, LossKind::Mse, 0.99, 2e-3),
        };
        let budget = match (algo, env) {
            (AlgoId::QNet, EnvId::CartPole) => 120_000,
            (AlgoId::QNet, EnvId::MiniLander) => 200_000,
            (AlgoId::PG, EnvId::CartPole) => 100_000,
            (AlgoId::PG, EnvId::MiniLander) => 200_000,
        };
        AlgoSpec {
            algo_id: algo,
            gamma,
            learning_rate,
            hidden_layers: vec![32, 32],
            activation,
            optimizer: OptimizerKind::Adam,
            loss,
            training_budget: budget,
            qnet,
            pg,
            faults: TrainingFaults::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidSpec(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.training_budget == 0 {
            return bad("training budget must be positive");
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return bad("hidden layer widths must be positive");
        }
        match self.algo_id {
            AlgoId::QNet => {
                let q = &self.qnet;
                if q.batch_size == 0 || q.replay_capacity < q.batch_size || q.target_sync_interval == 0 || q.train_every == 0 {
                    return bad("invalid replay/batch/sync settings");
                }
                if !(q.target_tau > 0.0 && q.target_tau <= 1.0) {
                    return bad("target_tau must lie in (0, 1]");
                }
                if self.faults.reverse_returns {
                    return bad("QNet has no return computation to reverse");
                }
            }
            AlgoId::PG => {
                if self.pg.episodes_per_update == 0 {
                    return bad("episodes_per_update must be positive");
                }
            }
        }
        Ok(())
    }

    pub(crate) fn network_shape(&self, env: EnvId, n_out: usize) -> Vec<usize> {
        std::iter::once(env.state_dim()).chain(self.hidden_layers.iter().copied()).chain([n_out]).collect()
    }
}

/// Where a trained policy came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub env: EnvironmentConfig,
    /// Canonical mutation string, `None` for a healthy agent.
    pub mutation: Option<String>,
}

impl Provenance {
    pub fn hash(&self) -> String {
        content_hash(serde_json::to_string(self).expect("provenance serializes").as_bytes())
    }

    pub fn label(&self) -> &str {
        self.mutation.as_deref().unwrap_or("healthy")
    }
}

/// Immutable result of one training run. Acting is greedy on `network`'s outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub algo_id: AlgoId,
    pub network: Mlp,
    pub seed: u64,
    pub provenance: Provenance,
}

impl TrainedPolicy {
    pub fn greedy_action(&self, state: &[f64]) -> usize {
        argmax(&self.network.forward(state))
    }

    pub fn to_text(&self) -> String {
        policy_io::write(self)
    }

    pub fn from_text(text: &str) -> Result<Self, PolicyFormatError> {
        policy_io::read(text)
    }
}

/// One stored training tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Callback receiving each stored transition plus the episode's initial state.
pub type TransitionObserver<'a> = dyn FnMut(&Transition, &[f64]) + 'a;

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn episode_seed(seed: u64, role: &str, episode: u64) -> u64 {
    derive_seed(seed, &[role, &episode.to_string()])
}

/// Learner-side view of an environment with the mutation's interceptor attached.
pub(crate) struct TrainingEnv<'a> {
    pub config: &'a EnvironmentConfig,
    pub interceptor: Option<EnvInterceptor>,
    pub faults: TrainingFaults,
    pub seed: u64,
    pub episode: u64,
    pub steps_in_episode: u32,
    true_state: Vec<f64>,
    /// State the learner believes it is in.
    pub view: Vec<f64>,
    pub first_state: Vec<f64>,
}

pub(crate) struct EnvStep {
    pub transition: Transition,
    /// The episode ended (operationally, regardless of stored flags).
    pub episode_over: bool,
}

impl<'a> TrainingEnv<'a> {
    pub fn new(
        config: &'a EnvironmentConfig,
        interceptor: Option<EnvInterceptor>,
        faults: TrainingFaults,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let state = env::reset(config, episode_seed(seed, "train-episode", 0))?;
        Ok(TrainingEnv {
            config,
            interceptor,
            faults,
            seed,
            episode: 0,
            steps_in_episode: 0,
            true_state: state.clone(),
            view: state.clone(),
            first_state: state,
        })
    }

    pub fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        let raw = env::step(self.config, &self.true_state, action, self.steps_in_episode)?;
        self.true_state.clone_from(&raw.next_state);
        let seen = match self.interceptor.as_mut() {
            Some(icpt) => icpt.intercept(raw),
            None => raw,
        };
        let (state, next_state) = if self.faults.stale_state {
            (self.first_state.clone(), self.first_state.clone())
        } else {
            (std::mem::take(&mut self.view), seen.next_state.clone())
        };
        let failed = seen.terminal && !seen.truncated;
        let transition = Transition {
            state,
            action,
            reward: seen.reward,
            next_state,
            done: failed && !self.faults.drop_terminal,
        };
        if !self.faults.stale_state {
            self.view = seen.next_state;
        }
        self.steps_in_episode += 1;
        let episode_over = seen.terminal;
        if episode_over {
            self.episode += 1;
            self.steps_in_episode = 0;
            let state = env::reset(self.config, episode_seed(self.seed, "train-episode", self.episode))?;
            self.true_state = state.clone();
            self.view = state.clone();
            self.first_state = state;
        }
        Ok(EnvStep { transition, episode_over })
    }
}

fn build_interceptor(mutation: Option<&MutationSpec>, seed: u64) -> Option<EnvInterceptor> {
    let ops: Vec<_> = mutation?.environment_operators().cloned().collect();
    (!ops.is_empty()).then(|| EnvInterceptor::new(ops, rng_for(seed, "mutation")))
}

/// Trains one agent. Deterministic in `(spec, env, mutation, seed)`.
pub fn train(
    spec: &AlgoSpec,
    env: &EnvironmentConfig,
    mutation: Option<&MutationSpec>,
    seed: u64,
) -> Result<TrainedPolicy, TrainError> {
    train_observed(spec, env, mutation, seed, &mut |_, _| {})
}

/// [`train`] with a hook called on every stored transition.
pub fn train_observed(
    spec: &AlgoSpec,
    env: &EnvironmentConfig,
    mutation: Option<&MutationSpec>,
    seed: u64,
    observer: &mut TransitionObserver<'_>,
) -> Result<TrainedPolicy, TrainError> {
    env.validate()?;
    let effective = match mutation {
        Some(m) => {
            m.check_compatible(spec.algo_id)?;
            m.transform_spec(spec)?
        }
        None => spec.clone(),
    };
    effective.validate()?;
    let training_env = TrainingEnv::new(env, build_interceptor(mutation, seed), effective.faults, seed)?;
    let network = match effective.algo_id {
        AlgoId::QNet => qnet::train(&effective, training_env, seed, observer)?,
        AlgoId::PG => pg::train(&effective, training_env, seed, observer)?,
    };
    Ok(TrainedPolicy {
        algo_id: spec.algo_id,
        network,
        seed,
        provenance: Provenance { env: env.clone(), mutation: mutation.map(ToString::to_string) },
    })
}

/// Greedy evaluation returns over `n_episodes`, deterministic per `seed`.
pub fn evaluate(
    policy: &TrainedPolicy,
    env: &EnvironmentConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>, TrainError> {
    if n_episodes == 0 {
        return Err(TrainError::InvalidSpec("n_episodes must be at least 1".into()));
    }
    let dim = env.env_id.state_dim();
    if policy.network.n_inputs() != dim || policy.network.n_outputs() != env.env_id.n_actions() {
        return Err(TrainError::DimensionMismatch { policy: policy.network.n_inputs(), env: env.env_id, env_dim: dim });
    }
    (0..n_episodes as u64)
        .map(|i| {
            let trace = env::rollout(env, episode_seed(seed, "eval-episode", i), |s| policy.greedy_action(s))?;
            Ok(trace.return_undiscounted)
        })
        .collect()
}

/// Per-agent episode returns of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    returns: Vec<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("reward sample has no agents")]
    Empty,
    #[error("agent {agent} has {got} episodes, expected {expected}")]
    Ragged { agent: usize, got: usize, expected: usize },
    #[error("agent {agent} has a non-finite return")]
    NonFinite { agent: usize },
    #[error("agent {agent} has no episodes")]
    NoEpisodes { agent: usize },
}

impl RewardSample {
    pub fn new(returns: Vec<Vec<f64>>) -> Result<Self, SampleError> {
        let first = returns.first().ok_or(SampleError::Empty)?.len();
        for (agent, r) in returns.iter().enumerate() {
            if r.is_empty() {
                return Err(SampleError::NoEpisodes { agent });
            }
            if r.len() != first {
                return Err(SampleError::Ragged { agent, got: r.len(), expected: first });
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(SampleError::NonFinite { agent });
            }
        }
        Ok(RewardSample { returns })
    }

    /// Sample where every agent contributes a single value.
    pub fn from_means(means: &[f64]) -> Result<Self, SampleError> {
        Self::new(means.iter().map(|&m| vec![m]).collect())
    }

    pub fn n_agents(&self) -> usize {
        self.returns.len()
    }

    pub fn n_episodes(&self) -> usize {
        self.returns[0].len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.returns[i]
    }

    pub fn agents(&self) -> &[Vec<f64>] {
        &self.returns
    }

    pub fn agent_means(&self) -> Vec<f64> {
        self.returns.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect()
    }

    /// Mean and sample standard deviation of the per-agent means.
    pub fn summary(&self) -> (f64, f64) {
        let means = self.agent_means();
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = if means.len() > 1 { means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        (mean, var.sqrt())
    }
}

/// Evaluates every policy with the same evaluation seed.
pub fn evaluate_population(
    policies: &[TrainedPolicy],
    env: &EnvironmentConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<RewardSample, TrainError> {
    let returns = policies.iter().map(|p| evaluate(p, env, n_episodes, seed)).collect::<Result<Vec<_>, _>>()?;
    RewardSample::new(returns).map_err(|e| TrainError::InvalidSpec(e.to_string()))
}
