//! Parameterized simulation environments.
//!
//! Environments are pure functions over value types: [`reset`] draws an
//! initial state from a seed and [`step`] maps `(state, action)` to an
//! [`Observation`]. No hidden state is kept between calls.

mod cartpole;
mod lander;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cartpole::CARTPOLE_ANGLE_LIMIT;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid parameter {name}={value}: parameters must be finite and strictly positive")]
    InvalidParameter { name: String, value: f64 },
    #[error("unknown parameter {name:?} for {env}")]
    UnknownParameter { env: EnvId, name: String },
    #[error("missing parameter {name:?} for {env}")]
    MissingParameter { env: EnvId, name: &'static str },
    #[error("action {action} out of range for {env} ({n_actions} actions)")]
    InvalidAction { env: EnvId, action: usize, n_actions: usize },
    #[error("state has dimension {got}, {env} expects {expected}")]
    StateDimension { env: EnvId, got: usize, expected: usize },
    #[error("non-finite state component")]
    NonFiniteState,
    #[error("episode cap must be positive")]
    ZeroEpisodeCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvId {
    CartPole,
    MiniLander,
}

/// Declared lower/upper search limits of one physical parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub lower: f64,
    pub upper: f64,
}

const CARTPOLE_PARAMS: [ParamSpec; 2] = [
    ParamSpec { name: "cart_mass", default: 1.0, lower: 0.1, upper: 50.0 },
    ParamSpec { name: "pole_mass", default: 0.1, lower: 0.01, upper: 5.0 },
];

const LANDER_PARAMS: [ParamSpec; 2] = [
    ParamSpec { name: "gravity", default: 9.8, lower: 2.0, upper: 20.0 },
    ParamSpec { name: "engine_power", default: 15.0, lower: 10.0, upper: 40.0 },
];

impl EnvId {
    pub const ALL: [EnvId; 2] = [EnvId::CartPole, EnvId::MiniLander];

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            EnvId::CartPole => &CARTPOLE_PARAMS,
            EnvId::MiniLander => &LANDER_PARAMS,
        }
    }

    pub fn param(self, name: &str) -> Option<&'static ParamSpec> {
        self.params().iter().find(|p| p.name == name)
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvId::CartPole => 4,
            EnvId::MiniLander => 3,
        }
    }

    pub fn n_actions(self) -> usize {
        2
    }

    pub fn default_episode_cap(self) -> u32 {
        match self {
            EnvId::CartPole => 500,
            EnvId::MiniLander => 400,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::CartPole => "CartPole",
            EnvId::MiniLander => "MiniLander",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CartPole" | "cartpole" => Ok(EnvId::CartPole),
            "MiniLander" | "minilander" | "lander" => Ok(EnvId::MiniLander),
            other => Err(format!("unknown environment {other:?}")),
        }
    }
}

/// An environment identity plus its physical parameters.
///
/// Two configs are equal iff they share `env_id`, `episode_cap` and an
/// identical parameter map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub env_id: EnvId,
    pub params: BTreeMap<String, f64>,
    pub episode_cap: u32,
}

impl EnvironmentConfig {
    /// Default configuration of `env_id`.
    pub fn new(env_id: EnvId) -> Self {
        let params = env_id.params().iter().map(|p| (p.name.to_string(), p.default)).collect();
        EnvironmentConfig { env_id, params, episode_cap: env_id.default_episode_cap() }
    }

    pub fn cartpole() -> Self {
        Self::new(EnvId::CartPole)
    }

    pub fn mini_lander() -> Self {
        Self::new(EnvId::MiniLander)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.episode_cap == 0 {
            return Err(EnvError::ZeroEpisodeCap);
        }
        for spec in self.env_id.params() {
            match self.params.get(spec.name) {
                None => return Err(EnvError::MissingParameter { env: self.env_id, name: spec.name }),
                Some(&v) if !(v.is_finite() && v > 0.0) => {
                    return Err(EnvError::InvalidParameter { name: spec.name.into(), value: v })
                }
                Some(_) => {}
            }
        }
        if let Some(name) = self.params.keys().find(|k| self.env_id.param(k).is_none()) {
            return Err(EnvError::UnknownParameter { env: self.env_id, name: name.clone() });
        }
        Ok(())
    }

    /// Value of a declared parameter. Panics on names not declared for this env.
    pub fn get(&self, name: &str) -> f64 {
        self.params[name]
    }

    /// Returns a copy with `overrides` applied; `self` is left untouched.
    pub fn with_params<'a, I>(&self, overrides: I) -> Result<Self, EnvError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut out = self.clone();
        for (name, value) in overrides {
            if self.env_id.param(name).is_none() {
                return Err(EnvError::UnknownParameter { env: self.env_id, name: name.to_string() });
            }
            if !(value.is_finite() && value > 0.0) {
                return Err(EnvError::InvalidParameter { name: name.to_string(), value });
            }
            out.params.insert(name.to_string(), value);
        }
        Ok(out)
    }

    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, EnvError> {
        self.with_params([(name, value)])
    }

    /// Short human-readable label, e.g. `CartPole[cart_mass=1,pole_mass=0.1]`.
    pub fn label(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.env_id, params.join(","))
    }
}

/// One `(s_t, a_t, r_t, s_{t+1})` transition plus its terminal flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Set when the episode ended only because the step cap was reached.
    pub truncated: bool,
}

/// A complete episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub observations: Vec<Observation>,
    pub return_undiscounted: f64,
}

impl EpisodeTrace {
    pub fn push(&mut self, obs: Observation) {
        self.return_undiscounted += obs.reward;
        self.observations.push(obs);
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.observations.last().is_some_and(|o| o.terminal)
    }
}

/// Initial state for `(config, seed)`; identical inputs give bit-identical states.
pub fn reset(config: &EnvironmentConfig, seed: u64) -> Result<Vec<f64>, EnvError> {
    config.validate()?;
    Ok(match config.env_id {
        EnvId::CartPole => cartpole::reset(seed).to_vec(),
        EnvId::MiniLander => lander::reset().to_vec(),
    })
}

/// Advances one step. `step_count` is the number of steps already taken in
/// the episode and drives the episode cap.
pub fn step(
    config: &EnvironmentConfig,
    state: &[f64],
    action: usize,
    step_count: u32,
) -> Result<Observation, EnvError> {
    let env = config.env_id;
    if action >= env.n_actions() {
        return Err(EnvError::InvalidAction { env, action, n_actions: env.n_actions() });
    }
    if state.len() != env.state_dim() {
        return Err(EnvError::StateDimension { env, got: state.len(), expected: env.state_dim() });
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(EnvError::NonFiniteState);
    }
    let (next_state, reward, failed) = match env {
        EnvId::CartPole => {
            let s = [state[0], state[1], state[2], state[3]];
            let (next, reward, done) =
                cartpole::step(config.get("cart_mass"), config.get("pole_mass"), s, action);
            (next.to_vec(), reward, done)
        }
        EnvId::MiniLander => {
            let s = [state[0], state[1], state[2]];
            let (next, reward, done) =
                lander::step(config.get("gravity"), config.get("engine_power"), s, action);
            (next.to_vec(), reward, done)
        }
    };
    let capped = step_count + 1 >= config.episode_cap;
    Ok(Observation {
        state: state.to_vec(),
        action,
        reward,
        next_state,
        terminal: failed || capped,
        truncated: capped && !failed,
    })
}

/// Runs one episode with `policy` choosing actions from the current state.
pub fn rollout<F>(config: &EnvironmentConfig, seed: u64, mut policy: F) -> Result<EpisodeTrace, EnvError>
where
    F: FnMut(&[f64]) -> usize,
{
    let mut state = reset(config, seed)?;
    let mut trace = EpisodeTrace::default();
    for t in 0..config.episode_cap {
        let action = policy(&state);
        let obs = step(config, &state, action, t)?;
        state.clone_from(&obs.next_state);
        let done = obs.terminal;
        trace.push(obs);
        if done {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn with_params_overrides_single_field() {
        let base = EnvironmentConfig::cartpole();
        let cfg = base.with_param("cart_mass", 2.0).unwrap();
        assert_eq!(cfg.get("cart_mass"), 2.0);
        assert_eq!(cfg.get("pole_mass"), base.get("pole_mass"));
        assert_eq!(base.get("cart_mass"), 1.0);
        assert_eq!(base.with_params([]).unwrap(), base);
    }

    #[test]
    fn with_params_to_declared_limit() {
        let base = EnvironmentConfig::mini_lander();
        let upper = EnvId::MiniLander.param("gravity").unwrap().upper;
        let cfg = base.with_param("gravity", upper).unwrap();
        assert_eq!(cfg.get("gravity"), upper);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn with_params_rejects_unknown_names() {
        let err = EnvironmentConfig::cartpole().with_param("gravity", 3.0).unwrap_err();
        assert!(matches!(err, EnvError::UnknownParameter { .. }));
    }

    #[test]
    fn reset_rejects_nonpositive_params() {
        let mut cfg = EnvironmentConfig::cartpole();
        cfg.params.insert("pole_mass".into(), 0.0);
        assert!(matches!(reset(&cfg, 1), Err(EnvError::InvalidParameter { .. })));
        assert!(EnvironmentConfig::cartpole().with_param("cart_mass", -1.0).is_err());
    }

    #[test]
    fn step_rejects_bad_action() {
        let cfg = EnvironmentConfig::cartpole();
        let s = reset(&cfg, 0).unwrap();
        assert!(matches!(step(&cfg, &s, 2, 0), Err(EnvError::InvalidAction { .. })));
    }

    #[test]
    fn cap_terminates_episode() {
        let mut cfg = EnvironmentConfig::cartpole();
        cfg.episode_cap = 3;
        let s = [0.0; 4];
        let obs = step(&cfg, &s, 1, 2).unwrap();
        assert!(obs.terminal && obs.truncated);
        let obs = step(&cfg, &s, 1, 1).unwrap();
        assert!(!obs.terminal);
    }

    #[test]
    fn trace_return_is_reward_sum_and_capped() {
        let cfg = EnvironmentConfig::cartpole();
        // a simple angle controller keeps the pole up for a while
        let trace = rollout(&cfg, 3, |s| usize::from(s[2] + 0.5 * s[3] > 0.0)).unwrap();
        assert!(trace.len() <= 500);
        let sum: f64 = trace.observations.iter().map(|o| o.reward).sum();
        assert_eq!(sum, trace.return_undiscounted);
        let terminals = trace.observations.iter().filter(|o| o.terminal).count();
        assert_eq!(terminals, 1);
        assert!(trace.observations.last().unwrap().terminal);
    }
}
