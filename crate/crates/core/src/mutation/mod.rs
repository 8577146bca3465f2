//! First-order mutation operators, their string grammar, and order-2
//! composition.
//!
//! | level       | operators                  |
//! |-------------|----------------------------|
//! | Environment | RN, M, Ra, R               |
//! | Agent       | NDF, NR, MSU, MTS, ILF     |
//! | Policy      | PAC, POC                   |
//!
//! Environment-level operators intercept each training observation with a
//! per-step application probability. Agent- and policy-level operators
//! rewrite the learner's [`AlgoSpec`] before training.

mod grammar;
mod interceptor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::agents::{AlgoId, AlgoSpec};
use crate::nn::{Activation, LossKind, OptimizerKind};

pub use interceptor::{apply_env_mutation, EnvInterceptor, EnvMutationOutcome};

/// Default standard deviation of the RN reward noise.
pub const DEFAULT_NOISE_SIGMA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MutationError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("{op} is not applicable to {algo}: {reason}")]
    Incompatible { op: String, algo: AlgoId, reason: String },
    #[error("{op} is vacuous: {reason}")]
    Vacuous { op: String, reason: String },
    #[error("operator {0} appears twice in a higher-order mutation")]
    Duplicate(OpId),
    #[error("mutations of order {0} are not supported (1 or 2)")]
    Order(usize),
    #[error("{op} is a {actual:?}-level operator, expected {expected:?}")]
    LevelMismatch { op: OpId, actual: Level, expected: Level },
    #[error("invalid operator instance {op}: {reason}")]
    Invalid { op: OpId, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpId {
    /// Reward noise.
    RN,
    /// Mangled.
    M,
    /// Random.
    Ra,
    /// Repeat.
    R,
    /// No discount factor.
    NDF,
    /// No reverse.
    NR,
    /// Missing state update.
    MSU,
    /// Missing terminal state.
    MTS,
    /// Incorrect loss function.
    ILF,
    /// Policy activation change.
    PAC,
    /// Policy optimizer change.
    POC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Environment,
    Agent,
    Policy,
}

impl OpId {
    pub const ALL: [OpId; 11] = [
        OpId::RN,
        OpId::M,
        OpId::Ra,
        OpId::R,
        OpId::NDF,
        OpId::NR,
        OpId::MSU,
        OpId::MTS,
        OpId::ILF,
        OpId::PAC,
        OpId::POC,
    ];

    pub fn level(self) -> Level {
        match self {
            OpId::RN | OpId::M | OpId::Ra | OpId::R => Level::Environment,
            OpId::NDF | OpId::NR | OpId::MSU | OpId::MTS | OpId::ILF => Level::Agent,
            OpId::PAC | OpId::POC => Level::Policy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpId::RN => "RN",
            OpId::M => "M",
            OpId::Ra => "Ra",
            OpId::R => "R",
            OpId::NDF => "NDF",
            OpId::NR => "NR",
            OpId::MSU => "MSU",
            OpId::MTS => "MTS",
            OpId::ILF => "ILF",
            OpId::PAC => "PAC",
            OpId::POC => "POC",
        }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpId::ALL.into_iter().find(|op| op.as_str() == s).ok_or_else(|| format!("unknown operator {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpParam {
    Activation(Activation),
    Optimizer(OptimizerKind),
    NoiseSigma(f64),
}

/// One operator with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorInstance {
    op: OpId,
    probability: Option<f64>,
    param: Option<OpParam>,
}

impl OperatorInstance {
    /// Environment-level operator (`RN` uses the default noise scale).
    pub fn environment(op: OpId, probability: f64) -> Result<Self, MutationError> {
        Self::build(op, Some(probability), None)
    }

    pub fn reward_noise(sigma: f64, probability: f64) -> Result<Self, MutationError> {
        Self::build(OpId::RN, Some(probability), Some(OpParam::NoiseSigma(sigma)))
    }

    /// Parameterless agent-level operator.
    pub fn agent(op: OpId) -> Result<Self, MutationError> {
        Self::build(op, None, None)
    }

    pub fn activation_change(activation: Activation) -> Self {
        OperatorInstance { op: OpId::PAC, probability: None, param: Some(OpParam::Activation(activation)) }
    }

    pub fn optimizer_change(optimizer: OptimizerKind) -> Self {
        OperatorInstance { op: OpId::POC, probability: None, param: Some(OpParam::Optimizer(optimizer)) }
    }

    pub(crate) fn build(op: OpId, probability: Option<f64>, param: Option<OpParam>) -> Result<Self, MutationError> {
        let invalid = |reason: &str| MutationError::Invalid { op, reason: reason.to_string() };
        match (op.level(), probability) {
            (Level::Environment, None) => return Err(invalid("environment-level operators need a probability")),
            (Level::Environment, Some(p)) if !(0.0..=1.0).contains(&p) => {
                return Err(invalid("probability must lie in [0, 1]"))
            }
            (Level::Agent | Level::Policy, Some(_)) => {
                return Err(invalid("only environment-level operators take a probability"))
            }
            _ => {}
        }
        let param = match (op, param) {
            (OpId::RN, Some(OpParam::NoiseSigma(s))) if !(s.is_finite() && s >= 0.0) => {
                return Err(invalid("noise sigma must be finite and non-negative"))
            }
            // the default scale is not part of the canonical form
            (OpId::RN, Some(OpParam::NoiseSigma(s))) if s == DEFAULT_NOISE_SIGMA => None,
            (OpId::RN, p @ (None | Some(OpParam::NoiseSigma(_)))) => p,
            (OpId::PAC, p @ Some(OpParam::Activation(_))) => p,
            (OpId::POC, p @ Some(OpParam::Optimizer(_))) => p,
            (OpId::PAC, _) => return Err(invalid("PAC needs an activation parameter")),
            (OpId::POC, _) => return Err(invalid("POC needs an optimizer parameter")),
            (_, None) => None,
            (_, Some(_)) => return Err(invalid("operator takes no parameter")),
        };
        Ok(OperatorInstance { op, probability, param })
    }

    pub fn op(&self) -> OpId {
        self.op
    }

    pub fn level(&self) -> Level {
        self.op.level()
    }

    pub fn probability(&self) -> Option<f64> {
        self.probability
    }

    pub fn param(&self) -> Option<OpParam> {
        self.param
    }

    pub fn noise_sigma(&self) -> f64 {
        match self.param {
            Some(OpParam::NoiseSigma(s)) => s,
            _ => DEFAULT_NOISE_SIGMA,
        }
    }

    /// Checks that the operator is meaningful for `algo` with its default hyperparameters.
    pub fn check_compatible(&self, algo: AlgoId) -> Result<(), MutationError> {
        let defaults = AlgoSpec::default_for(algo, crate::env::EnvId::CartPole);
        match self.level() {
            Level::Environment => Ok(()),
            Level::Agent => apply_agent_mutation(self, &defaults).map(|_| ()),
            Level::Policy => apply_policy_mutation(self, &defaults).map(|_| ()),
        }
    }
}

impl fmt::Display for OperatorInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.op.as_str())?;
        match self.param {
            Some(OpParam::Activation(a)) => write!(f, "_{a}")?,
            Some(OpParam::Optimizer(o)) => write!(f, "_{o}")?,
            Some(OpParam::NoiseSigma(s)) => write!(f, "_{s:?}")?,
            None => {}
        }
        if let Some(p) = self.probability {
            write!(f, "_{p:?}")?;
        }
        Ok(())
    }
}

/// A first- (one operator) or second-order (two operators) mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationSpec {
    operators: Vec<OperatorInstance>,
}

impl MutationSpec {
    pub fn first_order(op: OperatorInstance) -> Self {
        MutationSpec { operators: vec![op] }
    }

    /// Builds a mutation from operators without algorithm compatibility checks.
    pub fn from_operators(operators: Vec<OperatorInstance>) -> Result<Self, MutationError> {
        if operators.is_empty() || operators.len() > 2 {
            return Err(MutationError::Order(operators.len()));
        }
        if operators.len() == 2 && operators[0].op == operators[1].op {
            return Err(MutationError::Duplicate(operators[0].op));
        }
        Ok(MutationSpec { operators })
    }

    pub fn parse(text: &str) -> Result<Self, MutationError> {
        grammar::parse_mutation(text)
    }

    pub fn operators(&self) -> &[OperatorInstance] {
        &self.operators
    }

    pub fn order(&self) -> usize {
        self.operators.len()
    }

    pub fn environment_operators(&self) -> impl Iterator<Item = &OperatorInstance> {
        self.operators.iter().filter(|o| o.level() == Level::Environment)
    }

    pub fn check_compatible(&self, algo: AlgoId) -> Result<(), MutationError> {
        self.operators.iter().try_for_each(|o| o.check_compatible(algo))
    }

    /// Applies every agent- and policy-level transform to `spec`.
    pub fn transform_spec(&self, spec: &AlgoSpec) -> Result<AlgoSpec, MutationError> {
        let mut out = spec.clone();
        for op in &self.operators {
            out = match op.level() {
                Level::Environment => out,
                Level::Agent => apply_agent_mutation(op, &out)?,
                Level::Policy => apply_policy_mutation(op, &out)?,
            };
        }
        Ok(out)
    }
}

impl fmt::Display for MutationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.operators.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl FromStr for MutationSpec {
    type Err = MutationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationSpec::parse(s)
    }
}

impl Serialize for MutationSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MutationSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MutationSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn level_guard(inst: &OperatorInstance, expected: Level) -> Result<(), MutationError> {
    if inst.level() != expected {
        return Err(MutationError::LevelMismatch { op: inst.op, actual: inst.level(), expected });
    }
    Ok(())
}

/// Rewrites the learner configuration for an agent-level operator.
pub fn apply_agent_mutation(inst: &OperatorInstance, spec: &AlgoSpec) -> Result<AlgoSpec, MutationError> {
    level_guard(inst, Level::Agent)?;
    let mut out = spec.clone();
    match inst.op {
        OpId::NDF => out.gamma = 1.0,
        OpId::MTS => out.faults.drop_terminal = true,
        OpId::NR => {
            if spec.algo_id != AlgoId::PG {
                return Err(MutationError::Incompatible {
                    op: inst.to_string(),
                    algo: spec.algo_id,
                    reason: "the learner has no Monte-Carlo return computation to reverse".into(),
                });
            }
            out.faults.reverse_returns = true;
        }
        OpId::MSU => out.faults.stale_state = true,
        OpId::ILF => out.loss = LossKind::NegatedTd,
        _ => unreachable!("level checked above"),
    }
    Ok(out)
}

/// Rewrites the network configuration for a policy-level operator.
pub fn apply_policy_mutation(inst: &OperatorInstance, spec: &AlgoSpec) -> Result<AlgoSpec, MutationError> {
    level_guard(inst, Level::Policy)?;
    let mut out = spec.clone();
    match inst.param {
        Some(OpParam::Activation(a)) => {
            if a == spec.activation {
                return Err(MutationError::Vacuous {
                    op: inst.to_string(),
                    reason: format!("{a} is already the activation of {}", spec.algo_id),
                });
            }
            out.activation = a;
        }
        Some(OpParam::Optimizer(o)) => {
            if o == spec.optimizer {
                return Err(MutationError::Vacuous {
                    op: inst.to_string(),
                    reason: format!("{o} is already the optimizer of {}", spec.algo_id),
                });
            }
            // learning rate is kept as is
            out.optimizer = o;
        }
        _ => unreachable!("policy operators always carry a parameter"),
    }
    Ok(out)
}

/// Composes two distinct operators, both compatible with `algo`, into an order-2 mutation.
///
/// Environment-level interceptors run in the listed order (`RN+M` and `M+RN`
/// differ in general); configuration transforms commute.
pub fn compose_hom(a: &OperatorInstance, b: &OperatorInstance, algo: AlgoId) -> Result<MutationSpec, MutationError> {
    if a.op == b.op {
        return Err(MutationError::Duplicate(a.op));
    }
    a.check_compatible(algo)?;
    b.check_compatible(algo)?;
    MutationSpec::from_operators(vec![a.clone(), b.clone()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(algo: AlgoId) -> AlgoSpec {
        AlgoSpec::default_for(algo, crate::env::EnvId::CartPole)
    }

    #[test]
    fn level_taxonomy() {
        use Level::*;
        let expected = [
            Environment, Environment, Environment, Environment, Agent, Agent, Agent, Agent, Agent, Policy, Policy,
        ];
        for (op, level) in OpId::ALL.iter().zip(expected) {
            assert_eq!(op.level(), level, "{op}");
        }
    }

    #[test]
    fn ndf_removes_discount_only() {
        let base = spec(AlgoId::QNet);
        let out = apply_agent_mutation(&OperatorInstance::agent(OpId::NDF).unwrap(), &base).unwrap();
        assert_eq!(out.gamma, 1.0);
        assert_eq!(AlgoSpec { gamma: base.gamma, ..out }, base);
    }

    #[test]
    fn agent_transforms_set_fault_flags() {
        let base = spec(AlgoId::PG);
        let t = |op| apply_agent_mutation(&OperatorInstance::agent(op).unwrap(), &base).unwrap();
        assert!(t(OpId::MTS).faults.drop_terminal);
        assert!(t(OpId::NR).faults.reverse_returns);
        assert!(t(OpId::MSU).faults.stale_state);
        assert_eq!(t(OpId::ILF).loss, LossKind::NegatedTd);
    }

    #[test]
    fn nr_is_incompatible_with_qnet() {
        let err = apply_agent_mutation(&OperatorInstance::agent(OpId::NR).unwrap(), &spec(AlgoId::QNet));
        assert!(matches!(err, Err(MutationError::Incompatible { .. })));
    }

    #[test]
    fn pac_and_poc() {
        let pg = spec(AlgoId::PG);
        let out = apply_policy_mutation(&OperatorInstance::activation_change(Activation::Sigmoid), &pg).unwrap();
        assert_eq!(out.activation, Activation::Sigmoid);

        let q = spec(AlgoId::QNet);
        let out = apply_policy_mutation(&OperatorInstance::optimizer_change(OptimizerKind::Sgd), &q).unwrap();
        assert_eq!(out.optimizer, OptimizerKind::Sgd);
        assert_eq!(out.learning_rate, q.learning_rate);
        assert_eq!(q.learning_rate, 1e-3);

        let err = apply_policy_mutation(&OperatorInstance::activation_change(Activation::ReLU), &q);
        assert!(matches!(err, Err(MutationError::Vacuous { .. })));
    }

    #[test]
    fn transforms_are_idempotent() {
        for algo in [AlgoId::QNet, AlgoId::PG] {
            let base = spec(algo);
            for text in ["NDF", "MTS", "MSU", "ILF", "PAC_Sigmoid", "POC_SGD", "RN_1.0", "M_0.5"] {
                let m = MutationSpec::parse(text).unwrap();
                let once = m.transform_spec(&base).unwrap();
                let twice = m.transform_spec(&base).unwrap();
                assert_eq!(once, twice, "{text}");
            }
        }
    }

    #[test]
    fn environment_mutation_leaves_spec_alone() {
        let base = spec(AlgoId::QNet);
        let m = MutationSpec::parse("Ra_1.0").unwrap();
        assert_eq!(m.transform_spec(&base).unwrap(), base);
    }

    #[test]
    fn compose_hom_rules() {
        let rn = OperatorInstance::environment(OpId::RN, 1.0).unwrap();
        let mts = OperatorInstance::agent(OpId::MTS).unwrap();
        let hom = compose_hom(&rn, &mts, AlgoId::QNet).unwrap();
        assert_eq!(hom.order(), 2);
        assert_eq!(hom.to_string(), "RN_1.0+MTS");

        let ndf = OperatorInstance::agent(OpId::NDF).unwrap();
        assert_eq!(compose_hom(&ndf, &ndf, AlgoId::PG), Err(MutationError::Duplicate(OpId::NDF)));

        let nr = OperatorInstance::agent(OpId::NR).unwrap();
        assert!(compose_hom(&nr, &ndf, AlgoId::QNet).is_err());
        assert!(compose_hom(&ndf, &nr, AlgoId::QNet).is_err());
        assert!(compose_hom(&nr, &ndf, AlgoId::PG).is_ok());
    }

    #[test]
    fn instance_invariants() {
        assert!(OperatorInstance::environment(OpId::NDF, 1.0).is_err());
        assert!(OperatorInstance::environment(OpId::M, 1.5).is_err());
        assert!(OperatorInstance::agent(OpId::M).is_err());
        assert!(OperatorInstance::agent(OpId::PAC).is_err());
        let rn = OperatorInstance::reward_noise(1.0, 1.0).unwrap();
        assert_eq!(rn.param(), None);
        assert_eq!(rn.to_string(), "RN_1.0");
        let rn = OperatorInstance::reward_noise(0.5, 1.0).unwrap();
        assert_eq!(rn.to_string(), "RN_0.5_1.0");
    }
}
