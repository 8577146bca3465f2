//! Mutation testing for reinforcement learning.
//!
//! Populations of healthy and fault-injected agents are trained on
//! parameterized environments, compared under several statistical kill
//! criteria, and probed on automatically generated boundary environments.
//! Pairs of non-trivial first-order mutations are combined into
//! higher-order mutations and classified by subsumption.

pub mod agents;
pub mod campaign;
pub mod env;
pub mod hom;
pub mod mutation;
pub mod nn;
pub mod scalar;
pub mod seeding;
pub mod special;
pub mod stats;
pub mod testgen;

pub use scalar::Scalar;

/// Double-precision network used by the learners.
pub type Mlp = nn::Mlp<f64>;
pub type Optimizer = nn::Optimizer<f64>;
