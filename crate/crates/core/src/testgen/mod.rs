//! Boundary test-environment generation.
//!
//! Starting from the training environment `E0`, each parameter axis is
//! bisected towards its upper and lower search limit to find the farthest
//! configuration on which the healthy population still behaves like on
//! `E0`. The depth loop then searches between angularly adjacent frontier
//! points, doubling the frontier per level.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{evaluate_population, RewardSample, TrainError, TrainedPolicy};
use crate::env::{EnvError, EnvId, EnvironmentConfig};
use crate::stats::{decide, CriteriaParams, Criterion, StatsError};

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("criterion {0} cannot compare environments (use R or DtR)")]
    UnsupportedCriterion(Criterion),
    #[error("no trained agents supplied")]
    NoAgents,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Search limits of one parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: String,
    pub lower: f64,
    pub upper: f64,
    /// Absolute bisection tolerance.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub axes: Vec<Axis>,
    pub depth: usize,
}

impl SearchSpace {
    /// The environment's declared limits, precision 1% of each range, depth 1.
    pub fn default_for(env_id: EnvId) -> Self {
        let axes = env_id
            .params()
            .iter()
            .map(|p| Axis { param: p.name.to_string(), lower: p.lower, upper: p.upper, precision: 0.01 * (p.upper - p.lower) })
            .collect();
        SearchSpace { axes, depth: 1 }
    }

    pub fn validate(&self, e0: &EnvironmentConfig) -> Result<(), TestgenError> {
        let bad = |m: String| Err(TestgenError::InvalidSpace(m));
        if self.axes.len() != 2 {
            return bad(format!("exactly two axes are supported, got {}", self.axes.len()));
        }
        if self.axes[0].param == self.axes[1].param {
            return bad("axes must name distinct parameters".into());
        }
        for a in &self.axes {
            if e0.env_id.param(&a.param).is_none() {
                return bad(format!("{} has no parameter {:?}", e0.env_id, a.param));
            }
            if !(a.precision > 0.0 && a.precision.is_finite()) {
                return bad(format!("precision of {} must be positive", a.param));
            }
            if !(a.lower > 0.0 && a.lower < a.upper && a.upper.is_finite()) {
                return bad(format!("limits of {} must satisfy 0 < lower < upper", a.param));
            }
            let v = e0.get(&a.param);
            if v < a.lower || v > a.upper {
                return bad(format!("E0 {} = {v} lies outside [{}, {}]", a.param, a.lower, a.upper));
            }
        }
        Ok(())
    }
}

/// Decides whether the healthy population behaves differently on a
/// candidate environment than on `E0`.
pub trait DifferenceOracle {
    fn is_different(&mut self, candidate: &EnvironmentConfig) -> Result<bool, TestgenError>;
}

impl<F: FnMut(&EnvironmentConfig) -> bool> DifferenceOracle for F {
    fn is_different(&mut self, candidate: &EnvironmentConfig) -> Result<bool, TestgenError> {
        Ok(self(candidate))
    }
}

/// Evaluation settings shared by every population comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub episodes: usize,
    pub seed: u64,
    pub criteria: CriteriaParams,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { episodes: 10, seed: 0, criteria: CriteriaParams::default() }
    }
}

fn check_criterion(criterion: Criterion) -> Result<(), TestgenError> {
    match criterion {
        Criterion::AVG => Err(TestgenError::UnsupportedCriterion(criterion)),
        _ => Ok(()),
    }
}

/// Evaluates both populations on their environments and applies `criterion`.
pub fn is_different(
    agents_a: &[TrainedPolicy],
    env_a: &EnvironmentConfig,
    agents_b: &[TrainedPolicy],
    env_b: &EnvironmentConfig,
    criterion: Criterion,
    eval: &EvalSpec,
) -> Result<bool, TestgenError> {
    check_criterion(criterion)?;
    if agents_a.is_empty() || agents_b.is_empty() {
        return Err(TestgenError::NoAgents);
    }
    let a = evaluate_population(agents_a, env_a, eval.episodes, eval.seed)?;
    let b = evaluate_population(agents_b, env_b, eval.episodes, eval.seed)?;
    Ok(decide(criterion, &a, &b, &eval.criteria)?.killed)
}

/// [`DifferenceOracle`] backed by a trained population; rewards on `E0` are
/// computed once.
pub struct PopulationOracle<'a> {
    agents: &'a [TrainedPolicy],
    baseline: RewardSample,
    criterion: Criterion,
    eval: EvalSpec,
    pub probes: usize,
}

impl<'a> PopulationOracle<'a> {
    pub fn new(
        agents: &'a [TrainedPolicy],
        e0: &EnvironmentConfig,
        criterion: Criterion,
        eval: EvalSpec,
    ) -> Result<Self, TestgenError> {
        check_criterion(criterion)?;
        if agents.is_empty() {
            return Err(TestgenError::NoAgents);
        }
        let baseline = evaluate_population(agents, e0, eval.episodes, eval.seed)?;
        Ok(PopulationOracle { agents, baseline, criterion, eval, probes: 0 })
    }
}

impl DifferenceOracle for PopulationOracle<'_> {
    fn is_different(&mut self, candidate: &EnvironmentConfig) -> Result<bool, TestgenError> {
        self.probes += 1;
        let rewards = evaluate_population(self.agents, candidate, self.eval.episodes, self.eval.seed)?;
        Ok(decide(self.criterion, &self.baseline, &rewards, &self.eval.criteria)?.killed)
    }
}

/// Where a generated environment came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Axis { param: String, limit: f64 },
    Between { depth: usize, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub origin: Origin,
    pub iterations: u32,
    /// Closest probed configuration found different from `E0`, if any.
    pub witness: Option<EnvironmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEnvironment {
    pub env_id: EnvId,
    pub params: std::collections::BTreeMap<String, f64>,
    pub episode_cap: u32,
    pub provenance: Provenance,
}

impl GeneratedEnvironment {
    pub fn config(&self) -> EnvironmentConfig {
        EnvironmentConfig { env_id: self.env_id, params: self.params.clone(), episode_cap: self.episode_cap }
    }

    fn new(config: EnvironmentConfig, provenance: Provenance) -> Self {
        GeneratedEnvironment { env_id: config.env_id, params: config.params, episode_cap: config.episode_cap, provenance }
    }
}

/// Ordered, duplicate-free environment set with `E0` present exactly once (last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestEnvironmentSet {
    pub environments: Vec<GeneratedEnvironment>,
}

impl TestEnvironmentSet {
    pub fn configs(&self) -> Vec<EnvironmentConfig> {
        self.environments.iter().map(GeneratedEnvironment::config).collect()
    }

    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Result of one bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub env: EnvironmentConfig,
    pub iterations: u32,
    pub witness: Option<EnvironmentConfig>,
}

/// Bisects along the straight segment from `e0` (t = 0) to `far` (t = 1).
/// `far` is returned directly when it is not different; otherwise the search
/// keeps `b` not-different and `c` different until every parameter of the
/// two is within its precision.
fn segment_bisect(
    oracle: &mut dyn DifferenceOracle,
    e0: &EnvironmentConfig,
    far: &EnvironmentConfig,
    precision: &dyn Fn(&str) -> f64,
) -> Result<Boundary, TestgenError> {
    if !oracle.is_different(far)? {
        return Ok(Boundary { env: far.clone(), iterations: 0, witness: None });
    }
    let at = |t: f64| -> Result<EnvironmentConfig, EnvError> {
        let values: Vec<(&str, f64)> = e0
            .params
            .iter()
            .map(|(k, &v0)| {
                let v1 = far.params[k];
                (k.as_str(), if t >= 1.0 { v1 } else { v0 + t * (v1 - v0) })
            })
            .collect();
        e0.with_params(values)
    };
    let (mut tb, mut tc) = (0.0f64, 1.0f64);
    let (mut b, mut c) = (e0.clone(), far.clone());
    let mut iterations = 0;
    let wide = |b: &EnvironmentConfig, c: &EnvironmentConfig| {
        b.params.iter().any(|(k, &vb)| (c.params[k] - vb).abs() > precision(k))
    };
    while wide(&b, &c) {
        let tm = 0.5 * (tb + tc);
        let m = at(tm)?;
        iterations += 1;
        if oracle.is_different(&m)? {
            tc = tm;
            c = m;
        } else {
            tb = tm;
            b = m;
        }
    }
    Ok(Boundary { env: b, iterations, witness: Some(c) })
}

/// Boundary of a single axis between `e0` and `limit`. Returns `e0` when it
/// already sits at the limit.
pub fn axis_bisect(
    oracle: &mut dyn DifferenceOracle,
    e0: &EnvironmentConfig,
    param: &str,
    limit: f64,
    precision: f64,
) -> Result<Boundary, TestgenError> {
    if !(precision > 0.0) {
        return Err(TestgenError::InvalidSpace("precision must be positive".into()));
    }
    if e0.get(param) == limit {
        return Ok(Boundary { env: e0.clone(), iterations: 0, witness: None });
    }
    let far = e0.with_param(param, limit)?;
    segment_bisect(oracle, e0, &far, &|_| precision)
}

/// Position of `env` relative to `e0`, each axis scaled to [-1, 1] by the
/// distance from the default to the limit on that side.
fn normalized(env: &EnvironmentConfig, e0: &EnvironmentConfig, space: &SearchSpace) -> [f64; 2] {
    std::array::from_fn(|i| {
        let a = &space.axes[i];
        let (v, v0) = (env.get(&a.param), e0.get(&a.param));
        let span = if v >= v0 { a.upper - v0 } else { v0 - a.lower };
        if span > 0.0 { (v - v0) / span } else { 0.0 }
    })
}

fn angular_order(frontier: &mut [GeneratedEnvironment], e0: &EnvironmentConfig, space: &SearchSpace) {
    let key = |g: &GeneratedEnvironment| {
        let [x, y] = normalized(&g.config(), e0, space);
        (y.atan2(x), x.hypot(y))
    };
    frontier.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.partial_cmp(&kb.0).unwrap_or(Ordering::Equal).then(ka.1.partial_cmp(&kb.1).unwrap_or(Ordering::Equal))
    });
}

fn push_unique(set: &mut Vec<GeneratedEnvironment>, g: GeneratedEnvironment) {
    if !set.iter().any(|x| x.params == g.params) {
        set.push(g);
    }
}

/// Generates the boundary environment set around `e0`.
///
/// Axis phase: upper then lower limit of each axis. Depth phase: frontier
/// points (excluding `e0`) are ordered by angle around `e0` and each
/// adjacent pair, wrapping around, contributes the pair plus either their
/// midpoint (if not different) or the boundary on the ray from `e0`
/// through it.
pub fn generate_bounds_environments(
    oracle: &mut dyn DifferenceOracle,
    e0: &EnvironmentConfig,
    space: &SearchSpace,
) -> Result<TestEnvironmentSet, TestgenError> {
    e0.validate()?;
    space.validate(e0)?;
    let precision = |name: &str| space.axes.iter().find(|a| a.param == name).map_or(f64::INFINITY, |a| a.precision);

    let mut frontier: Vec<GeneratedEnvironment> = Vec::new();
    for axis in &space.axes {
        for limit in [axis.upper, axis.lower] {
            let found = axis_bisect(oracle, e0, &axis.param, limit, axis.precision)?;
            if found.env == *e0 {
                continue;
            }
            let origin = Origin::Axis { param: axis.param.clone(), limit };
            push_unique(
                &mut frontier,
                GeneratedEnvironment::new(found.env, Provenance { origin, iterations: found.iterations, witness: found.witness }),
            );
        }
    }

    for depth in 1..=space.depth {
        angular_order(&mut frontier, e0, space);
        if frontier.len() < 2 {
            break;
        }
        let n = frontier.len();
        let pairs: Vec<(usize, usize)> = if n == 2 { vec![(0, 1)] } else { (0..n).map(|j| (j, (j + 1) % n)).collect() };
        let mut next: Vec<GeneratedEnvironment> = Vec::new();
        for (j, k) in pairs {
            let (left, right) = (frontier[j].config(), frontier[k].config());
            let mid = e0.with_params(left.params.iter().map(|(p, &v)| (p.as_str(), 0.5 * (v + right.params[p]))))?;
            let found = segment_bisect(oracle, e0, &mid, &precision)?;
            push_unique(&mut next, frontier[j].clone());
            if found.env != *e0 {
                let origin = Origin::Between { depth, left: j, right: k };
                push_unique(
                    &mut next,
                    GeneratedEnvironment::new(found.env, Provenance { origin, iterations: found.iterations, witness: found.witness }),
                );
            }
            push_unique(&mut next, frontier[k].clone());
        }
        frontier = next;
    }
    angular_order(&mut frontier, e0, space);
    frontier.push(GeneratedEnvironment::new(
        e0.clone(),
        Provenance { origin: Origin::Initial, iterations: 0, witness: None },
    ));
    Ok(TestEnvironmentSet { environments: frontier })
}

#[cfg(test)]
mod tests;
