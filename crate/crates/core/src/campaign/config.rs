use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::agents::{AlgoId, AlgoSpec};
use crate::env::EnvId;
use crate::mutation::MutationSpec;
use crate::seeding::content_hash;
use crate::stats::{AvgParams, Criterion, DtrParams};
use crate::testgen::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(format!("unknown profile {other:?} (expected smoke, desk or full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Generate boundary environments; otherwise only `E0` is tested.
    pub enabled: bool,
    pub depth: usize,
    /// Bisection precision as a fraction of each axis range.
    pub precision_fraction: f64,
    /// Criterion deciding whether the healthy population behaves differently.
    pub criterion: Criterion,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { enabled: true, depth: 1, precision_fraction: 0.01, criterion: Criterion::R }
    }
}

impl SearchConfig {
    pub fn space(&self, env_id: EnvId) -> SearchSpace {
        let mut space = SearchSpace::default_for(env_id);
        space.depth = self.depth;
        for axis in &mut space.axes {
            axis.precision = self.precision_fraction * (axis.upper - axis.lower);
        }
        space
    }
}

/// A campaign: which populations to train, compare, and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub environments: Vec<EnvId>,
    pub algorithms: Vec<AlgoId>,
    /// Mutation strings in the operator grammar, e.g. `"M_1.0"` or `"PAC_SGD"`.
    pub mutations: Vec<String>,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "default_true")]
    pub hom: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Per-algorithm training budget overrides (environment steps).
    #[serde(default)]
    pub budgets: BTreeMap<AlgoId, u64>,
    #[serde(default)]
    pub avg: AvgParams,
    #[serde(default)]
    pub dtr: DtrParams,
}

fn default_agents() -> usize {
    20
}
fn default_episodes() -> usize {
    10
}
fn default_criteria() -> Vec<Criterion> {
    Criterion::ALL.to_vec()
}
fn default_output() -> PathBuf {
    PathBuf::from("rlmut-out")
}
fn default_true() -> bool {
    true
}
fn default_parallelism() -> usize {
    1
}

const ALL_FOMS: [&str; 12] =
    ["ILF", "M_1.0", "R_1.0", "Ra_1.0", "RN_1.0", "NDF", "NR", "MSU", "MTS", "PAC_ReLU", "PAC_Sigmoid", "POC_SGD"];

impl CampaignConfig {
    pub fn profile(profile: Profile) -> Self {
        let base = CampaignConfig {
            environments: EnvId::ALL.to_vec(),
            algorithms: AlgoId::ALL.to_vec(),
            mutations: ALL_FOMS.iter().map(ToString::to_string).collect(),
            agents: 20,
            eval_episodes: 10,
            criteria: default_criteria(),
            seed_base: 0,
            output_dir: default_output(),
            search: SearchConfig::default(),
            hom: true,
            parallelism: 1,
            budgets: BTreeMap::new(),
            avg: AvgParams::default(),
            dtr: DtrParams::default(),
        };
        match profile {
            Profile::Smoke => CampaignConfig {
                environments: vec![EnvId::CartPole],
                algorithms: vec![AlgoId::QNet],
                mutations: vec!["ILF".into(), "RN_1.0".into()],
                agents: 5,
                budgets: [(AlgoId::QNet, 3_000)].into_iter().collect(),
                ..base
            },
            Profile::Desk => CampaignConfig { agents: 10, ..base },
            Profile::Full => base,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let config: CampaignConfig = toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.agents < 2 {
            return bad(format!("agents must be at least 2, got {}", self.agents));
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.environments.is_empty() || self.algorithms.is_empty() {
            return bad("at least one environment and one algorithm are required".into());
        }
        if self.criteria.is_empty() {
            return bad("at least one criterion is required".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive".into());
        }
        if self.search.criterion == Criterion::AVG {
            return bad("environment search needs the R or DtR criterion".into());
        }
        if !(self.search.precision_fraction > 0.0 && self.search.precision_fraction < 1.0) {
            return bad("search.precision_fraction must lie in (0, 1)".into());
        }
        for m in &self.mutations {
            parse_mutation_string(m)?;
        }
        Ok(())
    }

    pub fn parsed_mutations(&self) -> Result<Vec<MutationSpec>, CampaignError> {
        self.mutations.iter().map(|m| parse_mutation_string(m)).collect()
    }

    pub fn algo_spec(&self, algo: AlgoId, env: EnvId) -> AlgoSpec {
        let mut spec = AlgoSpec::default_for(algo, env);
        if let Some(&b) = self.budgets.get(&algo) {
            spec.training_budget = b;
        }
        spec
    }

    /// Hash of the settings that change results; output location and
    /// parallelism are excluded.
    pub fn semantic_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallelism = 1;
        c.mutations = self.parsed_mutations().map(|ms| ms.iter().map(ToString::to_string).collect()).unwrap_or(c.mutations);
        content_hash(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

/// Parses a mutation string in the operator grammar.
pub fn parse_mutation_string(text: &str) -> Result<MutationSpec, CampaignError> {
    MutationSpec::parse(text).map_err(|source| CampaignError::Mutation { text: text.to_string(), source })
}
