//! Campaign orchestration: seeded population training with on-disk caching,
//! test-environment generation, kill matrices per criterion, the HOM
//! pipeline, and report export.

mod config;
mod report;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, evaluate_population, AlgoId, AlgoSpec, RewardSample, TrainedPolicy};
use crate::env::{EnvId, EnvironmentConfig};
use crate::hom::{build_kill_matrix, hom_pipeline, select_nontrivial_foms, HomError, HomReport, KillMatrix};
use crate::mutation::{MutationError, MutationSpec};
use crate::seeding::{content_hash, derive_seed};
use crate::stats::{CriteriaParams, Criterion};
use crate::testgen::{
    generate_bounds_environments, EvalSpec, GeneratedEnvironment, Origin, PopulationOracle, Provenance, TestEnvironmentSet,
    TestgenError,
};

pub use config::{parse_mutation_string, CampaignConfig, Profile, SearchConfig};
pub use report::{export_report, ReportFormat};
pub use store::{write_atomic, RunRecord, RunStatus, Store, REWARD_CSV_HEADER};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid mutation {text:?}: {source}")]
    Mutation { text: String, source: MutationError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown report format {0:?} (expected csv, json or markdown)")]
    UnknownFormat(String),
    #[error(transparent)]
    Testgen(#[from] TestgenError),
    #[error(transparent)]
    Hom(#[from] HomError),
    #[error("malformed report: {0}")]
    Report(String),
}

impl CampaignError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CampaignError::Io { path: path.to_path_buf(), source }
    }
}

/// How far a campaign invocation proceeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Train,
    GenerateEnvironments,
    Kill,
    Hom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MutationStatus {
    Trained,
    Inapplicable { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationOutcome {
    pub mutation: String,
    #[serde(flatten)]
    pub status: MutationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthySummary {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionHom {
    pub criterion: Criterion,
    pub report: HomReport,
}

/// Results for one (environment, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub env_id: EnvId,
    pub algo: AlgoId,
    pub error: Option<String>,
    pub healthy: Option<HealthySummary>,
    pub environments: Option<TestEnvironmentSet>,
    pub mutations: Vec<MutationOutcome>,
    pub matrices: Vec<KillMatrix>,
    pub homs: Vec<CriterionHom>,
}

impl GroupReport {
    fn new(env_id: EnvId, algo: AlgoId) -> Self {
        GroupReport {
            env_id,
            algo,
            error: None,
            healthy: None,
            environments: None,
            mutations: vec![],
            matrices: vec![],
            homs: vec![],
        }
    }

    pub fn matrix(&self, criterion: Criterion) -> Option<&KillMatrix> {
        self.matrices.iter().find(|m| m.criterion == criterion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config_hash: String,
    pub seed_base: u64,
    pub agents: usize,
    pub eval_episodes: usize,
    pub criteria: Vec<Criterion>,
    pub groups: Vec<GroupReport>,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        serde_json::from_str(text).map_err(|e| CampaignError::Report(e.to_string()))
    }
}

/// Agent seed: independent of the mutation, so that a population and its
/// mutated counterpart share initializations and episode seeds.
pub fn agent_seed(base: u64, env: EnvId, algo: AlgoId, index: usize) -> u64 {
    derive_seed(base, &[env.as_str(), algo.as_str(), "agent", &index.to_string()])
}

fn mutation_label(m: Option<&MutationSpec>) -> String {
    m.map_or_else(|| "healthy".to_string(), ToString::to_string)
}

#[derive(Serialize)]
struct RunKey<'a> {
    env: &'a EnvironmentConfig,
    spec: &'a AlgoSpec,
    mutation: &'a str,
    agent_seed: u64,
}

/// Content-hash identifier of one training run.
pub fn run_id(env: &EnvironmentConfig, spec: &AlgoSpec, mutation: Option<&MutationSpec>, seed: u64) -> String {
    let label = mutation_label(mutation);
    let key = RunKey { env, spec, mutation: &label, agent_seed: seed };
    content_hash(serde_json::to_string(&key).expect("run key serializes").as_bytes())[..16].to_string()
}

/// Counts training runs actually executed (not served from the cache).
#[derive(Debug, Default)]
pub struct RunCounter {
    trained: Mutex<usize>,
}

impl RunCounter {
    pub fn trained(&self) -> usize {
        *self.trained.lock().expect("counter lock")
    }
}

struct Group<'a> {
    config: &'a CampaignConfig,
    store: &'a Store,
    counter: &'a RunCounter,
    env: EnvironmentConfig,
    spec: AlgoSpec,
    eval: EvalSpec,
}

struct Population {
    mutation: Option<MutationSpec>,
    policies: Vec<TrainedPolicy>,
    run_ids: Vec<String>,
}

impl Group<'_> {
    fn seeds(&self) -> Vec<u64> {
        (0..self.config.agents).map(|i| agent_seed(self.config.seed_base, self.env.env_id, self.spec.algo_id, i)).collect()
    }

    fn train_one(&self, mutation: Option<&MutationSpec>, seed: u64) -> Result<(String, TrainedPolicy), String> {
        let id = run_id(&self.env, &self.spec, mutation, seed);
        if let Some(p) = self.store.load_completed(&id) {
            return Ok((id, p));
        }
        let started = Instant::now();
        let result = agents::train(&self.spec, &self.env, mutation, seed);
        *self.counter.trained.lock().expect("counter lock") += 1;
        let record = |status| RunRecord {
            run_id: id.clone(),
            status,
            algo: self.spec.algo_id.to_string(),
            env: self.env.label(),
            mutation: mutation_label(mutation),
            agent_seed: seed,
            policy_path: None,
            reward_path: self.store.reward_path(&id),
            training_seconds: started.elapsed().as_secs_f64(),
        };
        match result {
            Ok(policy) => {
                let rec = RunRecord { policy_path: Some(self.store.policy_path(&id)), ..record(RunStatus::Completed) };
                self.store.save_run(&rec, Some(&policy)).map_err(|e| e.to_string())?;
                Ok((id, policy))
            }
            Err(e) => {
                let reason = e.to_string();
                log::warn!("run {id} ({}, seed {seed}) failed: {reason}", mutation_label(mutation));
                self.store.save_run(&record(RunStatus::Failed { reason: reason.clone() }), None).map_err(|e| e.to_string())?;
                Err(reason)
            }
        }
    }

    /// Trains (or loads) every agent of one population in parallel.
    fn population(&self, mutation: Option<&MutationSpec>) -> Result<Population, String> {
        let results: Vec<_> = self.seeds().into_par_iter().map(|s| self.train_one(mutation, s)).collect();
        let mut pop = Population { mutation: mutation.cloned(), policies: vec![], run_ids: vec![] };
        for r in results {
            let (id, p) = r?;
            pop.run_ids.push(id);
            pop.policies.push(p);
        }
        Ok(pop)
    }

    fn rewards(&self, pop: &Population, envs: &[EnvironmentConfig]) -> Result<Vec<RewardSample>, String> {
        envs.par_iter()
            .map(|e| evaluate_population(&pop.policies, e, self.config.eval_episodes, self.eval.seed).map_err(|e| e.to_string()))
            .collect()
    }

    fn write_reward_csvs(&self, pop: &Population, rewards: &[RewardSample]) -> Result<(), CampaignError> {
        let label = mutation_label(pop.mutation.as_ref());
        for (agent, id) in pop.run_ids.iter().enumerate() {
            let mut csv = String::from(REWARD_CSV_HEADER);
            csv.push('\n');
            for (k, sample) in rewards.iter().enumerate() {
                for (ep, r) in sample.agent(agent).iter().enumerate() {
                    csv.push_str(&format!(
                        "{id},{},{}#{k},{label},{},{ep},{r}\n",
                        self.spec.algo_id, self.env.env_id, pop.policies[agent].seed
                    ));
                }
            }
            write_atomic(&self.store.reward_path(id), csv.as_bytes())?;
        }
        Ok(())
    }
}

fn initial_only(e0: &EnvironmentConfig) -> TestEnvironmentSet {
    TestEnvironmentSet {
        environments: vec![GeneratedEnvironment {
            env_id: e0.env_id,
            params: e0.params.clone(),
            episode_cap: e0.episode_cap,
            provenance: Provenance { origin: Origin::Initial, iterations: 0, witness: None },
        }],
    }
}

/// Runs the campaign up to `stop_after`, reusing cached runs under the
/// configured output directory.
pub fn run_campaign_until(config: &CampaignConfig, stop_after: Stage, counter: &RunCounter) -> Result<CampaignReport, CampaignError> {
    config.validate()?;
    let mutations = config.parsed_mutations()?;
    let store = Store::new(&config.output_dir);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    let mut groups = Vec::new();
    for &env_id in &config.environments {
        for &algo in &config.algorithms {
            let env = EnvironmentConfig::new(env_id);
            let base = config.seed_base;
            let eval = EvalSpec {
                episodes: config.eval_episodes,
                seed: derive_seed(base, &["eval", env_id.as_str(), algo.as_str()]),
                criteria: CriteriaParams {
                    avg: config.avg,
                    dtr: config.dtr,
                    dtr_seed: derive_seed(base, &["dtr", env_id.as_str(), algo.as_str()]),
                },
            };
            let group = Group { config, store: &store, counter, spec: config.algo_spec(algo, env_id), env, eval };
            groups.push(pool.install(|| run_group(&group, &mutations, stop_after))?);
        }
    }
    Ok(CampaignReport {
        config_hash: config.semantic_hash(),
        seed_base: config.seed_base,
        agents: config.agents,
        eval_episodes: config.eval_episodes,
        criteria: config.criteria.clone(),
        groups,
    })
}

/// Full pipeline: train, generate environments, kill matrices, HOMs.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    run_campaign_until(config, Stage::Hom, &RunCounter::default())
}

fn run_group(g: &Group<'_>, mutations: &[MutationSpec], stop_after: Stage) -> Result<GroupReport, CampaignError> {
    let mut out = GroupReport::new(g.env.env_id, g.spec.algo_id);
    let healthy = match g.population(None) {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(format!("healthy population failed: {e}"));
            return Ok(out);
        }
    };
    let mut trained: Vec<Population> = Vec::new();
    for m in mutations {
        let status = match m.check_compatible(g.spec.algo_id).and_then(|_| m.transform_spec(&g.spec)) {
            Err(e) => MutationStatus::Inapplicable { reason: e.to_string() },
            Ok(_) => match g.population(Some(m)) {
                Ok(pop) => {
                    trained.push(pop);
                    MutationStatus::Trained
                }
                Err(reason) => MutationStatus::Failed { reason },
            },
        };
        out.mutations.push(MutationOutcome { mutation: m.to_string(), status });
    }
    let e0_rewards = g.rewards(&healthy, std::slice::from_ref(&g.env)).map_err(CampaignError::Report)?;
    let (mean, sd) = e0_rewards[0].summary();
    out.healthy = Some(HealthySummary { mean, sd });
    if stop_after == Stage::Train {
        return Ok(out);
    }

    let envs = if g.config.search.enabled {
        let mut oracle = PopulationOracle::new(&healthy.policies, &g.env, g.config.search.criterion, g.eval)?;
        generate_bounds_environments(&mut oracle, &g.env, &g.config.search.space(g.env.env_id))?
    } else {
        initial_only(&g.env)
    };
    let columns = envs.configs();
    out.environments = Some(envs);
    if stop_after == Stage::GenerateEnvironments {
        return Ok(out);
    }

    let healthy_rewards = g.rewards(&healthy, &columns).map_err(CampaignError::Report)?;
    g.write_reward_csvs(&healthy, &healthy_rewards)?;
    let mut mutated_rewards: BTreeMap<String, Vec<RewardSample>> = BTreeMap::new();
    for pop in &trained {
        let r = g.rewards(pop, &columns).map_err(CampaignError::Report)?;
        g.write_reward_csvs(pop, &r)?;
        mutated_rewards.insert(mutation_label(pop.mutation.as_ref()), r);
    }
    for &criterion in &g.config.criteria {
        let rows = mutations
            .iter()
            .zip(&out.mutations)
            .filter(|(_, o)| !matches!(o.status, MutationStatus::Inapplicable { .. }))
            .map(|(m, _)| {
                let cells = match mutated_rewards.get(&m.to_string()) {
                    Some(r) => r.iter().cloned().map(Some).collect(),
                    None => vec![None; columns.len()],
                };
                (m.clone(), cells)
            })
            .collect();
        out.matrices.push(build_kill_matrix(criterion, columns.clone(), &healthy_rewards, rows, &g.eval.criteria)?);
    }
    if stop_after == Stage::Kill || !g.config.hom {
        return Ok(out);
    }

    let hom_rewards: Mutex<BTreeMap<String, Result<Vec<RewardSample>, String>>> = Mutex::new(BTreeMap::new());
    for matrix in &out.matrices {
        let nontrivial = select_nontrivial_foms(matrix);
        let report = hom_pipeline(&nontrivial, g.spec.algo_id, matrix, |hom| {
            let key = hom.to_string();
            let cached = hom_rewards.lock().expect("hom cache lock").get(&key).cloned();
            let rewards = match cached {
                Some(r) => r,
                None => {
                    let r = g.population(Some(hom)).and_then(|pop| {
                        let r = g.rewards(&pop, &columns)?;
                        g.write_reward_csvs(&pop, &r).map_err(|e| e.to_string())?;
                        Ok(r)
                    });
                    hom_rewards.lock().expect("hom cache lock").insert(key, r.clone());
                    r
                }
            }?;
            let mut killers = BTreeSet::new();
            for (k, (h, m)) in healthy_rewards.iter().zip(&rewards).enumerate() {
                if crate::stats::decide(matrix.criterion, h, m, &g.eval.criteria).map_err(|e| e.to_string())?.killed {
                    killers.insert(k);
                }
            }
            Ok(killers)
        });
        out.homs.push(CriterionHom { criterion: matrix.criterion, report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
