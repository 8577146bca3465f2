//! On-disk artifacts: policies, run records and reward CSVs, all written
//! through a temporary file and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::agents::TrainedPolicy;

pub const REWARD_CSV_HEADER: &str = "run_id,algo,env_id,mutation,agent_seed,episode_index,episode_return";

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CampaignError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CampaignError::io(path, e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

/// Bookkeeping for one training run. Only this file carries timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    #[serde(flatten)]
    pub status: RunStatus,
    pub algo: String,
    pub env: String,
    pub mutation: String,
    pub agent_seed: u64,
    pub policy_path: Option<PathBuf>,
    pub reward_path: PathBuf,
    pub training_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Store {
    pub root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn policy_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.policy"))
    }

    pub fn record_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.json"))
    }

    pub fn reward_path(&self, run_id: &str) -> PathBuf {
        self.root.join("rewards").join(format!("{run_id}.csv"))
    }

    /// A completed run's policy, if present and intact.
    pub fn load_completed(&self, run_id: &str) -> Option<TrainedPolicy> {
        let record: RunRecord = serde_json::from_str(&fs::read_to_string(self.record_path(run_id)).ok()?).ok()?;
        if record.status != RunStatus::Completed {
            return None;
        }
        TrainedPolicy::from_text(&fs::read_to_string(self.policy_path(run_id)).ok()?).ok()
    }

    pub fn save_run(&self, record: &RunRecord, policy: Option<&TrainedPolicy>) -> Result<(), CampaignError> {
        if let Some(p) = policy {
            write_atomic(&self.policy_path(&record.run_id), p.to_text().as_bytes())?;
        }
        let json = serde_json::to_string_pretty(record).expect("run record serializes");
        write_atomic(&self.record_path(&record.run_id), json.as_bytes())
    }
}
