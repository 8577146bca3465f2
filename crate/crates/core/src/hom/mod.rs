//! Kill matrices over generated environments, non-trivial FOM selection,
//! and classification of second-order mutations.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AlgoId, RewardSample};
use crate::env::EnvironmentConfig;
use crate::mutation::{compose_hom, MutationSpec};
use crate::stats::{decide, CriteriaParams, Criterion, KillVerdict, StatsError};

#[derive(Debug, Error)]
pub enum HomError {
    #[error("{what}: expected {expected} columns, got {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("kill matrix has no environments")]
    NoEnvironments,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Verdicts of every FOM (rows) on every test environment (columns).
/// A `None` cell is a gap: the mutated population is missing there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillMatrix {
    pub criterion: Criterion,
    pub rows: Vec<MutationSpec>,
    pub columns: Vec<EnvironmentConfig>,
    pub cells: Vec<Vec<Option<KillVerdict>>>,
}

impl KillMatrix {
    pub fn is_complete(&self, row: usize) -> bool {
        self.cells[row].iter().all(Option::is_some)
    }

    /// Number of environments killing the row; `None` for incomplete rows.
    pub fn kill_count(&self, row: usize) -> Option<usize> {
        self.is_complete(row).then(|| self.killers(row).len())
    }

    /// Column indices whose verdict kills the row.
    pub fn killers(&self, row: usize) -> BTreeSet<usize> {
        self.cells[row].iter().enumerate().filter(|(_, c)| c.as_ref().is_some_and(|v| v.killed)).map(|(i, _)| i).collect()
    }

    pub fn row_of(&self, mutation: &MutationSpec) -> Option<usize> {
        self.rows.iter().position(|r| r == mutation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kill matrix serializes")
    }
}

/// Builds a kill matrix from evaluated rewards. `healthy[e]` holds the
/// healthy population's rewards on column `e`; each mutated entry holds one
/// sample per column, or `None` where the population is missing.
pub fn build_kill_matrix(
    criterion: Criterion,
    columns: Vec<EnvironmentConfig>,
    healthy: &[RewardSample],
    mutated: Vec<(MutationSpec, Vec<Option<RewardSample>>)>,
    params: &CriteriaParams,
) -> Result<KillMatrix, HomError> {
    if columns.is_empty() {
        return Err(HomError::NoEnvironments);
    }
    let shape = |what: String, got: usize| {
        if got == columns.len() {
            Ok(())
        } else {
            Err(HomError::Shape { what, expected: columns.len(), got })
        }
    };
    shape("healthy rewards".into(), healthy.len())?;
    let mut rows = Vec::with_capacity(mutated.len());
    let mut cells = Vec::with_capacity(mutated.len());
    for (mutation, samples) in mutated {
        shape(format!("rewards of {mutation}"), samples.len())?;
        let row = samples
            .iter()
            .zip(healthy)
            .map(|(m, h)| m.as_ref().map(|m| decide(criterion, h, m, params)).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(mutation);
        cells.push(row);
    }
    Ok(KillMatrix { criterion, rows, columns, cells })
}

/// Complete rows killed by at least one but not every environment.
pub fn select_nontrivial_foms(matrix: &KillMatrix) -> Vec<MutationSpec> {
    let total = matrix.columns.len();
    (0..matrix.rows.len())
        .filter(|&r| matrix.kill_count(r).is_some_and(|k| k != 0 && k != total))
        .map(|r| matrix.rows[r].clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HomType {
    NotKilled,
    NonSubsuming,
    WeaklySubsumingCoupled,
    WeaklySubsumingDecoupled,
    StronglySubsumingCoupled,
}

impl HomType {
    pub fn short(self) -> &'static str {
        match self {
            HomType::NotKilled => "NK",
            HomType::NonSubsuming => "NS",
            HomType::WeaklySubsumingCoupled => "WSC",
            HomType::WeaklySubsumingDecoupled => "WSD",
            HomType::StronglySubsumingCoupled => "SSC",
        }
    }
}

impl fmt::Display for HomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Classifies a HOM from the sets of environments killing it (`t_h`) and its
/// two constituents. Subsuming means `|T_H| < |T_1 ∪ T_2|`.
pub fn classify_hom<T: Ord>(t_h: &BTreeSet<T>, t_1: &BTreeSet<T>, t_2: &BTreeSet<T>) -> HomType {
    if t_h.is_empty() {
        return HomType::NotKilled;
    }
    let union: BTreeSet<&T> = t_1.union(t_2).collect();
    if t_h.len() >= union.len() {
        return HomType::NonSubsuming;
    }
    if t_h.iter().all(|e| t_1.contains(e) && t_2.contains(e)) {
        HomType::StronglySubsumingCoupled
    } else if t_h.iter().all(|e| !union.contains(e)) {
        HomType::WeaklySubsumingDecoupled
    } else {
        HomType::WeaklySubsumingCoupled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomClassification {
    pub hom: MutationSpec,
    pub t_h: BTreeSet<usize>,
    pub t_1: BTreeSet<usize>,
    pub t_2: BTreeSet<usize>,
    #[serde(rename = "type")]
    pub hom_type: HomType,
}

/// Counts in the shape of a HOM summary table row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomSummary {
    pub hom_count: usize,
    pub not_killed: usize,
    pub ns: usize,
    pub wsc: usize,
    pub wsd: usize,
    pub ssc: usize,
}

impl HomSummary {
    pub fn from_classifications(items: &[HomClassification]) -> Self {
        let mut s = HomSummary { hom_count: items.len(), ..HomSummary::default() };
        for c in items {
            match c.hom_type {
                HomType::NotKilled => s.not_killed += 1,
                HomType::NonSubsuming => s.ns += 1,
                HomType::WeaklySubsumingCoupled => s.wsc += 1,
                HomType::WeaklySubsumingDecoupled => s.wsd += 1,
                HomType::StronglySubsumingCoupled => s.ssc += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomReport {
    pub classifications: Vec<HomClassification>,
    /// Pairs that could not be composed or evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
    pub summary: HomSummary,
    /// Set when no HOM could be formed at all.
    pub empty_reason: Option<String>,
}

/// Composes every unordered pair of non-trivial FOMs, obtains the set of
/// environments killing each HOM from `kill_set`, and classifies it against
/// its constituents' rows in `matrix`. HOMs are evaluated in parallel.
pub fn hom_pipeline<F>(nontrivial: &[MutationSpec], algo: AlgoId, matrix: &KillMatrix, kill_set: F) -> HomReport
where
    F: Fn(&MutationSpec) -> Result<BTreeSet<usize>, String> + Sync,
{
    let empty = |reason: &str| HomReport {
        classifications: vec![],
        skipped: vec![],
        summary: HomSummary::default(),
        empty_reason: Some(reason.to_string()),
    };
    if nontrivial.len() < 2 {
        return empty("fewer than two non-trivial FOMs");
    }
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for (i, a) in nontrivial.iter().enumerate() {
        for b in &nontrivial[i + 1..] {
            let label = format!("{a}+{b}");
            let (Some(ra), Some(rb)) = (matrix.row_of(a), matrix.row_of(b)) else {
                skipped.push((label, "constituent missing from the kill matrix".into()));
                continue;
            };
            match (a.operators(), b.operators()) {
                ([oa], [ob]) => match compose_hom(oa, ob, algo) {
                    Ok(hom) => jobs.push((hom, ra, rb)),
                    Err(e) => {
                        log::info!("skipping HOM {label}: {e}");
                        skipped.push((label, e.to_string()));
                    }
                },
                _ => skipped.push((label, "constituents must be first-order".into())),
            }
        }
    }
    let results: Vec<_> = jobs.par_iter().map(|(hom, _, _)| kill_set(hom)).collect();
    let mut classifications = Vec::new();
    for ((hom, ra, rb), result) in jobs.into_iter().zip(results) {
        match result {
            Ok(t_h) => {
                let (t_1, t_2) = (matrix.killers(ra), matrix.killers(rb));
                let hom_type = classify_hom(&t_h, &t_1, &t_2);
                classifications.push(HomClassification { hom, t_h, t_1, t_2, hom_type });
            }
            Err(e) => skipped.push((hom.to_string(), e)),
        }
    }
    if classifications.is_empty() && !skipped.is_empty() {
        let mut report = empty("no compatible HOM could be evaluated");
        report.skipped = skipped;
        return report;
    }
    let summary = HomSummary::from_classifications(&classifications);
    HomReport { classifications, skipped, summary, empty_reason: None }
}
