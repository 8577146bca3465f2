//! Report rendering. Output depends only on the report contents, so two
//! exports of the same results are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{write_atomic, CampaignError, CampaignReport, GroupReport, MutationStatus};
use crate::stats::{Criterion, KillVerdict};
use crate::testgen::Origin;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];
}

impl FromStr for ReportFormat {
    type Err = CampaignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(CampaignError::UnknownFormat(other.to_string())),
        }
    }
}

/// Cell of the verdict table on the initial environment.
enum Mark<'a> {
    Verdict(&'a KillVerdict),
    Inapplicable,
    Gap,
}

impl Mark<'_> {
    fn text(&self) -> &'static str {
        match self {
            Mark::Verdict(v) if v.killed => "killed",
            Mark::Verdict(_) => "not-killed",
            Mark::Inapplicable => "-",
            Mark::Gap => "gap",
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Mark::Verdict(v) if v.killed => "✓",
            Mark::Verdict(_) => "✗",
            Mark::Inapplicable => "-",
            Mark::Gap => "?",
        }
    }
}

fn initial_column(g: &GroupReport) -> Option<usize> {
    let envs = g.environments.as_ref()?;
    envs.environments.iter().position(|e| e.provenance.origin == Origin::Initial)
}

fn mark<'a>(g: &'a GroupReport, mutation: &str, criterion: Criterion) -> Mark<'a> {
    let outcome = g.mutations.iter().find(|o| o.mutation == mutation);
    if matches!(outcome.map(|o| &o.status), Some(MutationStatus::Inapplicable { .. })) {
        return Mark::Inapplicable;
    }
    let cell = g.matrix(criterion).zip(initial_column(g)).and_then(|(m, col)| {
        let row = m.rows.iter().position(|r| r.to_string() == mutation)?;
        m.cells[row][col].as_ref()
    });
    cell.map_or(Mark::Gap, Mark::Verdict)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Table-I format, e.g. "500 (0)".
pub fn mean_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.0} ({sd:.0})")
}

fn kill_count(g: &GroupReport, mutation: &str, criterion: Criterion) -> Option<(usize, usize)> {
    let m = g.matrix(criterion)?;
    let row = m.rows.iter().position(|r| r.to_string() == mutation)?;
    Some((m.kill_count(row)?, m.columns.len()))
}

fn table1_csv(r: &CampaignReport) -> String {
    let mut s = String::from("environment,algorithm,agents,mean,sd,summary\n");
    for g in &r.groups {
        if let Some(h) = g.healthy {
            let _ = writeln!(s, "{},{},{},{},{},{}", g.env_id, g.algo, r.agents, h.mean, h.sd, mean_sd(h.mean, h.sd));
        }
    }
    s
}

fn table3_csv(r: &CampaignReport) -> String {
    let mut s = String::from("environment,algorithm,mutation,criterion,verdict,conclusive,p_value,effect_size,power,ratio_fraction\n");
    for g in &r.groups {
        for o in &g.mutations {
            for &c in &r.criteria {
                let m = mark(g, &o.mutation, c);
                let (conclusive, p, d, pw, rf) = match &m {
                    Mark::Verdict(v) => (v.conclusive.to_string(), opt(v.p_value), opt(v.effect_size), opt(v.power), opt(v.ratio_fraction)),
                    _ => Default::default(),
                };
                let _ = writeln!(s, "{},{},{},{c},{},{conclusive},{p},{d},{pw},{rf}", g.env_id, g.algo, o.mutation, m.text());
            }
        }
    }
    s
}

fn table4_csv(r: &CampaignReport) -> String {
    let mut s = String::from("environment,algorithm,mutation,criterion,killing_environments,total_environments\n");
    for g in &r.groups {
        for o in &g.mutations {
            for &c in &r.criteria {
                let (k, n) = match kill_count(g, &o.mutation, c) {
                    Some((k, n)) => (k.to_string(), n.to_string()),
                    None => ("-".into(), "-".into()),
                };
                let _ = writeln!(s, "{},{},{},{c},{k},{n}", g.env_id, g.algo, o.mutation);
            }
        }
    }
    s
}

fn table5_csv(r: &CampaignReport) -> String {
    let mut s = String::from("environment,algorithm,criterion,hom_count,ns,wsc,wsd,ssc\n");
    for g in &r.groups {
        for h in &g.homs {
            let x = h.report.summary;
            let _ = writeln!(s, "{},{},{},{},{},{},{},{}", g.env_id, g.algo, h.criterion, x.hom_count, x.ns, x.wsc, x.wsd, x.ssc);
        }
    }
    s
}

fn json_files(r: &CampaignReport) -> Vec<(&'static str, String)> {
    let pretty = |v: serde_json::Value| serde_json::to_string_pretty(&v).expect("json value serializes");
    let per_group = |f: &dyn Fn(&GroupReport) -> serde_json::Value| {
        pretty(serde_json::Value::Array(
            r.groups
                .iter()
                .map(|g| serde_json::json!({ "environment": g.env_id, "algorithm": g.algo, "data": f(g) }))
                .collect(),
        ))
    };
    vec![
        ("report.json", r.to_json()),
        ("kill_matrices.json", per_group(&|g| serde_json::to_value(&g.matrices).expect("matrices serialize"))),
        ("hom_details.json", per_group(&|g| serde_json::to_value(&g.homs).expect("homs serialize"))),
        ("environments.json", per_group(&|g| serde_json::to_value(&g.environments).expect("environments serialize"))),
    ]
}

fn markdown(r: &CampaignReport) -> String {
    let mut s = String::from("# Mutation testing report\n\n");
    let _ = writeln!(s, "Config hash `{}`, seed base {}, {} agents, {} evaluation episodes.\n", r.config_hash, r.seed_base, r.agents, r.eval_episodes);
    s.push_str("## Healthy agents\n\n| Environment | Algorithm | Return |\n|---|---|---|\n");
    for g in &r.groups {
        let cell = g.healthy.map_or_else(|| g.error.clone().unwrap_or_default(), |h| mean_sd(h.mean, h.sd));
        let _ = writeln!(s, "| {} | {} | {cell} |", g.env_id, g.algo);
    }
    let crit: Vec<String> = r.criteria.iter().map(ToString::to_string).collect();
    let rule = "|---".repeat(crit.len() + 1) + "|";
    s.push_str("\n## Verdicts on the initial environment\n");
    for g in &r.groups {
        let _ = writeln!(s, "\n### {} / {}\n\n| Mutation | {} |\n{rule}", g.env_id, g.algo, crit.join(" | "));
        for o in &g.mutations {
            let marks: Vec<&str> = r.criteria.iter().map(|&c| mark(g, &o.mutation, c).symbol()).collect();
            let _ = writeln!(s, "| {} | {} |", o.mutation, marks.join(" | "));
        }
    }
    s.push_str("\n## Test environments killing each mutation\n");
    for g in &r.groups {
        let _ = writeln!(s, "\n### {} / {}\n\n| Mutation | {} |\n{rule}", g.env_id, g.algo, crit.join(" | "));
        for o in &g.mutations {
            let counts: Vec<String> = r
                .criteria
                .iter()
                .map(|&c| kill_count(g, &o.mutation, c).map_or_else(|| "-".to_string(), |(k, n)| format!("{k}/{n}")))
                .collect();
            let _ = writeln!(s, "| {} | {} |", o.mutation, counts.join(" | "));
        }
    }
    s.push_str("\n## Higher-order mutations\n\n| Environment | Algorithm | Criterion | HOM | NS | WSC | WSD | SSC |\n|---|---|---|---|---|---|---|---|\n");
    for g in &r.groups {
        for h in &g.homs {
            let x = h.report.summary;
            if x.hom_count == 0 {
                let _ = writeln!(s, "| {} | {} | {} | - | - | - | - | - |", g.env_id, g.algo, h.criterion);
            } else {
                let _ = writeln!(s, "| {} | {} | {} | {} | {} | {} | {} | {} |", g.env_id, g.algo, h.criterion, x.hom_count, x.ns, x.wsc, x.wsd, x.ssc);
            }
        }
    }
    s
}

/// Writes the report files of `format` into `dir` and returns their paths.
pub fn export_report(report: &CampaignReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, CampaignError> {
    let files: Vec<(&str, String)> = match format {
        ReportFormat::Csv => vec![
            ("table1_healthy.csv", table1_csv(report)),
            ("table3_verdicts.csv", table3_csv(report)),
            ("table4_kill_counts.csv", table4_csv(report)),
            ("table5_hom.csv", table5_csv(report)),
        ],
        ReportFormat::Json => json_files(report),
        ReportFormat::Markdown => vec![("report.md", markdown(report))],
    };
    let mut paths = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
