use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rlmut::campaign::{
    export_report, run_campaign_until, CampaignConfig, CampaignReport, Profile, ReportFormat, RunCounter, Stage,
};
use rlmut::stats::Criterion;

#[derive(Parser)]
#[command(name = "rlmut", version, about = "Mutation testing for reinforcement learning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Campaign configuration (TOML). Overrides --profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for runs, rewards and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed base for every derived seed.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Number of worker threads.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Built-in configuration used when no --config is given.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Smoke,
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Avg,
    R,
    Dtr,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Markdown,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Train healthy and mutated populations (cached by content hash).
    Train(Common),
    /// Generate boundary test environments around the training environment.
    GenEnvs(Common),
    /// Build kill matrices for one criterion.
    Kill {
        #[arg(long, value_enum)]
        criterion: CriterionArg,
        #[command(flatten)]
        common: Common,
    },
    /// Compose non-trivial FOMs into HOMs and classify them.
    Hom(Common),
    /// Re-export the stored report.
    Report {
        #[arg(long, value_enum, default_value_t = FormatArg::All)]
        format: FormatArg,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline followed by export in every format.
    Run(Common),
}

fn load_config(c: &Common) -> Result<CampaignConfig> {
    let mut config = match &c.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::profile(match c.profile {
            ProfileArg::Smoke => Profile::Smoke,
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Full => Profile::Full,
        }),
    };
    if let Some(out) = &c.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = c.seeds {
        config.seed_base = seed;
    }
    if let Some(k) = c.parallelism {
        config.parallelism = k;
    }
    config.validate()?;
    Ok(config)
}

fn report_dir(config: &CampaignConfig) -> PathBuf {
    config.output_dir.join("report")
}

fn formats(f: FormatArg) -> Vec<ReportFormat> {
    match f {
        FormatArg::Csv => vec![ReportFormat::Csv],
        FormatArg::Json => vec![ReportFormat::Json],
        FormatArg::Markdown => vec![ReportFormat::Markdown],
        FormatArg::All => ReportFormat::ALL.to_vec(),
    }
}

fn export(report: &CampaignReport, dir: &Path, f: FormatArg) -> Result<()> {
    for format in formats(f) {
        for path in export_report(report, format, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn execute(config: &CampaignConfig, stage: Stage) -> Result<CampaignReport> {
    let counter = RunCounter::default();
    let report = run_campaign_until(config, stage, &counter)?;
    log::info!("{} training runs executed, the rest served from cache", counter.trained());
    for g in &report.groups {
        match (&g.error, g.healthy) {
            (Some(e), _) => println!("{} / {}: {e}", g.env_id, g.algo),
            (None, Some(h)) => println!("{} / {}: healthy return {:.1} (sd {:.1})", g.env_id, g.algo, h.mean, h.sd),
            _ => {}
        }
    }
    Ok(report)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(c) => {
            let config = load_config(&c)?;
            execute(&config, Stage::Train)?;
        }
        Command::GenEnvs(c) => {
            let config = load_config(&c)?;
            let report = execute(&config, Stage::GenerateEnvironments)?;
            export(&report, &report_dir(&config), FormatArg::Json)?;
        }
        Command::Kill { criterion, common } => {
            let mut config = load_config(&common)?;
            config.criteria = vec![match criterion {
                CriterionArg::Avg => Criterion::AVG,
                CriterionArg::R => Criterion::R,
                CriterionArg::Dtr => Criterion::DtR,
            }];
            let report = execute(&config, Stage::Kill)?;
            export(&report, &report_dir(&config), FormatArg::All)?;
        }
        Command::Hom(c) | Command::Run(c) => {
            let config = load_config(&c)?;
            let report = execute(&config, Stage::Hom)?;
            export(&report, &report_dir(&config), FormatArg::All)?;
        }
        Command::Report { format, common } => {
            let config = load_config(&common)?;
            let path = report_dir(&config).join("report.json");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("no stored report at {} (run `rlmut run` first)", path.display()))?;
            let report = CampaignReport::from_json(&text)?;
            if report.config_hash != config.semantic_hash() {
                bail!("stored report was produced by a different configuration");
            }
            export(&report, &report_dir(&config), format)?;
        }
    }
    Ok(())
}
