use super::report::mean_sd;
use super::*;

fn tiny(dir: &Path) -> CampaignConfig {
    CampaignConfig {
        mutations: vec!["ILF".into(), "NR".into(), "M_0.0".into()],
        agents: 3,
        eval_episodes: 2,
        output_dir: dir.to_path_buf(),
        budgets: [(AlgoId::QNet, 400), (AlgoId::PG, 400)].into_iter().collect(),
        search: SearchConfig { depth: 0, precision_fraction: 0.2, ..SearchConfig::default() },
        ..CampaignConfig::profile(Profile::Smoke)
    }
}

#[test]
fn toml_round_trip_and_defaults() {
    let text = r#"
        environments = ["CartPole"]
        algorithms = ["PG"]
        mutations = ["M_1.0", "PAC_Sigmoid+NDF"]
        [budgets]
        PG = 1000
    "#;
    let c = CampaignConfig::from_toml(text).unwrap();
    assert_eq!((c.agents, c.eval_episodes, c.search.depth), (20, 10, 1));
    assert_eq!(c.budgets[&AlgoId::PG], 1000);
    assert_eq!(c.criteria, Criterion::ALL.to_vec());
    assert_eq!(CampaignConfig::from_toml(&c.to_toml()).unwrap(), c);
}

#[test]
fn config_validation() {
    let base = CampaignConfig::profile(Profile::Smoke);
    assert!(base.validate().is_ok());
    assert!(CampaignConfig { agents: 1, ..base.clone() }.validate().is_err());
    assert!(CampaignConfig { mutations: vec!["XYZ".into()], ..base.clone() }.validate().is_err());
    assert!(CampaignConfig { parallelism: 0, ..base.clone() }.validate().is_err());
    assert!(CampaignConfig::from_toml("environments = [\"CartPole\"]\nbogus = 1").is_err());
}

#[test]
fn semantic_hash_ignores_layout_and_output() {
    let a = CampaignConfig::from_toml("environments=[\"CartPole\"]\nalgorithms=[\"PG\"]\nmutations=[\"M_1\"]").unwrap();
    let b = CampaignConfig::from_toml(
        "environments = [ \"CartPole\" ]\n\nalgorithms = [\"PG\"]\nmutations = [\"M_1.0\"]\noutput_dir = \"elsewhere\"\nparallelism = 4",
    )
    .unwrap();
    assert_eq!(a.semantic_hash(), b.semantic_hash());
    let c = CampaignConfig { agents: 7, ..a.clone() };
    assert_ne!(a.semantic_hash(), c.semantic_hash());
}

#[test]
fn mutation_strings() {
    let m = parse_mutation_string("M_1.0").unwrap();
    assert_eq!(m.operators()[0].probability(), Some(1.0));
    assert_eq!(parse_mutation_string("NR").unwrap().to_string(), "NR");
    assert_eq!(parse_mutation_string("PAC_Sigmoid+NDF").unwrap().order(), 2);
    match parse_mutation_string("M_1.5") {
        Err(CampaignError::Mutation { .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn table_one_format() {
    assert_eq!(mean_sd(500.0, 0.0), "500 (0)");
    assert_eq!(mean_sd(414.2, 143.49), "414 (143)");
}

#[test]
fn empty_report_exports_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let report = CampaignReport {
        config_hash: "x".into(),
        seed_base: 0,
        agents: 2,
        eval_episodes: 1,
        criteria: vec![Criterion::R],
        groups: vec![],
    };
    for path in export_report(&report, ReportFormat::Csv, dir.path()).unwrap() {
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1, "{}", path.display());
    }
    assert!("xml".parse::<ReportFormat>().is_err());
}

#[test]
fn tiny_campaign_caches_and_marks_inapplicable() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path());
    let counter = RunCounter::default();
    let first = run_campaign_until(&config, Stage::Hom, &counter).unwrap();
    // healthy + ILF + M_0.0 (NR does not apply to QNet), plus any HOM population
    assert!(counter.trained() >= 9);
    let g = &first.groups[0];
    assert!(matches!(g.mutations[1].status, MutationStatus::Inapplicable { .. }));
    let envs = g.environments.as_ref().unwrap();
    assert!((1..=5).contains(&envs.len()));
    assert_eq!(envs.environments.last().unwrap().config(), EnvironmentConfig::cartpole());
    assert_eq!(g.matrices.len(), 3);
    for m in &g.matrices {
        let row = m.rows.iter().position(|r| r.to_string() == "M_0.0").unwrap();
        assert!(m.killers(row).is_empty(), "{}", m.criterion);
    }

    let again = RunCounter::default();
    let second = run_campaign_until(&config, Stage::Hom, &again).unwrap();
    assert_eq!(again.trained(), 0);
    assert_eq!(first, second);

    let out = dir.path().join("report");
    export_report(&first, ReportFormat::Csv, &out).unwrap();
    let verdicts = std::fs::read_to_string(out.join("table3_verdicts.csv")).unwrap();
    assert!(verdicts.lines().any(|l| l.starts_with("CartPole,QNet,NR,R,-,")), "{verdicts}");
    let md = export_report(&first, ReportFormat::Markdown, &out).unwrap();
    assert!(std::fs::read_to_string(&md[0]).unwrap().contains("| NR | - | - | - |"));

    let rewards = std::fs::read_dir(dir.path().join("rewards")).unwrap().count();
    assert!(rewards >= 6);
    let any = std::fs::read_dir(dir.path().join("rewards")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(any).unwrap();
    assert_eq!(text.lines().next().unwrap(), REWARD_CSV_HEADER);
}

#[test]
fn agent_seeds_ignore_mutation() {
    let a = agent_seed(1, EnvId::CartPole, AlgoId::PG, 0);
    assert_eq!(a, agent_seed(1, EnvId::CartPole, AlgoId::PG, 0));
    assert_ne!(a, agent_seed(1, EnvId::CartPole, AlgoId::PG, 1));
    assert_ne!(a, agent_seed(2, EnvId::CartPole, AlgoId::PG, 0));
    let env = EnvironmentConfig::cartpole();
    let spec = AlgoSpec::default_for(AlgoId::PG, EnvId::CartPole);
    let m = MutationSpec::parse("ILF").unwrap();
    assert_ne!(run_id(&env, &spec, None, a), run_id(&env, &spec, Some(&m), a));
}
