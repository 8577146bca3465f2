use std::path::Path;
use std::process::{Command, Output};

fn rlmut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlmut")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"
environments = ["CartPole"]
algorithms = ["PG"]
mutations = ["M_0.0", "NR"]
agents = 2
eval_episodes = 2
criteria = ["AVG", "R"]

[search]
enabled = false

[budgets]
PG = 1000
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let run = rlmut(&["run", "--config", &config, "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("CartPole / PG: healthy return"), "{stdout}");
    let report_md = dir.path().join("out/report/report.md");
    let before = std::fs::read(&report_md).unwrap();

    let again = rlmut(&["report", "--format", "markdown", "--config", &config, "--out", out]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(std::fs::read(&report_md).unwrap(), before);

    // a different seed base is a different campaign
    let other = rlmut(&["report", "--config", &config, "--out", out, "--seeds", "9"]);
    assert!(!other.status.success());
}

#[test]
fn kill_writes_a_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let res = rlmut(&["kill", "--criterion", "r", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let counts = std::fs::read_to_string(out.join("report/table4_kill_counts.csv")).unwrap();
    let rows: Vec<&str> = counts.lines().skip(1).collect();
    assert!(!rows.is_empty(), "{counts}");
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("R")), "{counts}");
}

#[test]
fn report_without_a_run_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = rlmut(&["report", "--profile", "smoke", "--out", dir.path().to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no stored report"));
}

#[test]
fn rejects_unknown_criterion() {
    let res = rlmut(&["kill", "--criterion", "bogus"]);
    assert!(!res.status.success());
}
