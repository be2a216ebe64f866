use std::path::Path;
use std::process::{Command, Output};

fn epirisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epirisk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn epirisk")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
version = 1
name = "small"
seed = 3
days = 6
initial_fraction = 0.02
[network]
population = 400
[testing]
rate = 0.25
[assimilation.da]
members = 6
[assimilation.prior]
initial_alpha = 2.0
initial_beta = 50.0
"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(code(&epirisk(&["--help"])), 0);
    assert_eq!(code(&epirisk(&["simulate", "--no-such-flag"])), 1);
    assert_eq!(code(&epirisk(&["frobnicate"])), 1);
}

#[test]
fn config_problems_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(code(&epirisk(&["simulate", "--config", "/nonexistent/x.toml", "--out", out])), 1);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 2\n").unwrap();
    assert_eq!(code(&epirisk(&["simulate", "--config", bad.to_str().unwrap(), "--out", out])), 1);

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "version = 1\nbogus = 1\n").unwrap();
    assert_eq!(code(&epirisk(&["simulate", "--config", unknown.to_str().unwrap(), "--out", out])), 1);

    assert_eq!(code(&epirisk(&["roc", "--run", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn generate_network_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["net.txt", "net.bin"] {
        let path = dir.path().join(name);
        let out = epirisk(&["generate-network", "--population", "300", "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
    }
}

#[test]
fn scenario_then_roc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let out = epirisk(&["run-scenario", "--config", &cfg, "--replicas", "2", "--out", run_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "config.toml", "replica_000/daily.csv", "replica_001/roc.csv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let out = epirisk(&["roc", "--run", run_s, "--ppf", "0.05,0.1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("day,ppf,method,mean_tpr,replicas"));
    assert!(table.contains(",da,"));
    assert!(table.contains(",test_only,"));
}

#[test]
fn simulate_refuses_da_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("iso.toml");
    std::fs::write(&cfg, "version = 1\ndays = 2\n[network]\npopulation = 200\n[policy]\nkind = \"da_isolation\"\n").unwrap();
    let run = dir.path().join("run");
    let out = epirisk(&["simulate", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_writes_daily_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("free");
    let out = epirisk(&["simulate", "--config", &cfg, "--days", "4", "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let daily = std::fs::read_to_string(run.join("replica_000/daily.csv")).unwrap();
    assert_eq!(daily.lines().count(), 5);
}
