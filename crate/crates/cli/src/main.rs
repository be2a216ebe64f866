use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use epirisk_core::network::{generate_static_network, io as netio};
use epirisk_core::scenarios::{
    randomized_tpr, read_roc_csv, replica_dir, run_scenario, tpr_at_ppf, Manifest, PolicyKind, RocPoint, RocRow,
    ScenarioConfig,
};
use epirisk_core::Error;

#[derive(Parser)]
#[command(name = "epirisk", version, about = "Network risk assessment twin experiments")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a static contact network and write it to a file.
    GenerateNetwork {
        #[command(flatten)]
        common: Common,
        /// Output file; `.bin` selects the binary format, anything else text.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the surrogate world with the configured policy, without assimilation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assimilate a recorded observation stream.
    Assimilate {
        #[command(flatten)]
        common: Common,
        /// Observation CSV as written with `output.write_observations`.
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full twin experiment.
    RunScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average ROC curves of a finished run over its replicas.
    Roc {
        /// Run directory holding `manifest.json`.
        #[arg(long)]
        run: PathBuf,
        /// Day to evaluate; defaults to the last day with ROC data.
        #[arg(long)]
        day: Option<u32>,
        /// PPF grid points, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.02, 0.05, 0.08, 0.1, 0.15, 0.2])]
        ppf: Vec<f64>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long)]
    days: Option<u32>,
    /// Override the network population.
    #[arg(long)]
    population: Option<usize>,
}

/// Marks failures that stem from bad input rather than from a run.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>()
            || matches!(
                c.downcast_ref::<Error>(),
                Some(Error::Config(_) | Error::TomlDe(_) | Error::PolicyConflict(_) | Error::InvalidBounds { .. })
            )
    })
}

fn load_config(common: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            if !path.exists() {
                return Err(config_error(format!("config file {} not found", path.display())));
            }
            ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicas {
        cfg.replicas = r;
    }
    if let Some(d) = common.days {
        cfg.days = d;
    }
    if let Some(n) = common.population {
        cfg.network.population = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_and_report(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<()> {
    log::info!("running {} replica(s) of '{}' into {}", cfg.replicas, cfg.name, out.display());
    let manifest = run_scenario(cfg, out)?;
    for r in &manifest.replicas {
        println!(
            "replica {:>3}  {}  cumulative deaths {}",
            r.replica,
            r.directory,
            r.cumulative_deaths.map_or("-".into(), |d| d.to_string())
        );
    }
    Ok(())
}

fn generate_network(common: &Common, out: &Path) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let net = generate_static_network(&cfg.network, cfg.seed)?;
    if out.extension().is_some_and(|e| e == "bin") {
        netio::write_binary(&net, out)?;
    } else {
        netio::write_text(&net, out)?;
    }
    println!("{} nodes, {} edges -> {}", net.nodes().len(), net.edges().len(), out.display());
    Ok(())
}

fn simulate(common: &Common, out: &Path) -> anyhow::Result<()> {
    let mut cfg = load_config(common)?;
    if cfg.policy.kind == PolicyKind::DaIsolation {
        return Err(config_error("da_isolation needs assimilation; use run-scenario"));
    }
    cfg.assimilation.enabled = false;
    run_and_report(&cfg, out)
}

fn assimilate(common: &Common, observations: &Path, out: &Path) -> anyhow::Result<()> {
    let mut cfg = load_config(common)?;
    if !observations.exists() {
        return Err(config_error(format!("observation file {} not found", observations.display())));
    }
    cfg.assimilation.enabled = true;
    cfg.replay_observations = Some(observations.to_path_buf());
    run_and_report(&cfg, out)
}

fn curve(rows: &[&RocRow]) -> Vec<RocPoint> {
    rows.iter()
        .map(|r| RocPoint {
            threshold: r.threshold.unwrap_or(f64::NAN),
            ppf: r.ppf,
            tpr: r.tpr,
        })
        .collect()
}

fn roc(run: &Path, day: Option<u32>, grid: &[f64], out: Option<&Path>) -> anyhow::Result<()> {
    if !run.join("manifest.json").exists() {
        return Err(config_error(format!("{} holds no manifest.json", run.display())));
    }
    let manifest = Manifest::read(run).context("reading manifest")?;
    let mut per_replica = Vec::new();
    for r in manifest.replicas.iter().filter(|r| r.status == "ok") {
        per_replica.push(read_roc_csv(&replica_dir(run, r.replica).join("roc.csv"))?);
    }
    if per_replica.is_empty() {
        bail!("no finished replicas in {}", run.display());
    }
    let day = match day {
        Some(d) => d,
        None => per_replica
            .iter()
            .flat_map(|rows| rows.iter().filter(|r| r.method == "da").map(|r| r.day))
            .max()
            .ok_or_else(|| config_error("run has no DA ROC data"))?,
    };

    // mean TPR per method and grid point, over replicas that reach that PPF
    let methods = ["da", "test_only", "contact_tracing"];
    let mut sums = vec![vec![(0.0, 0usize); grid.len()]; methods.len()];
    for rows in &per_replica {
        for (k, m) in methods.iter().enumerate() {
            let sel: Vec<&RocRow> = rows.iter().filter(|r| r.day == day && r.method == *m).collect();
            if sel.is_empty() {
                continue;
            }
            for (g, &p) in grid.iter().enumerate() {
                let tpr = if *m == "da" {
                    tpr_at_ppf(&curve(&sel), p)
                } else {
                    Some(randomized_tpr(sel[0].ppf, sel[0].tpr, p))
                };
                if let Some(t) = tpr {
                    sums[k][g].0 += t;
                    sums[k][g].1 += 1;
                }
            }
        }
    }
    let mut table = String::from("day,ppf,method,mean_tpr,replicas\n");
    for (g, &p) in grid.iter().enumerate() {
        for (k, m) in methods.iter().enumerate() {
            let (s, n) = sums[k][g];
            if n > 0 {
                table.push_str(&format!("{day},{p},{m},{:.6},{n}\n", s / n as f64));
            }
        }
    }
    match out {
        Some(path) => std::fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    match &cli.command {
        Command::GenerateNetwork { common, out } => generate_network(common, out),
        Command::Simulate { common, out } => simulate(common, out),
        Command::Assimilate {
            common,
            observations,
            out,
        } => assimilate(common, observations, out),
        Command::RunScenario { common, out } => {
            let cfg = load_config(common)?;
            run_and_report(&cfg, out)
        }
        Command::Roc { run, day, ppf, out } => roc(run, *day, ppf, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
