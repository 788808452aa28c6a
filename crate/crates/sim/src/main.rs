use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nodesched::config::{ExperimentConfig, Overrides};
use nodesched::core::workload::generate_uniform_scenario;
use nodesched::formats::{write_catalog, write_scenario};
use nodesched::{cluster_experiment, fairness_experiment, run_matrix, Report, Result, SimError};

/// Discrete-event simulator for scheduling calls on a FaaS worker node.
#[derive(Parser)]
#[command(name = "nodesched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cores x intensity x strategy x repetition grid.
    #[command(alias = "run")]
    Matrix(Common),
    /// Skewed scenario with per-function summaries.
    Fairness(Common),
    /// Fixed load over a varying number of nodes.
    Cluster(Common),
    /// Print one generated scenario as CSV.
    Scenario(Common),
    /// Print the function catalog as CSV.
    Catalog(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// First repetition seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Strategy to run; repeatable.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    cores: Vec<u32>,
    #[arg(long = "intensity", value_delimiter = ',')]
    intensities: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<usize>,
    /// auto, baseline-memory or proposed-cpu.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    reps: Option<u32>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write box-plot tables.
    #[arg(long)]
    emit_plotdata: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            strategies: self.strategies.clone(),
            cores: self.cores.clone(),
            intensities: self.intensities.clone(),
            nodes: self.nodes.clone(),
            mode: self.mode.clone(),
            reps: self.reps,
            threads: self.threads,
            emit_plotdata: self.emit_plotdata,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Print the summary tables written; per-run files are left out.
fn report(r: Report) -> Result<()> {
    let r = r.into_result()?;
    let per_run = ["records", "scenarios", "logs"];
    for f in &r.files {
        let dir = f.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str());
        if !dir.is_some_and(|d| per_run.contains(&d)) {
            println!("{}", f.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Matrix(c) => report(run_matrix(&c.load()?)?),
        Command::Fairness(c) => report(fairness_experiment(&c.load()?)?),
        Command::Cluster(c) => report(cluster_experiment(&c.load()?)?),
        Command::Scenario(c) => {
            let cfg = c.load()?;
            let catalog = cfg.catalog()?;
            let cores = cfg.experiment.cores[0];
            let intensity = cfg.experiment.intensities[0];
            let s = generate_uniform_scenario(&catalog, cores, intensity, cfg.window(), cfg.seeds()[0])?;
            let mut out = std::io::stdout().lock();
            write_scenario(&s, &catalog, &mut out)?;
            out.flush().map_err(|e| SimError::io("<stdout>", e))
        }
        Command::Catalog(c) => {
            let cfg = c.load()?;
            write_catalog(&cfg.catalog()?, std::io::stdout().lock())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
