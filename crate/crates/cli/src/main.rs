use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use stochot_cli::config::load_config;
use stochot_cli::pipelines::{self, RunOptions};
use stochot_cli::report::ExperimentReport;
use stochot_cli::CliResult;

#[derive(Parser)]
#[command(name = "stochot", version, about = "Stochastic regularized optimal transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set solver.batch_size=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Zero wall-clock columns so repeated runs write identical files.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic dual ascent; writes potentials and an objective trace.
    Solve(Common),
    /// Learn a Monge map from a dual checkpoint.
    MapTrain(Common),
    /// Push source samples through a learned map.
    Generate(Common),
    /// Domain adaptation with 1-NN transfer accuracy.
    Da(Common),
    /// Per-iteration timing and objective-versus-time curves.
    Benchmark(Common),
    /// Convergence studies in epsilon and sample size.
    Converge(Common),
}

fn run<T: DeserializeOwned>(
    common: &Common,
    f: impl Fn(&T, &Path, &RunOptions) -> CliResult<ExperimentReport>,
) -> CliResult<ExperimentReport> {
    let mut overrides = common.overrides.clone();
    if let Some(out) = &common.out {
        let abs = std::path::absolute(out)?;
        let quoted = toml::Value::String(abs.to_string_lossy().into_owned());
        overrides.push(format!("out_dir={quoted}"));
    }
    let (cfg, base) = load_config::<T>(&common.config, &overrides)?;
    let opts = RunOptions {
        deterministic: common.deterministic,
    };
    f(&cfg, &base, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => run(c, pipelines::cmd_solve),
        Command::MapTrain(c) => run(c, pipelines::cmd_map_train),
        Command::Generate(c) => run(c, pipelines::cmd_generate),
        Command::Da(c) => run(c, pipelines::cmd_da),
        Command::Benchmark(c) => run(c, pipelines::cmd_benchmark),
        Command::Converge(c) => run(c, pipelines::cmd_converge),
    };
    match result {
        Ok(report) => {
            for (k, v) in &report.metrics {
                println!("{k} = {v}");
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            if let Some(p) = report.files.last() {
                println!("report: {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
