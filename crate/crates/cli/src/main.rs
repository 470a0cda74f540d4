//! `urnlab` binary: simulate / oracle / analyze / report.
//!
//! Exit codes: 0 when everything asked for succeeded (including all gates
//! passing), 1 when gates ran but at least one failed, 2 for usage,
//! configuration, I/O, or resource errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use urnlab_cli::commands::{run_analyze, run_oracle, run_report, run_simulate};
use urnlab_cli::config::ExperimentConfig;
use urnlab_cli::Result;

#[derive(Parser)]
#[command(
    name = "urnlab",
    version,
    about = "Simulate interacting urn ensembles and verify their limit behavior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured ensemble and write per-replica trajectory files.
    Simulate(RunArgs),
    /// Print the exact small-system moment table for the configured model.
    Oracle(OracleArgs),
    /// Run the configured verification gates against stored trajectories.
    Analyze(RunArgs),
    /// Render a report JSON as a table plus a plotting-friendly CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = one per core (overrides the config).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Enumerate the exact law down to this depth.
    #[arg(long = "t-max")]
    t_max: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON produced by `analyze`.
    #[arg(long)]
    report: PathBuf,
}

impl RunArgs {
    /// Loads the config and applies command-line overrides *before* any
    /// hashing, so the configuration hash always names the effective
    /// settings.
    fn effective_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        Ok(cfg)
    }

    /// The exact command line that re-runs this invocation, recorded in
    /// every gate result.
    fn reproduce_command(&self, subcommand: &str) -> String {
        let mut s = format!("urnlab {subcommand} --config {}", self.config.display());
        if let Some(out) = &self.out {
            s.push_str(&format!(" --out {}", out.display()));
        }
        if let Some(threads) = self.threads {
            s.push_str(&format!(" --threads {threads}"));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!(" --seed {seed}"));
        }
        s
    }
}

fn install_thread_pool(threads: usize) {
    if threads > 0 {
        // called once per process; a failure here only means a pool already
        // exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate(args) => {
            let cfg = args.effective_config()?;
            install_thread_pool(cfg.threads);
            let summary = run_simulate(&cfg)?;
            println!(
                "wrote {} replica trajectory pairs ({} recorded times each) to {}",
                summary.replicas,
                summary.rows,
                summary.dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle(args) => {
            let cfg = args.run.effective_config()?;
            print!("{}", run_oracle(&cfg, args.t_max)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze(args) => {
            let cfg = args.effective_config()?;
            install_thread_pool(cfg.threads);
            let reproduce = args.reproduce_command("analyze");
            let (report, path) = run_analyze(&cfg, &reproduce)?;
            for gate in &report.gates {
                println!(
                    "gate {}: {}",
                    gate.gate,
                    if gate.pass { "PASS" } else { "FAIL" }
                );
            }
            println!("report: {}", path.display());
            Ok(if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report(args) => {
            let (report, table, csv_path) = run_report(&args.report)?;
            print!("{table}");
            println!("plot data: {}", csv_path.display());
            Ok(if report.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
