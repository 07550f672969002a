use std::path::PathBuf;
use std::process::ExitCode;

use cds_cva::config::{Overrides, RunConfig};
use cds_cva::harness;
use cds_cva::Error;
use clap::{Args, Parser, Subcommand};

/// Counterparty risk on a collateralized CDS.
#[derive(Parser)]
#[command(name = "cds-cva", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and risky spreads, SVA and CVA for the configured agreement.
    Price(Common),
    /// CVA, UCVA, DVA and SVA for every threshold case on shared paths.
    CaseTable(Common),
    /// EPE/ENE/collateral profiles and forward CVA curves.
    Profiles(Nested),
    /// Forward CVA curves by nested simulation.
    ForwardCva(Nested),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Simulation grid step in years.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Nested {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    outer_paths: Option<usize>,
    #[arg(long)]
    inner_paths: Option<usize>,
    /// Run every case of the case table instead of the configured margin.
    #[arg(long)]
    all_cases: bool,
}

fn load(common: &Common, outer: Option<usize>, inner: Option<usize>) -> Result<RunConfig, Error> {
    let overrides = Overrides {
        seed: common.seed,
        paths: common.paths,
        grid_step: common.grid_step,
        out_dir: common.out_dir.clone(),
        outer_paths: outer,
        inner_paths: inner,
    };
    RunConfig::from_path(&common.config, &overrides)
}

fn report_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Price(c) => {
            let config = load(&c, None, None)?;
            let out = harness::run_price(&config)?;
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        Command::CaseTable(c) => {
            let config = load(&c, None, None)?;
            harness::run_case_table(&config)?;
            print!("{}", std::fs::read_to_string(config.output.dir.join("case_table.csv"))?);
        }
        Command::Profiles(n) => {
            let config = load(&n.common, n.outer_paths, n.inner_paths)?;
            report_paths(&harness::run_profiles(&config, n.all_cases)?);
        }
        Command::ForwardCva(n) => {
            let config = load(&n.common, n.outer_paths, n.inner_paths)?;
            report_paths(&harness::run_forward_cva(&config, n.all_cases)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", harness::error_json(&e));
            match e {
                Error::Config { .. } | Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
