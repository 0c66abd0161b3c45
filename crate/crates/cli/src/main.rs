use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tollway::compare::compare;
use tollway::output::{write_analysis, write_run};
use tollway::{analyze_config, parse_config, run_config, RunError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "tollway", version, about = "Freeway toll-lane simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write contours, flows, directives and metrics.
    Run(Common),
    /// Report the equilibrium structure for the step-0 demand.
    Analyze(Common),
    /// Run base, all-GP and controlled cases and print a table.
    Compare(Common),
    /// Parse and validate a config.
    Validate(Common),
}

fn out_dir(args: &Common, config: &ScenarioConfig) -> Option<PathBuf> {
    args.out.clone().or_else(|| config.output.clone())
}

fn execute(command: &Command) -> Result<(), RunError> {
    let args = match command {
        Command::Run(a) | Command::Analyze(a) | Command::Compare(a) | Command::Validate(a) => a,
    };
    let config = parse_config(&args.config)?;
    let dir = out_dir(args, &config);
    match command {
        Command::Validate(_) => {
            println!("{}: ok", args.config.display());
        }
        Command::Run(_) => {
            let out = run_config(&config, args.seed)?;
            let dir = dir.unwrap_or_else(|| Path::new("out").to_path_buf());
            write_run(&out, &dir)?;
            let m = &out.metrics;
            println!(
                "vmt {:.2}  vht {:.2}  delay {:.2}  -> {}",
                m.vmt,
                m.vht,
                m.delay,
                dir.display()
            );
        }
        Command::Analyze(_) => {
            if !config.demand_profile()?.is_constant() {
                return Err(RunError::Setup("analyze needs constant demand".into()));
            }
            let analysis = analyze_config(&config)?;
            print!("{analysis}");
            if let Some(dir) = dir {
                write_analysis(&analysis, &dir)?;
            }
        }
        Command::Compare(_) => {
            let report = compare(&config, args.seed, dir.as_deref())?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
