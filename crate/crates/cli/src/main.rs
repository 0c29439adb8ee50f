use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icps_cli::{compare, run_experiment, sweep, CliError, ExperimentConfig, RawConfig};
use icps_core::RpdConvention;

#[derive(Parser)]
#[command(name = "icps", version, about = "Serverless workflow scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Output directory, replacing `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, replacing `[sim] seed` and any seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the Cartesian product of all list-valued keys.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build an RPD table from result CSVs.
    Compare {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for `rpd.csv`; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "literal")]
        rpd_convention: RpdConvention,
    },
}

fn load(config: &PathBuf, o: &Overrides) -> Result<RawConfig, CliError> {
    let mut raw = RawConfig::load(config)?;
    if let Some(out) = &o.out {
        let abs = std::env::current_dir()
            .map(|cwd| cwd.join(out))
            .unwrap_or_else(|_| out.clone());
        raw.set("output.dir", abs.display());
    }
    if let Some(seed) = o.seed {
        raw.set("sim.seed", seed);
        raw.values.remove("output.seeds");
    }
    Ok(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => load(&config, &overrides)
            .and_then(|raw| Ok(ExperimentConfig::from_raw(&raw)?))
            .and_then(|cfg| run_experiment(&cfg))
            .map(|out| {
                for f in out.files {
                    println!("{}", f.display());
                }
            }),
        Command::Sweep { config, overrides } => load(&config, &overrides)
            .and_then(|raw| sweep(&raw))
            .map(|out| {
                eprintln!("{} rows", out.rows.len());
                for f in out.files {
                    println!("{}", f.display());
                }
            }),
        Command::Compare {
            inputs,
            out,
            rpd_convention,
        } => compare(&inputs, rpd_convention).and_then(|table| match out {
            Some(dir) => {
                std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                    path: dir.clone(),
                    source,
                })?;
                let path = dir.join("rpd.csv");
                table.write(&path)?;
                println!("{}", path.display());
                Ok(())
            }
            None => {
                let text = table.to_csv()?;
                match std::io::stdout().lock().write_all(text.as_bytes()) {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    }),
                    _ => Ok(()),
                }
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
