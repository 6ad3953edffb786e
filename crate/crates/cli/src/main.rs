use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saferegion_core::cli::{self, CliError};

#[derive(Parser)]
#[command(name = "saferegion", version, about = "Safe region formation control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Dotted-path substitution, e.g. params.c2=0.06 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Integration step [s].
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated horizon [s].
    #[arg(long)]
    duration: Option<f64>,
    /// Reserved; the model is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunOpts {
    fn overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        if let Some(dt) = self.dt {
            out.push(format!("dt={dt:?}"));
        }
        if let Some(d) = self.duration {
            out.push(format!("duration={d:?}"));
        }
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file.
    Check {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a scenario and write trajectory, metrics and events tables.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also render the figures into the output directory.
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Render SVG figures from an output directory.
    Plot { bundle: PathBuf },
    /// Run several scenarios in parallel, one subdirectory each.
    Batch {
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        opts: RunOpts,
    },
}

fn report(err: &CliError) -> ExitCode {
    eprintln!("error: {err}");
    if let CliError::Runtime { bundle: Some(b), .. } = err {
        eprintln!("partial tables written to {}", b.dir.display());
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match args.command {
        Command::Check { scenario, opts } => match cli::cmd_check(&scenario, &opts.overrides()) {
            Ok(r) => {
                println!("{r}");
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Run {
            scenario,
            out,
            plot,
            opts,
        } => {
            let result = cli::cmd_run(&scenario, &out, &opts.overrides()).and_then(|mut b| {
                if plot {
                    b.plots = cli::cmd_plot(&out)?;
                }
                Ok(b)
            });
            match result {
                Ok(b) => {
                    println!("{}", b.summary);
                    println!("tables written to {}", b.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
        Command::Plot { bundle } => match cli::cmd_plot(&bundle) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Batch {
            scenarios,
            out,
            plot,
            opts,
        } => {
            let mut worst = 0;
            for (path, result) in cli::cmd_batch(&scenarios, &out, &opts.overrides(), plot) {
                match result {
                    Ok(b) => println!("{}", b.summary),
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        worst = worst.max(e.exit_code());
                    }
                }
            }
            ExitCode::from(worst as u8)
        }
    }
}
