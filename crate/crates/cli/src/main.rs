use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distcomm_cli::{replot, run_file, validate_file, CliError, PlotFormat, RunOptions};

#[derive(Parser)]
#[command(
    name = "distcomm",
    version,
    about = "Rate-distortion and random-coding experiments"
)]
struct Cli {
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Parallel trial workers (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, global = true, value_enum, default_value_t = PlotFormat::Svg)]
    plot_format: PlotFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion curve over a distortion grid.
    Rd { config: PathBuf },
    /// Sanov exponent over an eps grid.
    Exponent { config: PathBuf },
    /// Random source code excess distortion.
    Source { config: PathBuf },
    /// Joint-typicality channel code error over a compound set.
    Reliability { config: PathBuf },
    /// Source code plus channel code over certified channels.
    Separation { config: PathBuf },
    /// Unicast pairs over a shared medium.
    Multiuser { config: PathBuf },
    /// One fidelity criterion carried over a pipe certified for another.
    Equivalence { config: PathBuf },
    /// Exact impostor probability against the exponent bound.
    SanovCheck { config: PathBuf },
    /// Any experiment kind.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Redraw the plot for an existing results CSV.
    Plot { csv: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.workers {
        if k == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            (&e).into()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let (config, kind) = match &cli.command {
        Command::Validate { config } => {
            validate_file(config, None)?;
            return Ok(());
        }
        Command::Plot { csv } => {
            if let Some(svg) = replot(csv)? {
                if !cli.quiet {
                    eprintln!("wrote {}", svg.display());
                }
            }
            return Ok(());
        }
        Command::Rd { config } => (config, Some("rd")),
        Command::Exponent { config } => (config, Some("exponent")),
        Command::Source { config } => (config, Some("source")),
        Command::Reliability { config } => (config, Some("reliability")),
        Command::Separation { config } => (config, Some("separation")),
        Command::Multiuser { config } => (config, Some("multiuser")),
        Command::Equivalence { config } => (config, Some("equivalence")),
        Command::SanovCheck { config } => (config, Some("sanov-check")),
        Command::Run { config } => (config, None),
    };
    let summary = run_file(
        config,
        &RunOptions {
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            plot: cli.plot_format,
            expect_kind: kind,
        },
    )?;
    if !cli.quiet {
        eprintln!("wrote {} ({} rows)", summary.csv.display(), summary.rows);
        if let Some(p) = summary.plot {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}
