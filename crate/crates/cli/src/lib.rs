//! Command-line experiment runner: JSON configs in, CSV results and SVG
//! plots out.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod resolve;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use error::{CliError, Diagnostic};

use crate::config::ExperimentConfig;
use crate::resolve::Plan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotFormat {
    Svg,
    None,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub plot: PlotFormat,
    /// Refuse configs of another experiment kind.
    pub expect_kind: Option<&'static str>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub plot: Option<PathBuf>,
    pub rows: usize,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Schema(vec![Diagnostic::new(
            "",
            format!("cannot read {}: {e}", path.display()),
        )])
    })?;
    config::parse(&text)
}

/// Schema and semantic checks without running anything.
pub fn validate_file(path: &Path, expect_kind: Option<&str>) -> Result<Plan, CliError> {
    let cfg = load(path)?;
    if let Some(k) = expect_kind {
        if cfg.experiment.kind() != k {
            return Err(CliError::Schema(vec![Diagnostic::new(
                "experiment.kind",
                format!(
                    "subcommand {k:?} cannot run a {:?} experiment",
                    cfg.experiment.kind()
                ),
            )]));
        }
    }
    resolve::resolve(&cfg)
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let plan = validate_file(path, opts.expect_kind)?;
    let started = Instant::now();
    let rows = run::execute(&plan, opts.seed.unwrap_or(plan.seed))?;
    let elapsed = started.elapsed().as_secs_f64();
    std::fs::create_dir_all(&opts.out_dir)?;
    let csv = opts.out_dir.join(&plan.output);
    output::write_rows(&csv, &rows)?;
    output::write_timing(&csv.with_extension("timings.csv"), plan.kind, elapsed)?;
    let plot = match opts.plot {
        PlotFormat::Svg => replot(&csv)?,
        PlotFormat::None => None,
    };
    Ok(RunSummary {
        csv,
        plot,
        rows: rows.len(),
    })
}

/// Draws `<csv stem>.svg` next to a results file.
pub fn replot(csv: &Path) -> Result<Option<PathBuf>, CliError> {
    let rows = output::read_rows(csv)?;
    let svg = csv.with_extension("svg");
    Ok(plot::plot_rows(&rows, &svg)?.then_some(svg))
}
