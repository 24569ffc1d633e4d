//! Experiment runner: config parsing, dispatch, CSV and SVG output, run manifest.

pub mod config;
pub mod csv;
pub mod error;
pub mod experiments;
pub mod output;
pub mod svg;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use experiments::run;
pub use output::RunManifest;

/// Output directory: `--out`/`BLAB_OUT`, else the config's `out`, else `./out`.
pub fn resolve_out(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf).or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Load, validate and run one experiment.
pub fn run_from_file(experiment: &str, config: &Path, out: Option<&Path>) -> Result<RunManifest, CliError> {
    let e: Experiment = experiment.parse()?;
    let text = std::fs::read_to_string(config).map_err(|err| CliError::io(config, err))?;
    let cfg = ExperimentConfig::from_text(e, &text)?;
    run(&cfg, &resolve_out(out, &cfg))
}
