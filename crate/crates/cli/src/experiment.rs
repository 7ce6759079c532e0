use std::path::Path;

use adaptopt::engine::{run, RunError, RunRecord};
use adaptopt::monitor::annotate;

use crate::config::{flatten, ExperimentConfig};
use crate::csv_io::write_csv;
use crate::plot::render_plots;
use crate::summary::Summary;
use crate::CliError;

pub const CSV_FILE: &str = "run.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Runs one experiment and writes `config.toml`, `run.csv`, `summary.json`
/// and (unless disabled) the SVG plots into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary, CliError> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(vec![format!("output directory {} is not writable: {e}", dir.display())]))?;
    let resolved = toml::to_string(&cfg.resolved).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&dir.join(CONFIG_FILE), resolved)?;

    let mut record = match run(&cfg.sim) {
        Ok(r) => r,
        Err(RunError::Refused(e)) => return Err(CliError::Config(flatten(e))),
        Err(RunError::Diverged { partial, error }) => {
            let saved = persist_partial(*partial, cfg);
            return Err(CliError::Runtime(format!("{error}; {saved}")));
        }
    };
    annotate(&mut record, cfg.consensus_threshold).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_csv(&record, &dir.join(CSV_FILE))?;
    if cfg.plots {
        render_plots(&record, dir)?;
    }
    let summary = Summary::from_record(&record, cfg.preset.clone())?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&dir.join(SUMMARY_FILE), json + "\n")?;
    Ok(summary)
}

fn write(path: &Path, text: String) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

// best effort: the samples up to the blow-up are often the useful part
fn persist_partial(mut partial: RunRecord, cfg: &ExperimentConfig) -> String {
    let path = cfg.out_dir.join(CSV_FILE);
    let outcome = annotate(&mut partial, cfg.consensus_threshold)
        .map_err(|e| CliError::Runtime(e.to_string()))
        .and_then(|_| write_csv(&partial, &path));
    match outcome {
        Ok(()) => format!("{} samples before the failure written to {}", partial.len(), path.display()),
        Err(e) => format!("partial record could not be written: {e}"),
    }
}
