//! Experiment harness: TOML-described runs, deterministic artifact
//! directories, and text reports assembled from those directories.
//!
//! A run cell is one (strategy, participation, heterogeneity, pool on/off)
//! combination executed over a list of seeds. Each seed writes its own
//! subdirectory; the cell writes an aggregate over seeds; a matrix expands
//! the cross product of sweep lists into many cells. All files are written
//! atomically (temp file, then rename), and a rerun of the same
//! configuration reproduces every artifact byte for byte.

pub mod config;
pub mod report;
pub mod run;

pub use config::{
    resolve_output_root, ExperimentConfig, MatrixConfig, ParticipationConfig, PartitionConfig,
    ScheduleStep, OUTPUT_ROOT_ENV,
};
pub use report::render_report;
pub use run::{record_trace, run_experiment, run_matrix, CellOutcome, SeedOutcome, SeedSummary};

use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Writes via a sibling temp file and rename, so a crash never leaves a
/// partially written artifact under the final name.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = PathBuf::from(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
