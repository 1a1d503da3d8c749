//! Experiment orchestration: chunked estimator runs, estimator comparisons,
//! scaling studies and their CSV/JSON artifacts.
//!
//! Paths are simulated in chunks of global path indices; every stream is keyed
//! by the global index, so results do not depend on chunk size or thread count.

mod output;
mod runner;
mod study;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use output::{csv_string, sidecar_path, write_artifacts, CSV_COLUMNS};
pub use runner::{run_compare, run_greek, run_simulate, Runner, SimulateSummary};
pub use study::{log_log_slope, run_study, Slope};

use crate::error::{Error, Result};
use crate::estimators::{Diagnostics, Estimate};
use crate::model::{validate_config, ExperimentConfig};

/// `|a - b| / combined SE` above which two estimators are flagged as disagreeing.
pub const DISAGREEMENT_Z: f64 = 3.0;

/// One record per estimator-parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub experiment: String,
    pub estimator: String,
    pub parameters: String,
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub wall_ms: u64,
}

/// Everything needed to reproduce a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical TOML of the effective configuration.
    pub config_sha256: String,
    pub master_seed: u64,
    pub version: String,
    pub command: String,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, command: &str) -> Result<Self> {
        Ok(Self {
            config_sha256: config_hash(cfg)?,
            master_seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
        })
    }
}

/// Diagnostics of one row, kept out of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub estimator: String,
    pub parameters: String,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub provenance: Provenance,
    pub diagnostics: Vec<RowDiagnostics>,
    /// Pairwise comparisons beyond [`DISAGREEMENT_Z`].
    pub disagreements: Vec<String>,
    /// Human-readable lines for standard output.
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl StudyResult {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            rows: Vec::new(),
            provenance,
            diagnostics: Vec::new(),
            disagreements: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, experiment: &str, parameters: &str, e: &Estimate, wall_ms: u64) {
        self.rows.push(StudyRow {
            experiment: experiment.to_string(),
            estimator: e.estimator.clone(),
            parameters: parameters.to_string(),
            value: e.value,
            std_error: e.std_error,
            n_paths: e.n_paths,
            wall_ms,
        });
        self.diagnostics.push(RowDiagnostics {
            estimator: e.estimator.clone(),
            parameters: parameters.to_string(),
            diagnostics: e.diagnostics.clone(),
        });
    }

    /// The row with this estimator tag and parameter string.
    pub fn row(&self, estimator: &str, parameters: &str) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.parameters == parameters)
    }

    pub fn rows_of<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let text = cfg.to_toml_string()?;
    Ok(Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Fails with every violated hypothesis, one per line.
pub fn ensure_valid(cfg: &ExperimentConfig) -> Result<()> {
    let v = validate_config(cfg);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(v.join("\n")))
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}
