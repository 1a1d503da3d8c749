use std::path::{Path, PathBuf};

use serde::Serialize;

use super::StudyResult;
use crate::error::{Error, Result};

/// Header of every result CSV, in column order.
pub const CSV_COLUMNS: [&str; 7] = [
    "experiment",
    "estimator",
    "parameters",
    "value",
    "std_error",
    "n_paths",
    "wall_ms",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// The rows as CSV text with a header line.
pub fn csv_string(result: &StudyResult) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if result.rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    for row in &result.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// `out` with a `.json` extension, or `<out>.meta.json` when `out` is already JSON.
pub fn sidecar_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        let mut s = out.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    } else {
        out.with_extension("json")
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    provenance: &'a super::Provenance,
    diagnostics: &'a [super::RowDiagnostics],
    disagreements: &'a [String],
}

/// Writes the CSV to `out` and the provenance/diagnostics sidecar next to it.
pub fn write_artifacts(result: &StudyResult, out: &Path) -> Result<PathBuf> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, csv_string(result)?)?;
    let sidecar = sidecar_path(out);
    let json = serde_json::to_string_pretty(&Sidecar {
        provenance: &result.provenance,
        diagnostics: &result.diagnostics,
        disagreements: &result.disagreements,
    })
    .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&sidecar, json + "\n")?;
    Ok(sidecar)
}
