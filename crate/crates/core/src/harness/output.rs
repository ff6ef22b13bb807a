//! File emission: `summary.json`, `epochs.csv`, and generic JSON reports.
//!
//! Output bytes are a pure function of the serialized values: struct fields
//! serialize in declaration order, floats print their shortest round-trip
//! form, and rows keep trial order. Running the same experiment with the
//! same seed twice therefore produces byte-identical files.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::trials::{EpochRow, ExperimentSummary};

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(path.to_path_buf())
}

/// Writes `summary.json` into `dir`.
pub fn write_summary_json(dir: &Path, summary: &ExperimentSummary) -> io::Result<PathBuf> {
    write_json(&dir.join("summary.json"), summary)
}

pub const EPOCHS_CSV_HEADER: &str =
    "trial,j,price,epoch_size,number_accepted,nu,noisy_count,halted";

/// Renders epoch rows as CSV text.
pub fn epochs_csv(rows: &[EpochRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48 + 64);
    out.push_str(EPOCHS_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.trial,
            row.index,
            row.price,
            row.epoch_size,
            row.number_accepted,
            row.noise,
            row.noisy_count,
            row.halted
        ));
    }
    out
}

/// Writes `epochs.csv` into `dir`.
pub fn write_epochs_csv(dir: &Path, rows: &[EpochRow]) -> io::Result<PathBuf> {
    let path = dir.join("epochs.csv");
    std::fs::write(&path, epochs_csv(rows))?;
    Ok(path)
}

/// Per-trial CSV view of a summary for `--format csv` terminal output.
pub fn summary_csv(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    out.push_str(
        "trial,estimate,true_statistic,abs_error,total_payments,final_epoch,epochs_run,error\n",
    );
    for r in &summary.per_trial {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.trial,
            opt(r.estimate),
            r.true_statistic,
            opt(r.abs_error),
            opt(r.total_payments),
            r.final_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.epochs_run,
            r.error.clone().unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> EpochRow {
        EpochRow {
            trial: 0,
            index: 1,
            price: 1.1,
            epoch_size: 400,
            number_accepted: 375,
            noise: -0.5,
            noisy_count: 374.5,
            halted: false,
        }
    }

    #[test]
    fn csv_layout_is_stable() {
        let text = epochs_csv(&[row()]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(EPOCHS_CSV_HEADER));
        assert_eq!(lines.next(), Some("0,1,1.1,400,375,-0.5,374.5,false"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn json_writes_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row()];
        let a = write_epochs_csv(dir.path(), &rows).unwrap();
        let first = std::fs::read(&a).unwrap();
        let b = write_epochs_csv(dir.path(), &rows).unwrap();
        let second = std::fs::read(&b).unwrap();
        assert_eq!(first, second);
    }
}
