//! On-disk shot datasets.
//!
//! A dataset is a CSV file with one row per experimental shot:
//!
//! ```text
//! shot_id,f_prime_V_per_cm_per_us,s_np_nVs,s_r_nVs
//! ```
//!
//! An optional sidecar carries the ground truth behind simulated shots:
//!
//! ```text
//! shot_id,eta_cm3,volume_cm3
//! ```
//!
//! Headers are matched exactly and every cell must parse as a finite
//! number; floats are written with shortest round-trip formatting, so a
//! write/read cycle reproduces the same bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationPoint;
use crate::error::{Error, Result};

/// Column order of a dataset file.
pub const DATASET_HEADER: [&str; 4] = ["shot_id", "f_prime_V_per_cm_per_us", "s_np_nVs", "s_r_nVs"];

/// Column order of a truth sidecar.
pub const TRUTH_HEADER: [&str; 3] = ["shot_id", "eta_cm3", "volume_cm3"];

/// One measured shot: gated signals in nV·s at a given ramp speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u64,
    #[serde(rename = "f_prime_V_per_cm_per_us")]
    pub f_prime: f64,
    #[serde(rename = "s_np_nVs")]
    pub s_np_nvs: f64,
    #[serde(rename = "s_r_nVs")]
    pub s_r_nvs: f64,
}

impl ShotRecord {
    /// Total signal over both gates.
    pub fn s_total_nvs(&self) -> f64 {
        self.s_np_nvs + self.s_r_nvs
    }

    /// Reduction to what the calibration fit consumes.
    pub fn calibration_point(&self) -> CalibrationPoint {
        CalibrationPoint {
            s_total_nvs: self.s_total_nvs(),
            s_np_nvs: self.s_np_nvs,
            f_prime: self.f_prime,
        }
    }
}

/// Ground truth for one simulated shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub shot_id: u64,
    pub eta_cm3: f64,
    pub volume_cm3: f64,
}

/// Writes shots to `path`, header first, in slice order.
pub fn write_dataset(path: &Path, shots: &[ShotRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| dataset_io_error(path, "create dataset", e))?;
    for shot in shots {
        writer
            .serialize(shot)
            .map_err(|e| dataset_io_error(path, "write dataset row", e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("flush dataset {}", path.display()), e))?;
    Ok(())
}

/// Reads and validates a dataset file.
///
/// The header must match [`DATASET_HEADER`] exactly, every value must be
/// finite, ramp speeds must be positive and shot ids unique. Negative
/// signals are allowed — baseline subtraction can produce them.
pub fn read_dataset(path: &Path) -> Result<Vec<ShotRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| dataset_io_error(path, "open dataset", e))?;
    expect_header(&mut reader, path, &DATASET_HEADER)?;

    let mut shots = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, row) in reader.deserialize::<ShotRecord>().enumerate() {
        let line = i + 2; // header is line 1
        let shot = row.map_err(|e| {
            Error::dataset(format!("{} line {line}: {e}", path.display()))
        })?;
        if !(shot.f_prime.is_finite() && shot.f_prime > 0.0) {
            return Err(Error::dataset(format!(
                "{} line {line}: ramp speed must be positive, got {}",
                path.display(),
                shot.f_prime
            )));
        }
        if !shot.s_np_nvs.is_finite() || !shot.s_r_nvs.is_finite() {
            return Err(Error::dataset(format!(
                "{} line {line}: non-finite signal",
                path.display()
            )));
        }
        if !seen.insert(shot.shot_id) {
            return Err(Error::dataset(format!(
                "{} line {line}: duplicate shot_id {}",
                path.display(),
                shot.shot_id
            )));
        }
        shots.push(shot);
    }
    Ok(shots)
}

/// Writes truth records to `path` in slice order.
pub fn write_truth(path: &Path, records: &[TruthRecord]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| dataset_io_error(path, "create sidecar", e))?;
    for record in records {
        writer
            .serialize(record)
            .map_err(|e| dataset_io_error(path, "write sidecar row", e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(format!("flush sidecar {}", path.display()), e))?;
    Ok(())
}

/// Reads and validates a truth sidecar.
pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| dataset_io_error(path, "open sidecar", e))?;
    expect_header(&mut reader, path, &TRUTH_HEADER)?;

    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, row) in reader.deserialize::<TruthRecord>().enumerate() {
        let line = i + 2;
        let record: TruthRecord = row.map_err(|e| {
            Error::dataset(format!("{} line {line}: {e}", path.display()))
        })?;
        if !(record.eta_cm3.is_finite() && record.eta_cm3 >= 0.0) {
            return Err(Error::dataset(format!(
                "{} line {line}: density must be finite and non-negative",
                path.display()
            )));
        }
        if !(record.volume_cm3.is_finite() && record.volume_cm3 > 0.0) {
            return Err(Error::dataset(format!(
                "{} line {line}: volume must be positive",
                path.display()
            )));
        }
        if !seen.insert(record.shot_id) {
            return Err(Error::dataset(format!(
                "{} line {line}: duplicate shot_id {}",
                path.display(),
                record.shot_id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Pairs each shot with its truth record by shot id; every shot must have
/// one.
pub fn join_truth(
    shots: &[ShotRecord],
    truth: &[TruthRecord],
) -> Result<Vec<(ShotRecord, TruthRecord)>> {
    let by_id: std::collections::HashMap<u64, &TruthRecord> =
        truth.iter().map(|t| (t.shot_id, t)).collect();
    shots
        .iter()
        .map(|s| {
            by_id
                .get(&s.shot_id)
                .map(|t| (*s, **t))
                .ok_or_else(|| {
                    Error::dataset(format!("shot {} has no truth record", s.shot_id))
                })
        })
        .collect()
}

fn expect_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    path: &Path,
    expected: &[&str],
) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| Error::dataset(format!("{}: unreadable header: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::dataset(format!(
            "{}: header mismatch: expected {expected:?}, got {got:?}",
            path.display()
        )));
    }
    Ok(())
}

fn dataset_io_error(path: &Path, action: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("{action} {}", path.display()), io),
        other => Error::dataset(format!("{action} {}: {other:?}", path.display())),
    }
}
