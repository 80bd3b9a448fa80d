//! Measured kernel-time sums in the normalized CSV form
//! `benchmark,platform,time,unit,source[,note]`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasuredSource {
    NsightKernSum,
    RocprofStats,
    Manual,
}

impl MeasuredSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasuredSource::NsightKernSum => "nsight_kern_sum",
            MeasuredSource::RocprofStats => "rocprof_stats",
            MeasuredSource::Manual => "manual",
        }
    }
}

impl fmt::Display for MeasuredSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasuredSource {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nsight_kern_sum" => Ok(MeasuredSource::NsightKernSum),
            "rocprof_stats" => Ok(MeasuredSource::RocprofStats),
            "manual" => Ok(MeasuredSource::Manual),
            other => Err(ModelError::invalid(
                "source",
                format!("unknown source {other:?} (nsight_kern_sum, rocprof_stats, manual)"),
            )),
        }
    }
}

/// Sum of GPU kernel durations of one benchmark run on one platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRecord {
    pub benchmark: String,
    pub platform: String,
    pub kernel_sum_s: f64,
    pub source: MeasuredSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Seconds per unit for the accepted `unit` column values.
pub fn unit_scale(unit: &str) -> Option<f64> {
    match unit.trim() {
        "s" => Some(1.0),
        "ms" => Some(1e-3),
        "us" | "µs" | "μs" => Some(1e-6),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    benchmark: String,
    platform: String,
    time: String,
    #[serde(default)]
    unit: Option<String>,
    source: String,
    #[serde(default)]
    note: Option<String>,
}

pub fn ingest_measured(path: impl AsRef<Path>) -> Result<Vec<MeasuredRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_measured(file, &path.display().to_string())
}

pub fn read_measured(reader: impl Read, location: &str) -> Result<Vec<MeasuredRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ModelError::parse(location, e.to_string()))?
        .clone();
    if !headers.iter().any(|h| h == "unit") {
        return Err(ModelError::parse(
            format!("{location}: header"),
            "missing unit column (must declare ms, us or s)",
        ));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawRow>().enumerate() {
        // Header is line 1.
        let loc = format!("{location}: row {}", i + 2);
        let row = row.map_err(|e| ModelError::parse(&loc, e.to_string()))?;
        let unit = row.unit.filter(|u| !u.is_empty()).ok_or_else(|| {
            ModelError::invalid(format!("{loc}.unit"), "missing unit declaration")
        })?;
        let scale = unit_scale(&unit).ok_or_else(|| {
            ModelError::invalid(
                format!("{loc}.unit"),
                format!("unknown unit {unit:?} (ms, us, s)"),
            )
        })?;
        let time: f64 = row.time.parse().map_err(|_| {
            ModelError::invalid(
                format!("{loc}.time"),
                format!("not a number: {:?}", row.time),
            )
        })?;
        if !(time.is_finite() && time > 0.0) {
            return Err(ModelError::invalid(
                format!("{loc}.time"),
                format!("must be > 0, got {time}"),
            ));
        }
        let source: MeasuredSource = row
            .source
            .parse()
            .map_err(|e: ModelError| ModelError::invalid(format!("{loc}.source"), e.to_string()))?;
        if !seen.insert((row.benchmark.clone(), row.platform.clone())) {
            return Err(ModelError::invalid(
                loc.to_string(),
                format!("duplicate record for ({}, {})", row.benchmark, row.platform),
            ));
        }
        out.push(MeasuredRecord {
            benchmark: row.benchmark,
            platform: row.platform,
            kernel_sum_s: time * scale,
            source,
            note: row.note.filter(|n| !n.is_empty()),
        });
    }
    Ok(out)
}

/// Writes records in the normalized CSV form, times in seconds.
pub fn write_measured(records: &[MeasuredRecord], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ModelError::Internal(format!("writing measured CSV: {e}"));
    w.write_record(["benchmark", "platform", "time", "unit", "source", "note"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.benchmark.as_str(),
            r.platform.as_str(),
            &r.kernel_sum_s.to_string(),
            "s",
            r.source.as_str(),
            r.note.as_deref().unwrap_or(""),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| ModelError::Internal(format!("writing measured CSV: {e}")))?;
    Ok(())
}
