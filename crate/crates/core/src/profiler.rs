//! Thin converters from raw profiler exports to kernel-time sums.
//!
//! Supported inputs are the CSV written by `nsys stats --report cuda_gpu_kern_sum
//! --format csv` and the `results.stats.csv` written by `rocprof --stats`.
//! Both list one row per kernel name with a total-duration column in ns.

use std::io::Read;

use crate::error::{ModelError, Result};
use crate::measured::{MeasuredRecord, MeasuredSource};

const NSIGHT_TOTAL: &str = "Total Time (ns)";
const ROCPROF_TOTAL: &str = "TotalDurationNs";

fn sum_column(reader: impl Read, column: &str, location: &str) -> Result<f64> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ModelError::parse(location, e.to_string()))?
        .clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        ModelError::parse(
            format!("{location}: header"),
            format!("no {column:?} column"),
        )
    })?;
    let mut total_ns = 0.0;
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let loc = format!("{location}: row {}", i + 2);
        let rec = rec.map_err(|e| ModelError::parse(&loc, e.to_string()))?;
        let cell = rec
            .get(idx)
            .ok_or_else(|| ModelError::parse(&loc, format!("missing {column:?}")))?;
        let v: f64 = cell
            .replace(',', "")
            .parse()
            .map_err(|_| ModelError::parse(&loc, format!("{column}: not a number: {cell:?}")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(ModelError::invalid(
                format!("{loc}.{column}"),
                "must be ≥ 0",
            ));
        }
        total_ns += v;
        rows += 1;
    }
    if rows == 0 || total_ns <= 0.0 {
        return Err(ModelError::EmptyInput(
            "profiler export lists no kernel time",
        ));
    }
    Ok(total_ns * 1e-9)
}

/// Sum of `Total Time (ns)` over all kernels, in seconds.
pub fn nsight_kernel_sum_s(reader: impl Read, location: &str) -> Result<f64> {
    sum_column(reader, NSIGHT_TOTAL, location)
}

/// Sum of `TotalDurationNs` over all kernels, in seconds.
pub fn rocprof_kernel_sum_s(reader: impl Read, location: &str) -> Result<f64> {
    sum_column(reader, ROCPROF_TOTAL, location)
}

pub fn to_record(
    benchmark: &str,
    platform: &str,
    kernel_sum_s: f64,
    source: MeasuredSource,
) -> MeasuredRecord {
    MeasuredRecord {
        benchmark: benchmark.to_string(),
        platform: platform.to_string(),
        kernel_sum_s,
        source,
        note: None,
    }
}
