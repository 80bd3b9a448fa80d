//! Prediction-vs-measurement reports and ratio-fit calibration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::calibration::{CalibrationSet, ProvenanceKind, WILDCARD};
use crate::error::{ModelError, Result};
use crate::measured::MeasuredRecord;
use crate::profile::HardwareProfile;
use crate::workload::{aggregate, ApplicationPrediction, PredictionContext, SegmentFile};

/// Profiles by name; segment files refer to them through their `platform` field.
pub type ProfileSet = BTreeMap<String, HardwareProfile>;

/// `|predicted − measured| / measured × 100`.
pub fn relative_error(predicted_s: f64, measured_s: f64) -> Result<f64> {
    if measured_s.is_nan() || measured_s <= 0.0 {
        return Err(ModelError::invalid(
            "measured_s",
            format!("must be > 0, got {measured_s}"),
        ));
    }
    Ok((predicted_s - measured_s).abs() / measured_s * 100.0)
}

/// Mean of [`relative_error`] over `(predicted, measured)` pairs, in percent.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyInput("MAE of an empty set is undefined"));
    }
    let mut sum = 0.0;
    for &(p, m) in pairs {
        sum += relative_error(p, m)?;
    }
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub benchmark: String,
    pub platform: String,
    pub predicted_s: f64,
    pub measured_s: Option<f64>,
    pub error_pct: Option<f64>,
    pub roofline_s: f64,
    pub roofline_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Sorted by (benchmark, platform).
    pub rows: Vec<ValidationRow>,
    pub model_mae_pct: Option<f64>,
    pub roofline_mae_pct: Option<f64>,
    /// Segment files without a measured record, as `benchmark@platform`.
    pub uncovered: Vec<String>,
    /// Measured records without a segment file, as `benchmark@platform`.
    pub unmatched_measured: Vec<String>,
}

pub const REPORT_CSV_HEADER: &str =
    "benchmark,platform,predicted_s,measured_s,error_pct,roofline_s,roofline_error_pct";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ValidationReport {
    pub fn has_coverage(&self) -> bool {
        self.model_mae_pct.is_some()
    }

    pub fn status(&self) -> &'static str {
        if self.has_coverage() {
            "covered"
        } else {
            "no coverage"
        }
    }

    /// `(model MAE, roofline MAE)` over covered rows of one platform.
    pub fn mae_for_platform(&self, platform: &str) -> Option<(f64, f64)> {
        let rows: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.platform == platform && r.measured_s.is_some())
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let model = rows.iter().filter_map(|r| r.error_pct).sum::<f64>() / n;
        let roof = rows
            .iter()
            .filter_map(|r| r.roofline_error_pct)
            .sum::<f64>()
            / n;
        Some((model, roof))
    }

    pub fn row(&self, benchmark: &str, platform: &str) -> Option<&ValidationRow> {
        self.rows
            .iter()
            .find(|r| r.benchmark == benchmark && r.platform == platform)
    }

    /// Machine-readable form. Floats use shortest round-trip formatting, so the
    /// output is a pure function of the inputs.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.benchmark,
                r.platform,
                r.predicted_s,
                opt(r.measured_s),
                opt(r.error_pct),
                r.roofline_s,
                opt(r.roofline_error_pct)
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:<8} {:>14} {:>14} {:>9} {:>14} {:>10}",
            "benchmark",
            "platform",
            "predicted_ms",
            "measured_ms",
            "err_%",
            "roofline_ms",
            "roof_err_%"
        );
        let ms = |v: f64| format!("{:.4}", v * 1e3);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<22} {:<8} {:>14} {:>14} {:>9} {:>14} {:>10}",
                r.benchmark,
                r.platform,
                ms(r.predicted_s),
                r.measured_s.map(ms).unwrap_or_else(|| "-".into()),
                r.error_pct
                    .map(|e| format!("{e:.2}"))
                    .unwrap_or_else(|| "-".into()),
                ms(r.roofline_s),
                r.roofline_error_pct
                    .map(|e| format!("{e:.2}"))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        match (self.model_mae_pct, self.roofline_mae_pct) {
            (Some(m), Some(r)) => {
                let _ = writeln!(s, "model MAE {m:.2}%   naive roofline MAE {r:.2}%");
                let platforms: BTreeSet<&str> =
                    self.rows.iter().map(|r| r.platform.as_str()).collect();
                for p in platforms {
                    if let Some((m, r)) = self.mae_for_platform(p) {
                        let _ =
                            writeln!(s, "  {p}: model MAE {m:.2}%   naive roofline MAE {r:.2}%");
                    }
                }
            }
            _ => {
                let _ = writeln!(s, "status: no coverage (no benchmark has a measured time)");
            }
        }
        for u in &self.uncovered {
            let _ = writeln!(s, "uncovered: {u} (no measured record)");
        }
        for u in &self.unmatched_measured {
            let _ = writeln!(s, "unmatched measured record: {u} (no segment file)");
        }
        s
    }
}

fn key(benchmark: &str, platform: &str) -> String {
    format!("{benchmark}@{platform}")
}

fn predict_file(
    file: &SegmentFile,
    profiles: &ProfileSet,
    calib: &CalibrationSet,
) -> Result<ApplicationPrediction> {
    let profile = profiles.get(&file.platform).ok_or_else(|| {
        ModelError::invalid(
            format!("{}: platform", file.benchmark),
            format!("no profile named {:?} was provided", file.platform),
        )
    })?;
    aggregate(file, &PredictionContext::new(profile, calib))
}

fn measured_map(measured: &[MeasuredRecord]) -> BTreeMap<(String, String), f64> {
    measured
        .iter()
        .map(|m| ((m.benchmark.clone(), m.platform.clone()), m.kernel_sum_s))
        .collect()
}

/// Predicts every segment file and lines it up with its measured kernel sum.
pub fn validate(
    files: &[SegmentFile],
    measured: &[MeasuredRecord],
    profiles: &ProfileSet,
    calib: &CalibrationSet,
) -> Result<ValidationReport> {
    let by_key = measured_map(measured);
    let mut rows = Vec::with_capacity(files.len());
    let mut seen = BTreeSet::new();
    for file in files {
        let k = (file.benchmark.clone(), file.platform.clone());
        if !seen.insert(k.clone()) {
            return Err(ModelError::invalid(
                format!("{}: benchmark", file.benchmark),
                format!("duplicate segment file for ({}, {})", k.0, k.1),
            ));
        }
        let app = predict_file(file, profiles, calib)?;
        let m = by_key.get(&k).copied();
        rows.push(ValidationRow {
            benchmark: file.benchmark.clone(),
            platform: file.platform.clone(),
            predicted_s: app.total_s(),
            measured_s: m,
            error_pct: m.map(|m| relative_error(app.total_s(), m)).transpose()?,
            roofline_s: app.roofline_s,
            roofline_error_pct: m.map(|m| relative_error(app.roofline_s, m)).transpose()?,
        });
    }
    rows.sort_by(|a, b| (&a.benchmark, &a.platform).cmp(&(&b.benchmark, &b.platform)));

    let covered: Vec<&ValidationRow> = rows.iter().filter(|r| r.measured_s.is_some()).collect();
    let pairs = |roof: bool| -> Vec<(f64, f64)> {
        covered
            .iter()
            .map(|r| {
                let p = if roof { r.roofline_s } else { r.predicted_s };
                (p, r.measured_s.expect("filtered"))
            })
            .collect()
    };
    let (model_mae_pct, roofline_mae_pct) = if covered.is_empty() {
        (None, None)
    } else {
        (Some(mae(&pairs(false))?), Some(mae(&pairs(true))?))
    };
    let uncovered = rows
        .iter()
        .filter(|r| r.measured_s.is_none())
        .map(|r| key(&r.benchmark, &r.platform))
        .collect();
    let unmatched_measured = by_key
        .keys()
        .filter(|k| !seen.contains(*k))
        .map(|(b, p)| key(b, p))
        .collect();
    Ok(ValidationReport {
        rows,
        model_mae_pct,
        roofline_mae_pct,
        uncovered,
        unmatched_measured,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Emit the set even if the holdout MAE gets worse.
    pub allow_worse: bool,
    /// Recorded in the provenance when the split came from [`crate::calibration::split_benchmarks`].
    pub holdout_fraction: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub set: CalibrationSet,
    /// Fitted `m_case` multiplier per training benchmark (`benchmark@platform`).
    pub multipliers: BTreeMap<String, f64>,
    pub train_mae_before_pct: f64,
    pub train_mae_after_pct: f64,
    pub holdout_mae_before_pct: Option<f64>,
    pub holdout_mae_after_pct: Option<f64>,
}

fn covered_mae(
    files: &[SegmentFile],
    measured: &BTreeMap<(String, String), f64>,
    profiles: &ProfileSet,
    calib: &CalibrationSet,
) -> Result<Option<f64>> {
    let mut pairs = Vec::new();
    for f in files {
        if let Some(&m) = measured.get(&(f.benchmark.clone(), f.platform.clone())) {
            pairs.push((predict_file(f, profiles, calib)?.total_s(), m));
        }
    }
    if pairs.is_empty() {
        Ok(None)
    } else {
        mae(&pairs).map(Some)
    }
}

/// Ratio fit of `m_case` per training benchmark, on top of `base`.
///
/// The multiplier `f` solves `f·K + P = measured`, where `K` is the part of the
/// prediction scaled by `m_case` and `P` the host phases; with no phases this is
/// `measured / predicted`. Each platform's wildcard factor moves by the
/// geometric mean of its fitted multipliers, which is what the holdout sees.
/// The fit is refused if the holdout MAE gets worse, unless overridden.
pub fn fit_calibration(
    train: &[SegmentFile],
    holdout: &[SegmentFile],
    measured: &[MeasuredRecord],
    profiles: &ProfileSet,
    base: &CalibrationSet,
    options: FitOptions,
) -> Result<CalibrationFit> {
    base.validate()?;
    let by_key = measured_map(measured);
    let mut set = base.clone();
    let mut multipliers = BTreeMap::new();
    let mut per_platform: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut before_pairs = Vec::new();

    for file in train {
        let Some(&m) = by_key.get(&(file.benchmark.clone(), file.platform.clone())) else {
            continue;
        };
        let app = predict_file(file, profiles, base)?;
        before_pairs.push((app.total_s(), m));
        let scaled: f64 = app.segments.iter().map(|s| s.scaled_kernel_s()).sum();
        let phases = app.phases_s();
        if scaled.is_nan() || scaled <= 0.0 {
            return Err(ModelError::invalid(
                key(&file.benchmark, &file.platform),
                "predicted time is 0; cannot fit a ratio",
            ));
        }
        let f = (m - phases) / scaled;
        if !(f.is_finite() && f > 0.0) {
            return Err(ModelError::invalid(
                key(&file.benchmark, &file.platform),
                format!("measured {m} s does not exceed unscaled host phases {phases} s"),
            ));
        }
        let cal = set.platform_mut(&file.platform);
        let bench_value = cal.benchmark_factor(&file.benchmark);
        let prefix = format!("{}/", file.benchmark);
        for (k, v) in cal.case_factors.iter_mut() {
            if k.starts_with(&prefix) {
                *v *= f;
            }
        }
        cal.case_factors
            .insert(file.benchmark.clone(), bench_value * f);
        multipliers.insert(key(&file.benchmark, &file.platform), f);
        per_platform
            .entry(file.platform.clone())
            .or_default()
            .push(f);
    }
    if before_pairs.is_empty() {
        return Err(ModelError::EmptyInput(
            "no training benchmark has a measured time",
        ));
    }
    for (platform, fs) in &per_platform {
        let geo = (fs.iter().map(|f| f.ln()).sum::<f64>() / fs.len() as f64).exp();
        let cal = set.platform_mut(platform);
        let old = cal.case_factors.get(WILDCARD).copied().unwrap_or(1.0);
        cal.case_factors.insert(WILDCARD.to_string(), old * geo);
    }

    let train_before = mae(&before_pairs)?;
    let train_after = covered_mae(train, &by_key, profiles, &set)?.expect("train is covered");
    let holdout_before = covered_mae(holdout, &by_key, profiles, base)?;
    let holdout_after = covered_mae(holdout, &by_key, profiles, &set)?;

    let worse = matches!((holdout_before, holdout_after), (Some(b), Some(a)) if a > b + 1e-9);
    if worse && !options.allow_worse {
        return Err(ModelError::CalibrationRefused {
            before: holdout_before.unwrap_or_default(),
            after: holdout_after.unwrap_or_default(),
        });
    }

    let names = |files: &[SegmentFile]| {
        let mut v: Vec<String> = files
            .iter()
            .map(|f| key(&f.benchmark, &f.platform))
            .collect();
        v.sort();
        v
    };
    let prov = &mut set.provenance;
    prov.kind = ProvenanceKind::Fitted;
    prov.validated = holdout_after.is_some();
    prov.train = names(train);
    prov.holdout = names(holdout);
    prov.holdout_fraction = options.holdout_fraction;
    prov.seed = options.seed;
    prov.train_mae_before_pct = Some(train_before);
    prov.train_mae_after_pct = Some(train_after);
    prov.holdout_mae_before_pct = holdout_before;
    prov.holdout_mae_after_pct = holdout_after;
    prov.forced = worse;
    prov.notes.clear();
    if !prov.validated {
        prov.notes
            .push("unvalidated: no holdout benchmark with a measured time".to_string());
    }
    if worse {
        prov.notes
            .push("emitted despite a worse holdout MAE (override flag)".to_string());
    }
    Ok(CalibrationFit {
        set,
        multipliers,
        train_mae_before_pct: train_before,
        train_mae_after_pct: train_after,
        holdout_mae_before_pct: holdout_before,
        holdout_mae_after_pct: holdout_after,
    })
}
