//! Disclosed multipliers and constant overrides applied on top of the
//! analytical models, with the provenance needed to audit them.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::WorkloadClass;
use crate::error::{ModelError, Result};
use crate::profile::HardwareProfile;
use crate::roofline::GenericPathParams;

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

/// Key that matches every benchmark of a platform in [`PlatformCalibration::case_factors`].
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmBucket {
    /// Square GEMM size `M = N = K` the factor was fitted at.
    pub size: u64,
    pub factor: f64,
}

/// Calibration for one platform (keyed by profile name).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformCalibration {
    /// `m_case` keyed by `benchmark/segment`, `benchmark`, or `*`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub case_factors: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gemm_scale: Vec<GemmBucket>,
    /// Keyed by tile label, e.g. `16x16`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tile_factors: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_scales: BTreeMap<WorkloadClass, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_memcpy_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_sync_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llc_alpha_exp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llc_beta_exp: Option<f64>,
}

impl PlatformCalibration {
    /// `m_case` for a segment: segment key, then benchmark key, then wildcard, then 1.
    pub fn case_factor(&self, benchmark: &str, segment: &str) -> f64 {
        self.case_factors
            .get(&format!("{benchmark}/{segment}"))
            .or_else(|| self.case_factors.get(benchmark))
            .or_else(|| self.case_factors.get(WILDCARD))
            .copied()
            .unwrap_or(1.0)
    }

    /// Benchmark-level factor (benchmark key, wildcard, 1).
    pub fn benchmark_factor(&self, benchmark: &str) -> f64 {
        self.case_factors
            .get(benchmark)
            .or_else(|| self.case_factors.get(WILDCARD))
            .copied()
            .unwrap_or(1.0)
    }

    /// Nearest-bucket factor for a square GEMM of `size`; ties go to the smaller bucket.
    pub fn gemm_factor(&self, size: u64) -> f64 {
        self.gemm_scale
            .iter()
            .min_by_key(|b| (b.size.abs_diff(size), b.size))
            .map_or(1.0, |b| b.factor)
    }

    pub fn tile_factor(&self, label: &str) -> f64 {
        self.tile_factors.get(label).copied().unwrap_or(1.0)
    }

    /// Profile with the τ and cache-exponent overrides of this calibration.
    pub fn apply_to_profile(&self, profile: &HardwareProfile) -> HardwareProfile {
        let mut p = profile.clone();
        let t = &mut p.tunables;
        if let Some(v) = self.tau_memcpy_s {
            t.tau_memcpy_s = v;
        }
        if let Some(v) = self.tau_sync_s {
            t.tau_sync_s = v;
        }
        if let Some(v) = self.llc_alpha_exp {
            t.llc_alpha_exp = v;
        }
        if let Some(v) = self.llc_beta_exp {
            t.llc_beta_exp = v;
        }
        p
    }

    pub fn generic_params(&self, profile: &HardwareProfile) -> GenericPathParams {
        let mut g = GenericPathParams::from_profile(profile);
        for (c, s) in &self.class_scales {
            g.class_scales.insert(*c, *s);
        }
        g
    }

    fn validate(&self, platform: &str) -> Result<()> {
        let positive = |field: String, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("multiplier must be > 0, got {v}"),
                ))
            }
        };
        for (k, v) in &self.case_factors {
            positive(format!("platforms.{platform}.case_factors.{k}"), *v)?;
        }
        for b in &self.gemm_scale {
            positive(
                format!("platforms.{platform}.gemm_scale.{}", b.size),
                b.factor,
            )?;
        }
        for (k, v) in &self.tile_factors {
            positive(format!("platforms.{platform}.tile_factors.{k}"), *v)?;
        }
        for (k, v) in &self.class_scales {
            positive(format!("platforms.{platform}.class_scales.{k}"), *v)?;
        }
        for (name, v) in [
            ("llc_alpha_exp", self.llc_alpha_exp),
            ("llc_beta_exp", self.llc_beta_exp),
        ] {
            if let Some(v) = v {
                positive(format!("platforms.{platform}.{name}"), v)?;
            }
        }
        for (name, v) in [
            ("tau_memcpy_s", self.tau_memcpy_s),
            ("tau_sync_s", self.tau_sync_s),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ModelError::invalid(
                        format!("platforms.{platform}.{name}"),
                        format!("must be ≥ 0, got {v}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    /// No calibration: every multiplier is 1.
    #[default]
    Default,
    /// Hand-written factors.
    Manual,
    Fitted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default)]
    pub kind: ProvenanceKind,
    /// Fitted sets are validated only if a non-empty holdout was scored.
    #[serde(default)]
    pub validated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holdout: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_mae_before_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_mae_after_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_mae_before_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_mae_after_pct: Option<f64>,
    /// Set when the holdout got worse and the override flag was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSet {
    pub schema_version: u32,
    #[serde(default)]
    pub platforms: BTreeMap<String, PlatformCalibration>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        CalibrationSet {
            schema_version: CALIBRATION_SCHEMA_VERSION,
            platforms: BTreeMap::new(),
            provenance: Provenance::default(),
        }
    }
}

impl CalibrationSet {
    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let set: CalibrationSet = serde_json::from_str(text).map_err(|e| {
            ModelError::parse(
                format!("{location}:{}:{}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CALIBRATION_SCHEMA_VERSION {
            return Err(ModelError::invalid(
                "schema_version",
                format!(
                    "unsupported calibration schema {} (expected {CALIBRATION_SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        for (name, p) in &self.platforms {
            p.validate(name)?;
        }
        Ok(())
    }

    /// Calibration for `platform`; an empty (identity) one if none is recorded.
    pub fn platform(&self, platform: &str) -> PlatformCalibration {
        self.platforms.get(platform).cloned().unwrap_or_default()
    }

    pub fn platform_mut(&mut self, platform: &str) -> &mut PlatformCalibration {
        self.platforms.entry(platform.to_string()).or_default()
    }
}

/// Deterministic benchmark split: names are deduplicated and sorted, shuffled
/// with a seeded ChaCha stream, and the first `round(fraction · n)` go to holdout.
pub fn split_benchmarks(
    names: &[String],
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(ModelError::invalid(
            "holdout_fraction",
            format!("must lie in [0, 1), got {holdout_fraction}"),
        ));
    }
    let mut unique: Vec<String> = names.to_vec();
    unique.sort();
    unique.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);
    let n_holdout = (holdout_fraction * unique.len() as f64).round() as usize;
    let holdout: Vec<String> = unique[..n_holdout].to_vec();
    let train: Vec<String> = unique[n_holdout..].to_vec();
    let sorted = |mut v: Vec<String>| {
        v.sort();
        v
    };
    Ok((sorted(train), sorted(holdout)))
}
