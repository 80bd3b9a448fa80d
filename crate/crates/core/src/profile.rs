//! Hardware profiles: every measured or datasheet parameter of one GPU.
//!
//! A profile file is a JSON object with five sections:
//!
//! * `meta` – name, vendor, provenance and free-form notes
//! * `datasheet` – counts, capacities and *peak* rates
//! * `measured` – *sustained* rates from microbenchmarks; any sustained
//!   rate left out falls back to its datasheet peak and is reported by
//!   [`HardwareProfile::defaulted_sustained`]
//! * `latencies_cycles` – latencies in SM/CU clock cycles
//! * `tunables` – overheads in seconds and model constants
//!
//! All other numbers are SI base units (bytes, bytes/s, FLOP/s, seconds).
//! Cycle latencies are wrapped in [`Cycles`] and only become seconds
//! through [`HardwareProfile::seconds`], which divides by the clock.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::precision::Precision;

/// A latency measured in clock cycles. Convert with [`HardwareProfile::seconds`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cycles(pub f64);

impl fmt::Display for Cycles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cyc", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vendor {
    Nvidia,
    Amd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileMeta {
    pub name: String,
    pub vendor: Vendor,
    pub source: String,
    pub date: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Datasheet {
    pub clock_ghz: f64,
    pub num_sm_or_cu: u32,
    pub warp_size: u32,
    pub max_resident_warps: u32,
    /// Peak HBM bandwidth, bytes/s.
    pub hbm_bw: f64,
    pub hbm_capacity: f64,
    pub llc_size: f64,
    pub tmem_or_lds_per_sm: f64,
    pub vgpr_file_per_cu: u32,
    /// Peak tensor / matrix-core throughput, FLOP/s.
    pub tensor_flops: BTreeMap<Precision, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measured {
    /// Sustained HBM bandwidth; falls back to the datasheet peak when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbm_bw: Option<f64>,
    /// Sustained throughput per precision; missing entries fall back to peak.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tensor_flops: BTreeMap<Precision, f64>,
    pub llc_bw: f64,
    pub tmem_bw_read: f64,
    pub tmem_bw_write: f64,
    /// Per-SM TMA copy bandwidth.
    pub tma_bw: f64,
    /// Distributed shared memory bandwidth used by CTA pairs.
    pub dsmem_bw: f64,
    pub memcpy_bw_h2d: f64,
    pub memcpy_bw_d2h: f64,
    /// Decompression engine rate R_DE, bytes/s of compressed input.
    pub decomp_rate: f64,
    /// Sub-byte unpack rate, bytes/s of packed input.
    pub unpack_rate: f64,
    pub link_bw: f64,
    pub de_efficiency: f64,
    pub s_2sm: f64,
    pub launch_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheLatencies {
    pub l1: Cycles,
    pub l2: Cycles,
    pub llc: Cycles,
    pub hbm: Cycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Latencies {
    pub tma: Cycles,
    pub tma_store: Cycles,
    pub store_setup: Cycles,
    pub mma: BTreeMap<Precision, Cycles>,
    pub mbar: Cycles,
    pub commit: Cycles,
    pub tmem_alloc: Cycles,
    pub tmem_dealloc: Cycles,
    pub decomp_setup: Cycles,
    pub cache: CacheLatencies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunables {
    pub tau_memcpy_s: f64,
    pub tau_sync_s: f64,
    pub tau_interf_s: f64,
    pub tau_interf_gpu_s: f64,
    /// Blackwell I/O overlap α.
    pub overlap_alpha: f64,
    /// Residual ε added to a pipelined step.
    pub pipeline_epsilon_s: f64,
    pub coherence_s: f64,
    pub cross_xcd_s: f64,
    pub mfma_utilization: f64,
    /// Exponent of the LLC transition-zone hit rate.
    pub llc_alpha_exp: f64,
    /// Exponent of the LLC streaming-regime hit rate.
    pub llc_beta_exp: f64,
    /// Working sets below this fraction of the LLC are fully resident.
    pub llc_resident_fraction: f64,
    pub tau_cta_s: f64,
    /// VGPRs a wavefront holds before any accumulator registers.
    pub vgpr_base_per_wf: u32,
    /// Working-set scale of the generic bandwidth blend; ≤ 0 disables it.
    pub generic_w0_bytes: f64,
    pub default_precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub meta: ProfileMeta,
    pub datasheet: Datasheet,
    pub measured: Measured,
    #[serde(rename = "latencies_cycles")]
    pub latencies: Latencies,
    pub tunables: Tunables,
}

pub const SHIPPED_PROFILES: [&str; 4] = ["b200", "mi300a", "h200", "mi250x"];

const B200_JSON: &str = include_str!("../profiles/b200.json");
const MI300A_JSON: &str = include_str!("../profiles/mi300a.json");
const H200_JSON: &str = include_str!("../profiles/h200.json");
const MI250X_JSON: &str = include_str!("../profiles/mi250x.json");

/// Raw JSON text of a shipped profile.
pub fn shipped_profile_text(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "b200" => Some(B200_JSON),
        "mi300a" => Some(MI300A_JSON),
        "h200" => Some(H200_JSON),
        "mi250x" => Some(MI250X_JSON),
        _ => None,
    }
}

pub fn shipped_profile(name: &str) -> Result<HardwareProfile> {
    let text = shipped_profile_text(name).ok_or_else(|| {
        ModelError::invalid(
            "profile",
            format!("no shipped profile named {name:?} (have {SHIPPED_PROFILES:?})"),
        )
    })?;
    HardwareProfile::from_json_str(text, &format!("<shipped {name}>"))
}

/// Reads and validates a profile file.
pub fn load_profile(path: impl AsRef<Path>) -> Result<HardwareProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    HardwareProfile::from_json_str(&text, &path.display().to_string())
}

/// Accepts either a path to a profile file or the name of a shipped profile.
pub fn resolve_profile(name_or_path: &str) -> Result<(HardwareProfile, ProfileSource)> {
    let path = PathBuf::from(name_or_path);
    if path.is_file() {
        let profile = load_profile(&path)?;
        return Ok((profile, ProfileSource::File(path)));
    }
    let profile = shipped_profile(name_or_path)?;
    Ok((profile, ProfileSource::Shipped(profile_name(name_or_path))))
}

fn profile_name(name: &str) -> String {
    name.to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProfileSource {
    Shipped(String),
    File(PathBuf),
}

/// Converts a cycle count to seconds at the given clock.
pub fn cycles_to_seconds(cycles: Cycles, clock_ghz: f64) -> f64 {
    cycles.0 / (clock_ghz * 1e9)
}

impl HardwareProfile {
    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let profile: HardwareProfile = serde_json::from_str(text).map_err(|e| {
            ModelError::parse(
                format!("{location}:{}:{}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serialization cannot fail")
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn vendor(&self) -> Vendor {
        self.meta.vendor
    }

    pub fn num_units(&self) -> f64 {
        f64::from(self.datasheet.num_sm_or_cu)
    }

    /// The only cycle → second conversion used by the engines.
    pub fn seconds(&self, cycles: Cycles) -> f64 {
        cycles_to_seconds(cycles, self.datasheet.clock_ghz)
    }

    pub fn hbm_bw_peak(&self) -> f64 {
        self.datasheet.hbm_bw
    }

    pub fn hbm_bw_sustained(&self) -> f64 {
        self.measured.hbm_bw.unwrap_or(self.datasheet.hbm_bw)
    }

    pub fn tensor_peak(&self, precision: Precision) -> Result<f64> {
        self.datasheet
            .tensor_flops
            .get(&precision)
            .copied()
            .ok_or_else(|| self.unknown_precision(precision))
    }

    pub fn tensor_sustained(&self, precision: Precision) -> Result<f64> {
        let peak = self.tensor_peak(precision)?;
        Ok(self
            .measured
            .tensor_flops
            .get(&precision)
            .copied()
            .unwrap_or(peak))
    }

    pub fn mma_latency(&self, precision: Precision) -> Result<Cycles> {
        self.latencies
            .mma
            .get(&precision)
            .copied()
            .ok_or_else(|| self.unknown_precision(precision))
    }

    fn unknown_precision(&self, precision: Precision) -> ModelError {
        ModelError::UnknownPrecision {
            precision: precision.to_string(),
            profile: self.meta.name.clone(),
        }
    }

    /// Sustained fields that were absent from the file and fell back to peak.
    pub fn defaulted_sustained(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.measured.hbm_bw.is_none() {
            out.push("measured.hbm_bw".to_string());
        }
        for p in self.datasheet.tensor_flops.keys() {
            if !self.measured.tensor_flops.contains_key(p) {
                out.push(format!("measured.tensor_flops.{p}"));
            }
        }
        out
    }

    /// A copy with a different clock; used to check cycle/second separation.
    pub fn with_clock_ghz(&self, clock_ghz: f64) -> Self {
        let mut p = self.clone();
        p.datasheet.clock_ghz = clock_ghz;
        p
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("must be finite and ≥ 0, got {v}"),
                ))
            }
        }
        fn unit_interval(field: &str, v: f64, open_low: bool) -> Result<()> {
            let low_ok = if open_low { v > 0.0 } else { v >= 0.0 };
            if low_ok && v <= 1.0 {
                Ok(())
            } else {
                let lo = if open_low { "(0" } else { "[0" };
                Err(ModelError::invalid(
                    field,
                    format!("must lie in {lo}, 1], got {v}"),
                ))
            }
        }
        fn not_above_peak(field: &str, sustained: f64, peak: f64) -> Result<()> {
            if sustained <= peak {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("sustained value {sustained} exceeds peak {peak}"),
                ))
            }
        }

        if self.meta.name.trim().is_empty() {
            return Err(ModelError::invalid("meta.name", "must not be empty"));
        }

        let d = &self.datasheet;
        positive("datasheet.clock_ghz", d.clock_ghz)?;
        positive("datasheet.num_sm_or_cu", f64::from(d.num_sm_or_cu))?;
        if d.warp_size != 32 && d.warp_size != 64 {
            return Err(ModelError::invalid(
                "datasheet.warp_size",
                format!("must be 32 or 64, got {}", d.warp_size),
            ));
        }
        positive(
            "datasheet.max_resident_warps",
            f64::from(d.max_resident_warps),
        )?;
        positive("datasheet.hbm_bw", d.hbm_bw)?;
        positive("datasheet.hbm_capacity", d.hbm_capacity)?;
        positive("datasheet.llc_size", d.llc_size)?;
        positive("datasheet.tmem_or_lds_per_sm", d.tmem_or_lds_per_sm)?;
        positive("datasheet.vgpr_file_per_cu", f64::from(d.vgpr_file_per_cu))?;
        if d.tensor_flops.is_empty() {
            return Err(ModelError::invalid(
                "datasheet.tensor_flops",
                "must not be empty",
            ));
        }
        for (p, v) in &d.tensor_flops {
            positive(&format!("datasheet.tensor_flops.{p}"), *v)?;
        }

        let m = &self.measured;
        if let Some(bw) = m.hbm_bw {
            positive("measured.hbm_bw", bw)?;
            not_above_peak("measured.hbm_bw", bw, d.hbm_bw)?;
        }
        for (p, v) in &m.tensor_flops {
            let field = format!("measured.tensor_flops.{p}");
            positive(&field, *v)?;
            let peak = d.tensor_flops.get(p).ok_or_else(|| {
                ModelError::invalid(&field, "no matching datasheet peak for this precision")
            })?;
            not_above_peak(&field, *v, *peak)?;
        }
        for (field, v) in [
            ("measured.llc_bw", m.llc_bw),
            ("measured.tmem_bw_read", m.tmem_bw_read),
            ("measured.tmem_bw_write", m.tmem_bw_write),
            ("measured.tma_bw", m.tma_bw),
            ("measured.dsmem_bw", m.dsmem_bw),
            ("measured.memcpy_bw_h2d", m.memcpy_bw_h2d),
            ("measured.memcpy_bw_d2h", m.memcpy_bw_d2h),
            ("measured.decomp_rate", m.decomp_rate),
            ("measured.unpack_rate", m.unpack_rate),
            ("measured.link_bw", m.link_bw),
            ("measured.s_2sm", m.s_2sm),
        ] {
            positive(field, v)?;
        }
        unit_interval("measured.de_efficiency", m.de_efficiency, true)?;
        non_negative("measured.launch_latency_s", m.launch_latency_s)?;

        let l = &self.latencies;
        for (field, c) in [
            ("latencies_cycles.tma", l.tma),
            ("latencies_cycles.tma_store", l.tma_store),
            ("latencies_cycles.store_setup", l.store_setup),
            ("latencies_cycles.mbar", l.mbar),
            ("latencies_cycles.commit", l.commit),
            ("latencies_cycles.tmem_alloc", l.tmem_alloc),
            ("latencies_cycles.tmem_dealloc", l.tmem_dealloc),
            ("latencies_cycles.decomp_setup", l.decomp_setup),
            ("latencies_cycles.cache.l1", l.cache.l1),
            ("latencies_cycles.cache.l2", l.cache.l2),
            ("latencies_cycles.cache.llc", l.cache.llc),
            ("latencies_cycles.cache.hbm", l.cache.hbm),
        ] {
            non_negative(field, c.0)?;
        }
        for (p, c) in &l.mma {
            non_negative(&format!("latencies_cycles.mma.{p}"), c.0)?;
        }

        let t = &self.tunables;
        for (field, v) in [
            ("tunables.tau_memcpy_s", t.tau_memcpy_s),
            ("tunables.tau_sync_s", t.tau_sync_s),
            ("tunables.tau_interf_s", t.tau_interf_s),
            ("tunables.tau_interf_gpu_s", t.tau_interf_gpu_s),
            ("tunables.pipeline_epsilon_s", t.pipeline_epsilon_s),
            ("tunables.coherence_s", t.coherence_s),
            ("tunables.cross_xcd_s", t.cross_xcd_s),
            ("tunables.tau_cta_s", t.tau_cta_s),
        ] {
            non_negative(field, v)?;
        }
        unit_interval("tunables.overlap_alpha", t.overlap_alpha, false)?;
        unit_interval("tunables.mfma_utilization", t.mfma_utilization, true)?;
        positive("tunables.llc_alpha_exp", t.llc_alpha_exp)?;
        positive("tunables.llc_beta_exp", t.llc_beta_exp)?;
        if !(t.llc_resident_fraction > 0.0 && t.llc_resident_fraction < 1.0) {
            return Err(ModelError::invalid(
                "tunables.llc_resident_fraction",
                format!("must lie in (0, 1), got {}", t.llc_resident_fraction),
            ));
        }
        if !t.generic_w0_bytes.is_finite() {
            return Err(ModelError::invalid(
                "tunables.generic_w0_bytes",
                "must be finite",
            ));
        }
        if !d.tensor_flops.contains_key(&t.default_precision) {
            return Err(ModelError::invalid(
                "tunables.default_precision",
                format!("{} has no datasheet throughput", t.default_precision),
            ));
        }
        Ok(())
    }
}
