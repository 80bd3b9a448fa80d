//! Kernel-level inputs shared by every engine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::precision::Precision;
use crate::profile::HardwareProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadClass {
    MemoryBound,
    ComputeBound,
    Balanced,
    Stencil,
}

impl WorkloadClass {
    pub const ALL: [WorkloadClass; 4] = [
        WorkloadClass::MemoryBound,
        WorkloadClass::ComputeBound,
        WorkloadClass::Balanced,
        WorkloadClass::Stencil,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadClass::MemoryBound => "memory_bound",
            WorkloadClass::ComputeBound => "compute_bound",
            WorkloadClass::Balanced => "balanced",
            WorkloadClass::Stencil => "stencil",
        }
    }
}

impl fmt::Display for WorkloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkloadClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "memory_bound" | "mem" | "memory" => Ok(WorkloadClass::MemoryBound),
            "compute_bound" | "comp" | "compute" => Ok(WorkloadClass::ComputeBound),
            "balanced" | "bal" => Ok(WorkloadClass::Balanced),
            "stencil" => Ok(WorkloadClass::Stencil),
            _ => Err(ModelError::UnknownClass(s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmDims {
    pub m: u64,
    pub n: u64,
    pub k: u64,
}

impl GemmDims {
    pub fn square(size: u64) -> Self {
        GemmDims {
            m: size,
            n: size,
            k: size,
        }
    }

    /// SRAD-style aggregate rows carry all-zero dimensions and size traffic from `bytes`.
    pub fn is_aggregate(&self) -> bool {
        self.m == 0 && self.n == 0
    }

    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.n as f64 * self.k as f64
    }

    /// Compulsory traffic: read A and B once, write C once.
    pub fn bytes(&self, precision: Precision) -> f64 {
        let (m, n, k) = (self.m as f64, self.n as f64, self.k as f64);
        (m * k + k * n) * precision.element_bytes() + m * n * precision.output_bytes()
    }

    pub fn output_bytes(&self, precision: Precision) -> f64 {
        self.m as f64 * self.n as f64 * precision.output_bytes()
    }

    /// Output tiles of the grid.
    pub fn tile_count(&self, tile: &TileDims) -> u64 {
        self.m.div_ceil(tile.b_m) * self.n.div_ceil(tile.b_n)
    }

    /// K-steps one SM executes: full waves of output tiles times K/b_K.
    pub fn k_steps_per_sm(&self, tile: &TileDims, num_sm: u32) -> u64 {
        let waves = self.tile_count(tile).div_ceil(u64::from(num_sm.max(1)));
        waves * self.k.div_ceil(tile.b_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileDims {
    pub b_m: u64,
    pub b_n: u64,
    pub b_k: u64,
}

impl TileDims {
    pub fn new(b_m: u64, b_n: u64, b_k: u64) -> Self {
        TileDims { b_m, b_n, b_k }
    }

    pub fn label(&self) -> String {
        format!("{}x{}x{}", self.b_m, self.b_n, self.b_k)
    }

    /// Bytes of the A and B operand slabs loaded per K-step.
    pub fn operand_bytes(&self, precision: Precision) -> (f64, f64) {
        let e = precision.element_bytes();
        (
            (self.b_m * self.b_k) as f64 * e,
            (self.b_k * self.b_n) as f64 * e,
        )
    }

    pub fn accumulator_bytes(&self, precision: Precision) -> f64 {
        (self.b_m * self.b_n) as f64 * precision.accumulator_bytes()
    }
}

impl FromStr for TileDims {
    type Err = ModelError;

    /// Accepts `MxNxK` or `MxN` (then `b_K` = 1).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let nums: Vec<u64> = parts
            .iter()
            .map(|p| p.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| ModelError::invalid("tile", format!("cannot parse {s:?}")))?;
        let tile = match nums.as_slice() {
            [m, n] => TileDims::new(*m, *n, 1),
            [m, n, k] => TileDims::new(*m, *n, *k),
            _ => {
                return Err(ModelError::invalid(
                    "tile",
                    format!("expected MxN or MxNxK, got {s:?}"),
                ))
            }
        };
        if tile.b_m == 0 || tile.b_n == 0 || tile.b_k == 0 {
            return Err(ModelError::invalid("tile", "dimensions must be > 0"));
        }
        Ok(tile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitRates {
    pub l1: f64,
    pub l2: f64,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

/// A fully specified single-kernel scenario.
///
/// Optional fields fall back to profile tunables (α, utilization, precision)
/// or are derived from `gemm`/`tile` when the engine needs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCase {
    pub class: WorkloadClass,
    #[serde(default)]
    pub flops: f64,
    #[serde(default)]
    pub bytes: f64,
    #[serde(default)]
    pub working_set: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gemm: Option<GemmDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tiles: Option<u64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub tma_participants: u32,
    /// Separate multicast width for the B operand stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tma_participants_b: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tma_bytes_per_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_alpha: Option<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub n_bar: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub use_2sm: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub pipelined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o_misc_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vgpr_per_wavefront: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mwp: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwp: Option<u32>,
    #[serde(default)]
    pub hit_rates: HitRates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_loads: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfma_utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub writeback_bytes: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub via_tma_store: bool,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub n_concurrent: u32,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub n_devices: u32,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub n_kernels: u32,
}

impl KernelCase {
    pub fn new(class: WorkloadClass, flops: f64, bytes: f64) -> Self {
        KernelCase {
            class,
            flops,
            bytes,
            working_set: bytes,
            precision: None,
            precision_efficiency: None,
            gemm: None,
            tile: None,
            k_tiles: None,
            tma_participants: 1,
            tma_participants_b: None,
            tma_bytes_per_step: None,
            overlap_alpha: None,
            n_bar: 1,
            use_2sm: false,
            pipelined: false,
            compression_ratio: None,
            o_misc_s: None,
            vgpr_per_wavefront: None,
            mwp: None,
            cwp: None,
            hit_rates: HitRates::default(),
            n_loads: None,
            mfma_utilization: None,
            writeback_bytes: None,
            via_tma_store: false,
            n_concurrent: 1,
            n_devices: 1,
            n_kernels: 1,
        }
    }

    /// A compute-bound GEMM whose FLOPs, bytes and working set come from its dimensions.
    pub fn gemm(dims: GemmDims, tile: Option<TileDims>, precision: Precision) -> Self {
        let bytes = dims.bytes(precision);
        let mut case = KernelCase::new(WorkloadClass::ComputeBound, dims.flops(), bytes);
        case.gemm = Some(dims);
        case.tile = tile;
        case.precision = Some(precision);
        case
    }

    pub fn precision_or_default(&self, profile: &HardwareProfile) -> Precision {
        self.precision.unwrap_or(profile.tunables.default_precision)
    }

    pub fn efficiency(&self) -> f64 {
        self.precision_efficiency.unwrap_or(1.0)
    }

    /// Real GEMM dimensions, ignoring all-zero aggregate rows.
    pub fn real_gemm(&self) -> Option<GemmDims> {
        self.gemm.filter(|g| !g.is_aggregate())
    }

    pub fn validate(&self) -> Result<()> {
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
        fn in_unit(field: &str, v: f64, open_low: bool) -> Result<()> {
            let ok = if open_low { v > 0.0 } else { v >= 0.0 } && v <= 1.0;
            if ok {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("must lie in [0, 1], got {v}"),
                ))
            }
        }
        fn at_least_one(field: &str, v: u32) -> Result<()> {
            if v >= 1 {
                Ok(())
            } else {
                Err(ModelError::invalid(field, "must be ≥ 1"))
            }
        }

        non_negative("flops", self.flops)?;
        non_negative("bytes", self.bytes)?;
        non_negative("working_set", self.working_set)?;
        if let Some(e) = self.precision_efficiency {
            in_unit("precision_efficiency", e, true)?;
        }
        if let Some(t) = self.tile {
            if t.b_m == 0 || t.b_n == 0 || t.b_k == 0 {
                return Err(ModelError::invalid("tile", "dimensions must be > 0"));
            }
        }
        at_least_one("tma_participants", self.tma_participants)?;
        if let Some(p) = self.tma_participants_b {
            at_least_one("tma_participants_b", p)?;
        }
        if let Some(b) = self.tma_bytes_per_step {
            non_negative("tma_bytes_per_step", b)?;
        }
        if let Some(a) = self.overlap_alpha {
            in_unit("overlap_alpha", a, false)?;
        }
        if let Some(cr) = self.compression_ratio {
            if !(cr.is_finite() && cr >= 1.0) {
                return Err(ModelError::invalid(
                    "compression_ratio",
                    format!("must be ≥ 1, got {cr}"),
                ));
            }
        }
        if let Some(o) = self.o_misc_s {
            non_negative("o_misc_s", o)?;
        }
        if let Some(v) = self.vgpr_per_wavefront {
            at_least_one("vgpr_per_wavefront", v)?;
        }
        in_unit("hit_rates.l1", self.hit_rates.l1, false)?;
        in_unit("hit_rates.l2", self.hit_rates.l2, false)?;
        if let Some(n) = self.n_loads {
            non_negative("n_loads", n)?;
        }
        if let Some(u) = self.mfma_utilization {
            in_unit("mfma_utilization", u, true)?;
        }
        if let Some(w) = self.writeback_bytes {
            non_negative("writeback_bytes", w)?;
        }
        at_least_one("n_concurrent", self.n_concurrent)?;
        at_least_one("n_devices", self.n_devices)?;
        at_least_one("n_kernels", self.n_kernels)?;
        Ok(())
    }
}
