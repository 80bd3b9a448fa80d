//! Multi-segment application workloads: parsing, routing and aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blackwell;
use crate::breakdown::{Composition, ModelPath, PredictionBreakdown};
use crate::calibration::{CalibrationSet, PlatformCalibration};
use crate::case::{GemmDims, KernelCase, TileDims, WorkloadClass};
use crate::cdna::{self, CdnaParams, TileCandidate};
use crate::error::{ModelError, Result};
use crate::precision::Precision;
use crate::profile::{HardwareProfile, Vendor};
use crate::roofline::{self, Direction, GenericPathParams};

pub const SEGMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemcpyEpisode {
    pub bytes: f64,
    pub direction: Direction,
    #[serde(default = "one_u64")]
    pub count: u64,
}

fn one_u64() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

fn is_one_u32(v: &u32) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

/// One dominant kernel family of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSegment {
    pub name: String,
    pub class: WorkloadClass,
    #[serde(default)]
    pub flops: f64,
    #[serde(default)]
    pub bytes: f64,
    /// Defaults to `bytes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_set: Option<f64>,
    pub n_exec: u64,
    #[serde(default = "one_u32", skip_serializing_if = "is_one_u32")]
    pub n_kernels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    /// `M = N = 0` marks an aggregate row whose traffic comes from `bytes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gemm: Option<GemmDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileDims>,
    /// Route compute-bound GEMMs on CDNA through the occupancy/tile formula.
    #[serde(default, skip_serializing_if = "is_false")]
    pub occupancy_tile: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub memcpy: Vec<MemcpyEpisode>,
    /// Host synchronizations per execution.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub syncs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl WorkloadSegment {
    pub fn new(name: &str, class: WorkloadClass, flops: f64, bytes: f64, n_exec: u64) -> Self {
        WorkloadSegment {
            name: name.to_string(),
            class,
            flops,
            bytes,
            working_set: None,
            n_exec,
            n_kernels: 1,
            precision: None,
            gemm: None,
            tile: None,
            occupancy_tile: false,
            memcpy: Vec::new(),
            syncs: 0,
            note: None,
        }
    }

    pub fn working_set(&self) -> f64 {
        self.working_set.unwrap_or(self.bytes)
    }

    fn real_gemm(&self) -> Option<GemmDims> {
        self.gemm.filter(|g| !g.is_aggregate())
    }

    fn validate(&self, location: &str) -> Result<()> {
        let field = |f: &str| format!("{location}.{f}");
        let non_negative = |f: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field(f),
                    format!("must be finite and ≥ 0, got {v}"),
                ))
            }
        };
        if self.n_exec == 0 {
            return Err(ModelError::invalid(field("n_exec"), "must be ≥ 1"));
        }
        if self.n_kernels == 0 {
            return Err(ModelError::invalid(field("n_kernels"), "must be ≥ 1"));
        }
        non_negative("flops", self.flops)?;
        non_negative("bytes", self.bytes)?;
        if let Some(w) = self.working_set {
            non_negative("working_set", w)?;
        }
        if let Some(t) = self.tile {
            if t.b_m == 0 || t.b_n == 0 || t.b_k == 0 {
                return Err(ModelError::invalid(field("tile"), "dimensions must be > 0"));
            }
        }
        for (i, m) in self.memcpy.iter().enumerate() {
            non_negative(&format!("memcpy[{i}].bytes"), m.bytes)?;
        }
        Ok(())
    }
}

/// A benchmark on one platform, as a list of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub schema_version: u32,
    pub benchmark: String,
    /// Profile name the segments were characterized for.
    pub platform: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub segments: Vec<WorkloadSegment>,
}

impl SegmentFile {
    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let file: SegmentFile = serde_json::from_str(text).map_err(|e| {
            ModelError::parse(
                format!("{location}:{}:{}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        file.validate(location)?;
        Ok(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("segment file serializes")
    }

    pub fn validate(&self, location: &str) -> Result<()> {
        if self.schema_version != SEGMENT_SCHEMA_VERSION {
            return Err(ModelError::invalid(
                format!("{location}: schema_version"),
                format!(
                    "unsupported segment schema {} (expected {SEGMENT_SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate(&format!("{location}: segments[{i}] ({})", s.name))?;
        }
        Ok(())
    }
}

pub fn parse_segments(path: impl AsRef<Path>) -> Result<SegmentFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SegmentFile::from_json_str(&text, &path.display().to_string())
}

/// Stand-in kernel family a segment is evaluated as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proxy {
    Transpose,
    VectorCopy,
    Gemm,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: ModelPath,
    pub proxy: Proxy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Maps a segment to exactly one model path; the profile vendor picks the
/// tensor-core engine family.
pub fn route_segment(seg: &WorkloadSegment, profile: &HardwareProfile) -> Route {
    let generic = |proxy, diagnostic| Route {
        path: ModelPath::GenericRoofline,
        proxy,
        diagnostic,
    };
    match seg.class {
        WorkloadClass::Stencil => generic(Proxy::Transpose, None),
        WorkloadClass::MemoryBound => generic(Proxy::VectorCopy, None),
        WorkloadClass::Balanced => generic(Proxy::Balanced, None),
        WorkloadClass::ComputeBound => {
            let Some(_) = seg.real_gemm() else {
                return generic(
                    Proxy::Gemm,
                    Some(format!(
                        "segment {}: compute-bound without GEMM dimensions; using generic roofline",
                        seg.name
                    )),
                );
            };
            match profile.vendor() {
                Vendor::Nvidia => match seg.tile {
                    Some(_) => Route {
                        path: ModelPath::BlackwellStage,
                        proxy: Proxy::Gemm,
                        diagnostic: None,
                    },
                    None => generic(
                        Proxy::Gemm,
                        Some(format!(
                            "segment {}: stage model needs tile dimensions; using generic roofline",
                            seg.name
                        )),
                    ),
                },
                Vendor::Amd if seg.occupancy_tile => match seg.tile {
                    Some(_) => Route {
                        path: ModelPath::CdnaOccupancyTile,
                        proxy: Proxy::Gemm,
                        diagnostic: None,
                    },
                    None => generic(
                        Proxy::Gemm,
                        Some(format!(
                            "segment {}: occupancy/tile model needs tile dimensions; using generic roofline",
                            seg.name
                        )),
                    ),
                },
                Vendor::Amd => Route {
                    path: ModelPath::CdnaWavefront,
                    proxy: Proxy::Gemm,
                    diagnostic: None,
                },
            }
        }
    }
}

/// Everything a prediction needs besides the workload: calibrated profile,
/// path parameters and the platform's multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionContext {
    pub profile: HardwareProfile,
    pub generic: GenericPathParams,
    pub cdna: CdnaParams,
    pub calibration: PlatformCalibration,
}

impl PredictionContext {
    pub fn new(profile: &HardwareProfile, calibration: &CalibrationSet) -> Self {
        let cal = calibration.platform(profile.name());
        let profile = cal.apply_to_profile(profile);
        PredictionContext {
            generic: cal.generic_params(&profile),
            cdna: CdnaParams::from_profile(&profile),
            calibration: cal,
            profile,
        }
    }

    pub fn uncalibrated(profile: &HardwareProfile) -> Self {
        Self::new(profile, &CalibrationSet::default())
    }

    /// Refreshes derived parameters after `profile` was modified in place.
    pub fn refresh(&mut self) {
        let class_scales = self.generic.class_scales.clone();
        self.generic = GenericPathParams::from_profile(&self.profile);
        self.generic.class_scales = class_scales;
        self.cdna = CdnaParams::from_profile(&self.profile);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentPrediction {
    pub name: String,
    pub route: Route,
    pub n_exec: u64,
    /// Model prediction of one execution, before any multiplier.
    pub kernel: PredictionBreakdown,
    /// GEMM-bucket and tile factors.
    pub shape_factor: f64,
    pub case_factor: f64,
    /// memcpy + host sync seconds of one execution.
    pub phases_s: f64,
    /// n_exec × (kernel × factors + phases), additive.
    pub subtotal: PredictionBreakdown,
    /// n_exec × naive roofline of the same characterization.
    pub roofline_s: f64,
}

impl SegmentPrediction {
    /// Part of the subtotal that scales with the case factor.
    pub fn scaled_kernel_s(&self) -> f64 {
        self.n_exec as f64 * self.kernel.total_s * self.shape_factor * self.case_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApplicationPrediction {
    pub benchmark: String,
    pub platform: String,
    pub breakdown: PredictionBreakdown,
    pub segments: Vec<SegmentPrediction>,
    pub roofline_s: f64,
}

impl ApplicationPrediction {
    pub fn total_s(&self) -> f64 {
        self.breakdown.total_s
    }

    /// Σ n_exec × phases (not touched by case factors).
    pub fn phases_s(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.n_exec as f64 * s.phases_s)
            .sum()
    }
}

fn segment_case(seg: &WorkloadSegment, route: &Route, profile: &HardwareProfile) -> KernelCase {
    let precision = seg.precision.unwrap_or(profile.tunables.default_precision);
    let mut case = match (route.path, seg.real_gemm()) {
        (ModelPath::BlackwellStage | ModelPath::CdnaWavefront, Some(g)) => {
            KernelCase::gemm(g, seg.tile, precision)
        }
        _ => {
            let mut c = KernelCase::new(seg.class, seg.flops, seg.bytes);
            c.working_set = seg.working_set();
            c.precision = Some(precision);
            c.gemm = seg.gemm;
            c
        }
    };
    if route.proxy == Proxy::Transpose {
        // A transpose moves data and does no arithmetic.
        case.flops = 0.0;
    }
    case.n_kernels = seg.n_kernels;
    case
}

/// Prediction for one segment, including its multipliers and host phases.
pub fn predict_segment(
    seg: &WorkloadSegment,
    benchmark: &str,
    ctx: &PredictionContext,
) -> Result<SegmentPrediction> {
    let profile = &ctx.profile;
    let route = route_segment(seg, profile);
    let case = segment_case(seg, &route, profile);
    let cal = &ctx.calibration;
    let (mut kernel, shape_factor) = match route.path {
        ModelPath::BlackwellStage => {
            let b = blackwell::kernel_time(&case, profile)?;
            (b, gemm_factor(cal, seg))
        }
        ModelPath::CdnaWavefront => {
            let b = cdna::kernel_time(&case, profile, &ctx.cdna)?;
            (b, gemm_factor(cal, seg))
        }
        ModelPath::CdnaOccupancyTile => {
            let g = seg.real_gemm().expect("routed with GEMM dims");
            let t = seg.tile.expect("routed with tile");
            let precision = case.precision_or_default(profile);
            let candidate = TileCandidate::for_gemm(&g, t.b_m, t.b_n, precision, profile)?;
            let b = cdna::occupancy_tile_kernel_time(&candidate, profile, &ctx.cdna)?;
            // The occupancy formula covers one launch.
            let extra = f64::from(seg.n_kernels - 1) * profile.measured.launch_latency_s;
            let mut b2 = b.clone();
            b2.t_launch_s += extra;
            let b2 = b2.with_total(b.total_s + extra)?;
            (
                b2,
                gemm_factor(cal, seg) * cal.tile_factor(&candidate.label),
            )
        }
        _ => (
            roofline::generic_predict(&case, profile, &ctx.generic)?,
            1.0,
        ),
    };
    if let Some(d) = &route.diagnostic {
        kernel.diagnostics.push(d.clone());
    }
    let case_factor = cal.case_factor(benchmark, &seg.name);

    let memcpy_s: f64 = seg
        .memcpy
        .iter()
        .map(|m| m.count as f64 * roofline::memcpy_time(m.bytes, m.direction, profile))
        .sum();
    let sync_s = roofline::host_sync_time(seg.syncs, profile);

    let n = seg.n_exec as f64;
    let mut per_exec = kernel.to_additive().scaled(shape_factor * case_factor);
    per_exec.t_memcpy_s += memcpy_s;
    per_exec.t_overhead_s += sync_s;
    per_exec.total_s += memcpy_s + sync_s;
    let subtotal = per_exec.scaled(n);

    let precision = case.precision_or_default(profile);
    let naive = match seg.real_gemm() {
        Some(g) if route.proxy == Proxy::Gemm => {
            roofline::naive_roofline(g.flops(), g.bytes(precision), profile, precision)?
        }
        _ => roofline::naive_roofline(seg.flops, seg.bytes, profile, precision)?,
    };

    Ok(SegmentPrediction {
        name: seg.name.clone(),
        route,
        n_exec: seg.n_exec,
        kernel,
        shape_factor,
        case_factor,
        phases_s: memcpy_s + sync_s,
        subtotal,
        roofline_s: n * naive,
    })
}

/// Model path a single kernel case is evaluated on.
pub fn route_case(case: &KernelCase, profile: &HardwareProfile) -> ModelPath {
    let has_steps = case.real_gemm().is_some() || case.k_tiles.is_some();
    match (case.class, profile.vendor()) {
        (WorkloadClass::ComputeBound, Vendor::Nvidia) if case.tile.is_some() && has_steps => {
            ModelPath::BlackwellStage
        }
        (WorkloadClass::ComputeBound, Vendor::Amd) if has_steps => ModelPath::CdnaWavefront,
        _ => ModelPath::GenericRoofline,
    }
}

/// Prediction for one kernel case, with the GEMM-bucket factor of the calibration
/// applied to square GEMMs.
pub fn predict_case(case: &KernelCase, ctx: &PredictionContext) -> Result<PredictionBreakdown> {
    let profile = &ctx.profile;
    let b = match route_case(case, profile) {
        ModelPath::BlackwellStage => blackwell::kernel_time(case, profile)?,
        ModelPath::CdnaWavefront => cdna::kernel_time(case, profile, &ctx.cdna)?,
        _ => {
            let mut c = case.clone();
            if c.class == WorkloadClass::Stencil {
                c.flops = 0.0;
            }
            roofline::generic_predict(&c, profile, &ctx.generic)?
        }
    };
    let factor = match case.real_gemm() {
        Some(g) if g.m == g.n && g.n == g.k => ctx.calibration.gemm_factor(g.m),
        _ => 1.0,
    };
    Ok(if factor == 1.0 { b } else { b.scaled(factor) })
}

fn gemm_factor(cal: &PlatformCalibration, seg: &WorkloadSegment) -> f64 {
    match seg.real_gemm() {
        Some(g) if g.m == g.n && g.n == g.k => cal.gemm_factor(g.m),
        _ => 1.0,
    }
}

/// Σ over segments of n_exec × (prediction × multipliers + host phases).
pub fn aggregate(file: &SegmentFile, ctx: &PredictionContext) -> Result<ApplicationPrediction> {
    let mut total = PredictionBreakdown::empty(ModelPath::Composite, Composition::Sum);
    let mut segments = Vec::with_capacity(file.segments.len());
    let mut roofline_s = 0.0;
    for seg in &file.segments {
        let p = predict_segment(seg, &file.benchmark, ctx)?;
        total.accumulate(&p.subtotal);
        total.diagnostics.extend(
            p.kernel
                .diagnostics
                .iter()
                .map(|d| format!("{}: {d}", seg.name)),
        );
        roofline_s += p.roofline_s;
        segments.push(p);
    }
    total.check_consistency()?;
    Ok(ApplicationPrediction {
        benchmark: file.benchmark.clone(),
        platform: file.platform.clone(),
        breakdown: total,
        segments,
        roofline_s,
    })
}
