//! Wavefront-level execution-time model for CDNA-class GPUs.
//!
//! Memory and matrix-core work per K-step overlap according to how many
//! wavefronts are resident; memory cost is weighted by a cache hierarchy whose
//! last level (Infinity Cache on MI300) follows a three-regime hit-rate curve.

use serde::{Deserialize, Serialize};

use crate::blackwell::{interference, writeback_time};
use crate::breakdown::{Composition, ModelPath, PredictionBreakdown};
use crate::case::{GemmDims, HitRates, KernelCase};
use crate::error::{ModelError, Result};
use crate::precision::Precision;
use crate::profile::HardwareProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdnaOccupancy {
    /// Wavefronts the register file admits.
    pub n_wf_active: u32,
    pub mwp: Option<u32>,
    pub cwp: Option<u32>,
    /// Active wavefronts after the warp-parallelism clamps.
    pub n_wf_eff: u32,
}

/// Register-limited occupancy. MWP/CWP of `None` or `Some(0)` leave it unclamped.
pub fn vgpr_occupancy(
    vgpr_per_wf: u32,
    mwp: Option<u32>,
    cwp: Option<u32>,
    profile: &HardwareProfile,
) -> Result<CdnaOccupancy> {
    if vgpr_per_wf == 0 {
        return Err(ModelError::invalid("vgpr_per_wavefront", "must be ≥ 1"));
    }
    let ds = &profile.datasheet;
    let by_regs = ds.vgpr_file_per_cu / vgpr_per_wf;
    if by_regs == 0 {
        return Err(ModelError::invalid(
            "vgpr_per_wavefront",
            format!(
                "{vgpr_per_wf} exceeds the register file of {} per CU",
                ds.vgpr_file_per_cu
            ),
        ));
    }
    let active = by_regs.min(ds.max_resident_warps);
    let mwp = mwp.filter(|&v| v > 0);
    let cwp = cwp.filter(|&v| v > 0);
    let eff = [Some(active), mwp, cwp]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(active);
    Ok(CdnaOccupancy {
        n_wf_active: active,
        mwp,
        cwp,
        n_wf_eff: eff,
    })
}

/// Occupancy when the register footprint is unknown: every wavefront slot is usable.
pub fn full_occupancy(profile: &HardwareProfile) -> CdnaOccupancy {
    let n = profile.datasheet.max_resident_warps;
    CdnaOccupancy {
        n_wf_active: n,
        mwp: None,
        cwp: None,
        n_wf_eff: n,
    }
}

/// Fraction of memory time hidden by other wavefronts' compute, in `[0, 1]`.
pub fn overlap_factor(occupancy: &CdnaOccupancy, t_compute_s: f64, t_memory_s: f64) -> f64 {
    if t_memory_s <= 0.0 {
        return 1.0;
    }
    let others = f64::from(occupancy.n_wf_eff.saturating_sub(1));
    (others * t_compute_s / t_memory_s).clamp(0.0, 1.0)
}

/// Parameters of the cache hierarchy used by the memory-time and LLC hit-rate models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheModelParams {
    pub hit_rates: HitRates,
    pub llc_bytes: f64,
    /// Working sets up to this size hit the LLC every time.
    pub resident_bytes: f64,
    pub alpha_exp: f64,
    pub beta_exp: f64,
}

impl CacheModelParams {
    pub fn from_profile(profile: &HardwareProfile, hit_rates: HitRates) -> Self {
        let t = &profile.tunables;
        let llc = profile.datasheet.llc_size;
        CacheModelParams {
            hit_rates,
            llc_bytes: llc,
            resident_bytes: llc * t.llc_resident_fraction,
            alpha_exp: t.llc_alpha_exp,
            beta_exp: t.llc_beta_exp,
        }
    }
}

/// LLC hit rate for a working set of `working_set` bytes:
/// fully resident, then a transition that falls to zero at capacity, then a
/// streaming regime `(capacity / W)^β`. The curve jumps from 0 to 1 at capacity.
pub fn llc_hit_rate(working_set: f64, params: &CacheModelParams) -> f64 {
    let w = working_set;
    let c = params.llc_bytes;
    let r = params.resident_bytes;
    if w < r {
        1.0
    } else if w <= c {
        (1.0 - (w - r) / (c - r)).max(0.0).powf(params.alpha_exp)
    } else {
        (c / w).powf(params.beta_exp)
    }
}

/// Left and right limits of the hit-rate curve at LLC capacity.
pub fn llc_limits_at_capacity(params: &CacheModelParams) -> (f64, f64) {
    (llc_hit_rate(params.llc_bytes, params), 1.0)
}

/// Combined hit probability `h1 + (1−h1)h2 + (1−h1)(1−h2)h_LLC`.
pub fn total_hit_rate(hit_rates: &HitRates, h_llc: f64) -> f64 {
    let (h1, h2) = (hit_rates.l1, hit_rates.l2);
    h1 + (1.0 - h1) * h2 + (1.0 - h1) * (1.0 - h2) * h_llc
}

/// Bandwidth seen by a stream that hits the LLC with probability `h_llc`.
pub fn effective_bandwidth(h_llc: f64, profile: &HardwareProfile) -> f64 {
    h_llc * profile.measured.llc_bw + (1.0 - h_llc) * profile.hbm_bw_sustained()
}

/// Latency-weighted time of `n_loads` dependent loads through the hierarchy.
pub fn memory_time(
    n_loads: f64,
    params: &CacheModelParams,
    h_llc: f64,
    profile: &HardwareProfile,
) -> f64 {
    let c = &profile.latencies.cache;
    let (h1, h2) = (params.hit_rates.l1, params.hit_rates.l2);
    let h_total = total_hit_rate(&params.hit_rates, h_llc);
    let per_load = h1 * profile.seconds(c.l1)
        + (1.0 - h1) * h2 * profile.seconds(c.l2)
        + (1.0 - h1) * (1.0 - h2) * h_llc * profile.seconds(c.llc)
        + (1.0 - h_total) * profile.seconds(c.hbm);
    n_loads * per_load
}

/// Matrix-core time of `n_inst` instructions spread across `n_cu` units.
pub fn mfma_time(n_inst: f64, n_cu: f64, throughput_per_cu: f64, utilization: f64) -> Result<f64> {
    if !(utilization > 0.0 && utilization <= 1.0) {
        return Err(ModelError::invalid(
            "mfma_utilization",
            format!("must lie in (0, 1], got {utilization}"),
        ));
    }
    Ok(n_inst / (n_cu * throughput_per_cu * utilization))
}

/// [`mfma_time`] with one FLOP as the instruction unit and the profile's peak rate.
pub fn mfma_time_for_flops(
    flops: f64,
    precision: Precision,
    efficiency: f64,
    utilization: f64,
    profile: &HardwareProfile,
) -> Result<f64> {
    if flops == 0.0 {
        mfma_time(0.0, 1.0, 1.0, utilization)
    } else {
        let per_cu = profile.tensor_peak(precision)? * efficiency / profile.num_units();
        mfma_time(flops, profile.num_units(), per_cu, utilization)
    }
}

pub fn step_time(t_memory_s: f64, t_compute_s: f64, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ModelError::invalid(
            "eta",
            format!("must lie in [0, 1], got {eta}"),
        ));
    }
    Ok((t_memory_s + t_compute_s) / (1.0 + eta))
}

/// Fixed per-kernel costs of the CDNA path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdnaParams {
    pub coherence_s: f64,
    pub cross_xcd_s: f64,
    pub tau_cta_s: f64,
    pub alpha_exp: f64,
    pub beta_exp: f64,
}

impl CdnaParams {
    pub fn from_profile(profile: &HardwareProfile) -> Self {
        let t = &profile.tunables;
        CdnaParams {
            coherence_s: t.coherence_s,
            cross_xcd_s: t.cross_xcd_s,
            tau_cta_s: t.tau_cta_s,
            alpha_exp: t.llc_alpha_exp,
            beta_exp: t.llc_beta_exp,
        }
    }

    fn cache(&self, profile: &HardwareProfile, hit_rates: HitRates) -> CacheModelParams {
        CacheModelParams {
            alpha_exp: self.alpha_exp,
            beta_exp: self.beta_exp,
            ..CacheModelParams::from_profile(profile, hit_rates)
        }
    }
}

/// FLOPs, bytes, working set, writeback bytes and step count a case resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedWork {
    pub precision: Precision,
    pub flops: f64,
    pub bytes: f64,
    pub working_set: f64,
    pub writeback_bytes: f64,
    pub k_tiles: u64,
}

pub fn resolve_work(case: &KernelCase, profile: &HardwareProfile) -> Result<ResolvedWork> {
    let precision = case.precision_or_default(profile);
    let (flops, bytes, working_set, wb) = match case.real_gemm() {
        Some(g) => {
            let b = g.bytes(precision);
            (g.flops(), b, b, g.output_bytes(precision))
        }
        None => (case.flops, case.bytes, case.working_set, 0.0),
    };
    let k_tiles = match (case.k_tiles, case.real_gemm(), case.tile) {
        (Some(k), _, _) => k,
        (None, Some(g), Some(t)) => g.k.div_ceil(t.b_k),
        _ if flops > 0.0 || bytes > 0.0 || case.n_loads.unwrap_or(0.0) > 0.0 => 1,
        _ => 0,
    };
    if k_tiles == 0 && (flops > 0.0 || bytes > 0.0 || case.n_loads.unwrap_or(0.0) > 0.0) {
        return Err(ModelError::invalid(
            "k_tiles",
            "is 0 but the case has nonzero work",
        ));
    }
    Ok(ResolvedWork {
        precision,
        flops,
        bytes,
        working_set,
        writeback_bytes: case.writeback_bytes.unwrap_or(wb),
        k_tiles,
    })
}

/// Per-step and whole-kernel quantities of the wavefront path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefrontPlan {
    pub work: ResolvedWork,
    pub h_llc: f64,
    pub occupancy: CdnaOccupancy,
    pub t_compute_step_s: f64,
    pub t_memory_step_s: f64,
    pub eta: f64,
    pub step_s: f64,
}

pub fn wavefront_plan(
    case: &KernelCase,
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<WavefrontPlan> {
    case.validate()?;
    let work = resolve_work(case, profile)?;
    let cache = params.cache(profile, case.hit_rates);
    let h_llc = llc_hit_rate(work.working_set, &cache);
    let util = case
        .mfma_utilization
        .unwrap_or(profile.tunables.mfma_utilization);
    let (t_c, t_m) = if work.k_tiles == 0 {
        (0.0, 0.0)
    } else {
        let k = work.k_tiles as f64;
        let t_c = mfma_time_for_flops(
            work.flops / k,
            work.precision,
            case.efficiency(),
            util,
            profile,
        )?;
        let t_m = match case.n_loads {
            Some(n) => memory_time(n, &cache, h_llc, profile),
            None => work.bytes / k / effective_bandwidth(h_llc, profile),
        };
        (t_c, t_m)
    };
    let occupancy = match case.vgpr_per_wavefront {
        Some(v) => vgpr_occupancy(v, case.mwp, case.cwp, profile)?,
        None => {
            let mut full = full_occupancy(profile);
            let clamp = [case.mwp, case.cwp]
                .into_iter()
                .flatten()
                .filter(|&v| v > 0);
            for c in clamp {
                full.n_wf_eff = full.n_wf_eff.min(c);
            }
            full.mwp = case.mwp.filter(|&v| v > 0);
            full.cwp = case.cwp.filter(|&v| v > 0);
            full
        }
    };
    let eta = overlap_factor(&occupancy, t_c, t_m);
    let step_s = step_time(t_m, t_c, eta)?;
    Ok(WavefrontPlan {
        work,
        h_llc,
        occupancy,
        t_compute_step_s: t_c,
        t_memory_step_s: t_m,
        eta,
        step_s,
    })
}

/// Launch, `k_tiles` overlapped steps, writeback, coherence, cross-die and
/// interference terms.
pub fn kernel_time(
    case: &KernelCase,
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<PredictionBreakdown> {
    let plan = wavefront_plan(case, profile, params)?;
    let k = plan.work.k_tiles as f64;
    let t_launch = f64::from(case.n_kernels) * profile.measured.launch_latency_s;
    let t_store = writeback_time(plan.work.writeback_bytes, profile, false);
    let overhead = params.coherence_s + params.cross_xcd_s;
    let t_interf = interference(case, profile);
    let total = t_launch + k * plan.step_s + t_store + overhead + t_interf;

    let mut b = PredictionBreakdown::empty(ModelPath::CdnaWavefront, Composition::Sum);
    b.t_compute_s = k * plan.t_compute_step_s / (1.0 + plan.eta);
    b.t_memory_or_io_s = k * plan.t_memory_step_s / (1.0 + plan.eta);
    b.t_launch_s = t_launch;
    b.t_writeback_s = t_store;
    b.t_overhead_s = overhead;
    b.t_interference_s = t_interf;
    b.with_total(total)
}

/// One tiling choice for the occupancy-tile path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCandidate {
    pub label: String,
    pub flops_per_cta: f64,
    pub bytes_per_cta: f64,
    pub n_ctas: u64,
    /// Concurrent CTAs per CU.
    pub w_eff: f64,
    pub working_set: f64,
    pub precision: Precision,
    pub writeback_bytes: f64,
    /// Calibration multiplier for this tile shape.
    #[serde(default = "unit_factor")]
    pub factor: f64,
}

fn unit_factor() -> f64 {
    1.0
}

impl TileCandidate {
    /// Output-stationary `b_m × b_n` tiling of a GEMM; occupancy follows from the
    /// VGPRs each wavefront needs for its accumulator block.
    pub fn for_gemm(
        gemm: &GemmDims,
        b_m: u64,
        b_n: u64,
        precision: Precision,
        profile: &HardwareProfile,
    ) -> Result<Self> {
        if b_m == 0 || b_n == 0 {
            return Err(ModelError::invalid("tile", "dimensions must be > 0"));
        }
        if gemm.is_aggregate() {
            return Err(ModelError::invalid(
                "gemm",
                "tile candidates need real GEMM dimensions",
            ));
        }
        let accum_regs = (b_m * b_n) as f64 * precision.accumulator_bytes() / 4.0;
        let vgpr = f64::from(profile.tunables.vgpr_base_per_wf) + accum_regs;
        let vgpr = u32::try_from(vgpr.ceil() as u64).unwrap_or(u32::MAX);
        let occ = vgpr_occupancy(vgpr, None, None, profile)?;
        let k = gemm.k as f64;
        let e = precision.element_bytes();
        Ok(TileCandidate {
            label: format!("{b_m}x{b_n}"),
            flops_per_cta: 2.0 * (b_m * b_n) as f64 * k,
            bytes_per_cta: (b_m as f64 * k + k * b_n as f64) * e
                + (b_m * b_n) as f64 * precision.output_bytes(),
            n_ctas: gemm.m.div_ceil(b_m) * gemm.n.div_ceil(b_n),
            w_eff: f64::from(occ.n_wf_eff),
            working_set: gemm.bytes(precision),
            precision,
            writeback_bytes: gemm.output_bytes(precision),
            factor: 1.0,
        })
    }
}

/// Schedules `n_ctas` CTAs over `N_CU · W_eff` slots with per-CTA cost
/// `max(flops/peak_CU, bytes/BW_CU)` plus a per-CTA dispatch cost.
pub fn occupancy_tile_kernel_time(
    candidate: &TileCandidate,
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<PredictionBreakdown> {
    if !(candidate.w_eff.is_finite() && candidate.w_eff > 0.0) {
        return Err(ModelError::invalid("w_eff", "must be > 0"));
    }
    if candidate.n_ctas == 0 {
        return Err(ModelError::invalid("n_ctas", "must be ≥ 1"));
    }
    let n_cu = profile.num_units();
    let peak_cu = profile.tensor_peak(candidate.precision)? / n_cu;
    let cache = params.cache(profile, HitRates::default());
    let bw_cu = effective_bandwidth(llc_hit_rate(candidate.working_set, &cache), profile) / n_cu;
    let n = candidate.n_ctas as f64;
    let slots = n_cu * candidate.w_eff;
    let t_compute = n * (candidate.flops_per_cta / peak_cu) / slots;
    let t_memory = n * (candidate.bytes_per_cta / bw_cu) / slots;

    let t_launch = profile.measured.launch_latency_s;
    let t_store = writeback_time(candidate.writeback_bytes, profile, false);
    let overhead = params.tau_cta_s * n + params.coherence_s + params.cross_xcd_s;
    let total = t_launch + overhead + t_compute.max(t_memory) + t_store;

    let mut b = PredictionBreakdown::empty(ModelPath::CdnaOccupancyTile, Composition::MaxPlusSync);
    b.t_compute_s = t_compute;
    b.t_memory_or_io_s = t_memory;
    b.t_launch_s = t_launch;
    b.t_writeback_s = t_store;
    b.t_overhead_s = overhead;
    b.with_total(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileSelection {
    pub best_index: usize,
    pub best: TileCandidate,
    pub best_breakdown: PredictionBreakdown,
    /// `(label, calibrated total)` for every candidate, in input order.
    pub times: Vec<(String, f64)>,
}

/// The candidate with the smallest calibrated time; ties go to the first listed.
pub fn select_tile(
    candidates: &[TileCandidate],
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<TileSelection> {
    let mut best: Option<(usize, PredictionBreakdown)> = None;
    let mut times = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let b = occupancy_tile_kernel_time(c, profile, params)?.scaled(c.factor);
        times.push((c.label.clone(), b.total_s));
        if best.as_ref().is_none_or(|(_, cur)| b.total_s < cur.total_s) {
            best = Some((i, b));
        }
    }
    let (best_index, best_breakdown) =
        best.ok_or(ModelError::EmptyInput("no tile candidates given"))?;
    Ok(TileSelection {
        best_index,
        best: candidates[best_index].clone(),
        best_breakdown,
        times,
    })
}

/// Several kernels merged into one launch: their work adds up, launch is paid
/// once and a fusion overhead `tau_fusion_s` is added.
pub fn fused_time(
    kernels: &[KernelCase],
    tau_fusion_s: f64,
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<PredictionBreakdown> {
    if kernels.len() < 2 {
        return Err(ModelError::invalid(
            "kernels",
            "fusion needs at least two kernels",
        ));
    }
    if !(tau_fusion_s.is_finite() && tau_fusion_s >= 0.0) {
        return Err(ModelError::invalid("tau_fusion_s", "must be ≥ 0"));
    }
    let first = &kernels[0];
    let first_work = resolve_work(first, profile)?;
    let mut fused = first.clone();
    fused.gemm = None;
    fused.flops = 0.0;
    fused.bytes = 0.0;
    fused.working_set = 0.0;
    fused.n_loads = None;
    fused.n_kernels = 1;
    fused.k_tiles = Some(first_work.k_tiles);
    let mut writeback = 0.0;
    let mut n_loads: Option<f64> = None;
    for k in kernels {
        k.validate()?;
        let w = resolve_work(k, profile)?;
        fused.flops += w.flops;
        fused.bytes += w.bytes;
        fused.working_set += w.working_set;
        writeback += w.writeback_bytes;
        if let Some(n) = k.n_loads {
            n_loads = Some(n_loads.unwrap_or(0.0) + n);
        }
    }
    fused.n_loads = n_loads;
    fused.writeback_bytes = Some(writeback);
    if fused.k_tiles == Some(0) && (fused.flops > 0.0 || fused.bytes > 0.0) {
        fused.k_tiles = Some(1);
    }
    let b = kernel_time(&fused, profile, params)?;
    let mut out = b.clone();
    out.t_overhead_s += tau_fusion_s;
    out.diagnostics
        .push(format!("{} kernels fused", kernels.len()));
    out.with_total(b.total_s + tau_fusion_s)
}

/// Sum of separately launched kernels, for comparison with [`fused_time`].
pub fn unfused_time(
    kernels: &[KernelCase],
    profile: &HardwareProfile,
    params: &CdnaParams,
) -> Result<PredictionBreakdown> {
    let mut acc = PredictionBreakdown::empty(ModelPath::Composite, Composition::Sum);
    for k in kernels {
        acc.accumulate(&kernel_time(k, profile, params)?);
    }
    Ok(acc)
}
