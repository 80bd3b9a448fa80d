//! Stage-centric execution-time model for Blackwell-class GPUs (also used for Hopper).
//!
//! A K-step of one CTA moves operand tiles with TMA, optionally decompresses
//! them, accumulates in TMEM through the tensor cores and synchronizes on
//! mbarriers. The per-step time is the slower of compute and the exposed part
//! of I/O, plus barrier cost; a kernel is `k_tiles` steps plus launch and
//! writeback.

use serde::{Deserialize, Serialize};

use crate::breakdown::{Composition, ModelPath, PredictionBreakdown};
use crate::case::{KernelCase, TileDims};
use crate::error::{ModelError, Result};
use crate::precision::Precision;
use crate::profile::HardwareProfile;

/// Per-K-step stage times of one CTA, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlackwellStageTimes {
    pub t_tma_s: f64,
    pub t_decomp_s: f64,
    pub t_tmem_s: f64,
    pub t_compute_s: f64,
    pub t_sync_s: f64,
    pub t_io_eff_s: f64,
    pub t_store_s: f64,
    pub t_tmem_mgmt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmemTime {
    pub seconds: f64,
    /// The accumulator exceeds the per-SM TMEM capacity.
    pub spill: bool,
}

/// TMEM traffic of one K-step: read the accumulator, issue the MMA, write it back.
pub fn tmem_tile_time(
    accum_bytes: f64,
    profile: &HardwareProfile,
    precision: Precision,
) -> Result<TmemTime> {
    if !(accum_bytes.is_finite() && accum_bytes >= 0.0) {
        return Err(ModelError::invalid("accum_bytes", "must be ≥ 0"));
    }
    let m = &profile.measured;
    let l_mma = profile.seconds(profile.mma_latency(precision)?);
    Ok(TmemTime {
        seconds: accum_bytes / m.tmem_bw_read + l_mma + accum_bytes / m.tmem_bw_write,
        spill: accum_bytes > profile.datasheet.tmem_or_lds_per_sm,
    })
}

/// Tensor-core throughput of a single SM.
pub fn tensor_rate_per_sm(
    profile: &HardwareProfile,
    precision: Precision,
    efficiency: f64,
) -> Result<f64> {
    Ok(profile.tensor_peak(precision)? * efficiency / profile.num_units())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorCompute {
    /// `2·b_M·b_N·b_K / (R_TC^SM · S_mode)`
    pub mma_s: f64,
    pub tmem_s: f64,
    /// TMEM alloc + dealloc amortized over the K-steps.
    pub mgmt_s: f64,
    pub spill: bool,
}

impl TensorCompute {
    pub fn total(&self) -> f64 {
        self.mma_s + self.tmem_s + self.mgmt_s
    }
}

/// Per-CTA compute time of one K-step, with or without 2-SM cooperation.
pub fn tensor_compute_time(
    tile: &TileDims,
    profile: &HardwareProfile,
    precision: Precision,
    efficiency: f64,
    use_2sm: bool,
    k_tiles: u64,
) -> Result<TensorCompute> {
    let rate = tensor_rate_per_sm(profile, precision, efficiency)?;
    let s_mode = if use_2sm { profile.measured.s_2sm } else { 1.0 };
    let flops = 2.0 * tile.b_m as f64 * tile.b_n as f64 * tile.b_k as f64;
    let tmem = tmem_tile_time(tile.accumulator_bytes(precision), profile, precision)?;
    let mgmt = if k_tiles == 0 {
        0.0
    } else {
        let l = &profile.latencies;
        (profile.seconds(l.tmem_alloc) + profile.seconds(l.tmem_dealloc)) / k_tiles as f64
    };
    Ok(TensorCompute {
        mma_s: flops / (rate * s_mode),
        tmem_s: tmem.seconds,
        mgmt_s: mgmt,
        spill: tmem.spill,
    })
}

/// TMA copy of one tile shared by `participants` multicast CTAs.
pub fn tma_time(tile_bytes: f64, participants: u32, profile: &HardwareProfile) -> Result<f64> {
    if participants == 0 {
        return Err(ModelError::invalid("tma_participants", "must be ≥ 1"));
    }
    if !(tile_bytes.is_finite() && tile_bytes >= 0.0) {
        return Err(ModelError::invalid("tile_bytes", "must be ≥ 0"));
    }
    Ok(profile.seconds(profile.latencies.tma)
        + tile_bytes / (f64::from(participants) * profile.measured.tma_bw))
}

/// Loading compressed data: bounded by the link (at decompression efficiency η_DE)
/// or by the decompression engine, whichever is slower. Sub-byte formats also pay
/// for unpacking.
pub fn decompression_time(
    uncompressed_bytes: f64,
    compression_ratio: f64,
    precision: Precision,
    profile: &HardwareProfile,
) -> Result<f64> {
    if !(compression_ratio.is_finite() && compression_ratio >= 1.0) {
        return Err(ModelError::invalid(
            "compression_ratio",
            format!("must be ≥ 1, got {compression_ratio}"),
        ));
    }
    let m = &profile.measured;
    let compressed = uncompressed_bytes / compression_ratio;
    let link = uncompressed_bytes / (compression_ratio * m.link_bw * m.de_efficiency);
    let engine = compressed / m.decomp_rate;
    let mut t = link.max(engine);
    if precision.is_sub_byte() {
        t += subbyte_unpack_time(compressed, profile);
    }
    Ok(t)
}

pub fn subbyte_unpack_time(packed_bytes: f64, profile: &HardwareProfile) -> f64 {
    packed_bytes / profile.measured.unpack_rate + profile.seconds(profile.latencies.decomp_setup)
}

pub fn sync_time(n_bar: u32, profile: &HardwareProfile) -> f64 {
    f64::from(n_bar) * profile.seconds(profile.latencies.mbar)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtaPairMemory {
    pub traffic_bytes: f64,
    pub t_memory_s: f64,
    pub t_commit_s: f64,
}

/// Traffic of a CTA pair sharing the B operand through distributed shared memory.
pub fn cta_pair_memory(
    m_a_bytes: f64,
    m_b_bytes: f64,
    profile: &HardwareProfile,
    k_tiles: u64,
) -> CtaPairMemory {
    let traffic = 2.0 * m_a_bytes + m_b_bytes;
    CtaPairMemory {
        traffic_bytes: traffic,
        t_memory_s: traffic / profile.measured.dsmem_bw,
        t_commit_s: k_tiles as f64 * profile.seconds(profile.latencies.commit),
    }
}

/// I/O left exposed after a fraction `alpha` is hidden behind compute.
pub fn effective_io_time(t_tma_s: f64, t_decomp_s: f64, t_sync_s: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::invalid(
            "overlap_alpha",
            format!("must lie in [0, 1], got {alpha}"),
        ));
    }
    Ok((1.0 - alpha) * (t_tma_s + t_decomp_s) + t_sync_s)
}

/// Output tile store, either through ordinary global stores or a TMA store.
pub fn writeback_time(c_tile_bytes: f64, profile: &HardwareProfile, via_tma: bool) -> f64 {
    let l = &profile.latencies;
    if via_tma {
        profile.seconds(l.tma_store) + c_tile_bytes / profile.measured.tma_bw
    } else {
        c_tile_bytes / profile.hbm_bw_sustained() + profile.seconds(l.store_setup)
    }
}

pub fn step_time(
    stages: &BlackwellStageTimes,
    o_misc_s: f64,
    pipelined: bool,
    epsilon_s: f64,
) -> f64 {
    if pipelined {
        stages
            .t_tma_s
            .max(stages.t_decomp_s)
            .max(stages.t_compute_s)
            .max(stages.t_sync_s)
            + epsilon_s
    } else {
        stages.t_compute_s.max(stages.t_io_eff_s) + stages.t_sync_s + o_misc_s
    }
}

/// Resolved per-step inputs of a Blackwell kernel; exposed for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub k_tiles: u64,
    pub precision: Precision,
    pub alpha: f64,
    pub stages: BlackwellStageTimes,
    pub compute: TensorCompute,
    pub step_s: f64,
}

pub fn stage_plan(case: &KernelCase, profile: &HardwareProfile) -> Result<StagePlan> {
    case.validate()?;
    let tile = case.tile.ok_or(ModelError::MissingInput {
        what: "tile dimensions",
        path: "blackwell_stage",
    })?;
    let k_tiles = match (case.k_tiles, case.gemm) {
        (Some(k), _) => k,
        (None, Some(g)) if !g.is_aggregate() => {
            g.k_steps_per_sm(&tile, profile.datasheet.num_sm_or_cu)
        }
        _ => {
            return Err(ModelError::MissingInput {
                what: "k_tiles or GEMM dimensions",
                path: "blackwell_stage",
            })
        }
    };
    let precision = case.precision_or_default(profile);
    let compute = tensor_compute_time(
        &tile,
        profile,
        precision,
        case.efficiency(),
        case.use_2sm,
        k_tiles,
    )?;

    // Operand bytes one CTA pulls per K-step. A CTA pair shares B, so each
    // member carries A plus half of B.
    let (mut a_bytes, mut b_bytes) = tile.operand_bytes(precision);
    if case.use_2sm {
        let pair = cta_pair_memory(a_bytes, b_bytes, profile, k_tiles);
        let per_cta = pair.traffic_bytes / 2.0;
        b_bytes = per_cta - a_bytes;
    }
    if let Some(total) = case.tma_bytes_per_step {
        let sum = a_bytes + b_bytes;
        let share = if sum > 0.0 { a_bytes / sum } else { 0.5 };
        a_bytes = total * share;
        b_bytes = total - a_bytes;
    }
    let t_tma = match case.tma_participants_b {
        Some(p_b) => {
            let ta = tma_time(a_bytes, case.tma_participants, profile)?;
            let tb = tma_time(b_bytes, p_b, profile)?;
            if case.pipelined {
                ta.max(tb)
            } else {
                ta + tb
            }
        }
        None => tma_time(a_bytes + b_bytes, case.tma_participants, profile)?,
    };
    let step_bytes = a_bytes + b_bytes;
    let t_decomp = match case.compression_ratio {
        Some(cr) => decompression_time(step_bytes, cr, precision, profile)?,
        None if precision.is_sub_byte() => subbyte_unpack_time(step_bytes, profile),
        None => 0.0,
    };
    let mut t_sync = sync_time(case.n_bar, profile);
    if case.use_2sm {
        t_sync += profile.seconds(profile.latencies.commit);
    }
    let alpha = case.overlap_alpha.unwrap_or(profile.tunables.overlap_alpha);
    let t_io_eff = effective_io_time(t_tma, t_decomp, t_sync, alpha)?;

    let stages = BlackwellStageTimes {
        t_tma_s: t_tma,
        t_decomp_s: t_decomp,
        t_tmem_s: compute.tmem_s,
        t_compute_s: compute.total(),
        t_sync_s: t_sync,
        t_io_eff_s: t_io_eff,
        t_store_s: 0.0,
        t_tmem_mgmt_s: compute.mgmt_s,
    };
    let step_s = step_time(
        &stages,
        case.o_misc_s.unwrap_or(0.0),
        case.pipelined,
        profile.tunables.pipeline_epsilon_s,
    );
    Ok(StagePlan {
        k_tiles,
        precision,
        alpha,
        stages,
        compute,
        step_s,
    })
}

pub(crate) fn interference(case: &KernelCase, profile: &HardwareProfile) -> f64 {
    let t = &profile.tunables;
    f64::from(case.n_concurrent - 1) * t.tau_interf_s
        + f64::from(case.n_devices - 1) * t.tau_interf_gpu_s
}

/// Launch, `k_tiles` steps, writeback and multi-stream / multi-device terms.
pub fn kernel_time(case: &KernelCase, profile: &HardwareProfile) -> Result<PredictionBreakdown> {
    let plan = stage_plan(case, profile)?;
    let tile = case.tile.expect("checked by stage_plan");
    let precision = plan.precision;
    let k = plan.k_tiles as f64;

    let wb_bytes = case
        .writeback_bytes
        .unwrap_or_else(|| match case.real_gemm() {
            Some(g) => g.output_bytes(precision),
            None => (tile.b_m * tile.b_n) as f64 * precision.output_bytes(),
        });
    let t_store = writeback_time(wb_bytes, profile, case.via_tma_store);
    let t_launch = f64::from(case.n_kernels) * profile.measured.launch_latency_s;
    let t_interf = interference(case, profile);
    let total = t_launch + k * plan.step_s + t_store + t_interf;

    let s = &plan.stages;
    let (composition, io, overhead) = if case.pipelined {
        (
            Composition::MaxOfStages,
            s.t_tma_s.max(s.t_decomp_s),
            profile.tunables.pipeline_epsilon_s,
        )
    } else {
        (
            Composition::MaxPlusSync,
            s.t_io_eff_s,
            case.o_misc_s.unwrap_or(0.0),
        )
    };
    let mut b = PredictionBreakdown::empty(ModelPath::BlackwellStage, composition);
    b.t_compute_s = k * s.t_compute_s;
    b.t_memory_or_io_s = k * io;
    b.t_sync_s = k * s.t_sync_s;
    b.t_overhead_s = k * overhead;
    b.t_launch_s = t_launch;
    b.t_writeback_s = t_store;
    b.t_interference_s = t_interf;
    if plan.compute.spill {
        b.diagnostics.push(format!(
            "accumulator of {} bytes exceeds {} bytes of TMEM per SM; spill not modeled",
            tile.accumulator_bytes(precision),
            profile.datasheet.tmem_or_lds_per_sm
        ));
    }
    if case.k_tiles.is_none() {
        b.diagnostics
            .push(format!("k_tiles derived from GEMM grid: {}", plan.k_tiles));
    }
    b.with_total(total)
}
