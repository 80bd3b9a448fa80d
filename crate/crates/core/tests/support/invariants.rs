//! Invariant checks shared by the property suite and the acceptance target.
//! Each check takes explicit inputs and reports a violation as `Err`.

#![allow(dead_code)]

use gpuperf::blackwell;
use gpuperf::case::{GemmDims, HitRates, KernelCase, TileDims, WorkloadClass};
use gpuperf::cdna::{self, CacheModelParams, CdnaParams, TileCandidate};
use gpuperf::precision::Precision;
use gpuperf::profile::{shipped_profile, HardwareProfile};
use gpuperf::roofline::{self, GenericPathParams};
use gpuperf::validation::mae;
use gpuperf::PredictionBreakdown;

pub type Check = Result<(), String>;

const REL_TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn profile(name: &str) -> HardwareProfile {
    shipped_profile(name).expect("shipped profile")
}

/// Terms recompose to the total, and the additive view sums to the same total.
pub fn recomposes(b: &PredictionBreakdown) -> Check {
    b.check_consistency().map_err(|e| e.to_string())?;
    let add = b.to_additive();
    let sum: f64 = add.terms().iter().map(|(_, v)| v).sum();
    ensure(
        (sum - b.total_s).abs() <= 1e-9 * b.total_s.max(1e-300),
        || format!("additive terms sum to {sum}, total {}", b.total_s),
    )?;
    ensure(b.terms().iter().all(|(_, v)| *v >= 0.0), || {
        format!("negative term in {:?}", b.terms())
    })
}

/// Generic path: more FLOPs or more bytes never make a kernel faster.
pub fn generic_monotone(
    profile_name: &str,
    class: WorkloadClass,
    flops: f64,
    bytes: f64,
    extra_flops: f64,
    extra_bytes: f64,
) -> Check {
    let p = profile(profile_name);
    let params = GenericPathParams::from_profile(&p);
    let base = KernelCase::new(class, flops, bytes);
    let mut more = base.clone();
    more.flops += extra_flops;
    more.bytes += extra_bytes;
    more.working_set = base.working_set;
    let t0 = roofline::generic_predict(&base, &p, &params).map_err(|e| e.to_string())?;
    let t1 = roofline::generic_predict(&more, &p, &params).map_err(|e| e.to_string())?;
    recomposes(&t0)?;
    recomposes(&t1)?;
    ensure(t1.total_s >= t0.total_s, || {
        format!("generic: {} < {} after adding work", t1.total_s, t0.total_s)
    })
}

/// Stage model: time grows with the number of K-steps and with concurrency.
pub fn blackwell_monotone(
    profile_name: &str,
    tile: TileDims,
    precision: Precision,
    k1: u64,
    k2: u64,
    use_2sm: bool,
    pipelined: bool,
) -> Check {
    let p = profile(profile_name);
    let mut case = KernelCase::gemm(GemmDims::square(4096), Some(tile), precision);
    case.use_2sm = use_2sm;
    case.pipelined = pipelined;
    let (lo, hi) = (k1.min(k2), k1.max(k2));
    case.k_tiles = Some(lo);
    let a = blackwell::kernel_time(&case, &p).map_err(|e| e.to_string())?;
    case.k_tiles = Some(hi);
    let b = blackwell::kernel_time(&case, &p).map_err(|e| e.to_string())?;
    recomposes(&a)?;
    recomposes(&b)?;
    ensure(b.total_s >= a.total_s, || {
        format!(
            "stage model: k={hi} gives {} < k={lo} gives {}",
            b.total_s, a.total_s
        )
    })?;
    case.n_concurrent = 2;
    let c = blackwell::kernel_time(&case, &p).map_err(|e| e.to_string())?;
    ensure(c.total_s > b.total_s, || {
        "concurrency did not add time".into()
    })
}

/// Wavefront model: more bytes never make a kernel faster.
pub fn cdna_monotone_in_bytes(
    profile_name: &str,
    flops: f64,
    bytes: f64,
    extra_bytes: f64,
    vgpr: u32,
    k_tiles: u64,
) -> Check {
    let p = profile(profile_name);
    let params = CdnaParams::from_profile(&p);
    let mut case = KernelCase::new(WorkloadClass::MemoryBound, flops, bytes);
    case.working_set = bytes;
    case.k_tiles = Some(k_tiles);
    case.vgpr_per_wavefront = Some(vgpr);
    let a = cdna::kernel_time(&case, &p, &params).map_err(|e| e.to_string())?;
    case.bytes += extra_bytes;
    let b = cdna::kernel_time(&case, &p, &params).map_err(|e| e.to_string())?;
    recomposes(&a)?;
    recomposes(&b)?;
    ensure(b.total_s >= a.total_s * (1.0 - REL_TOL), || {
        format!(
            "wavefront: {} < {} after adding bytes",
            b.total_s, a.total_s
        )
    })
}

/// h_LLC stays in [0, 1] and does not increase with W on either side of capacity.
pub fn llc_bounded_and_monotone(profile_name: &str, w1: f64, w2: f64) -> Check {
    let p = profile(profile_name);
    let params = CacheModelParams::from_profile(&p, HitRates::default());
    let (lo, hi) = (w1.min(w2), w1.max(w2));
    let (h_lo, h_hi) = (
        cdna::llc_hit_rate(lo, &params),
        cdna::llc_hit_rate(hi, &params),
    );
    ensure(
        (0.0..=1.0).contains(&h_lo) && (0.0..=1.0).contains(&h_hi),
        || format!("h_LLC out of range: {h_lo}, {h_hi}"),
    )?;
    let cap = params.llc_bytes;
    let same_side = (hi <= cap) || (lo > cap);
    ensure(!same_side || h_hi <= h_lo, || {
        format!("h_LLC rises from {h_lo} at {lo} to {h_hi} at {hi}")
    })
}

/// η ∈ [0, 1], so a wavefront step lies between (t_m + t_c)/2 and t_m + t_c.
/// Exposed stage I/O lies between the barrier cost and the full I/O.
pub fn overlap_bounds(
    n_wf: u32,
    t_c: f64,
    t_m: f64,
    t_tma: f64,
    t_dec: f64,
    t_sync: f64,
    alpha: f64,
) -> Check {
    let occ = cdna::CdnaOccupancy {
        n_wf_active: n_wf,
        mwp: None,
        cwp: None,
        n_wf_eff: n_wf,
    };
    let eta = cdna::overlap_factor(&occ, t_c, t_m);
    ensure((0.0..=1.0).contains(&eta), || {
        format!("eta {eta} outside [0, 1]")
    })?;
    let step = cdna::step_time(t_m, t_c, eta).map_err(|e| e.to_string())?;
    let sum = t_m + t_c;
    ensure(
        step <= sum * (1.0 + REL_TOL) && step >= 0.5 * sum * (1.0 - REL_TOL),
        || format!("step {step} outside [{}, {sum}]", sum / 2.0),
    )?;
    let io =
        blackwell::effective_io_time(t_tma, t_dec, t_sync, alpha).map_err(|e| e.to_string())?;
    let full = t_tma + t_dec + t_sync;
    ensure(
        io >= t_sync * (1.0 - REL_TOL) && io <= full * (1.0 + REL_TOL),
        || format!("exposed I/O {io} outside [{t_sync}, {full}]"),
    )
}

/// Doubling the clock halves every cycle-denominated term.
pub fn clock_scaling(
    profile_name: &str,
    ghz: f64,
    n_bar: u32,
    n_loads: f64,
    h1: f64,
    h2: f64,
    h3: f64,
) -> Check {
    let p = profile(profile_name).with_clock_ghz(ghz);
    let p2 = p.with_clock_ghz(2.0 * ghz);
    let half = |what: &str, slow: f64, fast: f64| {
        ensure(close(fast, slow / 2.0), || {
            format!("{what}: {fast} is not half of {slow}")
        })
    };
    half(
        "sync_time",
        blackwell::sync_time(n_bar, &p),
        blackwell::sync_time(n_bar, &p2),
    )?;
    let hits = HitRates { l1: h1, l2: h2 };
    let c1 = CacheModelParams::from_profile(&p, hits);
    let c2 = CacheModelParams::from_profile(&p2, hits);
    half(
        "memory_time",
        cdna::memory_time(n_loads, &c1, h3, &p),
        cdna::memory_time(n_loads, &c2, h3, &p2),
    )?;
    half(
        "tma latency",
        blackwell::tma_time(0.0, 1, &p).map_err(|e| e.to_string())?,
        blackwell::tma_time(0.0, 1, &p2).map_err(|e| e.to_string())?,
    )?;
    half(
        "store setup",
        blackwell::writeback_time(0.0, &p, false),
        blackwell::writeback_time(0.0, &p2, false),
    )?;
    let prec = p.tunables.default_precision;
    half(
        "mma latency",
        blackwell::tmem_tile_time(0.0, &p, prec)
            .map_err(|e| e.to_string())?
            .seconds,
        blackwell::tmem_tile_time(0.0, &p2, prec)
            .map_err(|e| e.to_string())?
            .seconds,
    )
}

/// `select_tile` returns the first minimum of a plain linear scan.
pub fn argmin_matches_scan(
    profile_name: &str,
    size: u64,
    tiles: &[(u64, u64)],
    factors: &[f64],
) -> Check {
    let p = profile(profile_name);
    let params = CdnaParams::from_profile(&p);
    let g = GemmDims::square(size);
    let prec = p.tunables.default_precision;
    let cands: Vec<TileCandidate> = tiles
        .iter()
        .zip(factors.iter().cycle())
        .map(|(&(m, n), &f)| {
            let mut c = TileCandidate::for_gemm(&g, m, n, prec, &p).expect("candidate");
            c.factor = f;
            c
        })
        .collect();
    let sel = cdna::select_tile(&cands, &p, &params).map_err(|e| e.to_string())?;
    let mut best = 0;
    let mut best_t = f64::INFINITY;
    for (i, c) in cands.iter().enumerate() {
        let t = cdna::occupancy_tile_kernel_time(c, &p, &params)
            .map_err(|e| e.to_string())?
            .total_s
            * c.factor;
        if t < best_t {
            best_t = t;
            best = i;
        }
    }
    recomposes(&sel.best_breakdown)?;
    ensure(sel.best_index == best, || {
        format!(
            "select_tile chose {} but the scan finds {best}",
            sel.best_index
        )
    })
}

/// MAE is non-negative and does not depend on pair order.
pub fn mae_permutation_invariant(pairs: &[(f64, f64)], rotate: usize) -> Check {
    let a = mae(pairs).map_err(|e| e.to_string())?;
    let mut shuffled = pairs.to_vec();
    shuffled.reverse();
    let len = shuffled.len();
    shuffled.rotate_left(rotate % len);
    let b = mae(&shuffled).map_err(|e| e.to_string())?;
    ensure(a >= 0.0, || format!("negative MAE {a}"))?;
    ensure((a - b).abs() <= 1e-9 * a.max(1e-300), || {
        format!("MAE {a} vs {b} after reordering")
    })
}
