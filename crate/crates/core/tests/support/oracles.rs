//! Independent, straight-line evaluations of every engine formula, checked
//! against the engines on randomized inputs and randomized hardware parameters.
//! Shared by the oracle test and the acceptance target.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gpuperf::blackwell::{self, BlackwellStageTimes};
use gpuperf::case::{GemmDims, HitRates, KernelCase, TileDims, WorkloadClass};
use gpuperf::cdna::{self, CacheModelParams, CdnaOccupancy, CdnaParams, TileCandidate};
use gpuperf::precision::Precision;
use gpuperf::profile::{shipped_profile, Cycles, HardwareProfile};
use gpuperf::roofline::{self, Direction, GenericPathParams};
use gpuperf::validation::{mae, relative_error};

pub const REL_TOL: f64 = 1e-12;

fn assert_close(what: &str, got: f64, want: f64) {
    let scale = got.abs().max(want.abs());
    assert!(
        (got - want).abs() <= REL_TOL * scale,
        "{what}: engine {got:e} vs oracle {want:e}"
    );
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-uniform draw in `[lo, hi]`.
fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.gen_range(lo.ln()..=hi.ln())).exp()
}

fn cycles_s(c: f64, ghz: f64) -> f64 {
    c / ghz * 1e-9
}

/// A shipped profile with every rate, latency and tunable the engines read redrawn.
fn random_profile(r: &mut ChaCha8Rng, base: &str) -> HardwareProfile {
    let mut p = shipped_profile(base).unwrap();
    p.datasheet.clock_ghz = r.gen_range(0.5..3.0);
    p.datasheet.num_sm_or_cu = r.gen_range(16..400);
    p.datasheet.max_resident_warps = r.gen_range(4..64);
    p.datasheet.vgpr_file_per_cu = r.gen_range(16_384..131_072);
    p.datasheet.hbm_bw = log_uniform(r, 1e12, 1e13);
    p.datasheet.llc_size = log_uniform(r, 32e6, 512e6);
    p.datasheet.tmem_or_lds_per_sm = log_uniform(r, 64e3, 512e3);
    for v in p.datasheet.tensor_flops.values_mut() {
        *v = log_uniform(r, 1e13, 1e16);
    }
    let m = &mut p.measured;
    m.hbm_bw = Some(p.datasheet.hbm_bw * r.gen_range(0.5..1.0));
    m.tensor_flops.clear();
    m.llc_bw = log_uniform(r, 5e12, 3e13);
    m.tmem_bw_read = log_uniform(r, 1e12, 3e13);
    m.tmem_bw_write = log_uniform(r, 1e12, 3e13);
    m.tma_bw = log_uniform(r, 1e11, 5e12);
    m.dsmem_bw = log_uniform(r, 1e11, 5e12);
    m.memcpy_bw_h2d = log_uniform(r, 1e10, 1e11);
    m.memcpy_bw_d2h = log_uniform(r, 1e10, 1e11);
    m.decomp_rate = log_uniform(r, 1e11, 1e13);
    m.unpack_rate = log_uniform(r, 1e11, 1e13);
    m.link_bw = log_uniform(r, 1e11, 1e13);
    m.de_efficiency = r.gen_range(0.3..1.0);
    m.s_2sm = r.gen_range(1.0..2.0);
    m.launch_latency_s = log_uniform(r, 1e-6, 2e-5);
    let l = &mut p.latencies;
    for c in [
        &mut l.tma,
        &mut l.tma_store,
        &mut l.store_setup,
        &mut l.mbar,
        &mut l.commit,
        &mut l.tmem_alloc,
        &mut l.tmem_dealloc,
        &mut l.decomp_setup,
        &mut l.cache.l1,
        &mut l.cache.l2,
        &mut l.cache.llc,
        &mut l.cache.hbm,
    ] {
        *c = Cycles(r.gen_range(0.0..1000.0));
    }
    for c in l.mma.values_mut() {
        *c = Cycles(r.gen_range(1.0..64.0));
    }
    let t = &mut p.tunables;
    t.tau_memcpy_s = log_uniform(r, 1e-7, 1e-5);
    t.tau_sync_s = log_uniform(r, 1e-7, 1e-5);
    t.tau_interf_s = log_uniform(r, 1e-6, 1e-4);
    t.tau_interf_gpu_s = log_uniform(r, 1e-6, 1e-3);
    t.overlap_alpha = r.gen_range(0.0..=1.0);
    t.pipeline_epsilon_s = log_uniform(r, 1e-10, 1e-7);
    t.coherence_s = log_uniform(r, 5e-8, 3e-7);
    t.cross_xcd_s = log_uniform(r, 2e-8, 2e-7);
    t.mfma_utilization = r.gen_range(0.05..=1.0);
    t.llc_alpha_exp = r.gen_range(0.25..4.0);
    t.llc_beta_exp = r.gen_range(0.25..4.0);
    t.llc_resident_fraction = r.gen_range(0.1..0.95);
    t.tau_cta_s = log_uniform(r, 1e-10, 1e-7);
    t.vgpr_base_per_wf = r.gen_range(64..4096);
    t.generic_w0_bytes = log_uniform(r, 1e6, 1e9);
    p
}

fn random_precision(r: &mut ChaCha8Rng, p: &HardwareProfile) -> Precision {
    let all: Vec<Precision> = p.datasheet.tensor_flops.keys().copied().collect();
    all[r.gen_range(0..all.len())]
}

fn random_tile(r: &mut ChaCha8Rng) -> TileDims {
    let pick = |r: &mut ChaCha8Rng, xs: &[u64]| xs[r.gen_range(0..xs.len())];
    TileDims::new(
        pick(r, &[64, 128, 256]),
        pick(r, &[32, 64, 128, 256]),
        pick(r, &[16, 32, 64, 128]),
    )
}

fn elem(p: Precision) -> f64 {
    match p {
        Precision::Fp64 => 8.0,
        Precision::Fp32 | Precision::Tf32 => 4.0,
        Precision::Fp16 => 2.0,
        Precision::Fp8 => 1.0,
        Precision::Fp4 => 0.5,
    }
}

fn acc_elem(p: Precision) -> f64 {
    if p == Precision::Fp64 {
        8.0
    } else {
        4.0
    }
}

fn out_elem(p: Precision) -> f64 {
    match p {
        Precision::Fp64 => 8.0,
        Precision::Fp32 | Precision::Tf32 => 4.0,
        _ => 2.0,
    }
}

// ---------------------------------------------------------------- Blackwell

fn oracle_tmem(acc: f64, p: &HardwareProfile, prec: Precision) -> f64 {
    let ghz = p.datasheet.clock_ghz;
    acc / p.measured.tmem_bw_read
        + cycles_s(p.latencies.mma[&prec].0, ghz)
        + acc / p.measured.tmem_bw_write
}

fn oracle_compute(
    t: &TileDims,
    p: &HardwareProfile,
    prec: Precision,
    eff: f64,
    two_sm: bool,
    k: u64,
) -> (f64, f64, f64) {
    let ghz = p.datasheet.clock_ghz;
    let rate = p.datasheet.tensor_flops[&prec] * eff / f64::from(p.datasheet.num_sm_or_cu);
    let s = if two_sm { p.measured.s_2sm } else { 1.0 };
    let mma = 2.0 * (t.b_m * t.b_n * t.b_k) as f64 / (rate * s);
    let tmem = oracle_tmem((t.b_m * t.b_n) as f64 * acc_elem(prec), p, prec);
    let mgmt = if k == 0 {
        0.0
    } else {
        cycles_s(p.latencies.tmem_alloc.0 + p.latencies.tmem_dealloc.0, ghz) / k as f64
    };
    (mma, tmem, mgmt)
}

fn oracle_tma(bytes: f64, participants: u32, p: &HardwareProfile) -> f64 {
    cycles_s(p.latencies.tma.0, p.datasheet.clock_ghz)
        + bytes / (participants as f64 * p.measured.tma_bw)
}

fn oracle_unpack(packed: f64, p: &HardwareProfile) -> f64 {
    packed / p.measured.unpack_rate + cycles_s(p.latencies.decomp_setup.0, p.datasheet.clock_ghz)
}

fn oracle_decomp(bytes: f64, cr: f64, prec: Precision, p: &HardwareProfile) -> f64 {
    let m = &p.measured;
    let link = bytes / (cr * m.link_bw * m.de_efficiency);
    let engine = (bytes / cr) / m.decomp_rate;
    let base = if link > engine { link } else { engine };
    if prec == Precision::Fp4 {
        base + oracle_unpack(bytes / cr, p)
    } else {
        base
    }
}

fn oracle_writeback(bytes: f64, p: &HardwareProfile, tma: bool) -> f64 {
    let ghz = p.datasheet.clock_ghz;
    if tma {
        cycles_s(p.latencies.tma_store.0, ghz) + bytes / p.measured.tma_bw
    } else {
        bytes / p.measured.hbm_bw.unwrap() + cycles_s(p.latencies.store_setup.0, ghz)
    }
}

/// Whole stage-model kernel, written out from the per-step formula.
fn oracle_blackwell_kernel(c: &KernelCase, p: &HardwareProfile) -> f64 {
    let ghz = p.datasheet.clock_ghz;
    let tile = c.tile.unwrap();
    let prec = c.precision.unwrap();
    let k = c.k_tiles.unwrap();
    let (mma, tmem, mgmt) = oracle_compute(&tile, p, prec, 1.0, c.use_2sm, k);
    let t_c = mma + tmem + mgmt;
    let a = (tile.b_m * tile.b_k) as f64 * elem(prec);
    let mut b = (tile.b_k * tile.b_n) as f64 * elem(prec);
    if c.use_2sm {
        b /= 2.0;
    }
    let t_tma = oracle_tma(a + b, c.tma_participants, p);
    let t_dec = match c.compression_ratio {
        Some(cr) => oracle_decomp(a + b, cr, prec, p),
        None if prec == Precision::Fp4 => oracle_unpack(a + b, p),
        None => 0.0,
    };
    let mut t_sync = c.n_bar as f64 * cycles_s(p.latencies.mbar.0, ghz);
    if c.use_2sm {
        t_sync += cycles_s(p.latencies.commit.0, ghz);
    }
    let alpha = c.overlap_alpha.unwrap();
    let io = (1.0 - alpha) * (t_tma + t_dec) + t_sync;
    let step = if c.pipelined {
        t_tma.max(t_dec).max(t_c).max(t_sync) + p.tunables.pipeline_epsilon_s
    } else {
        t_c.max(io) + t_sync + c.o_misc_s.unwrap_or(0.0)
    };
    let g = c.gemm.unwrap();
    let wb = oracle_writeback((g.m * g.n) as f64 * out_elem(prec), p, c.via_tma_store);
    c.n_kernels as f64 * p.measured.launch_latency_s
        + k as f64 * step
        + wb
        + (c.n_concurrent - 1) as f64 * p.tunables.tau_interf_s
        + (c.n_devices - 1) as f64 * p.tunables.tau_interf_gpu_s
}

// ---------------------------------------------------------------- CDNA

fn oracle_h_llc(w: f64, cap: f64, frac: f64, a: f64, b: f64) -> f64 {
    let r = cap * frac;
    if w < r {
        1.0
    } else if w <= cap {
        let x = 1.0 - (w - r) / (cap - r);
        if x <= 0.0 {
            0.0
        } else {
            x.powf(a)
        }
    } else {
        (cap / w).powf(b)
    }
}

fn oracle_bw(h: f64, p: &HardwareProfile) -> f64 {
    h * p.measured.llc_bw + (1.0 - h) * p.measured.hbm_bw.unwrap()
}

fn oracle_memory_time(n: f64, h1: f64, h2: f64, h3: f64, p: &HardwareProfile) -> f64 {
    let ghz = p.datasheet.clock_ghz;
    let c = &p.latencies.cache;
    let miss1 = 1.0 - h1;
    let miss2 = miss1 * (1.0 - h2);
    let to_hbm = miss2 * (1.0 - h3);
    n * (h1 * cycles_s(c.l1.0, ghz)
        + miss1 * h2 * cycles_s(c.l2.0, ghz)
        + miss2 * h3 * cycles_s(c.llc.0, ghz)
        + to_hbm * cycles_s(c.hbm.0, ghz))
}

fn oracle_occupancy(vgpr: u32, mwp: u32, cwp: u32, p: &HardwareProfile) -> u32 {
    let mut n = (p.datasheet.vgpr_file_per_cu / vgpr).min(p.datasheet.max_resident_warps);
    if mwp > 0 {
        n = n.min(mwp);
    }
    if cwp > 0 {
        n = n.min(cwp);
    }
    n
}

fn oracle_eta(n_wf: u32, tc: f64, tm: f64) -> f64 {
    if tm <= 0.0 {
        return 1.0;
    }
    let e = (n_wf as f64 - 1.0).max(0.0) * tc / tm;
    e.clamp(0.0, 1.0)
}

/// Wavefront kernel for a flops/bytes case with explicit k_tiles and VGPRs.
fn oracle_cdna_kernel(c: &KernelCase, p: &HardwareProfile) -> f64 {
    let t = &p.tunables;
    let k = c.k_tiles.unwrap() as f64;
    let prec = c.precision.unwrap();
    let util = c.mfma_utilization.unwrap();
    let h3 = oracle_h_llc(
        c.working_set,
        p.datasheet.llc_size,
        t.llc_resident_fraction,
        t.llc_alpha_exp,
        t.llc_beta_exp,
    );
    let tc = (c.flops / k) / (p.datasheet.tensor_flops[&prec] * util);
    let tm = match c.n_loads {
        Some(n) => oracle_memory_time(n, c.hit_rates.l1, c.hit_rates.l2, h3, p),
        None => (c.bytes / k) / oracle_bw(h3, p),
    };
    let n_wf = oracle_occupancy(
        c.vgpr_per_wavefront.unwrap(),
        c.mwp.unwrap_or(0),
        c.cwp.unwrap_or(0),
        p,
    );
    let eta = oracle_eta(n_wf, tc, tm);
    let step = (tm + tc) / (1.0 + eta);
    c.n_kernels as f64 * p.measured.launch_latency_s
        + k * step
        + oracle_writeback(c.writeback_bytes.unwrap_or(0.0), p, false)
        + t.coherence_s
        + t.cross_xcd_s
        + (c.n_concurrent - 1) as f64 * t.tau_interf_s
        + (c.n_devices - 1) as f64 * t.tau_interf_gpu_s
}

fn oracle_occupancy_tile(c: &TileCandidate, p: &HardwareProfile) -> f64 {
    let t = &p.tunables;
    let n_cu = p.datasheet.num_sm_or_cu as f64;
    let h = oracle_h_llc(
        c.working_set,
        p.datasheet.llc_size,
        t.llc_resident_fraction,
        t.llc_alpha_exp,
        t.llc_beta_exp,
    );
    let per_cta_c = c.flops_per_cta / (p.datasheet.tensor_flops[&c.precision] / n_cu);
    let per_cta_m = c.bytes_per_cta / (oracle_bw(h, p) / n_cu);
    let waves = c.n_ctas as f64 / (n_cu * c.w_eff);
    p.measured.launch_latency_s
        + t.tau_cta_s * c.n_ctas as f64
        + t.coherence_s
        + t.cross_xcd_s
        + waves * per_cta_c.max(per_cta_m)
        + oracle_writeback(c.writeback_bytes, p, false)
}

// ---------------------------------------------------------------- generic / roofline

fn oracle_naive(f: f64, b: f64, p: &HardwareProfile, prec: Precision) -> f64 {
    let tc = if f > 0.0 {
        f / p.datasheet.tensor_flops[&prec]
    } else {
        0.0
    };
    tc.max(b / p.datasheet.hbm_bw)
}

fn oracle_ws_bw(w: f64, p: &HardwareProfile, w0: f64) -> f64 {
    let s = p.measured.hbm_bw.unwrap();
    if w0 <= 0.0 {
        s
    } else {
        s + (p.datasheet.hbm_bw - s) * (-w / w0).exp()
    }
}

/// Runs `samples` randomized draws per engine family; panics on the first
/// mismatch. Returns the number of inputs checked per operation.
pub fn check_all(samples: usize, seed: u64) -> BTreeMap<&'static str, usize> {
    let mut r = rng(seed);
    let mut checked = BTreeMap::<&'static str, usize>::new();
    let mut count = |name: &'static str| *checked.entry(name).or_default() += 1;

    for i in 0..samples {
        let base = if i % 2 == 0 { "b200" } else { "h200" };
        let p = random_profile(&mut r, base);
        let prec = random_precision(&mut r, &p);
        let ghz = p.datasheet.clock_ghz;

        let acc = log_uniform(&mut r, 1.0, 1e6);
        let t = blackwell::tmem_tile_time(acc, &p, prec).unwrap();
        assert_close("tmem_tile_time", t.seconds, oracle_tmem(acc, &p, prec));
        assert_eq!(t.spill, acc > p.datasheet.tmem_or_lds_per_sm);
        count("tmem_tile_time");

        let eff = r.gen_range(0.1..=1.0);
        assert_close(
            "tensor_rate_per_sm",
            blackwell::tensor_rate_per_sm(&p, prec, eff).unwrap(),
            p.datasheet.tensor_flops[&prec] * eff / p.datasheet.num_sm_or_cu as f64,
        );
        count("tensor_rate_per_sm");

        let tile = random_tile(&mut r);
        let two = r.gen_bool(0.5);
        let k = r.gen_range(0..5000u64);
        let c = blackwell::tensor_compute_time(&tile, &p, prec, eff, two, k).unwrap();
        let (mma, tmem, mgmt) = oracle_compute(&tile, &p, prec, eff, two, k);
        assert_close("tensor_compute_time.mma", c.mma_s, mma);
        assert_close("tensor_compute_time.tmem", c.tmem_s, tmem);
        assert_close("tensor_compute_time.mgmt", c.mgmt_s, mgmt);
        count("tensor_compute_time");

        let bytes = log_uniform(&mut r, 1.0, 1e7);
        let parts = r.gen_range(1..=8u32);
        assert_close(
            "tma_time",
            blackwell::tma_time(bytes, parts, &p).unwrap(),
            oracle_tma(bytes, parts, &p),
        );
        count("tma_time");

        let cr = r.gen_range(1.0..8.0);
        assert_close(
            "decompression_time",
            blackwell::decompression_time(bytes, cr, prec, &p).unwrap(),
            oracle_decomp(bytes, cr, prec, &p),
        );
        count("decompression_time");
        assert_close(
            "subbyte_unpack_time",
            blackwell::subbyte_unpack_time(bytes, &p),
            oracle_unpack(bytes, &p),
        );
        count("subbyte_unpack_time");

        let n_bar = r.gen_range(0..16u32);
        assert_close(
            "sync_time",
            blackwell::sync_time(n_bar, &p),
            n_bar as f64 * cycles_s(p.latencies.mbar.0, ghz),
        );
        count("sync_time");

        let (ma, mb) = (log_uniform(&mut r, 1.0, 1e6), log_uniform(&mut r, 1.0, 1e6));
        let pair = blackwell::cta_pair_memory(ma, mb, &p, k);
        assert_close("cta_pair_memory.traffic", pair.traffic_bytes, ma + ma + mb);
        assert_close(
            "cta_pair_memory.time",
            pair.t_memory_s,
            (ma + ma + mb) / p.measured.dsmem_bw,
        );
        assert_close(
            "cta_pair_memory.commit",
            pair.t_commit_s,
            k as f64 * cycles_s(p.latencies.commit.0, ghz),
        );
        count("cta_pair_memory");

        let (ta, td, ts) = (
            log_uniform(&mut r, 1e-9, 1e-5),
            log_uniform(&mut r, 1e-9, 1e-5),
            log_uniform(&mut r, 1e-10, 1e-6),
        );
        let alpha = r.gen_range(0.0..=1.0);
        assert_close(
            "effective_io_time",
            blackwell::effective_io_time(ta, td, ts, alpha).unwrap(),
            ta * (1.0 - alpha) + td * (1.0 - alpha) + ts,
        );
        count("effective_io_time");

        let via = r.gen_bool(0.5);
        assert_close(
            "writeback_time",
            blackwell::writeback_time(bytes, &p, via),
            oracle_writeback(bytes, &p, via),
        );
        count("writeback_time");

        let stages = BlackwellStageTimes {
            t_tma_s: ta,
            t_decomp_s: td,
            t_compute_s: log_uniform(&mut r, 1e-9, 1e-5),
            t_sync_s: ts,
            t_io_eff_s: log_uniform(&mut r, 1e-9, 1e-5),
            ..Default::default()
        };
        let (o, eps) = (
            log_uniform(&mut r, 1e-10, 1e-6),
            log_uniform(&mut r, 1e-10, 1e-6),
        );
        let serial = stages.t_compute_s.max(stages.t_io_eff_s) + ts + o;
        let piped = [ta, td, stages.t_compute_s, ts]
            .into_iter()
            .fold(0.0, f64::max)
            + eps;
        assert_close(
            "step_time",
            blackwell::step_time(&stages, o, false, eps),
            serial,
        );
        assert_close(
            "step_time.pipelined",
            blackwell::step_time(&stages, o, true, eps),
            piped,
        );
        count("blackwell::step_time");

        let mut case = KernelCase::gemm(
            GemmDims {
                m: r.gen_range(1..20_000),
                n: r.gen_range(1..20_000),
                k: r.gen_range(1..20_000),
            },
            Some(tile),
            prec,
        );
        case.k_tiles = Some(r.gen_range(1..100_000));
        case.use_2sm = r.gen_bool(0.5);
        case.pipelined = r.gen_bool(0.3);
        case.tma_participants = r.gen_range(1..=4);
        case.n_bar = r.gen_range(1..=4);
        case.overlap_alpha = Some(r.gen_range(0.0..=1.0));
        case.o_misc_s = Some(log_uniform(&mut r, 1e-10, 1e-7));
        case.compression_ratio = r.gen_bool(0.3).then(|| r.gen_range(1.0..4.0));
        case.via_tma_store = r.gen_bool(0.5);
        case.n_concurrent = r.gen_range(1..=8);
        case.n_devices = r.gen_range(1..=4);
        case.n_kernels = r.gen_range(1..=3);
        let b = blackwell::kernel_time(&case, &p).unwrap();
        assert_close(
            "blackwell::kernel_time",
            b.total_s,
            oracle_blackwell_kernel(&case, &p),
        );
        count("blackwell::kernel_time");
    }

    for i in 0..samples {
        let base = if i % 2 == 0 { "mi300a" } else { "mi250x" };
        let p = random_profile(&mut r, base);
        let prec = random_precision(&mut r, &p);
        let t = &p.tunables;

        let vgpr = r.gen_range(1..=p.datasheet.vgpr_file_per_cu);
        let (mwp, cwp) = (r.gen_range(0..40u32), r.gen_range(0..40u32));
        let occ = cdna::vgpr_occupancy(vgpr, Some(mwp), Some(cwp), &p).unwrap();
        assert_eq!(
            occ.n_wf_eff,
            oracle_occupancy(vgpr, mwp, cwp, &p),
            "vgpr_occupancy"
        );
        count("vgpr_occupancy");

        let (tc, tm) = (
            log_uniform(&mut r, 1e-9, 1e-4),
            log_uniform(&mut r, 1e-9, 1e-4),
        );
        let occ_any = CdnaOccupancy {
            n_wf_eff: r.gen_range(0..64),
            ..occ
        };
        assert_close(
            "overlap_factor",
            cdna::overlap_factor(&occ_any, tc, tm),
            oracle_eta(occ_any.n_wf_eff, tc, tm),
        );
        count("overlap_factor");

        let cache = CacheModelParams::from_profile(&p, HitRates::default());
        let w = log_uniform(&mut r, 1e3, 4.0 * p.datasheet.llc_size);
        let h3 = cdna::llc_hit_rate(w, &cache);
        let want = oracle_h_llc(
            w,
            p.datasheet.llc_size,
            t.llc_resident_fraction,
            t.llc_alpha_exp,
            t.llc_beta_exp,
        );
        assert_close("llc_hit_rate", h3, want);
        count("llc_hit_rate");

        let hits = HitRates {
            l1: r.gen_range(0.0..=1.0),
            l2: r.gen_range(0.0..=1.0),
        };
        let total = 1.0 - (1.0 - hits.l1) * (1.0 - hits.l2) * (1.0 - h3);
        assert_close("total_hit_rate", cdna::total_hit_rate(&hits, h3), total);
        count("total_hit_rate");

        assert_close(
            "effective_bandwidth",
            cdna::effective_bandwidth(h3, &p),
            oracle_bw(h3, &p),
        );
        count("effective_bandwidth");

        let n_loads = log_uniform(&mut r, 1.0, 1e9);
        let cache_h = CacheModelParams::from_profile(&p, hits);
        assert_close(
            "memory_time",
            cdna::memory_time(n_loads, &cache_h, h3, &p),
            oracle_memory_time(n_loads, hits.l1, hits.l2, h3, &p),
        );
        count("memory_time");

        let (ni, ncu, thr, util) = (
            log_uniform(&mut r, 1.0, 1e12),
            r.gen_range(1.0..400.0),
            log_uniform(&mut r, 1e9, 1e13),
            r.gen_range(0.01..=1.0),
        );
        assert_close(
            "mfma_time",
            cdna::mfma_time(ni, ncu, thr, util).unwrap(),
            ni / ncu / thr / util,
        );
        count("mfma_time");

        let eta = r.gen_range(0.0..=1.0);
        assert_close(
            "cdna::step_time",
            cdna::step_time(tm, tc, eta).unwrap(),
            tm / (1.0 + eta) + tc / (1.0 + eta),
        );
        count("cdna::step_time");

        let mut case = KernelCase::new(
            WorkloadClass::ALL[r.gen_range(0..4)],
            log_uniform(&mut r, 1e6, 1e14),
            log_uniform(&mut r, 1e3, 1e12),
        );
        case.working_set = log_uniform(&mut r, 1e3, 4.0 * p.datasheet.llc_size);
        case.precision = Some(prec);
        case.k_tiles = Some(r.gen_range(1..10_000));
        case.vgpr_per_wavefront = Some(r.gen_range(1..=p.datasheet.vgpr_file_per_cu));
        case.mwp = Some(r.gen_range(0..40));
        case.cwp = Some(r.gen_range(0..40));
        case.mfma_utilization = Some(r.gen_range(0.05..=1.0));
        case.hit_rates = hits;
        case.n_loads = r.gen_bool(0.3).then(|| log_uniform(&mut r, 1.0, 1e8));
        case.writeback_bytes = Some(log_uniform(&mut r, 1.0, 1e9));
        case.n_concurrent = r.gen_range(1..=8);
        case.n_devices = r.gen_range(1..=4);
        case.n_kernels = r.gen_range(1..=3);
        let params = CdnaParams::from_profile(&p);
        let b = cdna::kernel_time(&case, &p, &params).unwrap();
        assert_close(
            "cdna::kernel_time",
            b.total_s,
            oracle_cdna_kernel(&case, &p),
        );
        count("cdna::kernel_time");

        let cand = TileCandidate {
            label: "t".into(),
            flops_per_cta: log_uniform(&mut r, 1e3, 1e10),
            bytes_per_cta: log_uniform(&mut r, 1e3, 1e9),
            n_ctas: r.gen_range(1..2_000_000),
            w_eff: r.gen_range(1..40) as f64,
            working_set: log_uniform(&mut r, 1e3, 4.0 * p.datasheet.llc_size),
            precision: prec,
            writeback_bytes: log_uniform(&mut r, 1.0, 1e9),
            factor: 1.0,
        };
        assert_close(
            "occupancy_tile_kernel_time",
            cdna::occupancy_tile_kernel_time(&cand, &p, &params)
                .unwrap()
                .total_s,
            oracle_occupancy_tile(&cand, &p),
        );
        count("occupancy_tile_kernel_time");

        // Generic and naive roofline paths on the same randomized profile.
        let (f, by) = (
            log_uniform(&mut r, 1.0, 1e14),
            log_uniform(&mut r, 1.0, 1e12),
        );
        assert_close(
            "naive_roofline",
            roofline::naive_roofline(f, by, &p, prec).unwrap(),
            oracle_naive(f, by, &p, prec),
        );
        count("naive_roofline");

        let w0 = if r.gen_bool(0.1) {
            0.0
        } else {
            t.generic_w0_bytes
        };
        assert_close(
            "working_set_bandwidth",
            roofline::working_set_bandwidth(w, &p, w0),
            oracle_ws_bw(w, &p, w0),
        );
        count("working_set_bandwidth");

        let mut gp = GenericPathParams::from_profile(&p);
        let scale = r.gen_range(0.2..5.0);
        let mult = r.gen_range(0.2..5.0);
        gp.class_scales.insert(case.class, scale);
        gp.precision_multipliers.insert(prec, mult);
        let sustained = p.datasheet.tensor_flops[&prec];
        let tc = case.flops / (sustained * mult);
        let tm = case.bytes / oracle_ws_bw(case.working_set, &p, t.generic_w0_bytes);
        let want = scale * tc.max(tm)
            + case.n_kernels as f64 * p.measured.launch_latency_s
            + (case.n_concurrent - 1) as f64 * t.tau_interf_s
            + (case.n_devices - 1) as f64 * t.tau_interf_gpu_s;
        assert_close(
            "generic_predict",
            roofline::generic_predict(&case, &p, &gp).unwrap().total_s,
            want,
        );
        count("generic_predict");

        let dir = if r.gen_bool(0.5) {
            Direction::H2d
        } else {
            Direction::D2h
        };
        let bw = match dir {
            Direction::H2d => p.measured.memcpy_bw_h2d,
            Direction::D2h => p.measured.memcpy_bw_d2h,
        };
        assert_close(
            "memcpy_time",
            roofline::memcpy_time(by, dir, &p),
            by / bw + t.tau_memcpy_s,
        );
        count("memcpy_time");
        let n_sync = r.gen_range(0..10_000u64);
        assert_close(
            "host_sync_time",
            roofline::host_sync_time(n_sync, &p),
            n_sync as f64 * t.tau_sync_s,
        );
        count("host_sync_time");

        let (pr, me) = (
            log_uniform(&mut r, 1e-6, 10.0),
            log_uniform(&mut r, 1e-6, 10.0),
        );
        assert_close(
            "relative_error",
            relative_error(pr, me).unwrap(),
            100.0 * (pr - me).abs() / me,
        );
        count("relative_error");
        let pairs: Vec<(f64, f64)> = (0..r.gen_range(1..20))
            .map(|_| {
                (
                    log_uniform(&mut r, 1e-6, 1.0),
                    log_uniform(&mut r, 1e-6, 1.0),
                )
            })
            .collect();
        let want = pairs
            .iter()
            .map(|(a, b)| 100.0 * (a - b).abs() / b)
            .sum::<f64>()
            / pairs.len() as f64;
        assert_close("mae", mae(&pairs).unwrap(), want);
        count("mae");
    }

    checked
}
