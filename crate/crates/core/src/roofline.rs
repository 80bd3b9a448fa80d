//! Roofline-style baselines and host-side phase costs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blackwell::interference;
use crate::breakdown::{Composition, ModelPath, PredictionBreakdown};
use crate::case::{KernelCase, WorkloadClass};
use crate::error::{ModelError, Result};
use crate::precision::Precision;
use crate::profile::HardwareProfile;

/// `max(F / P_peak, B / B_HBM_peak)` with datasheet peaks only.
pub fn naive_roofline(
    flops: f64,
    bytes: f64,
    profile: &HardwareProfile,
    precision: Precision,
) -> Result<f64> {
    let t_c = if flops > 0.0 {
        flops / profile.tensor_peak(precision)?
    } else {
        0.0
    };
    Ok(t_c.max(bytes / profile.hbm_bw_peak()))
}

/// Bandwidth available to a working set of `working_set` bytes: close to peak
/// for small (cache-friendly) sets and decaying to sustained HBM bandwidth.
/// `w0 ≤ 0` disables the blend.
pub fn working_set_bandwidth(working_set: f64, profile: &HardwareProfile, w0: f64) -> f64 {
    let sustained = profile.hbm_bw_sustained();
    if w0 <= 0.0 {
        return sustained;
    }
    let peak = profile.hbm_bw_peak();
    sustained + (peak - sustained) * (-working_set / w0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericPathParams {
    pub class_scales: BTreeMap<WorkloadClass, f64>,
    pub precision_multipliers: BTreeMap<Precision, f64>,
    pub w0_bytes: f64,
}

impl GenericPathParams {
    /// Unit scales and multipliers, `w0` from the profile.
    pub fn from_profile(profile: &HardwareProfile) -> Self {
        GenericPathParams {
            class_scales: WorkloadClass::ALL.into_iter().map(|c| (c, 1.0)).collect(),
            precision_multipliers: Precision::ALL.into_iter().map(|p| (p, 1.0)).collect(),
            w0_bytes: profile.tunables.generic_w0_bytes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (c, s) in &self.class_scales {
            if !(s.is_finite() && *s > 0.0) {
                return Err(ModelError::invalid(
                    format!("class_scales.{c}"),
                    format!("must be > 0, got {s}"),
                ));
            }
        }
        for (p, m) in &self.precision_multipliers {
            if !(m.is_finite() && *m > 0.0) {
                return Err(ModelError::invalid(
                    format!("precision_multipliers.{p}"),
                    format!("must be > 0, got {m}"),
                ));
            }
        }
        if !self.w0_bytes.is_finite() {
            return Err(ModelError::invalid("w0_bytes", "must be finite"));
        }
        Ok(())
    }
}

/// `scale_class · max(F / (P_sust · mult), B / B_eff(W)) + n_kernels · launch`.
pub fn generic_predict(
    case: &KernelCase,
    profile: &HardwareProfile,
    params: &GenericPathParams,
) -> Result<PredictionBreakdown> {
    case.validate()?;
    params.validate()?;
    let precision = case.precision_or_default(profile);
    let scale = *params
        .class_scales
        .get(&case.class)
        .ok_or_else(|| ModelError::UnknownClass(case.class.to_string()))?;
    let t_c = if case.flops > 0.0 {
        let mult = params
            .precision_multipliers
            .get(&precision)
            .copied()
            .unwrap_or(1.0);
        case.flops / (profile.tensor_sustained(precision)? * mult * case.efficiency())
    } else {
        0.0
    };
    let t_m = case.bytes / working_set_bandwidth(case.working_set, profile, params.w0_bytes);
    let t_launch = f64::from(case.n_kernels) * profile.measured.launch_latency_s;
    let t_interf = interference(case, profile);
    let total = scale * t_c.max(t_m) + t_launch + t_interf;

    let mut b = PredictionBreakdown::empty(ModelPath::GenericRoofline, Composition::MaxPlusSync);
    b.t_compute_s = scale * t_c;
    b.t_memory_or_io_s = scale * t_m;
    b.t_launch_s = t_launch;
    b.t_interference_s = t_interf;
    b.with_total(total)
}

/// Naive roofline as a breakdown, for side-by-side reporting.
pub fn naive_breakdown(
    case: &KernelCase,
    profile: &HardwareProfile,
) -> Result<PredictionBreakdown> {
    case.validate()?;
    let precision = case.precision_or_default(profile);
    let t_c = if case.flops > 0.0 {
        case.flops / profile.tensor_peak(precision)?
    } else {
        0.0
    };
    let t_m = case.bytes / profile.hbm_bw_peak();
    let mut b = PredictionBreakdown::empty(ModelPath::NaiveRoofline, Composition::MaxPlusSync);
    b.t_compute_s = t_c;
    b.t_memory_or_io_s = t_m;
    b.with_total(naive_roofline(case.flops, case.bytes, profile, precision)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    H2d,
    D2h,
}

/// One host↔device copy: `S / B_dir + τ_memcpy`.
pub fn memcpy_time(bytes: f64, direction: Direction, profile: &HardwareProfile) -> f64 {
    let bw = match direction {
        Direction::H2d => profile.measured.memcpy_bw_h2d,
        Direction::D2h => profile.measured.memcpy_bw_d2h,
    };
    bytes / bw + profile.tunables.tau_memcpy_s
}

pub fn host_sync_time(n_syncs: u64, profile: &HardwareProfile) -> f64 {
    n_syncs as f64 * profile.tunables.tau_sync_s
}
