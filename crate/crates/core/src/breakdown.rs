use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPath {
    BlackwellStage,
    CdnaWavefront,
    CdnaOccupancyTile,
    GenericRoofline,
    NaiveRoofline,
    /// Sum of several segment predictions (multi-segment applications).
    Composite,
}

impl ModelPath {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelPath::BlackwellStage => "blackwell_stage",
            ModelPath::CdnaWavefront => "cdna_wavefront",
            ModelPath::CdnaOccupancyTile => "cdna_occupancy_tile",
            ModelPath::GenericRoofline => "generic_roofline",
            ModelPath::NaiveRoofline => "naive_roofline",
            ModelPath::Composite => "composite",
        }
    }
}

impl fmt::Display for ModelPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the compute, memory and sync terms combine into the core time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// compute + memory + sync
    Sum,
    /// max(compute, memory) + sync
    MaxPlusSync,
    /// max(compute, memory, sync)
    MaxOfStages,
}

/// Per-term decomposition of a predicted time. All terms are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBreakdown {
    pub model_path: ModelPath,
    pub composition: Composition,
    pub total_s: f64,
    pub t_compute_s: f64,
    pub t_memory_or_io_s: f64,
    pub t_sync_s: f64,
    pub t_launch_s: f64,
    pub t_writeback_s: f64,
    pub t_overhead_s: f64,
    pub t_interference_s: f64,
    pub t_memcpy_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

const RECOMPOSE_TOLERANCE: f64 = 1e-9;

impl PredictionBreakdown {
    pub fn empty(model_path: ModelPath, composition: Composition) -> Self {
        PredictionBreakdown {
            model_path,
            composition,
            total_s: 0.0,
            t_compute_s: 0.0,
            t_memory_or_io_s: 0.0,
            t_sync_s: 0.0,
            t_launch_s: 0.0,
            t_writeback_s: 0.0,
            t_overhead_s: 0.0,
            t_interference_s: 0.0,
            t_memcpy_s: 0.0,
            diagnostics: Vec::new(),
        }
    }

    /// Total implied by the stored terms under `composition`.
    pub fn recompose(&self) -> f64 {
        let core = match self.composition {
            Composition::Sum => self.t_compute_s + self.t_memory_or_io_s + self.t_sync_s,
            Composition::MaxPlusSync => self.t_compute_s.max(self.t_memory_or_io_s) + self.t_sync_s,
            Composition::MaxOfStages => self
                .t_compute_s
                .max(self.t_memory_or_io_s)
                .max(self.t_sync_s),
        };
        core + self.t_launch_s
            + self.t_writeback_s
            + self.t_overhead_s
            + self.t_interference_s
            + self.t_memcpy_s
    }

    /// Stores a total computed by an engine and cross-checks it against the terms.
    pub(crate) fn with_total(mut self, total_s: f64) -> Result<Self> {
        self.total_s = total_s;
        self.check_consistency()?;
        Ok(self)
    }

    pub fn check_consistency(&self) -> Result<()> {
        let recomposed = self.recompose();
        if !(self.total_s.is_finite() && self.total_s >= 0.0) {
            return Err(ModelError::Internal(format!(
                "{} total {} is not a finite non-negative time",
                self.model_path, self.total_s
            )));
        }
        let scale = self.total_s.abs().max(recomposed.abs());
        if (self.total_s - recomposed).abs() > RECOMPOSE_TOLERANCE * scale {
            return Err(ModelError::Internal(format!(
                "{} total {} does not match recomposed terms {}",
                self.model_path, self.total_s, recomposed
            )));
        }
        Ok(())
    }

    /// Equivalent breakdown under [`Composition::Sum`]: terms hidden by a `max`
    /// are dropped, so the visible terms add up to the same total.
    pub fn to_additive(&self) -> Self {
        let mut out = self.clone();
        match self.composition {
            Composition::Sum => {}
            Composition::MaxPlusSync => {
                if self.t_compute_s >= self.t_memory_or_io_s {
                    out.t_memory_or_io_s = 0.0;
                } else {
                    out.t_compute_s = 0.0;
                }
            }
            Composition::MaxOfStages => {
                let c = self.t_compute_s;
                let m = self.t_memory_or_io_s;
                let s = self.t_sync_s;
                out.t_compute_s = 0.0;
                out.t_memory_or_io_s = 0.0;
                out.t_sync_s = 0.0;
                if c >= m && c >= s {
                    out.t_compute_s = c;
                } else if m >= s {
                    out.t_memory_or_io_s = m;
                } else {
                    out.t_sync_s = s;
                }
            }
        }
        out.composition = Composition::Sum;
        out.total_s = out.recompose();
        out
    }

    /// Every term and the total multiplied by `factor` (additive breakdowns only
    /// stay exact; max-compositions scale consistently too since factor ≥ 0).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in out.terms_mut() {
            *t *= factor;
        }
        out.total_s = self.total_s * factor;
        out
    }

    /// Adds the terms of `other` after converting both to additive form.
    pub fn accumulate(&mut self, other: &PredictionBreakdown) {
        if self.composition != Composition::Sum {
            *self = self.to_additive();
        }
        let other = other.to_additive();
        self.t_compute_s += other.t_compute_s;
        self.t_memory_or_io_s += other.t_memory_or_io_s;
        self.t_sync_s += other.t_sync_s;
        self.t_launch_s += other.t_launch_s;
        self.t_writeback_s += other.t_writeback_s;
        self.t_overhead_s += other.t_overhead_s;
        self.t_interference_s += other.t_interference_s;
        self.t_memcpy_s += other.t_memcpy_s;
        self.total_s += other.total_s;
    }

    fn terms_mut(&mut self) -> [&mut f64; 8] {
        [
            &mut self.t_compute_s,
            &mut self.t_memory_or_io_s,
            &mut self.t_sync_s,
            &mut self.t_launch_s,
            &mut self.t_writeback_s,
            &mut self.t_overhead_s,
            &mut self.t_interference_s,
            &mut self.t_memcpy_s,
        ]
    }

    /// `(name, seconds)` pairs in display order.
    pub fn terms(&self) -> [(&'static str, f64); 8] {
        [
            ("compute", self.t_compute_s),
            ("memory_or_io", self.t_memory_or_io_s),
            ("sync", self.t_sync_s),
            ("launch", self.t_launch_s),
            ("writeback", self.t_writeback_s),
            ("overhead", self.t_overhead_s),
            ("interference", self.t_interference_s),
            ("memcpy", self.t_memcpy_s),
        ]
    }
}
