//! Analytical execution-time models for GPU kernels and multi-segment applications.
//!
//! Three engines share one set of inputs: a stage-centric model for
//! NVIDIA Blackwell/Hopper ([`blackwell`]), a wavefront/occupancy model for AMD
//! CDNA ([`cdna`]) and a calibrated roofline ([`roofline`]). [`workload`] routes
//! the segments of an application to the right engine, and [`validation`]
//! compares predictions with measured kernel sums.

pub mod blackwell;
pub mod breakdown;
pub mod calibration;
pub mod case;
pub mod cdna;
pub mod error;
pub mod measured;
pub mod precision;
pub mod profile;
pub mod profiler;
pub mod roofline;
pub mod validation;
pub mod workload;

pub use breakdown::{Composition, ModelPath, PredictionBreakdown};
pub use calibration::CalibrationSet;
pub use case::{GemmDims, HitRates, KernelCase, TileDims, WorkloadClass};
pub use error::{ModelError, Result};
pub use measured::{MeasuredRecord, MeasuredSource};
pub use precision::Precision;
pub use profile::{HardwareProfile, Vendor};
pub use validation::{ProfileSet, ValidationReport};
pub use workload::{PredictionContext, SegmentFile, WorkloadSegment};
