//! Cost-model toolkit for deciding whether a memory optimization method
//! (MOM) actually speeds up model training. Gradient checkpointing,
//! activation quantization, and swapping all qualify.
//!
//! Memory savers let training run bigger batches, but they also slow every
//! step down. The decisive metric is the *maximum throughput* reachable
//! within the device memory budget, not the maximum batch size. This crate
//! fits linear models for peak memory (`m(x) = alpha*x + beta`) and batch
//! latency (`t(x) = gamma*x + delta`) from training profiles, predicts the
//! largest feasible batch and its throughput for each method, and condenses
//! the comparison into a score (memory saved per unit of overhead) against
//! a point (the threshold that score must reach before the saver pays off).
//!
//! Modules:
//! - [`profile`]: profile points/series, CSV/JSON ingestion, validation.
//! - [`model`]: linear fits and the per-method [`model::CostModel`].
//! - [`fit`]: least-squares fitting with utilization-knee exclusion.
//! - [`score`]: throughput prediction, Papaya Score/Point, verdicts.
//! - [`scaling`]: depth/width/GPU-count scaling laws and crossover search.
//! - [`sim`]: synthetic workload generator and brute-force oracle.
//! - [`report`]: advisory report assembly and rendering.

// validations spell `!(x > 0.0)` so NaN fails them; the clippy-preferred
// `x <= 0.0` would wave NaN through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fit;
pub mod model;
pub mod profile;
pub mod report;
pub mod scaling;
pub mod score;
pub mod sim;

pub use fit::{detect_knee, fit_cost_model, fit_linear, FitConfig, FitError};
pub use model::{CostModel, FitRange, LatencyModel, LinearFit, MemoryModel, ModelError};
pub use profile::{
    parse_profile, validate_series, ProfileError, ProfileFormat, ProfilePoint, ProfileSeries,
    SeriesWarning,
};
pub use scaling::{
    crossover_depth, crossover_width, depth_gain_at, scale_depth, scale_width, sweep_gpus,
    width_gain_at, CrossoverResult, DepthLaw, DepthLawPair, GpuVerdict, MultiGpuLaw, ScalingError,
    WidthLaw, WidthLawPair,
};
pub use score::{
    papaya_point, papaya_score, predict_max, throughput_at, throughput_derivative, verdict,
    verdict_fragmented, verdict_general, FragmentationConfig, PapayaVerdict, ScoreError,
    ThroughputPrediction,
};
pub use sim::{
    apply_mom, brute_force_max_throughput, empirical_max_batch, generate_profile, simulate_step,
    MomTransform, SimError, StepOutcome, WorkloadSpec,
};
