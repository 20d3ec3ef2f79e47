//! How verdicts move with model size and GPU count.
//!
//! Depth: slope costs grow linearly with layer count, so the score (a
//! ratio of slopes) stays fixed, and the growing fixed memory cost drags
//! the point down, so every memory saver has a critical depth past which it
//! starts to win. Width: slope memory grows linearly but slope latency
//! quadratically, and the fixed costs quadratically, which again lowers the
//! point faster than the score falls. GPU count: data-parallel
//! synchronization inflates the fixed latency cost on both sides, lowering
//! the point while leaving the score alone.
//!
//! Crossover searches return the smallest size at which the method *strictly
//! improves* the continuous maximum throughput (an exact tie is not yet an
//! improvement), exploiting the monotone point. The depth search honors
//! batch-one feasibility: a depth where only the saver can run at all
//! counts. The width search compares the continuous optima directly,
//! since at large widths neither method may fit an integer batch yet the
//! ranking is still well defined.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CostModel, ModelError};
use crate::score::{papaya_score, verdict, PapayaVerdict, ScoreError};

/// Relative throughput differences at or below this are ties, not gains.
const REL_TIE: f64 = 1e-12;

const LAW_MODEL_ID: &str = "scaling-law";

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("size must be at least 1")]
    ZeroSize,
    #[error("at size {size} the fixed memory cost reaches the device budget")]
    Infeasible { size: u32 },
    #[error("verdicts are not monotone over the requested range near size {size}")]
    NonMonotone { size: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Per-layer growth law: slope costs scale with depth, fixed memory grows
/// with the parameters added per layer, fixed latency is depth-independent
/// unless a per-layer term is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLaw {
    /// GB per record per layer.
    pub mem_slope_per_layer: f64,
    /// Seconds per record per layer.
    pub lat_slope_per_layer: f64,
    /// GB.
    pub fixed_mem_base: f64,
    /// GB per layer.
    pub fixed_mem_per_layer: f64,
    /// Seconds.
    pub fixed_lat: f64,
    /// Seconds per layer; normally zero.
    #[serde(default)]
    pub fixed_lat_per_layer: f64,
    /// GB.
    pub device_memory: f64,
}

impl DepthLaw {
    fn validate(&self) -> Result<(), ScalingError> {
        let ok = self.mem_slope_per_layer > 0.0
            && self.lat_slope_per_layer > 0.0
            && self.fixed_mem_base >= 0.0
            && self.fixed_mem_per_layer > 0.0
            && self.fixed_lat > 0.0
            && self.fixed_lat_per_layer >= 0.0
            && self.device_memory > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ScalingError::InvalidLaw(
                "depth law coefficients must be positive (base fixed memory may be zero)".into(),
            ))
        }
    }

    /// `(alpha, beta, gamma, delta)` at a depth.
    pub fn coefficients(&self, depth: u32) -> (f64, f64, f64, f64) {
        let d = f64::from(depth);
        (
            self.mem_slope_per_layer * d,
            self.fixed_mem_base + self.fixed_mem_per_layer * d,
            self.lat_slope_per_layer * d,
            self.fixed_lat + self.fixed_lat_per_layer * d,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLawPair {
    pub original: DepthLaw,
    pub mom: DepthLaw,
}

impl DepthLawPair {
    fn validate(&self) -> Result<(), ScalingError> {
        self.original.validate()?;
        self.mom.validate()?;
        if self.original.device_memory != self.mom.device_memory {
            return Err(ScalingError::InvalidLaw(
                "the two depth laws must share a device budget".into(),
            ));
        }
        Ok(())
    }
}

/// Per-width-unit growth law: slope memory is linear in width, slope
/// latency quadratic, and both fixed costs quadratic. The fixed-cost
/// coefficients are shared between the methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthLaw {
    /// GB per record per width unit.
    pub mem_slope_per_width: f64,
    /// Seconds per record per squared width unit.
    pub lat_slope_per_width_sq: f64,
    /// GB per squared width unit.
    pub fixed_mem_per_width_sq: f64,
    /// Seconds per squared width unit.
    pub fixed_lat_per_width_sq: f64,
    /// GB.
    pub device_memory: f64,
}

impl WidthLaw {
    fn validate(&self) -> Result<(), ScalingError> {
        let ok = self.mem_slope_per_width > 0.0
            && self.lat_slope_per_width_sq > 0.0
            && self.fixed_mem_per_width_sq > 0.0
            && self.fixed_lat_per_width_sq > 0.0
            && self.device_memory > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ScalingError::InvalidLaw(
                "width law coefficients must be positive".into(),
            ))
        }
    }

    /// `(alpha, beta, gamma, delta)` at a width.
    pub fn coefficients(&self, width: u32) -> (f64, f64, f64, f64) {
        let w = f64::from(width);
        (
            self.mem_slope_per_width * w,
            self.fixed_mem_per_width_sq * w * w,
            self.lat_slope_per_width_sq * w * w,
            self.fixed_lat_per_width_sq * w * w,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthLawPair {
    pub original: WidthLaw,
    pub mom: WidthLaw,
}

impl WidthLawPair {
    fn validate(&self) -> Result<(), ScalingError> {
        self.original.validate()?;
        self.mom.validate()?;
        let shared = self.original.fixed_mem_per_width_sq == self.mom.fixed_mem_per_width_sq
            && self.original.fixed_lat_per_width_sq == self.mom.fixed_lat_per_width_sq
            && self.original.device_memory == self.mom.device_memory;
        if shared {
            Ok(())
        } else {
            Err(ScalingError::InvalidLaw(
                "width laws must share fixed-cost coefficients and the device budget".into(),
            ))
        }
    }
}

/// Fixed latency cost as a function of data-parallel GPU count:
/// `delta(n) = delta_single + delta_per_extra_gpu * (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiGpuLaw {
    /// Seconds at one GPU.
    pub delta_single: f64,
    /// Seconds of extra synchronization per added GPU.
    pub delta_per_extra_gpu: f64,
    /// Configured GPU count for single evaluations.
    pub gpu_count: u32,
}

impl MultiGpuLaw {
    fn validate(&self) -> Result<(), ScalingError> {
        if self.delta_single >= 0.0 && self.delta_per_extra_gpu >= 0.0 && self.gpu_count >= 1 {
            Ok(())
        } else {
            Err(ScalingError::InvalidLaw(
                "multi-gpu law needs nonnegative deltas and at least one GPU".into(),
            ))
        }
    }

    pub fn delta_at(&self, gpus: u32) -> f64 {
        self.delta_single + self.delta_per_extra_gpu * f64::from(gpus.saturating_sub(1))
    }
}

/// Smallest qualifying size plus the continuous root where score and point
/// coincide (when the laws admit a closed form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverResult {
    pub size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous_root: Option<f64>,
}

/// Verdict at one GPU count. Aggregate throughput is the per-device number
/// times the GPU count; it scales both sides equally and never changes the
/// verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuVerdict {
    pub gpus: u32,
    /// Fixed latency cost both methods run with at this count, seconds.
    pub delta: f64,
    pub verdict: PapayaVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_mom: Option<f64>,
}

/// Instantiate both cost models at a depth. A single law whose fixed memory
/// outgrew the device yields a model flagged infeasible (the verdict then
/// reports necessity); only both laws dying is an error.
pub fn scale_depth(
    pair: &DepthLawPair,
    depth: u32,
) -> Result<(CostModel, CostModel), ScalingError> {
    pair.validate()?;
    if depth < 1 {
        return Err(ScalingError::ZeroSize);
    }
    let m = pair.original.device_memory;
    let (a0, b0, g0, d0) = pair.original.coefficients(depth);
    let (am, bm, gm, dm) = pair.mom.coefficients(depth);
    if b0 >= m && bm >= m {
        return Err(ScalingError::Infeasible { size: depth });
    }
    let baseline = CostModel::from_coefficients(LAW_MODEL_ID, "original", a0, b0, g0, d0, m)?;
    let mom = CostModel::from_coefficients(LAW_MODEL_ID, "mom", am, bm, gm, dm, m)?;
    Ok((baseline, mom))
}

/// Instantiate both cost models at a width.
pub fn scale_width(
    pair: &WidthLawPair,
    width: u32,
) -> Result<(CostModel, CostModel), ScalingError> {
    pair.validate()?;
    if width < 1 {
        return Err(ScalingError::ZeroSize);
    }
    let m = pair.original.device_memory;
    let (a0, b0, g0, d0) = pair.original.coefficients(width);
    let (am, bm, gm, dm) = pair.mom.coefficients(width);
    if b0 >= m {
        return Err(ScalingError::Infeasible { size: width });
    }
    let baseline = CostModel::from_coefficients(LAW_MODEL_ID, "original", a0, b0, g0, d0, m)?;
    let mom = CostModel::from_coefficients(LAW_MODEL_ID, "mom", am, bm, gm, dm, m)?;
    Ok((baseline, mom))
}

/// Smallest depth at which the method strictly improves maximum throughput
/// (or is needed to run at all), found by binary search over the monotone
/// verdict. `None` when no depth up to `max_depth` qualifies.
pub fn crossover_depth(
    pair: &DepthLawPair,
    max_depth: u32,
) -> Result<CrossoverResult, ScalingError> {
    pair.validate()?;
    if max_depth < 1 {
        return Err(ScalingError::ZeroSize);
    }
    let size = first_qualifying(|depth| depth_gain_at(pair, depth), max_depth)?;
    Ok(CrossoverResult {
        size,
        continuous_root: depth_root(pair),
    })
}

/// Smallest width at which the method strictly improves the continuous
/// maximum throughput. The search stops where the shared fixed memory
/// reaches the device budget; batch-one feasibility is not consulted (the
/// continuous ranking stays meaningful past it).
pub fn crossover_width(
    pair: &WidthLawPair,
    max_width: u32,
) -> Result<CrossoverResult, ScalingError> {
    pair.validate()?;
    if max_width < 1 {
        return Err(ScalingError::ZeroSize);
    }
    let m = pair.original.device_memory;
    // clamp the search to widths whose fixed memory leaves headroom
    let mut cap = (m / pair.original.fixed_mem_per_width_sq).sqrt().floor() as u32;
    while cap >= 1 && pair.original.coefficients(cap).1 >= m {
        cap -= 1;
    }
    if cap < 1 {
        return Err(ScalingError::Infeasible { size: 1 });
    }
    let hi = cap.min(max_width);
    let size = first_qualifying(|width| width_gain_at(pair, width), hi)?;
    Ok(CrossoverResult {
        size,
        continuous_root: width_root(pair),
    })
}

/// Re-evaluate the verdict at each GPU count, substituting the law's fixed
/// latency cost into both models. Per-device memory is untouched: data
/// parallelism replicates the model.
pub fn sweep_gpus(
    baseline: &CostModel,
    mom: &CostModel,
    law: &MultiGpuLaw,
    max_gpus: u32,
) -> Result<Vec<GpuVerdict>, ScalingError> {
    law.validate()?;
    sweep_gpus_with(baseline, mom, |n| law.delta_at(n), max_gpus)
}

/// As [`sweep_gpus`] with an arbitrary growth function for the fixed
/// latency cost.
pub fn sweep_gpus_with(
    baseline: &CostModel,
    mom: &CostModel,
    delta_at: impl Fn(u32) -> f64,
    max_gpus: u32,
) -> Result<Vec<GpuVerdict>, ScalingError> {
    if max_gpus < 1 {
        return Err(ScalingError::ZeroSize);
    }
    let mut out = Vec::with_capacity(max_gpus as usize);
    for gpus in 1..=max_gpus {
        let delta = delta_at(gpus);
        let b = baseline.with_delta(delta)?;
        let m = mom.with_delta(delta)?;
        let v = verdict(&b, &m)?;
        let aggregate_baseline = v
            .baseline_prediction
            .map(|p| p.max_throughput * f64::from(gpus));
        let aggregate_mom = v.mom_prediction.map(|p| p.max_throughput * f64::from(gpus));
        out.push(GpuVerdict {
            gpus,
            delta,
            verdict: v,
            aggregate_baseline,
            aggregate_mom,
        });
    }
    Ok(out)
}

/// The depth-crossover predicate at one depth: does the method strictly
/// improve the continuous maximum throughput (or alone run at all)?
pub fn depth_gain_at(pair: &DepthLawPair, depth: u32) -> Result<bool, ScalingError> {
    let (baseline, mom) = scale_depth(pair, depth)?;
    strict_gain(&baseline, &mom).map_err(ScalingError::from)
}

/// The width-crossover predicate at one width: strict continuous-optimum
/// improvement, ignoring integer-batch feasibility.
pub fn width_gain_at(pair: &WidthLawPair, width: u32) -> Result<bool, ScalingError> {
    pair.validate()?;
    let m = pair.original.device_memory;
    let (a0, b, g0, d) = pair.original.coefficients(width);
    let (am, _, gm, _) = pair.mom.coefficients(width);
    if b >= m {
        return Err(ScalingError::Infeasible { size: width });
    }
    let headroom = m - b;
    let v0 = continuous_optimum(headroom, a0, g0, d);
    let vm = continuous_optimum(headroom, am, gm, d);
    Ok(vm > v0 * (1.0 + REL_TIE))
}

/// Strict continuous-throughput gain with batch-one feasibility: a method
/// that alone can run at all counts as a gain; a dead method never gains.
fn strict_gain(baseline: &CostModel, mom: &CostModel) -> Result<bool, ScoreError> {
    let v0 = crate::score::continuous_max_throughput(baseline);
    let vm = crate::score::continuous_max_throughput(mom);
    match (v0, vm) {
        (None, None) => Err(ScoreError::BothInfeasible {
            baseline: baseline.method_id.clone(),
            mom: mom.method_id.clone(),
        }),
        (None, Some(_)) => Ok(true),
        (Some(_), None) => Ok(false),
        (Some(v0), Some(vm)) => Ok(vm > v0 * (1.0 + REL_TIE)),
    }
}

/// Continuous optimum throughput for a method with the given slope costs
/// against a memory headroom, ignoring integer feasibility.
fn continuous_optimum(headroom: f64, alpha: f64, gamma: f64, delta: f64) -> f64 {
    let x = headroom / alpha;
    x / (gamma * x + delta)
}

/// Binary search for the smallest size whose predicate holds, assuming a
/// monotone false-then-true shape; the endpoints and two interior probes
/// guard the assumption.
fn first_qualifying(
    mut gain: impl FnMut(u32) -> Result<bool, ScalingError>,
    max_size: u32,
) -> Result<Option<u32>, ScalingError> {
    if gain(1)? {
        return Ok(Some(1));
    }
    if !gain(max_size)? {
        return Ok(None);
    }
    let mut lo = 1; // gain(lo) == false
    let mut hi = max_size; // gain(hi) == true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if gain(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // spot-check monotonicity on both sides of the boundary
    let below = hi.div_ceil(2);
    if below > 1 && below < hi && gain(below)? {
        return Err(ScalingError::NonMonotone { size: below });
    }
    let above = hi + (max_size - hi) / 2;
    if above > hi && above < max_size && !gain(above)? {
        return Err(ScalingError::NonMonotone { size: above });
    }
    Ok(Some(hi))
}

/// Depth where the point meets the score, when the laws share fixed costs
/// and the score is a positive constant.
fn depth_root(pair: &DepthLawPair) -> Option<f64> {
    let o = &pair.original;
    let m = &pair.mom;
    let shared = o.fixed_mem_base == m.fixed_mem_base
        && o.fixed_mem_per_layer == m.fixed_mem_per_layer
        && o.fixed_lat == m.fixed_lat
        && o.fixed_lat_per_layer == 0.0
        && m.fixed_lat_per_layer == 0.0;
    if !shared {
        return None;
    }
    let saving = o.mem_slope_per_layer - m.mem_slope_per_layer;
    let overhead = m.lat_slope_per_layer - o.lat_slope_per_layer;
    if !(saving > 0.0 && overhead > 0.0) {
        return None;
    }
    let score = saving / overhead;
    // (M - base - per_layer * D) / delta == score
    Some((o.device_memory - o.fixed_mem_base - o.fixed_lat * score) / o.fixed_mem_per_layer)
}

/// Width where the score meets the point: positive root of
/// `c_mem_fixed * W^2 + score_numerator/score_denominator * c_lat_fixed * W - M`.
fn width_root(pair: &WidthLawPair) -> Option<f64> {
    let o = &pair.original;
    let m = &pair.mom;
    let saving = o.mem_slope_per_width - m.mem_slope_per_width;
    let overhead = m.lat_slope_per_width_sq - o.lat_slope_per_width_sq;
    if !(saving > 0.0 && overhead > 0.0) {
        return None;
    }
    let s = saving / overhead;
    let a = o.fixed_mem_per_width_sq;
    let b = s * o.fixed_lat_per_width_sq;
    let c = -o.device_memory;
    let disc = b * b - 4.0 * a * c;
    Some((-b + disc.sqrt()) / (2.0 * a))
}

/// Score of the scaled pair; exposed for sweeps and tests.
pub fn score_at_depth(pair: &DepthLawPair, depth: u32) -> Result<(f64, bool), ScalingError> {
    let (baseline, mom) = scale_depth(pair, depth)?;
    Ok(papaya_score(&baseline, &mom))
}

/// Continuous max throughput of both methods at a width, ignoring integer
/// feasibility; exposed for sweeps and tests.
pub fn width_continuous_throughputs(
    pair: &WidthLawPair,
    width: u32,
) -> Result<(f64, f64), ScalingError> {
    pair.validate()?;
    let m = pair.original.device_memory;
    let (a0, b, g0, d) = pair.original.coefficients(width);
    let (am, _, gm, _) = pair.mom.coefficients(width);
    if b >= m {
        return Err(ScalingError::Infeasible { size: width });
    }
    Ok((
        continuous_optimum(m - b, a0, g0, d),
        continuous_optimum(m - b, am, gm, d),
    ))
}
