//! Synthetic workload oracle: generates profiles from known ground-truth
//! coefficients (with optional noise, fragmentation, and a GPU-utilization
//! knee) and brute-forces the true maximum throughput so predictions can be
//! checked without hardware.
//!
//! Ground truth per step at batch `x`:
//!
//! ```text
//! memory  = (alpha * x + beta) * (1 + e_m)            [GB]
//! latency = (gamma * max(x, u) + delta) * (1 + e_t)   [s]
//! ```
//!
//! where `u` is the utilization floor (latency is flat below it: the GPU is
//! underutilized, so small batches cost as much as a batch of `u`), and a
//! step goes out-of-memory when `memory > device_memory * f` with `f` the
//! effective memory ratio left after fragmentation. Noise terms are
//! `N(0, sigma^2)` draws derived deterministically from `(rng_seed, x)`, so
//! regenerating any point is reproducible in isolation and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BYTES_PER_GB;
use crate::profile::{ProfileError, ProfilePoint, ProfileSeries};

/// Noise multipliers are floored here so a pathological draw can never
/// produce a nonpositive measurement.
const MIN_NOISE_MULTIPLIER: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("workload spec invalid: {0}")]
    InvalidSpec(String),
    #[error("transform {name:?} invalid: {msg}")]
    InvalidTransform { name: String, msg: String },
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("batch list must be nonempty")]
    EmptyBatches,
    #[error("workload cannot fit a single-record batch in {budget:.3} GB")]
    InfeasibleAtBatchOne { budget: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Ground-truth coefficients driving the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Incremental memory cost, GB per record.
    #[serde(rename = "alpha_gb_per_record")]
    pub alpha: f64,
    /// Fixed memory cost, GB.
    #[serde(rename = "beta_gb")]
    pub beta: f64,
    /// Incremental execution cost, seconds per record.
    #[serde(rename = "gamma_s_per_record")]
    pub gamma: f64,
    /// Fixed execution cost, seconds.
    #[serde(rename = "delta_s")]
    pub delta: f64,
    /// Batches below this size cost as much as a batch of this size.
    #[serde(default = "default_utilization_floor")]
    pub utilization_floor: u32,
    /// Fraction of device memory actually usable, in (0, 1].
    #[serde(default = "default_ratio")]
    pub effective_memory_ratio: f64,
    /// Multiplicative Gaussian noise level on memory and latency.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Device memory, GB.
    #[serde(rename = "device_memory_gb")]
    pub device_memory: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_utilization_floor() -> u32 {
    1
}

fn default_ratio() -> f64 {
    1.0
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: &str| Err(SimError::InvalidSpec(msg.to_string()));
        if !(self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        if !(self.beta >= 0.0) {
            return fail("beta must be nonnegative");
        }
        if !(self.gamma > 0.0) {
            return fail("gamma must be positive");
        }
        if !(self.delta >= 0.0) {
            return fail("delta must be nonnegative");
        }
        if self.utilization_floor < 1 {
            return fail("utilization floor must be at least 1");
        }
        if !(self.effective_memory_ratio > 0.0 && self.effective_memory_ratio <= 1.0) {
            return fail("effective memory ratio must be in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0) {
            return fail("noise sigma must be nonnegative");
        }
        if !(self.device_memory > 0.0) {
            return fail("device memory must be positive");
        }
        Ok(())
    }

    /// Usable memory after fragmentation, GB.
    pub fn effective_budget(&self) -> f64 {
        self.device_memory * self.effective_memory_ratio
    }

    /// Noise-free peak memory at a batch size, GB.
    pub fn true_memory(&self, batch: u32) -> f64 {
        self.alpha * f64::from(batch) + self.beta
    }

    /// Noise-free batch latency at a batch size, seconds.
    pub fn true_latency(&self, batch: u32) -> f64 {
        self.gamma * f64::from(batch.max(self.utilization_floor)) + self.delta
    }

    /// The exact cost model behind this workload, for oracle comparisons.
    pub fn cost_model(
        &self,
        model_id: &str,
        method_id: &str,
    ) -> Result<crate::model::CostModel, crate::model::ModelError> {
        crate::model::CostModel::from_coefficients(
            model_id,
            method_id,
            self.alpha,
            self.beta,
            self.gamma,
            self.delta,
            self.device_memory,
        )
    }
}

/// Cost signature of a memory optimization method: how it rescales the
/// workload coefficients. Factors are constants; methods whose cost depends
/// on the batch size itself (dynamic eviction policies) are outside the
/// linear model and cannot be expressed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomTransform {
    pub name: String,
    /// Multiplies alpha; in (0, 1], smaller means more memory saved.
    pub memory_slope_factor: f64,
    /// gamma becomes `gamma * (1 + overhead)`; must exceed -1.
    pub latency_slope_overhead: f64,
    /// Added to beta, GB.
    #[serde(default)]
    pub fixed_memory_delta: f64,
    /// Added to delta, seconds.
    #[serde(default)]
    pub fixed_latency_delta: f64,
    /// Replaces the effective memory ratio when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_memory_ratio_override: Option<f64>,
}

impl MomTransform {
    pub fn new(
        name: impl Into<String>,
        memory_slope_factor: f64,
        latency_slope_overhead: f64,
    ) -> Self {
        Self {
            name: name.into(),
            memory_slope_factor,
            latency_slope_overhead,
            fixed_memory_delta: 0.0,
            fixed_latency_delta: 0.0,
            effective_memory_ratio_override: None,
        }
    }

    /// Drop-and-recompute checkpointing: strong memory saving, compute
    /// overhead from the recomputed forward pass.
    pub fn checkpointing(memory_slope_factor: f64, latency_slope_overhead: f64) -> Self {
        Self::new("checkpointing", memory_slope_factor, latency_slope_overhead)
    }

    /// Compressed (quantized) activation storage.
    pub fn quantization(memory_slope_factor: f64, latency_slope_overhead: f64) -> Self {
        Self::new("quantization", memory_slope_factor, latency_slope_overhead)
    }

    /// Host-memory offload; overhead is transfer-bound.
    pub fn swapping(memory_slope_factor: f64, latency_slope_overhead: f64) -> Self {
        Self::new("swapping", memory_slope_factor, latency_slope_overhead)
    }

    fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: &str| {
            Err(SimError::InvalidTransform {
                name: self.name.clone(),
                msg: msg.to_string(),
            })
        };
        if !(self.memory_slope_factor > 0.0 && self.memory_slope_factor <= 1.0) {
            return fail("memory slope factor must be in (0, 1]");
        }
        if !(self.latency_slope_overhead > -1.0) {
            return fail("latency slope overhead must exceed -1");
        }
        if let Some(f) = self.effective_memory_ratio_override {
            if !(f > 0.0 && f <= 1.0) {
                return fail("effective memory ratio override must be in (0, 1]");
            }
        }
        Ok(())
    }
}

/// Outcome of one simulated training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Measured {
        peak_memory_bytes: u64,
        latency_s: f64,
    },
    Oom,
}

/// Simulate one training step. Out-of-memory is a value, not an error.
pub fn simulate_step(spec: &WorkloadSpec, batch: u32) -> Result<StepOutcome, SimError> {
    spec.validate()?;
    if batch == 0 {
        return Err(SimError::ZeroBatch);
    }
    let (e_mem, e_lat) = if spec.noise_sigma == 0.0 {
        (0.0, 0.0)
    } else {
        let (zm, zt) = noise_pair(spec.rng_seed, batch);
        (spec.noise_sigma * zm, spec.noise_sigma * zt)
    };
    let memory_gb = apply_noise(spec.true_memory(batch), e_mem);
    let latency_s = apply_noise(spec.true_latency(batch), e_lat);
    if memory_gb > spec.effective_budget() {
        return Ok(StepOutcome::Oom);
    }
    Ok(StepOutcome::Measured {
        peak_memory_bytes: (memory_gb * BYTES_PER_GB).round() as u64,
        latency_s,
    })
}

fn apply_noise(value: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        value
    } else {
        value * (1.0 + epsilon).max(MIN_NOISE_MULTIPLIER)
    }
}

/// Per-(seed, batch) standard-normal pair. Each batch size gets its own
/// stream, so points are reproducible independently of generation order.
fn noise_pair(seed: u64, batch: u32) -> (f64, f64) {
    let mixed = seed ^ u64::from(batch).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Generate a profile series over the given batch sizes. Duplicate batches
/// are collapsed. The series advertises the full device memory, not the
/// fragmentation-reduced budget: fragmentation is invisible to profilers.
pub fn generate_profile(
    spec: &WorkloadSpec,
    batches: &[u32],
    model_id: &str,
    method_id: &str,
) -> Result<ProfileSeries, SimError> {
    spec.validate()?;
    if batches.is_empty() {
        return Err(SimError::EmptyBatches);
    }
    let mut sorted: Vec<u32> = batches.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut points = Vec::with_capacity(sorted.len());
    for &batch in &sorted {
        match simulate_step(spec, batch)? {
            StepOutcome::Measured {
                peak_memory_bytes,
                latency_s,
            } => {
                points.push(ProfilePoint::measured(
                    batch,
                    peak_memory_bytes,
                    latency_s * 1e3,
                ));
            }
            StepOutcome::Oom => points.push(ProfilePoint::oom(batch)),
        }
    }
    let device_memory_bytes = (spec.device_memory * BYTES_PER_GB).round() as u64;
    Ok(ProfileSeries::new(
        model_id,
        method_id,
        device_memory_bytes,
        points,
    )?)
}

/// Apply a method's cost signature to a workload. The RNG seed is offset by
/// a hash of the method name so baseline and method noise are independent.
pub fn apply_mom(spec: &WorkloadSpec, transform: &MomTransform) -> Result<WorkloadSpec, SimError> {
    spec.validate()?;
    transform.validate()?;
    let out = WorkloadSpec {
        alpha: spec.alpha * transform.memory_slope_factor,
        beta: spec.beta + transform.fixed_memory_delta,
        gamma: spec.gamma * (1.0 + transform.latency_slope_overhead),
        delta: spec.delta + transform.fixed_latency_delta,
        utilization_floor: spec.utilization_floor,
        effective_memory_ratio: transform
            .effective_memory_ratio_override
            .unwrap_or(spec.effective_memory_ratio),
        noise_sigma: spec.noise_sigma,
        device_memory: spec.device_memory,
        rng_seed: spec.rng_seed.wrapping_add(fnv1a64(&transform.name)),
    };
    out.validate().map_err(|e| SimError::InvalidTransform {
        name: transform.name.clone(),
        msg: e.to_string(),
    })?;
    Ok(out)
}

/// Largest batch that fits the effective budget under the noiseless memory
/// ground truth: exponential probe for an out-of-memory bound, then binary
/// search.
pub fn empirical_max_batch(spec: &WorkloadSpec) -> Result<u32, SimError> {
    spec.validate()?;
    let budget = spec.effective_budget();
    if spec.true_memory(1) > budget {
        return Err(SimError::InfeasibleAtBatchOne { budget });
    }
    let mut hi: u32 = 1;
    while spec.true_memory(hi) <= budget {
        match hi.checked_mul(2) {
            Some(next) => hi = next,
            None => return Ok(u32::MAX), // alpha > 0 makes this unreachable for sane budgets
        }
    }
    // invariant: fits(lo), !fits(hi)
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if spec.true_memory(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Exhaustively find the true maximum throughput: evaluate the noiseless
/// records-per-second ratio at every feasible integer batch. Ties go to the
/// larger batch. This is the oracle predictions are validated against.
pub fn brute_force_max_throughput(spec: &WorkloadSpec) -> Result<(u32, f64), SimError> {
    let max_batch = empirical_max_batch(spec)?;
    let mut best_batch = 1;
    let mut best = f64::MIN;
    for batch in 1..=max_batch {
        let v = f64::from(batch) / spec.true_latency(batch);
        if v >= best {
            best = v;
            best_batch = batch;
        }
    }
    Ok((best_batch, best))
}

fn fnv1a64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    /// alpha 0.10 GB/rec, beta 2 GB, gamma 0.01 s/rec, delta 0.5 s, M 16 GB.
    pub(crate) fn reference_spec() -> WorkloadSpec {
        WorkloadSpec {
            alpha: 0.10,
            beta: 2.0,
            gamma: 0.01,
            delta: 0.5,
            utilization_floor: 1,
            effective_memory_ratio: 1.0,
            noise_sigma: 0.0,
            device_memory: 16.0,
            rng_seed: 42,
        }
    }

    #[test]
    fn noiseless_step_matches_closed_form() {
        let spec = reference_spec();
        match simulate_step(&spec, 140).unwrap() {
            StepOutcome::Measured {
                peak_memory_bytes,
                latency_s,
            } => {
                assert_eq!(peak_memory_bytes, 16_000_000_000);
                assert!((latency_s - 1.9).abs() < 1e-12);
            }
            StepOutcome::Oom => panic!("batch 140 fits exactly"),
        }
    }

    #[test]
    fn step_past_budget_is_oom() {
        let spec = reference_spec();
        assert_eq!(simulate_step(&spec, 141).unwrap(), StepOutcome::Oom);
    }

    #[test]
    fn utilization_floor_flattens_small_batches() {
        let spec = WorkloadSpec {
            utilization_floor: 16,
            ..reference_spec()
        };
        match simulate_step(&spec, 8).unwrap() {
            StepOutcome::Measured { latency_s, .. } => {
                assert!((latency_s - 0.66).abs() < 1e-12);
            }
            StepOutcome::Oom => panic!("batch 8 fits"),
        }
        // at and above the floor the latency is linear
        for batch in [16, 20, 64] {
            let expected = 0.01 * f64::from(batch) + 0.5;
            match simulate_step(&spec, batch).unwrap() {
                StepOutcome::Measured { latency_s, .. } => {
                    assert!((latency_s - expected).abs() < 1e-12);
                }
                StepOutcome::Oom => panic!("batch {batch} fits"),
            }
        }
    }

    #[test]
    fn generated_series_is_deterministic() {
        let spec = WorkloadSpec {
            noise_sigma: 0.02,
            ..reference_spec()
        };
        let batches: Vec<u32> = (1..=40).map(|i| i * 4).collect();
        let a = generate_profile(&spec, &batches, "m", "original").unwrap();
        let b = generate_profile(&spec, &batches, "m", "original").unwrap();
        assert_eq!(a, b);
        // noise is per-batch, not per-call-order: a subset generates
        // identical points
        let c = generate_profile(&spec, &batches[10..20], "m", "original").unwrap();
        assert_eq!(&a.points()[10..20], c.points());
    }

    #[test]
    fn generated_series_advertises_full_device_memory() {
        let spec = WorkloadSpec {
            effective_memory_ratio: 0.8,
            ..reference_spec()
        };
        let batches: Vec<u32> = (1..=36).map(|i| i * 4).collect();
        let series = generate_profile(&spec, &batches, "m", "original").unwrap();
        assert_eq!(series.device_memory_bytes(), 16_000_000_000);
        // largest non-OOM batch honors the fragmented budget
        let last_ok = series
            .points()
            .iter()
            .filter(|p| !p.oom)
            .map(|p| p.batch_size)
            .max()
            .unwrap();
        assert_eq!(last_ok, 108); // grid step 4: floor((16*0.8 - 2)/0.10) = 108
        assert!(series.points().iter().any(|p| p.oom));
    }

    #[test]
    fn empty_batch_list_rejected() {
        assert!(matches!(
            generate_profile(&reference_spec(), &[], "m", "original"),
            Err(SimError::EmptyBatches)
        ));
    }

    #[test]
    fn apply_mom_scales_coefficients() {
        let spec = reference_spec();
        // the two reference methods used throughout the tests
        let mom_a = apply_mom(&spec, &MomTransform::new("mom_a", 0.4, 0.3)).unwrap();
        assert!((mom_a.alpha - 0.04).abs() < 1e-15);
        assert!((mom_a.gamma - 0.013).abs() < 1e-15);
        let mom_b = apply_mom(&spec, &MomTransform::new("mom_b", 0.2, 0.2)).unwrap();
        assert!((mom_b.alpha - 0.02).abs() < 1e-15);
        assert!((mom_b.gamma - 0.012).abs() < 1e-15);
    }

    #[test]
    fn identity_transform_changes_only_the_seed() {
        let spec = reference_spec();
        let out = apply_mom(&spec, &MomTransform::new("identity", 1.0, 0.0)).unwrap();
        assert_ne!(out.rng_seed, spec.rng_seed);
        let normalized = WorkloadSpec {
            rng_seed: spec.rng_seed,
            ..out
        };
        assert_eq!(normalized, spec);
    }

    #[test]
    fn invalid_transform_rejected() {
        let spec = reference_spec();
        assert!(apply_mom(&spec, &MomTransform::new("bad", 0.0, 0.3)).is_err());
        assert!(apply_mom(&spec, &MomTransform::new("bad", 1.5, 0.3)).is_err());
        assert!(apply_mom(&spec, &MomTransform::new("bad", 0.4, -1.0)).is_err());
    }

    #[test]
    fn empirical_max_batch_matches_closed_form() {
        let spec = reference_spec();
        assert_eq!(empirical_max_batch(&spec).unwrap(), 140);
        let fragmented = WorkloadSpec {
            effective_memory_ratio: 0.8,
            ..spec.clone()
        };
        assert_eq!(empirical_max_batch(&fragmented).unwrap(), 108);
        let dead = WorkloadSpec {
            beta: 13.0,
            effective_memory_ratio: 0.8,
            ..spec
        };
        assert!(matches!(
            empirical_max_batch(&dead),
            Err(SimError::InfeasibleAtBatchOne { .. })
        ));
    }

    #[test]
    fn oracle_boundary_matches_floor_formula() {
        for (alpha, beta, m, f) in [
            (0.10, 2.0, 16.0, 1.0),
            (0.10, 2.0, 16.0, 0.8),
            (0.03, 1.5, 24.0, 0.95),
            (0.25, 0.0, 16.0, 0.5),
        ] {
            let spec = WorkloadSpec {
                alpha,
                beta,
                effective_memory_ratio: f,
                device_memory: m,
                ..reference_spec()
            };
            let expected = ((m * f - beta) / alpha).floor() as u32;
            assert_eq!(empirical_max_batch(&spec).unwrap(), expected);
        }
    }

    #[test]
    fn brute_force_reference_values() {
        let spec = reference_spec();
        let (batch, v) = brute_force_max_throughput(&spec).unwrap();
        assert_eq!(batch, 140);
        assert!((v - 73.68421052631578).abs() < 1e-9);

        let mom_a = WorkloadSpec {
            alpha: 0.04,
            gamma: 0.013,
            ..reference_spec()
        };
        let (batch, v) = brute_force_max_throughput(&mom_a).unwrap();
        assert_eq!(batch, 350);
        assert!((v - 69.3069306930693).abs() < 1e-6);
    }

    #[test]
    fn zero_fixed_cost_ties_break_to_largest_batch() {
        // dyadic coefficients keep every throughput exactly 1/gamma, so the
        // scan sees true ties and the tie-break decides
        let spec = WorkloadSpec {
            alpha: 0.125,
            beta: 2.0,
            gamma: 0.015625,
            delta: 0.0,
            ..reference_spec()
        };
        let (batch, v) = brute_force_max_throughput(&spec).unwrap();
        assert_eq!(batch, 112); // (16 - 2) / 0.125
        assert_eq!(v, 64.0); // 1 / gamma exactly
    }

    #[test]
    fn latency_is_exactly_linear_at_and_above_the_floor() {
        let spec = WorkloadSpec {
            utilization_floor: 16,
            ..reference_spec()
        };
        let batches: Vec<u32> = (1..=32).map(|i| i * 4).collect();
        let series = generate_profile(&spec, &batches, "m", "original").unwrap();
        for (batch, _, lat) in series.measured() {
            let line = spec.gamma * f64::from(batch) + spec.delta;
            if batch >= 16 {
                assert!((lat - line).abs() < 1e-12, "batch {batch} off the line");
            } else {
                assert!(lat > line + 1e-9, "batch {batch} should sit above the line");
            }
        }
    }
}
