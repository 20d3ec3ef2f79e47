//! Linear cost models: memory and latency fits plus the combined per-method
//! [`CostModel`] that every prediction consumes.
//!
//! Units are normalized once at the file boundary and stay fixed from there:
//! memory in gigabytes (decimal, 1 GB = 1e9 bytes), latency in seconds,
//! batch sizes in records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Decimal gigabyte, the internal memory unit. Profile files carry bytes.
pub const BYTES_PER_GB: f64 = 1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("incremental memory cost must be positive, got {0} GB/record")]
    NonPositiveAlpha(f64),
    #[error("fixed memory cost must be nonnegative, got {0} GB")]
    NegativeBeta(f64),
    #[error("incremental latency cost must be positive, got {0} s/record")]
    NonPositiveGamma(f64),
    #[error("fixed latency cost must be nonnegative, got {0} s")]
    NegativeDelta(f64),
    #[error("device memory must be positive, got {0} GB")]
    NonPositiveDeviceMemory(f64),
}

/// Range of x values a fit was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRange {
    pub min: f64,
    pub max: f64,
}

/// Slope/intercept pair with fit-quality diagnostics.
///
/// `slope` and `intercept` come from least squares over the sampled points;
/// `r_squared` and `pearson_r` are evaluated over *all* points the fit was
/// offered (post knee exclusion), not just the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination in [0, 1].
    pub r_squared: f64,
    /// Pearson correlation in [-1, 1].
    pub pearson_r: f64,
    pub fit_range: FitRange,
    /// Number of sampled points the least-squares solve used.
    pub n_points_used: usize,
}

/// Peak memory model `m(x) = alpha * x + beta` (GB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    /// Incremental memory cost per record, GB.
    #[serde(rename = "alpha_gb_per_record")]
    pub alpha: f64,
    /// Fixed memory cost, GB.
    #[serde(rename = "beta_gb")]
    pub beta: f64,
    /// Present when the model came from a profile fit; absent for models
    /// built directly from coefficients (scaling laws, synthetic specs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<LinearFit>,
}

impl MemoryModel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0) {
            return Err(ModelError::NonPositiveAlpha(alpha));
        }
        if !(beta >= 0.0) {
            return Err(ModelError::NegativeBeta(beta));
        }
        Ok(Self {
            alpha,
            beta,
            fit: None,
        })
    }

    pub fn with_fit(alpha: f64, beta: f64, fit: LinearFit) -> Result<Self, ModelError> {
        let mut m = Self::new(alpha, beta)?;
        m.fit = Some(fit);
        Ok(m)
    }

    /// Predicted peak memory in GB at the given batch size.
    pub fn predict(&self, batch: f64) -> f64 {
        self.alpha * batch + self.beta
    }
}

/// Batch latency model `t(x) = gamma * x + delta` (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Incremental execution cost per record, seconds.
    #[serde(rename = "gamma_s_per_record")]
    pub gamma: f64,
    /// Fixed execution cost, seconds.
    #[serde(rename = "delta_s")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<LinearFit>,
}

impl LatencyModel {
    pub fn new(gamma: f64, delta: f64) -> Result<Self, ModelError> {
        if !(gamma > 0.0) {
            return Err(ModelError::NonPositiveGamma(gamma));
        }
        if !(delta >= 0.0) {
            return Err(ModelError::NegativeDelta(delta));
        }
        Ok(Self {
            gamma,
            delta,
            fit: None,
        })
    }

    pub fn with_fit(gamma: f64, delta: f64, fit: LinearFit) -> Result<Self, ModelError> {
        let mut m = Self::new(gamma, delta)?;
        m.fit = Some(fit);
        Ok(m)
    }

    /// Predicted batch latency in seconds at the given batch size.
    pub fn predict(&self, batch: f64) -> f64 {
        self.gamma * batch + self.delta
    }
}

/// Paired memory and latency models for one training method on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "method")]
    pub method_id: String,
    pub memory: MemoryModel,
    pub latency: LatencyModel,
    /// Device memory budget, GB.
    #[serde(rename = "device_memory_gb")]
    pub device_memory: f64,
    /// True when `beta + alpha > device_memory`: the method cannot run even
    /// a single-record batch on this device.
    pub infeasible_at_batch_1: bool,
}

impl CostModel {
    pub fn new(
        model_id: impl Into<String>,
        method_id: impl Into<String>,
        memory: MemoryModel,
        latency: LatencyModel,
        device_memory: f64,
    ) -> Result<Self, ModelError> {
        if !(device_memory > 0.0) {
            return Err(ModelError::NonPositiveDeviceMemory(device_memory));
        }
        let infeasible = memory.beta + memory.alpha > device_memory;
        Ok(Self {
            model_id: model_id.into(),
            method_id: method_id.into(),
            memory,
            latency,
            device_memory,
            infeasible_at_batch_1: infeasible,
        })
    }

    /// Build a model straight from coefficients, without fit diagnostics.
    pub fn from_coefficients(
        model_id: impl Into<String>,
        method_id: impl Into<String>,
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        device_memory: f64,
    ) -> Result<Self, ModelError> {
        Self::new(
            model_id,
            method_id,
            MemoryModel::new(alpha, beta)?,
            LatencyModel::new(gamma, delta)?,
            device_memory,
        )
    }

    /// Copy with the fixed latency cost replaced (multi-GPU sweeps). The
    /// latency fit diagnostic no longer describes the model, so it is
    /// dropped.
    pub fn with_delta(&self, delta: f64) -> Result<Self, ModelError> {
        let mut out = self.clone();
        out.latency = LatencyModel::new(self.latency.gamma, delta)?;
        Ok(out)
    }
}
