//! Throughput prediction and the memory-saving verdict.
//!
//! Throughput at batch `x` is `v(x) = x / (gamma*x + delta)`: monotone
//! increasing with a hard ceiling of `1/gamma`, with diminishing returns
//! because growth comes entirely from amortizing the fixed cost `delta`.
//! The largest batch a method can run is pinned by memory,
//! `x_max = (M - beta) / alpha`, so its best throughput is `v(x_max)`.
//!
//! For a memory saver compared against baseline training with shared fixed
//! costs, `max(v_mom) >= max(v_0)` collapses to a batch-size-free test: the
//! memory saved per unit of slope overhead,
//! `P = (alpha_0 - alpha_mom) / (gamma_mom - gamma_0)` (the Papaya Score),
//! must reach `P_hat = (M - beta) / delta` (the Papaya Point).
//!
//! Verdicts here decide `beneficial` by comparing predicted maximum
//! throughputs directly (that comparison is total, while the score/point
//! ratio degenerates when the method has no slope overhead) and report the
//! score and point as the explaining diagnostic. Ties count as beneficial.
//! Continuous-batch numbers drive every decision; integer-batch numbers are
//! reported for operators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CostModel;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{method}: cannot run a single-record batch within {budget:.3} GB")]
    InfeasibleAtBatchOne { method: String, budget: f64 },
    #[error("neither {baseline} nor {mom} can run a single-record batch")]
    BothInfeasible { baseline: String, mom: String },
    #[error("point undefined: fixed latency cost is zero")]
    UndefinedPoint,
    #[error("device memory differs: {baseline_gb} GB vs {mom_gb} GB")]
    DeviceMismatch { baseline_gb: f64, mom_gb: f64 },
    #[error("models come from different workloads: {baseline:?} vs {mom:?}")]
    ModelMismatch { baseline: String, mom: String },
    #[error("{method}: effective memory budget is not above the fixed cost")]
    ExhaustedBudget { method: String },
}

/// Largest feasible batch and the throughput there, for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPrediction {
    /// Continuous batch solving `alpha*x + beta = M`.
    pub max_batch_continuous: f64,
    /// `floor(max_batch_continuous)`, at least 1.
    pub max_batch_integer: u64,
    /// Records/second at the continuous max batch.
    pub max_throughput: f64,
    /// Records/second at the integer max batch.
    pub max_throughput_integer: f64,
    /// Batch latency at the continuous max batch, seconds.
    pub at_latency: f64,
}

/// Effective memory ratios after fragmentation, per method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentationConfig {
    pub f_original: f64,
    pub f_mom: f64,
}

impl FragmentationConfig {
    pub fn new(f_original: f64, f_mom: f64) -> Result<Self, ScoreError> {
        for f in [f_original, f_mom] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ScoreError::ExhaustedBudget {
                    method: format!("effective memory ratio {f} outside (0, 1]"),
                });
            }
        }
        Ok(Self { f_original, f_mom })
    }
}

/// Which inequality produced an attached diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    /// Per-method fixed costs, no shared-cost assumption.
    General,
    /// Fragmentation-adjusted score/point comparison.
    Fragmented,
}

/// Raw sides of the inequality a verdict variant evaluated, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityDiagnostic {
    pub kind: InequalityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lhs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
    /// Whether the inequality itself held, when it was evaluable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holds: Option<bool>,
    /// True when the inequality degenerated and the decision fell back to
    /// the direct throughput comparison.
    pub used_direct_fallback: bool,
}

/// The decision for one memory saver against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PapayaVerdict {
    /// Memory saved per unit of slope overhead; +inf for a dominating
    /// method, -inf for one that saves nothing.
    #[serde(with = "nonfinite_f64")]
    pub score: f64,
    /// False when the method adds no slope overhead (zero denominator).
    pub score_defined: bool,
    /// Threshold the score must reach, `(M - beta) / delta` from the
    /// baseline fit.
    #[serde(with = "nonfinite_f64")]
    pub point: f64,
    /// Whether the method's maximum throughput is at least the baseline's.
    pub beneficial: bool,
    /// True when the baseline cannot run at all and the method can.
    pub by_necessity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_prediction: Option<ThroughputPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mom_prediction: Option<ThroughputPrediction>,
    /// `max(v_mom) / max(v_0)`; at least 1 means beneficial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_max_throughput: Option<f64>,
    /// Score over point; at least 1 means beneficial under shared fixed
    /// costs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequality: Option<InequalityDiagnostic>,
}

/// Records/second at a batch size: `x / (gamma*x + delta)`.
pub fn throughput_at(model: &CostModel, batch: f64) -> f64 {
    debug_assert!(batch >= 1.0, "throughput is defined for batch >= 1");
    batch / model.latency.predict(batch)
}

/// Slope of the throughput curve: `delta / (gamma*x + delta)^2`.
pub fn throughput_derivative(model: &CostModel, batch: f64) -> f64 {
    debug_assert!(batch >= 1.0);
    let t = model.latency.predict(batch);
    model.latency.delta / (t * t)
}

/// Wall time for a whole run at a sustained throughput:
/// `epochs * records_per_epoch / throughput`, seconds. Raising maximum
/// throughput is exactly what shortens training.
pub fn total_training_latency(records_per_epoch: f64, epochs: f64, throughput: f64) -> f64 {
    epochs * records_per_epoch / throughput
}

/// Largest feasible batch under the device budget and the throughput there.
pub fn predict_max(model: &CostModel) -> Result<ThroughputPrediction, ScoreError> {
    predict_max_with_budget(model, model.device_memory)
}

/// As [`predict_max`], against an arbitrary effective budget (GB).
pub fn predict_max_with_budget(
    model: &CostModel,
    budget: f64,
) -> Result<ThroughputPrediction, ScoreError> {
    let x = (budget - model.memory.beta) / model.memory.alpha;
    if !(x >= 1.0) {
        return Err(ScoreError::InfeasibleAtBatchOne {
            method: model.method_id.clone(),
            budget,
        });
    }
    let xi = x.floor().max(1.0);
    Ok(ThroughputPrediction {
        max_batch_continuous: x,
        max_batch_integer: xi as u64,
        max_throughput: throughput_at(model, x),
        max_throughput_integer: throughput_at(model, xi),
        at_latency: model.latency.predict(x),
    })
}

/// Memory saved per unit of slope overhead. Returns `(value, defined)`:
/// when the method adds no slope overhead the ratio is undefined and the
/// value degenerates to +inf (it also saves memory: dominating) or -inf
/// (it saves nothing).
pub fn papaya_score(baseline: &CostModel, mom: &CostModel) -> (f64, bool) {
    let saving = baseline.memory.alpha - mom.memory.alpha;
    let overhead = mom.latency.gamma - baseline.latency.gamma;
    if overhead > 0.0 {
        (saving / overhead, true)
    } else if saving > 0.0 {
        (f64::INFINITY, false)
    } else {
        (f64::NEG_INFINITY, false)
    }
}

/// The threshold the score must reach: `(M - beta) / delta` from the
/// baseline, whose fixed costs stand in for both methods.
pub fn papaya_point(baseline: &CostModel) -> Result<f64, ScoreError> {
    if baseline.latency.delta == 0.0 {
        return Err(ScoreError::UndefinedPoint);
    }
    Ok((baseline.device_memory - baseline.memory.beta) / baseline.latency.delta)
}

/// Shared-fixed-cost verdict: score and point reported as the diagnostic,
/// beneficial decided by direct comparison of predicted max throughputs.
pub fn verdict(baseline: &CostModel, mom: &CostModel) -> Result<PapayaVerdict, ScoreError> {
    let v = build_verdict(
        baseline,
        mom,
        baseline.device_memory,
        mom.device_memory,
        None,
    )?;
    debug_assert!(
        agreement_holds(baseline, mom, &v),
        "score/point sign disagrees with direct comparison"
    );
    Ok(v)
}

/// Verdict without the shared-fixed-cost assumption: evaluates the
/// pre-simplification inequality with each method's own beta and delta and
/// attaches it as a diagnostic. When the left side degenerates (the method's
/// throughput ceiling sits below the baseline's maximum) the decision is the
/// direct comparison alone.
pub fn verdict_general(baseline: &CostModel, mom: &CostModel) -> Result<PapayaVerdict, ScoreError> {
    let m = baseline.device_memory;
    let diag = {
        let denom = (baseline.latency.gamma - mom.latency.gamma) * (m - baseline.memory.beta)
            + baseline.latency.delta * baseline.memory.alpha;
        if denom > 0.0 {
            let lhs = mom.latency.delta * mom.memory.alpha / denom;
            let rhs = (m - mom.memory.beta) / (m - baseline.memory.beta);
            InequalityDiagnostic {
                kind: InequalityKind::General,
                lhs: Some(lhs),
                rhs: Some(rhs),
                holds: Some(lhs <= rhs),
                used_direct_fallback: false,
            }
        } else {
            InequalityDiagnostic {
                kind: InequalityKind::General,
                lhs: None,
                rhs: None,
                holds: None,
                used_direct_fallback: true,
            }
        }
    };
    let v = build_verdict(baseline, mom, m, mom.device_memory, Some(diag))?;
    debug_assert!(
        v.baseline_prediction.is_none()
            || v.mom_prediction.is_none()
            || v.inequality
                .unwrap()
                .holds
                .is_none_or(|h| { h == v.beneficial || near_tie_throughput(&v) }),
        "general inequality disagrees with direct comparison"
    );
    Ok(v)
}

/// Fragmentation-adjusted verdict: predictions run against the effective
/// budgets `M * f`, and the diagnostic is the adjusted score/point
/// comparison with `M_0 = M*f_0 - beta` and `M_mom = M*f_mom - beta` (the
/// baseline's beta, as with the plain point). Falls back to the direct
/// comparison when the method has no slope overhead.
pub fn verdict_fragmented(
    baseline: &CostModel,
    mom: &CostModel,
    frag: &FragmentationConfig,
) -> Result<PapayaVerdict, ScoreError> {
    let budget0 = baseline.device_memory * frag.f_original;
    let budget_mom = mom.device_memory * frag.f_mom;
    if budget0 - baseline.memory.beta <= 0.0 {
        return Err(ScoreError::ExhaustedBudget {
            method: baseline.method_id.clone(),
        });
    }
    if budget_mom - mom.memory.beta <= 0.0 {
        return Err(ScoreError::ExhaustedBudget {
            method: mom.method_id.clone(),
        });
    }

    let m0 = budget0 - baseline.memory.beta;
    let m_mom = budget_mom - baseline.memory.beta;
    let overhead = mom.latency.gamma - baseline.latency.gamma;
    let diag = if overhead > 0.0 && baseline.latency.delta > 0.0 {
        let lhs = (baseline.memory.alpha * m0 - mom.memory.alpha * m_mom) / overhead;
        let rhs = m0 * m_mom / baseline.latency.delta;
        InequalityDiagnostic {
            kind: InequalityKind::Fragmented,
            lhs: Some(lhs),
            rhs: Some(rhs),
            holds: Some(lhs >= rhs),
            used_direct_fallback: false,
        }
    } else {
        InequalityDiagnostic {
            kind: InequalityKind::Fragmented,
            lhs: None,
            rhs: None,
            holds: None,
            used_direct_fallback: true,
        }
    };
    build_verdict(baseline, mom, budget0, budget_mom, Some(diag))
}

/// Relative disagreement between the two models' fixed costs, as
/// `(beta mismatch, delta mismatch)`. Above roughly 0.1 the shared-cost
/// simplification is suspect and the general verdict is worth reporting.
pub fn fixed_cost_mismatch(baseline: &CostModel, mom: &CostModel) -> (f64, f64) {
    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };
    (
        rel(baseline.memory.beta, mom.memory.beta),
        rel(baseline.latency.delta, mom.latency.delta),
    )
}

fn build_verdict(
    baseline: &CostModel,
    mom: &CostModel,
    budget_baseline: f64,
    budget_mom: f64,
    inequality: Option<InequalityDiagnostic>,
) -> Result<PapayaVerdict, ScoreError> {
    if (baseline.device_memory - mom.device_memory).abs()
        > 1e-9 * baseline.device_memory.max(mom.device_memory)
    {
        return Err(ScoreError::DeviceMismatch {
            baseline_gb: baseline.device_memory,
            mom_gb: mom.device_memory,
        });
    }
    if baseline.model_id != mom.model_id {
        return Err(ScoreError::ModelMismatch {
            baseline: baseline.model_id.clone(),
            mom: mom.model_id.clone(),
        });
    }

    let (score, score_defined) = papaya_score(baseline, mom);
    // raw point; +inf when delta is zero (a larger batch then buys nothing)
    let point = (baseline.device_memory - baseline.memory.beta) / baseline.latency.delta;

    let p0 = predict_max_with_budget(baseline, budget_baseline);
    let pm = predict_max_with_budget(mom, budget_mom);
    let (beneficial, by_necessity, baseline_prediction, mom_prediction) = match (p0, pm) {
        (Err(_), Err(_)) => {
            return Err(ScoreError::BothInfeasible {
                baseline: baseline.method_id.clone(),
                mom: mom.method_id.clone(),
            })
        }
        (Err(_), Ok(pm)) => (true, true, None, Some(pm)),
        (Ok(p0), Err(_)) => (false, false, Some(p0), None),
        (Ok(p0), Ok(pm)) => (
            pm.max_throughput >= p0.max_throughput,
            false,
            Some(p0),
            Some(pm),
        ),
    };

    let normalized_max_throughput = match (&baseline_prediction, &mom_prediction) {
        (Some(p0), Some(pm)) => Some(pm.max_throughput / p0.max_throughput),
        _ => None,
    };
    let normalized_score =
        (score_defined && point.is_finite() && point > 0.0).then(|| score / point);

    Ok(PapayaVerdict {
        score,
        score_defined,
        point,
        beneficial,
        by_necessity,
        baseline_prediction,
        mom_prediction,
        normalized_max_throughput,
        normalized_score,
        inequality,
    })
}

/// Under shared fixed costs and positive overhead, `score >= point` and the
/// direct comparison must agree (up to rounding at exact ties).
fn agreement_holds(baseline: &CostModel, mom: &CostModel, v: &PapayaVerdict) -> bool {
    let shared =
        baseline.memory.beta == mom.memory.beta && baseline.latency.delta == mom.latency.delta;
    if !v.score_defined || !shared || v.by_necessity {
        return true;
    }
    let (Some(_), Some(_)) = (&v.baseline_prediction, &v.mom_prediction) else {
        return true;
    };
    if near_tie_throughput(v) || near_tie(v.score, v.point) {
        return true;
    }
    (v.score >= v.point) == v.beneficial
}

fn near_tie_throughput(v: &PapayaVerdict) -> bool {
    match (&v.baseline_prediction, &v.mom_prediction) {
        (Some(p0), Some(pm)) => near_tie(p0.max_throughput, pm.max_throughput),
        _ => true,
    }
}

fn near_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Continuous maximum throughput if the model can run a single-record
/// batch, used by scaling sweeps.
pub(crate) fn continuous_max_throughput(model: &CostModel) -> Option<f64> {
    let x = (model.device_memory - model.memory.beta) / model.memory.alpha;
    (x >= 1.0).then(|| throughput_at(model, x))
}

/// JSON has no infinity; encode nonfinite values as strings.
mod nonfinite_f64 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("not a float: {other:?}"))),
            },
        }
    }
}
