//! Advisory report assembly and rendering: everything an operator needs to
//! decide whether to switch a training run onto a memory saver.
//!
//! The JSON schema is versioned; every number in a report comes from a
//! module operation on the fitted models. Human-readable rendering mirrors
//! the normalized presentation: normalized score = score / point and
//! normalized max throughput = method / baseline, with at least 1 meaning
//! the method pays off.

use serde::{Deserialize, Serialize};

use crate::fit::FitConfig;
use crate::model::CostModel;
use crate::profile::ProfileSeries;
use crate::score::{
    fixed_cost_mismatch, predict_max, throughput_at, verdict, verdict_fragmented, verdict_general,
    FragmentationConfig, PapayaVerdict, ScoreError,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fixed costs may differ between fits by this relative margin before the
/// shared-cost simplification is flagged and the general verdict attached.
pub const FIXED_COST_MISMATCH_WARN: f64 = 0.10;

/// Fit quality below this is flagged in the warnings.
pub const FIT_QUALITY_WARN: f64 = 0.97;

/// Everything `advise` produces for one baseline and a set of memory
/// savers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvisoryReport {
    pub schema_version: u32,
    pub tool_version: String,
    /// Input files or labels the models came from.
    pub inputs: Vec<String>,
    /// Fit settings in effect, when any input was fitted for this run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_config: Option<FitConfig>,
    pub model_id: String,
    pub device_memory_gb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragmentation: Option<FragmentationConfig>,
    /// Baseline first, then each memory saver.
    pub methods: Vec<MethodSummary>,
    pub advisories: Vec<MomAdvisory>,
    pub warnings: Vec<String>,
}

/// Fitted coefficients and fit quality for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub alpha_gb_per_record: f64,
    pub beta_gb: f64,
    pub gamma_s_per_record: f64,
    pub delta_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared_memory: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared_latency: Option<f64>,
    /// Smallest batch the latency fit used (everything below was in the
    /// underutilized region).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_fit_from_batch: Option<f64>,
    pub infeasible_at_batch_1: bool,
}

impl MethodSummary {
    pub fn from_model(model: &CostModel) -> Self {
        Self {
            method: model.method_id.clone(),
            alpha_gb_per_record: model.memory.alpha,
            beta_gb: model.memory.beta,
            gamma_s_per_record: model.latency.gamma,
            delta_s: model.latency.delta,
            r_squared_memory: model.memory.fit.as_ref().map(|f| f.r_squared),
            r_squared_latency: model.latency.fit.as_ref().map(|f| f.r_squared),
            latency_fit_from_batch: model.latency.fit.as_ref().map(|f| f.fit_range.min),
            infeasible_at_batch_1: model.infeasible_at_batch_1,
        }
    }
}

/// Verdicts for one memory saver: the shared-cost verdict always, the
/// general one when the fixed costs visibly differ, the fragmented one when
/// ratios were supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomAdvisory {
    pub method: String,
    pub verdict: PapayaVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general: Option<PapayaVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragmented: Option<PapayaVerdict>,
}

/// Run every verdict and assemble the report.
pub fn build_advisory_report(
    baseline: &CostModel,
    moms: &[CostModel],
    fragmentation: Option<FragmentationConfig>,
    inputs: Vec<String>,
    fit_config: Option<FitConfig>,
) -> Result<AdvisoryReport, ScoreError> {
    let mut warnings = Vec::new();
    let mut methods = vec![MethodSummary::from_model(baseline)];
    let mut advisories = Vec::new();

    warn_fit_quality(baseline, &mut warnings);
    if baseline.infeasible_at_batch_1 {
        warnings.push(format!(
            "baseline {} cannot run a single-record batch; beneficial-by-necessity applies",
            baseline.method_id
        ));
    }

    for mom in moms {
        methods.push(MethodSummary::from_model(mom));
        warn_fit_quality(mom, &mut warnings);

        let v = verdict(baseline, mom)?;
        if !v.score_defined && v.score == f64::INFINITY {
            warnings.push(format!(
                "{}: saves memory with no slope overhead (dominating, score +inf)",
                mom.method_id
            ));
        }
        if v.by_necessity {
            warnings.push(format!(
                "{}: beneficial by necessity, the baseline cannot run at all",
                mom.method_id
            ));
        }

        let (beta_mismatch, delta_mismatch) = fixed_cost_mismatch(baseline, mom);
        let general = if beta_mismatch > FIXED_COST_MISMATCH_WARN
            || delta_mismatch > FIXED_COST_MISMATCH_WARN
        {
            warnings.push(format!(
                "{}: fixed costs differ from the baseline by {:.0}% (memory) / {:.0}% \
                 (latency); shared-cost score and point are approximate, see the general verdict",
                mom.method_id,
                beta_mismatch * 100.0,
                delta_mismatch * 100.0
            ));
            Some(verdict_general(baseline, mom)?)
        } else {
            None
        };

        let fragmented = match fragmentation {
            Some(frag) => Some(verdict_fragmented(baseline, mom, &frag)?),
            None => None,
        };

        advisories.push(MomAdvisory {
            method: mom.method_id.clone(),
            verdict: v,
            general,
            fragmented,
        });
    }

    Ok(AdvisoryReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        fit_config,
        model_id: baseline.model_id.clone(),
        device_memory_gb: baseline.device_memory,
        fragmentation,
        methods,
        advisories,
        warnings,
    })
}

fn warn_fit_quality(model: &CostModel, warnings: &mut Vec<String>) {
    for (label, fit) in [
        ("memory", &model.memory.fit),
        ("latency", &model.latency.fit),
    ] {
        if let Some(fit) = fit {
            if fit.r_squared < FIT_QUALITY_WARN {
                warnings.push(format!(
                    "{}: {label} fit r² {:.4} is below {FIT_QUALITY_WARN}; treat predictions \
                     with care",
                    model.method_id, fit.r_squared
                ));
            }
        }
    }
}

/// Fit-quality table for a set of fitted models.
pub fn render_fit_table(models: &[CostModel]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>12} {:>10} {:>12} {:>10} {:>8} {:>8} {:>10}\n",
        "method",
        "alpha GB/rec",
        "beta GB",
        "gamma s/rec",
        "delta s",
        "r2 mem",
        "r2 lat",
        "lat from"
    ));
    for m in models {
        let r2m = m
            .memory
            .fit
            .as_ref()
            .map_or("-".into(), |f| format!("{:.4}", f.r_squared));
        let r2l = m
            .latency
            .fit
            .as_ref()
            .map_or("-".into(), |f| format!("{:.4}", f.r_squared));
        let from = m
            .latency
            .fit
            .as_ref()
            .map_or("-".into(), |f| format!("{}", f.fit_range.min));
        out.push_str(&format!(
            "{:<16} {:>12.4} {:>10.3} {:>12.6} {:>10.3} {:>8} {:>8} {:>10}\n",
            m.method_id,
            m.memory.alpha,
            m.memory.beta,
            m.latency.gamma,
            m.latency.delta,
            r2m,
            r2l,
            from
        ));
    }
    out
}

/// Human-readable advisory table.
pub fn render_advisory(report: &AdvisoryReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {}  device {:.3} GB\n",
        report.model_id, report.device_memory_gb
    ));
    if let Some(frag) = &report.fragmentation {
        out.push_str(&format!(
            "effective memory ratios: baseline {:.2}, method {:.2}\n",
            frag.f_original, frag.f_mom
        ));
    }
    out.push_str(&format!(
        "{:<16} {:>10} {:>10} {:>11} {:>11} {:>10} {:>10} {:>12}\n",
        "method", "score", "point", "norm score", "norm v_max", "max batch", "v_max", "beneficial"
    ));
    for adv in &report.advisories {
        let v = pick_rendered_verdict(adv);
        let (batch, vmax) = match &v.mom_prediction {
            Some(p) => (
                p.max_batch_integer.to_string(),
                format!("{:.3}", p.max_throughput),
            ),
            None => ("-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{:<16} {:>10} {:>10} {:>11} {:>11} {:>10} {:>10} {:>12}\n",
            adv.method,
            fmt_score(v.score),
            fmt_score(v.point),
            v.normalized_score.map_or("-".into(), |x| format!("{x:.4}")),
            v.normalized_max_throughput
                .map_or("-".into(), |x| format!("{x:.4}")),
            batch,
            vmax,
            if v.by_necessity {
                "yes (necessity)"
            } else if v.beneficial {
                "yes"
            } else {
                "no"
            },
        ));
    }
    if let Some(first) = report.advisories.first() {
        if let Some(p) = &first.verdict.baseline_prediction {
            out.push_str(&format!(
                "baseline: max batch {}  v_max {:.3} rec/s\n",
                p.max_batch_integer, p.max_throughput
            ));
        }
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

/// The fragmented verdict supersedes the plain one for display when present.
fn pick_rendered_verdict(adv: &MomAdvisory) -> &PapayaVerdict {
    adv.fragmented.as_ref().unwrap_or(&adv.verdict)
}

fn fmt_score(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else if v > 0.0 {
        "+inf".into()
    } else {
        "-inf".into()
    }
}

/// Plot-ready series: measured-vs-predicted memory and latency rows plus the
/// throughput curve with the predicted maximum marked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotData {
    pub model_id: String,
    pub method: String,
    pub memory: Vec<PlotRow>,
    pub latency: Vec<PlotRow>,
    pub throughput: Vec<ThroughputRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_max_batch: Option<u64>,
}

/// One measured/predicted pair; `measured` is absent for rows synthesized
/// without a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub batch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<f64>,
    pub predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub batch: u64,
    pub records_per_second: f64,
    pub at_predicted_max: bool,
}

/// Build plot data for one model, joining a profile when one is supplied.
pub fn plot_data(model: &CostModel, profile: Option<&ProfileSeries>) -> PlotData {
    let prediction = predict_max(model).ok();
    let max_batch = prediction.map(|p| p.max_batch_integer);

    let (memory, latency) = match profile {
        Some(series) => {
            let mut memory = Vec::new();
            let mut latency = Vec::new();
            for (batch, gb, s) in series.measured() {
                let b = f64::from(batch);
                memory.push(PlotRow {
                    batch: b,
                    measured: Some(gb),
                    predicted: model.memory.predict(b),
                });
                latency.push(PlotRow {
                    batch: b,
                    measured: Some(s),
                    predicted: model.latency.predict(b),
                });
            }
            (memory, latency)
        }
        None => {
            let upper = max_batch.unwrap_or(64).max(2);
            let step = (upper / 32).max(1);
            let mut memory = Vec::new();
            let mut latency = Vec::new();
            let mut batch = 1;
            while batch <= upper {
                let b = batch as f64;
                memory.push(PlotRow {
                    batch: b,
                    measured: None,
                    predicted: model.memory.predict(b),
                });
                latency.push(PlotRow {
                    batch: b,
                    measured: None,
                    predicted: model.latency.predict(b),
                });
                batch += step;
            }
            (memory, latency)
        }
    };

    let throughput = match max_batch {
        Some(upper) => (1..=upper)
            .map(|batch| ThroughputRow {
                batch,
                records_per_second: throughput_at(model, batch as f64),
                at_predicted_max: batch == upper,
            })
            .collect(),
        None => Vec::new(),
    };

    PlotData {
        model_id: model.model_id.clone(),
        method: model.method_id.clone(),
        memory,
        latency,
        throughput,
        predicted_max_batch: max_batch,
    }
}
