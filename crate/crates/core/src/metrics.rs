//! Evaluation quantities: bits per cover token, per-step KL summaries,
//! Pinsker bounds and the aggregated per-method report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coder::{EncodeOutput, StepTrace};
use crate::method::MethodConfig;
use crate::truncation::{pinsker_bound, total_bound, Schedule};

/// Version of the report layout; bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no messages to summarize")]
    Empty,
    #[error("message {0} has no cover tokens")]
    NoTokens(usize),
}

/// Mean over messages of `bits / tokens`, from `(bits, tokens)` pairs.
pub fn bits_per_word(messages: &[(usize, usize)]) -> Result<f64, MetricsError> {
    if messages.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for (i, &(bits, tokens)) in messages.iter().enumerate() {
        if tokens == 0 {
            return Err(MetricsError::NoTokens(i));
        }
        sum += bits as f64 / tokens as f64;
    }
    Ok(sum / messages.len() as f64)
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `⌈q·n⌉` (1-based, at least 1).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

pub fn step_kl_summary(kls: &[f64]) -> Result<KlSummary, MetricsError> {
    if kls.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = kls.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(KlSummary {
        mean: kls.iter().sum::<f64>() / kls.len() as f64,
        p50: nearest_rank(&sorted, 0.50),
        p95: nearest_rank(&sorted, 0.95),
        p99: nearest_rank(&sorted, 0.99),
        max: sorted[sorted.len() - 1],
    })
}

/// Pinsker bound for one message, with the policy's a-priori bound when it
/// has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvdReport {
    pub total_kl: f64,
    pub empirical: f64,
    pub a_priori: Option<f64>,
}

pub fn tvd_bound_report(method: &MethodConfig, traces: &[StepTrace]) -> TvdReport {
    let total_kl: f64 = traces.iter().map(|t| t.kl).sum();
    let a_priori = match *method {
        MethodConfig::Saac { delta0, schedule, .. } => {
            let horizon = (schedule == Schedule::Constant).then_some(traces.len());
            total_bound(delta0, schedule, horizon).ok()
        }
        _ => None,
    };
    TvdReport { total_kl, empirical: pinsker_bound(total_kl), a_priori }
}

/// One encoded message as fed to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRun {
    /// Ciphertext length `L`, without framing.
    pub payload_bits: usize,
    pub output: EncodeOutput,
    pub wall_time: f64,
}

/// Aggregate results of one method over a message set.
///
/// `bits_per_word` counts every bit the cover consumes (length header and
/// padding included) per cover token, averaged per message;
/// `payload_bits_per_word` counts only ciphertext bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub method: String,
    pub params: String,
    pub config: MethodConfig,
    pub messages: usize,
    pub failures: usize,
    pub tokens: usize,
    pub bits_per_word: f64,
    pub payload_bits_per_word: f64,
    pub bits_per_word_micro: f64,
    /// Mean KL over all steps.
    pub mean_step_kl: f64,
    /// Mean over messages of the per-message mean step KL.
    pub mean_message_kl: f64,
    pub kl_percentiles: KlSummary,
    /// Mean per-step divergence added by rounding to integer widths.
    pub quantization_kl: f64,
    /// Largest per-message Pinsker bound.
    pub tvd_bound: f64,
    pub tvd_bound_mean: f64,
    /// Largest a-priori bound of the policy over the messages, if any.
    pub tvd_a_priori: Option<f64>,
    pub mean_k: f64,
    pub k_histogram: BTreeMap<usize, usize>,
    pub budget_violations: usize,
    /// Steps that carried no message bits.
    pub skipped_steps: usize,
    pub wall_time_per_message: f64,
}

impl MetricsReport {
    pub fn build(config: &MethodConfig, runs: &[MessageRun], failures: usize) -> Result<Self, MetricsError> {
        if runs.is_empty() {
            return Err(MetricsError::Empty);
        }
        let coded: Vec<(usize, usize)> = runs.iter().map(|r| (r.output.coded_bits, r.output.cover.len())).collect();
        let payload: Vec<(usize, usize)> = runs.iter().map(|r| (r.payload_bits, r.output.cover.len())).collect();
        let coded_rate = bits_per_word(&coded)?;
        let payload_rate = bits_per_word(&payload)?;
        let tokens: usize = coded.iter().map(|c| c.1).sum();
        let total_bits: usize = coded.iter().map(|c| c.0).sum();

        let steps: Vec<&StepTrace> = runs.iter().flat_map(|r| &r.output.traces).collect();
        let kls: Vec<f64> = steps.iter().map(|t| t.kl).collect();
        let kl_percentiles = step_kl_summary(&kls)?;
        let mean_message_kl = runs
            .iter()
            .map(|r| r.output.traces.iter().map(|t| t.kl).sum::<f64>() / r.output.traces.len() as f64)
            .sum::<f64>()
            / runs.len() as f64;

        let tvd: Vec<TvdReport> = runs.iter().map(|r| tvd_bound_report(config, &r.output.traces)).collect();
        let tvd_bound = tvd.iter().map(|t| t.empirical).fold(0.0, f64::max);
        let tvd_bound_mean = tvd.iter().map(|t| t.empirical).sum::<f64>() / tvd.len() as f64;
        let tvd_a_priori = tvd.iter().filter_map(|t| t.a_priori).reduce(f64::max);

        let mut k_histogram = BTreeMap::new();
        for t in &steps {
            *k_histogram.entry(t.k).or_insert(0) += 1;
        }
        let n = steps.len() as f64;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            method: config.family().to_string(),
            params: config.params(),
            config: *config,
            messages: runs.len(),
            failures,
            tokens,
            bits_per_word: coded_rate,
            payload_bits_per_word: payload_rate,
            bits_per_word_micro: total_bits as f64 / tokens as f64,
            mean_step_kl: kl_percentiles.mean,
            mean_message_kl,
            kl_percentiles,
            quantization_kl: steps.iter().map(|t| t.quant_kl).sum::<f64>() / n,
            tvd_bound,
            tvd_bound_mean,
            tvd_a_priori,
            mean_k: steps.iter().map(|t| t.k as f64).sum::<f64>() / n,
            k_histogram,
            budget_violations: steps.iter().filter(|t| t.budget_violation).count(),
            skipped_steps: steps.iter().filter(|t| !t.coded).count(),
            wall_time_per_message: runs.iter().map(|r| r.wall_time).sum::<f64>() / runs.len() as f64,
        })
    }
}

const CSV_HEADER: &str = "method,params,messages,failures,bits_per_word,payload_bits_per_word,mean_step_kl,kl_p95,quantization_kl,tvd_bound,mean_k";

/// CSV with one row per report.
pub fn to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},\"{}\",{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.method,
            r.params,
            r.messages,
            r.failures,
            r.bits_per_word,
            r.payload_bits_per_word,
            r.mean_step_kl,
            r.kl_percentiles.p95,
            r.quantization_kl,
            r.tvd_bound,
            r.mean_k
        );
    }
    out
}

/// Fixed-width table for terminals.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.config.label(),
                format!("{:.3}", r.bits_per_word),
                format!("{:.3}", r.payload_bits_per_word),
                format!("{:.4}", r.mean_step_kl),
                format!("{:.4}", r.kl_percentiles.p95),
                format!("{:.1}", r.mean_k),
                format!("{}/{}", r.failures, r.messages + r.failures),
            ]
        })
        .collect();
    let header = ["method", "bits/word", "payload b/w", "D_KL", "KL p95", "mean K", "failed"];
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    for row in &rows {
        line(&mut out, &row.each_ref().map(String::as_str));
    }
    out
}
