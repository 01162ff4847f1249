//! Delivery metrics over traces and their aggregation across runs.

use std::io::Write;

use crate::error::{IdncError, Result};
use crate::sim::{RunTrace, TraceLabel};

pub const PER_SLOT_HEADER: &str = "algorithm,M,N,eps_mean,alpha,seed,t,mean_undelivered,stderr";
pub const SUMMARY_HEADER: &str = "algorithm,M,N,eps_mean,alpha,seed,runs,completion_time_mean,\
completion_time_stderr,cum_mean_undelivered_mean,cum_mean_undelivered_stderr";

/// Mean undelivered packets per receiver after slot `t`: `(Σ_i Û_{i,t}) / M`.
/// `t = 0` gives the value before the first transmission; slots past
/// completion give 0.
pub fn mean_undelivered_after(trace: &RunTrace, t: usize) -> f64 {
    let m = trace.num_receivers();
    trace.undelivered_after(t).iter().sum::<usize>() as f64 / m as f64
}

/// Sum of [`mean_undelivered_after`] over `t = 1..=T`.
pub fn cumulative_mean_undelivered(trace: &RunTrace) -> f64 {
    trace.cumulative_cost() as f64 / trace.num_receivers() as f64
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, stderr: (var / n).sqrt() }
    }
}

/// Cross-run summary of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub label: TraceLabel,
    pub runs: usize,
    /// Entry `t - 1` covers slot `t`, up to the largest completion time.
    pub per_slot: Vec<Estimate>,
    pub completion_time: Estimate,
    pub cum_mean_undelivered: Estimate,
}

/// Per-run data needed for aggregation: `Σ_i Û_{i,t}` for each slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub num_receivers: usize,
    pub slot_totals: Vec<usize>,
}

impl RunSummary {
    pub fn from_trace(trace: &RunTrace) -> Self {
        RunSummary {
            num_receivers: trace.num_receivers(),
            slot_totals: trace.slots.iter().map(|s| s.undelivered.iter().sum()).collect(),
        }
    }

    pub fn completion_time(&self) -> usize {
        self.slot_totals.len()
    }

    fn mean_after(&self, t: usize) -> f64 {
        self.slot_totals.get(t - 1).map_or(0.0, |&u| u as f64 / self.num_receivers as f64)
    }

    fn cumulative(&self) -> f64 {
        self.slot_totals.iter().sum::<usize>() as f64 / self.num_receivers as f64
    }
}

/// Aggregates traces that share one configuration.
pub fn aggregate(traces: &[RunTrace]) -> Result<AggregateMetrics> {
    let first = traces.first().ok_or(IdncError::NoTraces)?;
    if traces.iter().any(|t| t.label != first.label) {
        return Err(IdncError::MixedTraces);
    }
    let summaries: Vec<RunSummary> = traces.iter().map(RunSummary::from_trace).collect();
    aggregate_summaries(&first.label, &summaries)
}

/// [`aggregate`] over run summaries produced under `label`.
pub fn aggregate_summaries(label: &TraceLabel, runs: &[RunSummary]) -> Result<AggregateMetrics> {
    if runs.is_empty() {
        return Err(IdncError::NoTraces);
    }
    let horizon = runs.iter().map(RunSummary::completion_time).max().unwrap_or(0);
    let per_slot = (1..=horizon)
        .map(|t| {
            let xs: Vec<f64> = runs.iter().map(|r| r.mean_after(t)).collect();
            Estimate::from_samples(&xs)
        })
        .collect();
    let completion: Vec<f64> = runs.iter().map(|r| r.completion_time() as f64).collect();
    let cumulative: Vec<f64> = runs.iter().map(RunSummary::cumulative).collect();
    Ok(AggregateMetrics {
        label: label.clone(),
        runs: runs.len(),
        per_slot,
        completion_time: Estimate::from_samples(&completion),
        cum_mean_undelivered: Estimate::from_samples(&cumulative),
    })
}

impl AggregateMetrics {
    fn prefix(&self) -> String {
        let l = &self.label;
        let eps_mean = l.erasure_probs.iter().sum::<f64>() / l.erasure_probs.len() as f64;
        format!(
            "{},{},{},{},{},{}",
            l.scheduler,
            l.num_receivers,
            l.num_packets,
            format_sig6(eps_mean),
            l.alpha,
            l.master_seed
        )
    }

    /// Rows of `per_slot.csv`, without the header.
    pub fn per_slot_rows(&self) -> Vec<String> {
        let prefix = self.prefix();
        self.per_slot
            .iter()
            .enumerate()
            .map(|(k, e)| format!("{prefix},{},{},{}", k + 1, format_sig6(e.mean), format_sig6(e.stderr)))
            .collect()
    }

    /// The row of `summary.csv`, without the header.
    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.prefix(),
            self.runs,
            format_sig6(self.completion_time.mean),
            format_sig6(self.completion_time.stderr),
            format_sig6(self.cum_mean_undelivered.mean),
            format_sig6(self.cum_mean_undelivered.stderr)
        )
    }
}

/// Writes `per_slot.csv` for several aggregates.
pub fn write_per_slot_csv<W: Write>(mut w: W, aggregates: &[AggregateMetrics]) -> Result<()> {
    writeln!(w, "{PER_SLOT_HEADER}")?;
    for row in aggregates.iter().flat_map(AggregateMetrics::per_slot_rows) {
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Writes `summary.csv` for several aggregates.
pub fn write_summary_csv<W: Write>(mut w: W, aggregates: &[AggregateMetrics]) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for a in aggregates {
        writeln!(w, "{}", a.summary_row())?;
    }
    Ok(())
}

/// Formats like C's `%g`: six significant digits, trailing zeros dropped,
/// exponent form below `1e-4` or from `1e6`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
