//! Per-sample run records and their CSV / JSON serializations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Floor applied inside the geometric mean so exactly-satisfied constraints
/// (H = 0) do not collapse the statistic to log(0).
pub const GEOMEAN_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub terminal_cost: f64,
    pub residual_norm: f64,
    pub wallclock_ms: f64,
    /// Step index at which the trajectory diverged, if it did.
    pub diverged_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub n_samples: usize,
    pub divergences: usize,
    pub mean_cost: f64,
    pub median_cost: f64,
    pub geomean_cost: f64,
    pub p5_cost: f64,
    pub p50_cost: f64,
    pub p95_cost: f64,
    pub median_residual: f64,
    /// Task-specific scalar metrics (oracle deltas, kink medians, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

/// Batch result: per-sample terminal statistics plus summary aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<SampleRecord>,
    pub summary: Summary,
}

/// Linear-interpolation percentile of a sorted slice (q in [0, 1]).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

impl RunReport {
    pub fn from_records(records: Vec<SampleRecord>) -> Self {
        let finished: Vec<&SampleRecord> =
            records.iter().filter(|r| r.diverged_at.is_none()).collect();
        let mut costs: Vec<f64> = finished.iter().map(|r| r.terminal_cost).collect();
        costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut residuals: Vec<f64> = finished.iter().map(|r| r.residual_norm).collect();
        residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = costs.len();
        let mean_cost = if n == 0 { f64::NAN } else { costs.iter().sum::<f64>() / n as f64 };
        let geomean_cost = if n == 0 {
            f64::NAN
        } else {
            (costs.iter().map(|c| c.max(GEOMEAN_FLOOR).ln()).sum::<f64>() / n as f64).exp()
        };
        let summary = Summary {
            n_samples: records.len(),
            divergences: records.len() - n,
            mean_cost,
            median_cost: percentile(&costs, 0.5),
            geomean_cost,
            p5_cost: percentile(&costs, 0.05),
            p50_cost: percentile(&costs, 0.5),
            p95_cost: percentile(&costs, 0.95),
            median_residual: percentile(&residuals, 0.5),
            extra: BTreeMap::new(),
        };
        RunReport { records, summary }
    }

    /// Per-sample CSV with the deterministic columns first; wallclock is
    /// last because it varies run to run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,terminal_cost,residual_norm,wallclock_ms\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.sample_id, r.terminal_cost, r.residual_norm, r.wallclock_ms
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}
