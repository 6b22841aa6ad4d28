use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub mttr: usize,
    pub mttf: usize,
    pub mtbf: usize,
}

/// Mean intervals over an incident history. A metric with no samples is `None`.
///
/// MTTR spans occurrence to restoration; MTTF spans restoration to the next
/// occurrence; MTBF spans occurrence to the next occurrence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LifecycleMetrics {
    pub mttr_seconds: Option<f64>,
    pub mttf_seconds: Option<f64>,
    pub mtbf_seconds: Option<f64>,
    pub sample_counts: SampleCounts,
}

fn mean(samples: &[i64]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64)
    }
}

/// `history` holds `(occurred_at, restored_at)` pairs in chronological order.
pub fn lifecycle_metrics(history: &[(Timestamp, Timestamp)]) -> Result<LifecycleMetrics, MetricsError> {
    for (i, (occurred, restored)) in history.iter().enumerate() {
        if occurred >= restored {
            return Err(MetricsError::UnorderedHistory(format!(
                "entry {i} restores at {restored} before it occurs at {occurred}"
            )));
        }
    }
    for (i, pair) in history.windows(2).enumerate() {
        if pair[1].0 < pair[0].1 {
            return Err(MetricsError::UnorderedHistory(format!(
                "entry {} occurs at {} before entry {i} is restored at {}",
                i + 1,
                pair[1].0,
                pair[0].1
            )));
        }
    }

    let repair: Vec<i64> = history.iter().map(|(o, r)| (*r - *o).num_seconds()).collect();
    let to_failure: Vec<i64> = history.windows(2).map(|p| (p[1].0 - p[0].1).num_seconds()).collect();
    let between: Vec<i64> = history.windows(2).map(|p| (p[1].0 - p[0].0).num_seconds()).collect();

    Ok(LifecycleMetrics {
        mttr_seconds: mean(&repair),
        mttf_seconds: mean(&to_failure),
        mtbf_seconds: mean(&between),
        sample_counts: SampleCounts {
            mttr: repair.len(),
            mttf: to_failure.len(),
            mtbf: between.len(),
        },
    })
}
