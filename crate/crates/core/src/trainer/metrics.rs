use serde::{Deserialize, Serialize};

use crate::env::SessionTrace;

/// Session totals: dwell, continues and realized revenue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub r_rs: f64,
    pub r_as: f64,
    pub r_rev: f64,
    pub length: usize,
}

pub fn compute_session_metrics(trace: &SessionTrace) -> SessionMetrics {
    let mut m = SessionMetrics::default();
    for s in &trace.steps {
        m.r_rs += s.response.dwell;
        m.r_as += s.response.cont as u8 as f64;
        m.r_rev += s.response.revenue;
    }
    m.length = trace.steps.len();
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two sessions).
    pub std: f64,
}

impl MetricSummary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return MetricSummary {
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MetricSummary { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sessions: usize,
    pub r_rs: MetricSummary,
    pub r_as: MetricSummary,
    pub r_rev: MetricSummary,
}

pub fn summarize(metrics: &[SessionMetrics]) -> Summary {
    Summary {
        sessions: metrics.len(),
        r_rs: MetricSummary::of(metrics.iter().map(|m| m.r_rs)),
        r_as: MetricSummary::of(metrics.iter().map(|m| m.r_as)),
        r_rev: MetricSummary::of(metrics.iter().map(|m| m.r_rev)),
    }
}
