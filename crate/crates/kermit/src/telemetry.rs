//! Raw telemetry samples and their aggregation into observation, analytic,
//! and rate-of-change window streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("window {0} contains no samples")]
    EmptyWindow(u64),
    #[error("sample has {got} values, schema expects {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("windows {prev} and {curr} are not consecutive")]
    NonConsecutive { prev: u64, curr: u64 },
    #[error("sample at {0} lies outside the window span")]
    OutOfSpan(f64),
    #[error("malformed sample line: {0}")]
    BadSampleLine(String),
}

/// Ordered, fixed set of feature names shared by every stream in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Self {
        assert!(!names.is_empty(), "feature schema must not be empty");
        for (i, a) in names.iter().enumerate() {
            assert!(
                !names[i + 1..].contains(a),
                "duplicate feature name: {a}"
            );
        }
        Self { names }
    }

    /// The default agent-metric schema used by bundled scenarios.
    pub fn standard() -> Self {
        Self::new(
            [
                "cpu_user_pct",
                "cpu_sys_pct",
                "mem_used_pct",
                "disk_read_mbs",
                "disk_write_mbs",
                "net_rx_mbs",
                "net_tx_mbs",
                "active_containers",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One timestamped measurement from a monitoring agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp: f64,
    pub source_id: String,
    pub values: Vec<f64>,
}

impl RawSample {
    /// Wire format: `ts,source_id,v1,...,vF`.
    pub fn to_line(&self) -> String {
        let mut line = format!("{},{}", self.timestamp, self.source_id);
        for v in &self.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line
    }

    pub fn parse_line(line: &str, schema: &FeatureSchema) -> Result<Self, TelemetryError> {
        let mut parts = line.split(',');
        let ts = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| TelemetryError::BadSampleLine(line.to_string()))?;
        let source = parts
            .next()
            .ok_or_else(|| TelemetryError::BadSampleLine(line.to_string()))?;
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| TelemetryError::BadSampleLine(line.to_string()))?;
        if values.len() != schema.len() {
            return Err(TelemetryError::SchemaMismatch {
                expected: schema.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            timestamp: ts,
            source_id: source.to_string(),
            values,
        })
    }
}

/// Sample mean/std/min/max of one feature over one window.
///
/// `std` uses the n-1 denominator so it can feed Welch's test directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub n: u64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    /// Compute stats over a non-empty value set. Values are sorted first so
    /// the result is bit-identical under any permutation of the input.
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
        let n = sorted.len();
        let sum: f64 = sorted.iter().sum();
        let mean = sum / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            let m2: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
            (m2 / (n - 1) as f64).sqrt()
        };
        Self {
            mean,
            std,
            n: n as u64,
            min: sorted[0],
            max: sorted[n - 1],
        }
    }

    /// Pool this batch's stats with another batch of the same feature.
    pub fn merge(&self, other: &SampleStats) -> SampleStats {
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let mean = (na * self.mean + nb * other.mean) / n;
        let m2a = self.std * self.std * (na - 1.0).max(0.0);
        let m2b = other.std * other.std * (nb - 1.0).max(0.0);
        let delta = other.mean - self.mean;
        let m2 = m2a + m2b + delta * delta * na * nb / n;
        let std = if self.n + other.n <= 1 {
            0.0
        } else {
            (m2 / (n - 1.0)).sqrt()
        };
        SampleStats {
            mean,
            std,
            n: self.n + other.n,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

/// Fixed-duration aggregate of raw telemetry: per-feature statistics plus
/// the feature vector (the per-feature means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub per_feature: Vec<SampleStats>,
    pub feature_vector: Vec<f64>,
}

/// The feature-vector form of an observation window, consumed by classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticWindow {
    pub index: u64,
    pub features: Vec<f64>,
}

/// First difference of consecutive analytic windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateWindow {
    pub index: u64,
    pub deltas: Vec<f64>,
}

/// Aggregate the samples of one window span into per-feature statistics.
/// All sources are pooled. An empty sample set signals an agent outage;
/// the caller substitutes the previous window and logs.
pub fn aggregate_window(
    samples: &[RawSample],
    schema: &FeatureSchema,
    index: u64,
    span: (f64, f64),
) -> Result<ObservationWindow, TelemetryError> {
    if samples.is_empty() {
        return Err(TelemetryError::EmptyWindow(index));
    }
    let f = schema.len();
    for s in samples {
        if s.values.len() != f {
            return Err(TelemetryError::SchemaMismatch {
                expected: f,
                got: s.values.len(),
            });
        }
        if s.timestamp < span.0 || s.timestamp >= span.1 {
            return Err(TelemetryError::OutOfSpan(s.timestamp));
        }
    }
    let mut per_feature = Vec::with_capacity(f);
    let mut column = Vec::with_capacity(samples.len());
    for i in 0..f {
        column.clear();
        column.extend(samples.iter().map(|s| s.values[i]));
        per_feature.push(SampleStats::from_values(&column));
    }
    let feature_vector = per_feature.iter().map(|s| s.mean).collect();
    Ok(ObservationWindow {
        index,
        start: span.0,
        end: span.1,
        per_feature,
        feature_vector,
    })
}

/// Identity mapping on the feature means; index preserved.
pub fn to_analytic_window(o: &ObservationWindow) -> AnalyticWindow {
    AnalyticWindow {
        index: o.index,
        features: o.feature_vector.clone(),
    }
}

/// Elementwise difference of two consecutive analytic windows.
pub fn rate_transform(
    prev: &AnalyticWindow,
    curr: &AnalyticWindow,
) -> Result<RateWindow, TelemetryError> {
    if curr.index != prev.index + 1 {
        return Err(TelemetryError::NonConsecutive {
            prev: prev.index,
            curr: curr.index,
        });
    }
    Ok(RateWindow {
        index: curr.index,
        deltas: curr
            .features
            .iter()
            .zip(&prev.features)
            .map(|(c, p)| c - p)
            .collect(),
    })
}
