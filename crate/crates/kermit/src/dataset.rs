//! Labeled feature vectors and the sparse `label idx:value` text format
//! (1-based indices) used for training-set files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("malformed instance line: {0}")]
    BadLine(String),
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
}

/// One training row: a dense feature vector and its integer class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub features: Vec<f64>,
    pub label: u32,
}

impl LabeledInstance {
    pub fn new(features: Vec<f64>, label: u32) -> Self {
        Self { features, label }
    }
}

/// Render one instance as `label idx:value ...`. Exact zeros are omitted.
pub fn to_sparse_line(instance: &LabeledInstance) -> String {
    let mut line = instance.label.to_string();
    for (i, &v) in instance.features.iter().enumerate() {
        if v != 0.0 {
            let _ = write!(line, " {}:{}", i + 1, v);
        }
    }
    line
}

/// Parse one `label idx:value ...` line into a dense vector of length `dim`.
/// Missing indices read as zero.
pub fn from_sparse_line(line: &str, dim: usize) -> Result<LabeledInstance, DatasetError> {
    let mut parts = line.split_whitespace();
    let label: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DatasetError::BadLine(line.to_string()))?;
    let mut features = vec![0.0; dim];
    for part in parts {
        let (idx, val) = part
            .split_once(':')
            .ok_or_else(|| DatasetError::BadLine(line.to_string()))?;
        let idx: usize = idx.parse().map_err(|_| DatasetError::BadLine(line.to_string()))?;
        let val: f64 = val.parse().map_err(|_| DatasetError::BadLine(line.to_string()))?;
        if idx == 0 || idx > dim {
            return Err(DatasetError::IndexOutOfRange { index: idx, dim });
        }
        features[idx - 1] = val;
    }
    Ok(LabeledInstance { features, label })
}

pub fn write_sparse(instances: &[LabeledInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&to_sparse_line(inst));
        out.push('\n');
    }
    out
}

pub fn read_sparse(text: &str, dim: usize) -> Result<Vec<LabeledInstance>, DatasetError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| from_sparse_line(l, dim))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sparse_line_format() {
        let inst = LabeledInstance::new(vec![1.5, 0.0, -2.0], 4);
        assert_eq!(to_sparse_line(&inst), "4 1:1.5 3:-2");
        let back = from_sparse_line("4 1:1.5 3:-2", 3).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn zero_only_vector_reads_back() {
        let inst = LabeledInstance::new(vec![0.0, 0.0], 9);
        let line = to_sparse_line(&inst);
        assert_eq!(line, "9");
        assert_eq!(from_sparse_line(&line, 2).unwrap(), inst);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(from_sparse_line("", 2).is_err());
        assert!(from_sparse_line("1 nope", 2).is_err());
        assert!(from_sparse_line("1 0:3.0", 2).is_err());
        assert_eq!(
            from_sparse_line("1 5:3.0", 2).unwrap_err(),
            DatasetError::IndexOutOfRange { index: 5, dim: 2 }
        );
    }

    proptest! {
        #[test]
        fn round_trip_preserves_instances(
            rows in prop::collection::vec(
                (0u32..50, prop::collection::vec(-100i32..100, 4)),
                1..30,
            )
        ) {
            let instances: Vec<LabeledInstance> = rows
                .into_iter()
                .map(|(label, vals)| {
                    LabeledInstance::new(vals.iter().map(|&v| v as f64 / 4.0).collect(), label)
                })
                .collect();
            let text = write_sparse(&instances);
            let back = read_sparse(&text, 4).unwrap();
            prop_assert_eq!(back, instances);
        }
    }
}
