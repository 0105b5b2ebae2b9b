//! Workload-label prediction at horizons t+1, t+5, t+10, and emission of
//! the per-window workload context stream consumed by the optimizer.
//!
//! The predictor is pluggable behind [`Predictor`]; the default is an
//! order-k frequency model with suffix backoff, which is deterministic and
//! exact on periodic label schedules. A recurrent-network implementation
//! can slot in later without touching callers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KbError, KnowledgeBase, Zone};
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("label sequence of length {0} is too short to train on")]
    TooShort(usize),
    #[error("context for window {index} is not newer than the last emitted ({last})")]
    OutOfOrder { index: u64, last: u64 },
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// Predicted labels at the three standard horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub t1: u32,
    pub t5: u32,
    pub t10: u32,
}

/// Anything that can forecast future labels from recent history.
pub trait Predictor {
    fn predict(&self, recent: &[u32]) -> Prediction;
}

/// Order-k frequency model: next-label counts per context suffix of length
/// 1..=k, plus marginal counts for total backoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel {
    pub order: usize,
    table: BTreeMap<Vec<u32>, BTreeMap<u32, u64>>,
    marginal: BTreeMap<u32, u64>,
}

/// Count successor frequencies for every suffix of length 1..=k.
pub fn train_predictor(labels: &[u32], k: usize) -> Result<SequenceModel, PredictError> {
    if labels.len() < 2 {
        return Err(PredictError::TooShort(labels.len()));
    }
    assert!(k >= 1);
    let mut table: BTreeMap<Vec<u32>, BTreeMap<u32, u64>> = BTreeMap::new();
    let mut marginal: BTreeMap<u32, u64> = BTreeMap::new();
    for i in 1..labels.len() {
        let next = labels[i];
        *marginal.entry(next).or_insert(0) += 1;
        for len in 1..=k.min(i) {
            let context = labels[i - len..i].to_vec();
            *table.entry(context).or_default().entry(next).or_insert(0) += 1;
        }
    }
    Ok(SequenceModel { order: k, table, marginal })
}

impl SequenceModel {
    /// Most frequent successor under the longest matching suffix, backing
    /// off to shorter suffixes and finally the marginal mode. Ties break to
    /// the smallest label.
    fn next(&self, recent: &[u32]) -> u32 {
        let start = recent.len().saturating_sub(self.order);
        let recent = &recent[start..];
        for len in (1..=recent.len()).rev() {
            if let Some(counts) = self.table.get(&recent[recent.len() - len..]) {
                return argmax(counts);
            }
        }
        argmax(&self.marginal)
    }

    /// Total count of order-1 contexts (equals |Y| - 1 after training).
    pub fn order1_total(&self) -> u64 {
        self.table
            .iter()
            .filter(|(c, _)| c.len() == 1)
            .flat_map(|(_, counts)| counts.values())
            .sum()
    }
}

fn argmax(counts: &BTreeMap<u32, u64>) -> u32 {
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&l, _)| l)
        .unwrap_or(UNKNOWN_LABEL)
}

impl Predictor for SequenceModel {
    /// Point predictions by iterating the one-step argmax; t+1 is the first
    /// step of the same rollout by construction.
    fn predict(&self, recent: &[u32]) -> Prediction {
        assert!(!recent.is_empty());
        let mut history = recent.to_vec();
        let mut at = [0u32; 10];
        for step in &mut at {
            let next = self.next(&history);
            *step = next;
            history.push(next);
        }
        Prediction { t1: at[0], t5: at[4], t10: at[9] }
    }
}

/// The per-window workload context record, written in this field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadContext {
    pub window_index: u64,
    pub current_label: u32,
    pub pred_t1: u32,
    pub pred_t5: u32,
    pub pred_t10: u32,
    pub emitted_at: f64,
}

pub const CONTEXT_STREAM: &str = "workload_context";

/// Single-writer emitter for the analytics-zone context stream. Emission
/// indices must be strictly increasing.
#[derive(Debug)]
pub struct ContextEmitter {
    last_index: Option<u64>,
}

impl ContextEmitter {
    pub fn new() -> Self {
        Self { last_index: None }
    }

    /// Resume after a restart by reading the stream tail.
    pub fn resume(kb: &KnowledgeBase) -> Result<Self, PredictError> {
        let last = kb
            .read_records::<WorkloadContext>(Zone::Analytics, CONTEXT_STREAM, 0)?
            .last()
            .map(|c| c.window_index);
        Ok(Self { last_index: last })
    }

    pub fn emit_context(
        &mut self,
        kb: &KnowledgeBase,
        window_index: u64,
        current_label: u32,
        preds: Prediction,
        emitted_at: f64,
    ) -> Result<(u64, WorkloadContext), PredictError> {
        if let Some(last) = self.last_index {
            if window_index <= last {
                return Err(PredictError::OutOfOrder { index: window_index, last });
            }
        }
        let ctx = WorkloadContext {
            window_index,
            current_label,
            pred_t1: preds.t1,
            pred_t5: preds.t5,
            pred_t10: preds.t10,
            emitted_at,
        };
        let offset = kb.append_record(Zone::Analytics, CONTEXT_STREAM, &ctx)?;
        self.last_index = Some(window_index);
        Ok((offset, ctx))
    }
}

impl Default for ContextEmitter {
    fn default() -> Self {
        Self::new()
    }
}
