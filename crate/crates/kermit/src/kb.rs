//! The workload knowledge base: three zoned append-only stream stores under
//! one directory (`kb/lz`, `kb/tz`, `kb/az`) plus the WorkloadDB.
//!
//! Streams are line-delimited text files. Appends write one full line per
//! record, so a reader never observes a torn record: an unterminated tail
//! (a crash mid-append) is ignored until the newline lands. Offsets are
//! record ordinals and increase monotonically.
//!
//! The WorkloadDB is a single line-delimited record file in the analytics
//! zone, last-writer-wins per label, compacted into memory on load.
//! Workload records are never deleted.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Configuration;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("unknown stream {0}")]
    UnknownStream(String),
    #[error("workload label {0} not found")]
    NotFound(u32),
    #[error("workload record for label {label} is invalid: {reason}")]
    InvalidRecord { label: u32, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record in {path}: {line}")]
    Corrupt { path: PathBuf, line: String },
}

fn io_err(path: &Path, source: std::io::Error) -> KbError {
    KbError::Io { path: path.to_path_buf(), source }
}

/// The three knowledge-base zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    /// Landing zone: raw agent output, loosely structured text.
    Landing,
    /// Transformation zone: structured window streams.
    Transformation,
    /// Analytics zone: labels, contexts, reports, models, training sets.
    Analytics,
}

impl Zone {
    fn dir_name(self) -> &'static str {
        match self {
            Zone::Landing => "lz",
            Zone::Transformation => "tz",
            Zone::Analytics => "az",
        }
    }
}

/// Directory-backed knowledge base rooted at `<root>/{lz,tz,az}`.
#[derive(Debug)]
pub struct KnowledgeBase {
    root: PathBuf,
}

impl KnowledgeBase {
    /// Open (creating directories as needed) a knowledge base at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, KbError> {
        let root = root.into();
        for z in [Zone::Landing, Zone::Transformation, Zone::Analytics] {
            let dir = root.join(z.dir_name());
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn zone_dir(&self, zone: Zone) -> PathBuf {
        self.root.join(zone.dir_name())
    }

    fn stream_path(&self, zone: Zone, stream: &str) -> PathBuf {
        self.zone_dir(zone).join(format!("{stream}.log"))
    }

    /// Append one record line; returns its offset (record ordinal).
    pub fn append_stream(&self, zone: Zone, stream: &str, record: &str) -> Result<u64, KbError> {
        debug_assert!(!record.contains('\n'), "records are single lines");
        let path = self.stream_path(zone, stream);
        let offset = self.stream_len(zone, stream)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut line = String::with_capacity(record.len() + 1);
        line.push_str(record);
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        Ok(offset)
    }

    /// Read records with offset >= `from`, in order, paired with offsets.
    /// A missing stream reads as empty from offset 0.
    pub fn read_stream(
        &self,
        zone: Zone,
        stream: &str,
        from: u64,
    ) -> Result<Vec<(u64, String)>, KbError> {
        let path = self.stream_path(zone, stream);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut text = String::new();
        File::open(&path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| io_err(&path, e))?;
        let complete = match text.rfind('\n') {
            Some(pos) => &text[..pos],
            None => return Ok(Vec::new()), // only a torn tail present
        };
        Ok(complete
            .split('\n')
            .enumerate()
            .filter(|(i, _)| *i as u64 >= from)
            .map(|(i, l)| (i as u64, l.to_string()))
            .collect())
    }

    /// Number of complete records currently in the stream.
    pub fn stream_len(&self, zone: Zone, stream: &str) -> Result<u64, KbError> {
        let path = self.stream_path(zone, stream);
        if !path.exists() {
            return Ok(0);
        }
        let mut text = String::new();
        File::open(&path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| io_err(&path, e))?;
        Ok(text.bytes().filter(|&b| b == b'\n').count() as u64)
    }

    pub fn stream_exists(&self, zone: Zone, stream: &str) -> bool {
        self.stream_path(zone, stream).exists()
    }

    /// Typed append: serialize one record as a JSON line.
    pub fn append_record<T: Serialize>(
        &self,
        zone: Zone,
        stream: &str,
        record: &T,
    ) -> Result<u64, KbError> {
        let line = serde_json::to_string(record).expect("record serialization");
        self.append_stream(zone, stream, &line)
    }

    /// Typed read of a whole stream from an offset.
    pub fn read_records<T: for<'de> Deserialize<'de>>(
        &self,
        zone: Zone,
        stream: &str,
        from: u64,
    ) -> Result<Vec<T>, KbError> {
        let path = self.stream_path(zone, stream);
        self.read_stream(zone, stream, from)?
            .into_iter()
            .map(|(_, line)| {
                serde_json::from_str(&line)
                    .map_err(|_| KbError::Corrupt { path: path.clone(), line })
            })
            .collect()
    }
}

/// Per-feature summary statistics of a workload's observation windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub p90: f64,
    pub p75: f64,
}

/// The workload characterization: one [`FeatureSummary`] per feature, the
/// number of member windows, and the member window index ranges. The mean
/// vector doubles as the workload centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCharacterization {
    pub per_feature: Vec<FeatureSummary>,
    pub window_count: u64,
    pub window_ids: Vec<(u64, u64)>,
}

impl WorkloadCharacterization {
    pub fn means(&self) -> Vec<f64> {
        self.per_feature.iter().map(|f| f.mean).collect()
    }

    pub fn feature_count(&self) -> usize {
        self.per_feature.len()
    }
}

/// One WorkloadDB row. Field order here is the on-disk record order.
///
/// `hybrid_of` records the pure-class pair a synthetic record anticipates;
/// it is absent on observed workloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    pub label: u32,
    pub characterization: WorkloadCharacterization,
    pub has_optimal_config: bool,
    pub is_drifting: bool,
    pub config: Option<Configuration>,
    pub is_synthetic: bool,
    #[serde(default)]
    pub hybrid_of: Option<(u32, u32)>,
}

impl WorkloadRecord {
    fn check(&self) -> Result<(), KbError> {
        if self.label == 0 {
            return Err(KbError::InvalidRecord {
                label: self.label,
                reason: "label 0 is reserved for UNKNOWN".into(),
            });
        }
        if self.has_optimal_config && self.config.is_none() {
            return Err(KbError::InvalidRecord {
                label: self.label,
                reason: "has_optimal_config set without a stored configuration".into(),
            });
        }
        Ok(())
    }
}

const WORKLOAD_DB_STREAM: &str = "workload_db";

/// The WorkloadDB: label-keyed workload records persisted through the
/// analytics zone. Mutations append; state compacts on load.
#[derive(Debug)]
pub struct WorkloadDb {
    records: BTreeMap<u32, WorkloadRecord>,
}

impl WorkloadDb {
    pub fn new() -> Self {
        Self { records: BTreeMap::new() }
    }

    /// Load and compact the persisted record stream.
    pub fn load(kb: &KnowledgeBase) -> Result<Self, KbError> {
        let mut db = Self::new();
        for rec in kb.read_records::<WorkloadRecord>(Zone::Analytics, WORKLOAD_DB_STREAM, 0)? {
            rec.check()?;
            db.records.insert(rec.label, rec);
        }
        Ok(db)
    }

    fn persist(&self, kb: Option<&KnowledgeBase>, record: &WorkloadRecord) -> Result<(), KbError> {
        if let Some(kb) = kb {
            kb.append_record(Zone::Analytics, WORKLOAD_DB_STREAM, record)?;
        }
        Ok(())
    }

    /// Insert or replace the record for its label.
    pub fn upsert_workload(
        &mut self,
        kb: Option<&KnowledgeBase>,
        record: WorkloadRecord,
    ) -> Result<(), KbError> {
        record.check()?;
        self.persist(kb, &record)?;
        self.records.insert(record.label, record);
        Ok(())
    }

    pub fn get_workload(&self, label: u32) -> Result<&WorkloadRecord, KbError> {
        self.records.get(&label).ok_or(KbError::NotFound(label))
    }

    /// Replace the stored configuration and the optimal flag.
    pub fn set_config(
        &mut self,
        kb: Option<&KnowledgeBase>,
        label: u32,
        config: Configuration,
        optimal: bool,
    ) -> Result<(), KbError> {
        let rec = self.records.get_mut(&label).ok_or(KbError::NotFound(label))?;
        rec.config = Some(config);
        rec.has_optimal_config = optimal;
        let snapshot = rec.clone();
        self.persist(kb, &snapshot)
    }

    /// Persist the drift flag. Configuration and characterization fields
    /// are left untouched.
    pub fn set_drift(
        &mut self,
        kb: Option<&KnowledgeBase>,
        label: u32,
        drifting: bool,
    ) -> Result<(), KbError> {
        let rec = self.records.get_mut(&label).ok_or(KbError::NotFound(label))?;
        rec.is_drifting = drifting;
        let snapshot = rec.clone();
        self.persist(kb, &snapshot)
    }

    /// Clear the optimal flag without touching the stored configuration.
    /// The off-line subsystem calls this alongside `set_drift(true)` so the
    /// plug-in's drift branch becomes reachable.
    pub fn clear_optimal(
        &mut self,
        kb: Option<&KnowledgeBase>,
        label: u32,
    ) -> Result<(), KbError> {
        let rec = self.records.get_mut(&label).ok_or(KbError::NotFound(label))?;
        rec.has_optimal_config = false;
        let snapshot = rec.clone();
        self.persist(kb, &snapshot)
    }

    /// Replace a matched workload's characterization with fresher data.
    pub fn update_characterization(
        &mut self,
        kb: Option<&KnowledgeBase>,
        label: u32,
        characterization: WorkloadCharacterization,
    ) -> Result<(), KbError> {
        let rec = self.records.get_mut(&label).ok_or(KbError::NotFound(label))?;
        rec.characterization = characterization;
        let snapshot = rec.clone();
        self.persist(kb, &snapshot)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.records.keys().copied().collect()
    }

    pub fn max_label(&self) -> u32 {
        self.records.keys().next_back().copied().unwrap_or(0)
    }

    pub fn records(&self) -> impl Iterator<Item = &WorkloadRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Default for WorkloadDb {
    fn default() -> Self {
        Self::new()
    }
}
