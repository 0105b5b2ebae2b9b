//! Off-line workload discovery: transition filtering, DBSCAN clustering,
//! characterization, WorkloadDB matching, drift detection, and label
//! generation, plus training-set generation for the supervised classifiers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::change::{self, ChangeError, ChangePolicy};
use crate::dataset::LabeledInstance;
use crate::kb::{FeatureSummary, WorkloadCharacterization, WorkloadDb, WorkloadRecord};
use crate::telemetry::{self, AnalyticWindow, ObservationWindow, SampleStats};
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("batch of {0} windows is smaller than min_pts {1}")]
    TooFewWindows(usize, usize),
    #[error("characterizations disagree on feature count: {0} vs {1}")]
    SchemaMismatch(usize, usize),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
}

/// Hyper-parameters of the discovery pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryParams {
    /// DBSCAN radius in standardized feature space.
    pub eps: f64,
    /// DBSCAN density threshold.
    pub min_pts: usize,
    /// Drift threshold on the standardized L2 distance of mean vectors.
    pub epsilon_drift: f64,
    /// Significance level for the Welch-based WorkloadDB match.
    pub alpha_match: f64,
    /// Change policy for the batch transition filter.
    pub change_policy: ChangePolicy,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            min_pts: 5,
            epsilon_drift: 1.0,
            alpha_match: 0.01,
            change_policy: ChangePolicy::default(),
        }
    }
}

/// One density cluster: member positions and the centroid in the space the
/// points were given in.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
}

/// Result summary of one discovery pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub new_labels: Vec<u32>,
    pub matched_labels: Vec<u32>,
    pub drifting_labels: Vec<u32>,
    pub noise_window_count: usize,
    pub batch_range: (u64, u64),
}

/// Full outcome of one discovery pass: the report plus the per-window label
/// assignments and the transition windows that were filtered out.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryOutcome {
    pub report: DiscoveryReport,
    /// Window index -> assigned workload label, for every clustered window.
    pub assignments: BTreeMap<u64, u32>,
    /// Window indices removed as transitions before clustering.
    pub transition_windows: BTreeSet<u64>,
}

/// Standard DBSCAN over points with Euclidean distance. Border points go to
/// the first cluster that claims them in deterministic scan order.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<Cluster>, BTreeSet<usize>) {
    assert!(eps > 0.0 && min_pts >= 1 && !points.is_empty());
    const UNVISITED: i64 = -2;
    const NOISE: i64 = -1;
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors = |p: usize| -> Vec<usize> {
        (0..n)
            .filter(|&q| dist2(&points[p], &points[q]) <= eps2)
            .collect()
    };
    let mut label = vec![UNVISITED; n];
    let mut next_cluster = 0i64;
    for p in 0..n {
        if label[p] != UNVISITED {
            continue;
        }
        let seed = neighbors(p);
        if seed.len() < min_pts {
            label[p] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        label[p] = cluster;
        let mut queue: Vec<usize> = seed;
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            if label[q] == NOISE {
                label[q] = cluster; // border point, first claim wins
            }
            if label[q] != UNVISITED {
                continue;
            }
            label[q] = cluster;
            let reach = neighbors(q);
            if reach.len() >= min_pts {
                queue.extend(reach);
            }
        }
    }
    let mut clusters: Vec<Cluster> = (0..next_cluster)
        .map(|_| Cluster { members: Vec::new(), centroid: Vec::new() })
        .collect();
    let mut noise = BTreeSet::new();
    for (p, &l) in label.iter().enumerate() {
        if l == NOISE {
            noise.insert(p);
        } else {
            clusters[l as usize].members.push(p);
        }
    }
    for c in &mut clusters {
        c.centroid = mean_vector(c.members.iter().map(|&i| points[i].as_slice()));
    }
    (clusters, noise)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_vector<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for row in rows {
        if sum.is_empty() {
            sum = vec![0.0; row.len()];
        }
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        count += 1;
    }
    for s in &mut sum {
        *s /= count as f64;
    }
    sum
}

const STD_FLOOR: f64 = 1e-9;

/// Per-feature z-score scales over a point set (std floored at 1e-9).
pub fn batch_scales(points: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let f = points[0].len();
    let mut means = vec![0.0; f];
    for p in points {
        for (m, v) in means.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= points.len() as f64;
    }
    let mut stds = vec![0.0; f];
    for p in points {
        for ((s, v), m) in stds.iter_mut().zip(p).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut stds {
        *s = (*s / points.len() as f64).sqrt().max(STD_FLOOR);
    }
    (means, stds)
}

fn standardize(points: &[Vec<f64>], means: &[f64], stds: &[f64]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(means.iter().zip(stds))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect()
}

/// Nearest-rank percentile: the ceil(q*n)-th order statistic.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Compute the workload characterization of a window set: per-feature
/// mean/std/min/max/p90/p75 over the windows' feature vectors.
pub fn characterize(windows: &[&ObservationWindow]) -> WorkloadCharacterization {
    assert!(!windows.is_empty());
    let f = windows[0].feature_vector.len();
    let mut per_feature = Vec::with_capacity(f);
    let mut column: Vec<f64> = Vec::with_capacity(windows.len());
    for i in 0..f {
        column.clear();
        column.extend(windows.iter().map(|w| w.feature_vector[i]));
        let stats = SampleStats::from_values(&column);
        let mut sorted = column.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        per_feature.push(FeatureSummary {
            mean: stats.mean,
            std: stats.std,
            min: stats.min,
            max: stats.max,
            p90: nearest_rank(&sorted, 0.90),
            p75: nearest_rank(&sorted, 0.75),
        });
    }
    let mut ids: Vec<u64> = windows.iter().map(|w| w.index).collect();
    ids.sort_unstable();
    WorkloadCharacterization {
        per_feature,
        window_count: windows.len() as u64,
        window_ids: compress_ranges(&ids),
    }
}

fn compress_ranges(sorted: &[u64]) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for &i in sorted {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == i => *end = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// Standardized L2 distance between two mean vectors. The scales are the
/// stored workload's own per-feature window-mean stds, so the threshold
/// reads as "how many units of the workload's normal variability".
fn scaled_distance(new: &[f64], stored: &[f64], scales: &[f64]) -> f64 {
    new.iter()
        .zip(stored)
        .zip(scales)
        .map(|((a, b), s)| {
            let d = (a - b) / s.max(STD_FLOOR);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Look for a stored workload whose characterization is statistically
/// indistinguishable from `c`: per feature, Welch's test on
/// (mean, std, window_count) must not reject at `alpha_match`. Among
/// multiple matches the nearest mean vector wins (scaled by the stored
/// record's stds), ties broken by smallest label. Synthetic prototypes
/// carry no window population and are never matched.
pub fn match_workload(
    c: &WorkloadCharacterization,
    db: &WorkloadDb,
    alpha_match: f64,
) -> Option<u32> {
    if c.window_count < 2 {
        return None;
    }
    let mut best: Option<(f64, u32)> = None;
    for rec in db.records() {
        let stored = &rec.characterization;
        if stored.window_count < 2 || stored.feature_count() != c.feature_count() {
            continue;
        }
        let mut rejected = false;
        for (a, b) in c.per_feature.iter().zip(&stored.per_feature) {
            let sa = SampleStats { mean: a.mean, std: a.std, n: c.window_count, min: a.min, max: a.max };
            let sb = SampleStats { mean: b.mean, std: b.std, n: stored.window_count, min: b.min, max: b.max };
            match change::welch_t(&sa, &sb, alpha_match) {
                Ok(r) if r.reject => {
                    rejected = true;
                    break;
                }
                Ok(_) => {}
                Err(_) => {
                    rejected = true;
                    break;
                }
            }
        }
        if rejected {
            continue;
        }
        let scales: Vec<f64> = stored.per_feature.iter().map(|f| f.std).collect();
        let d = scaled_distance(&c.means(), &stored.means(), &scales);
        match best {
            Some((bd, bl)) if (bd, bl) <= (d, rec.label) => {}
            _ => best = Some((d, rec.label)),
        }
    }
    best.map(|(_, label)| label)
}

/// Has the workload moved more than `epsilon` units of its own historical
/// variability? Distance is the standardized L2 norm between mean vectors,
/// scaled by the stored characterization's per-feature stds.
pub fn detect_drift(
    new: &WorkloadCharacterization,
    stored: &WorkloadCharacterization,
    epsilon: f64,
) -> Result<bool, DiscoveryError> {
    if new.feature_count() != stored.feature_count() {
        return Err(DiscoveryError::SchemaMismatch(
            new.feature_count(),
            stored.feature_count(),
        ));
    }
    let scales: Vec<f64> = stored.per_feature.iter().map(|f| f.std).collect();
    Ok(scaled_distance(&new.means(), &stored.means(), &scales) > epsilon)
}

/// As [`detect_drift`] but with explicit unit scales, for callers that
/// already work in standardized space.
pub fn detect_drift_scaled(
    new: &WorkloadCharacterization,
    stored: &WorkloadCharacterization,
    epsilon: f64,
    scales: &[f64],
) -> Result<bool, DiscoveryError> {
    if new.feature_count() != stored.feature_count() {
        return Err(DiscoveryError::SchemaMismatch(
            new.feature_count(),
            stored.feature_count(),
        ));
    }
    Ok(scaled_distance(&new.means(), &stored.means(), scales) > epsilon)
}

/// Next unique workload label: a simple integer counter over everything in
/// the WorkloadDB, synthetic records included. Label 0 stays reserved.
pub fn generate_label(db: &WorkloadDb) -> u32 {
    db.max_label() + 1
}

/// Run one full discovery pass on a window batch:
/// flag and remove transition windows, cluster the rest with DBSCAN on
/// z-scored features, then characterize each cluster and either match it to
/// a stored workload (updating drift state) or insert it under a fresh
/// label. Matched-but-drifting workloads get their characterization
/// replaced and their optimal-config flag cleared so the on-line plug-in
/// re-optimizes them locally.
pub fn discover(
    batch: &[ObservationWindow],
    db: &mut WorkloadDb,
    kb: Option<&crate::kb::KnowledgeBase>,
    params: &DiscoveryParams,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    if batch.len() < params.min_pts.max(2) {
        return Err(DiscoveryError::TooFewWindows(batch.len(), params.min_pts));
    }
    let transitions = change::detect_batch(batch, &params.change_policy)?;
    let steady: Vec<&ObservationWindow> = batch
        .iter()
        .filter(|w| !transitions.contains(&w.index))
        .collect();
    let batch_range = (batch[0].index, batch[batch.len() - 1].index);

    let mut report = DiscoveryReport {
        new_labels: Vec::new(),
        matched_labels: Vec::new(),
        drifting_labels: Vec::new(),
        noise_window_count: 0,
        batch_range,
    };
    let mut assignments = BTreeMap::new();

    if steady.len() < params.min_pts {
        // Nothing clusterable this round; all steady windows count as noise.
        report.noise_window_count = steady.len();
        return Ok(DiscoveryOutcome { report, assignments, transition_windows: transitions });
    }

    let points: Vec<Vec<f64>> = steady.iter().map(|w| w.feature_vector.clone()).collect();
    let (means, stds) = batch_scales(&points);
    let standardized = standardize(&points, &means, &stds);
    let (clusters, noise) = dbscan(&standardized, params.eps, params.min_pts);
    report.noise_window_count = noise.len();

    for cluster in &clusters {
        let members: Vec<&ObservationWindow> =
            cluster.members.iter().map(|&i| steady[i]).collect();
        debug_assert!(members.iter().all(|w| !transitions.contains(&w.index)));
        let characterization = characterize(&members);
        let label = match match_workload(&characterization, db, params.alpha_match) {
            Some(label) => {
                let stored = db.get_workload(label)?.characterization.clone();
                if detect_drift(&characterization, &stored, params.epsilon_drift)? {
                    db.set_drift(kb, label, true)?;
                    db.clear_optimal(kb, label)?;
                    db.update_characterization(kb, label, characterization)?;
                    report.drifting_labels.push(label);
                } else {
                    report.matched_labels.push(label);
                }
                label
            }
            None => {
                let label = generate_label(db);
                db.upsert_workload(
                    kb,
                    WorkloadRecord {
                        label,
                        characterization,
                        has_optimal_config: false,
                        is_drifting: false,
                        config: None,
                        is_synthetic: false,
                        hybrid_of: None,
                    },
                )?;
                report.new_labels.push(label);
                label
            }
        };
        for w in &members {
            assignments.insert(w.index, label);
        }
    }
    // A label that both matched and drifted in the same pass (two clusters)
    // belongs in the drifting list only.
    report.matched_labels.retain(|l| !report.drifting_labels.contains(l));
    report.matched_labels.dedup();
    Ok(DiscoveryOutcome { report, assignments, transition_windows: transitions })
}

/// Persistent mapping of ordered (from, to) workload pairs to transition
/// labels, generated with the same integer-counter scheme as workloads.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransitionRegistry {
    pairs: BTreeMap<(u32, u32), u32>,
}

impl TransitionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label_for(&mut self, from: u32, to: u32) -> u32 {
        let next = self.pairs.len() as u32 + 1;
        *self.pairs.entry((from, to)).or_insert(next)
    }

    pub fn get(&self, from: u32, to: u32) -> Option<u32> {
        self.pairs.get(&(from, to)).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(u32, u32), &u32)> {
        self.pairs.iter()
    }
}

/// One predictor training segment: a label-history window and the labels
/// observed 1, 5, and 10 steps past its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSegment {
    pub context: Vec<u32>,
    pub target_t1: u32,
    pub target_t5: u32,
    pub target_t10: u32,
}

/// The three generated training sets.
#[derive(Debug, Clone, Default)]
pub struct TrainingSets {
    /// Analytic windows tagged with their cluster's workload label.
    pub workload_pure: Vec<LabeledInstance>,
    /// Flattened rate-window subsequences covering each transition, tagged
    /// with generated transition labels.
    pub transitions: Vec<LabeledInstance>,
    /// The per-window label sequence the predictor segments were cut from.
    pub label_sequence: Vec<u32>,
    /// Sliding label-history segments with multi-horizon targets.
    pub predictor_segments: Vec<PredictorSegment>,
}

/// Hyper-parameters for training-set generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSetParams {
    /// Rate windows per transition instance (flattened width).
    pub transition_width: usize,
    /// Label-history length of each predictor segment.
    pub segment_len: usize,
}

impl Default for TrainingSetParams {
    fn default() -> Self {
        Self { transition_width: 3, segment_len: 5 }
    }
}

/// Build the classifier and predictor training sets from the analytic
/// window stream and the per-window discovery results.
///
/// Workload rows take each clustered window's analytic features under its
/// assigned label. Transition rows flatten every `transition_width`-long
/// run of rate windows that overlaps a transition range, labeled by the
/// ordered (from, to) pair's generated label. Predictor segments slide over
/// the carried-forward label sequence with targets at +1, +5, +10.
pub fn build_training_sets(
    db: &WorkloadDb,
    analytic: &[AnalyticWindow],
    assignments: &BTreeMap<u64, u32>,
    transition_windows: &BTreeSet<u64>,
    registry: &mut TransitionRegistry,
    params: &TrainingSetParams,
) -> TrainingSets {
    let mut sets = TrainingSets::default();
    if analytic.is_empty() {
        return sets;
    }
    let first_index = analytic[0].index;
    let by_index: BTreeMap<u64, &AnalyticWindow> =
        analytic.iter().map(|w| (w.index, w)).collect();

    // Workload rows, in WorkloadDB window-range order.
    for rec in db.records() {
        if rec.is_synthetic {
            continue;
        }
        for &(start, end) in &rec.characterization.window_ids {
            for t in start..=end {
                if let Some(w) = by_index.get(&t) {
                    if assignments.get(&t) == Some(&rec.label) {
                        sets.workload_pure
                            .push(LabeledInstance::new(w.features.clone(), rec.label));
                    }
                }
            }
        }
    }

    // Rate stream, aligned so rates[i] describes window first_index + 1 + i.
    let rates: Vec<telemetry::RateWindow> = analytic
        .windows(2)
        .filter_map(|p| telemetry::rate_transform(&p[0], &p[1]).ok())
        .collect();

    // Transition ranges: maximal runs of flagged windows, labeled by the
    // nearest assigned labels on either side.
    let mut ranges: Vec<(u64, u64)> = Vec::new();
    for &t in transition_windows {
        match ranges.last_mut() {
            Some((_, end)) if *end + 1 == t => *end = t,
            _ => ranges.push((t, t)),
        }
    }
    let w = params.transition_width;
    for &(start, end) in &ranges {
        let from = assignments
            .range(..start)
            .next_back()
            .map(|(_, &l)| l)
            .unwrap_or(UNKNOWN_LABEL);
        let to = assignments
            .range(end + 1..)
            .next()
            .map(|(_, &l)| l)
            .unwrap_or(UNKNOWN_LABEL);
        if from == UNKNOWN_LABEL || to == UNKNOWN_LABEL || from == to {
            continue;
        }
        let label = registry.label_for(from, to);
        // Every width-w run of consecutive rate windows overlapping the range.
        let lo = start.saturating_sub(w as u64 - 1).max(first_index + 1);
        for s in lo..=end {
            let offsets: Option<Vec<&telemetry::RateWindow>> = (0..w as u64)
                .map(|k| {
                    let idx = (s + k).checked_sub(first_index + 1)? as usize;
                    rates.get(idx)
                })
                .collect();
            if let Some(run) = offsets {
                if run.last().map(|r| r.index) != Some(s + w as u64 - 1) {
                    continue;
                }
                let mut features = Vec::with_capacity(w * run[0].deltas.len());
                for r in &run {
                    features.extend_from_slice(&r.deltas);
                }
                sets.transitions.push(LabeledInstance::new(features, label));
            }
        }
    }

    // Label sequence: assigned labels with carry-forward over transition
    // and noise windows, starting at the first assigned window.
    let mut label_seq = Vec::new();
    let mut current = UNKNOWN_LABEL;
    for w in analytic {
        if let Some(&l) = assignments.get(&w.index) {
            current = l;
        }
        if current != UNKNOWN_LABEL {
            label_seq.push(current);
        }
    }
    let (seg_len, h_max) = (params.segment_len, 10usize);
    if label_seq.len() >= seg_len + h_max {
        for i in 0..=(label_seq.len() - seg_len - h_max) {
            let end = i + seg_len;
            sets.predictor_segments.push(PredictorSegment {
                context: label_seq[i..end].to_vec(),
                target_t1: label_seq[end],
                target_t5: label_seq[end + 4],
                target_t10: label_seq[end + 9],
            });
        }
    }
    sets.label_sequence = label_seq;
    sets
}
