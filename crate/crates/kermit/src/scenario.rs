//! Declarative synthetic-cluster scenarios: workload class definitions,
//! a schedule of steady/hybrid/drift segments, the tunable-config space,
//! and the per-class job-runtime model. Scenario files are versioned JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::change::{ChangePolicy, Correction};
use crate::config::ConfigSpace;
use crate::telemetry::FeatureSchema;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// One workload class the cluster can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadClassDef {
    pub name: String,
    /// Telemetry mean per feature while this class runs.
    pub mean: Vec<f64>,
    /// Per-feature Gaussian noise std on each raw sample.
    pub noise_std: Vec<f64>,
    /// Domain index of the best value per parameter (the declared optimum).
    pub optimal_indices: Vec<usize>,
    /// Job seconds at the optimum.
    pub runtime_base_s: f64,
    /// Penalty curvature per parameter for off-optimum settings.
    pub runtime_weights: Vec<f64>,
}

/// One schedule segment, measured in whole observation windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Steady-state processing of one class.
    Steady { class: String, windows: u64 },
    /// Two classes sharing the cluster, samples interleaved 50/50.
    Hybrid { a: String, b: String, windows: u64 },
    /// One class whose telemetry mean has shifted by `mean_delta`.
    Drift { class: String, mean_delta: Vec<f64>, windows: u64 },
}

impl Segment {
    pub fn windows(&self) -> u64 {
        match self {
            Segment::Steady { windows, .. }
            | Segment::Hybrid { windows, .. }
            | Segment::Drift { windows, .. } => *windows,
        }
    }
}

/// Loop-level hyper-parameters carried by the scenario. Every value can be
/// overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    /// Significance level of the change detector.
    pub alpha: f64,
    /// Features that must reject to flag a transition.
    pub min_features_rejecting: usize,
    /// Multiple-testing correction: "none" or "bonferroni".
    pub correction: Correction,
    /// DBSCAN radius in standardized space.
    pub eps: f64,
    /// DBSCAN density threshold.
    pub min_pts: usize,
    /// Drift threshold on standardized mean-vector distance.
    pub epsilon_drift: f64,
    /// Significance level of the off-line WorkloadDB match.
    pub alpha_match: f64,
    /// Windows between off-line discovery passes (the batch length).
    pub discovery_interval: u64,
    /// Order of the label-sequence predictor.
    pub predictor_order: usize,
    /// Label-history length of predictor training segments.
    pub predictor_segment_len: usize,
    /// Rate windows per transition-classifier instance.
    pub transition_width: usize,
    /// Probe budgets for the configuration search.
    pub global_budget: usize,
    pub local_budget: usize,
    /// Context staleness tolerance, in window lengths.
    pub sync_tolerance_windows: f64,
    /// Synthetic instances sampled per anticipated hybrid class.
    pub synthetic_instances: usize,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            min_features_rejecting: 1,
            correction: Correction::Bonferroni,
            eps: 0.5,
            min_pts: 5,
            epsilon_drift: 1.0,
            alpha_match: 0.01,
            discovery_interval: 60,
            predictor_order: 3,
            predictor_segment_len: 5,
            transition_width: 3,
            global_budget: 60,
            local_budget: 20,
            sync_tolerance_windows: 2.0,
            synthetic_instances: 200,
        }
    }
}

impl LoopParams {
    pub fn change_policy(&self) -> ChangePolicy {
        ChangePolicy {
            alpha: self.alpha,
            min_features_rejecting: self.min_features_rejecting,
            correction: self.correction,
        }
    }
}

/// A full scenario: the feature schema, the config space, the class
/// definitions, the segment schedule, and the loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub features: Vec<String>,
    pub window_len_s: f64,
    pub sample_interval_s: f64,
    /// Windows of linear interpolation inserted at each segment boundary.
    pub transition_windows: u64,
    pub jobs_per_window: u32,
    /// Std of job-runtime noise as a fraction of the class base runtime.
    pub runtime_noise_frac: f64,
    /// Skip the pairwise class-separation check (overlap scenarios only).
    #[serde(default)]
    pub allow_overlap: bool,
    pub config_space: ConfigSpace,
    pub classes: Vec<WorkloadClassDef>,
    pub schedule: Vec<Segment>,
    pub params: LoopParams,
}

impl Scenario {
    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(self.features.clone())
    }

    pub fn samples_per_window(&self) -> u64 {
        (self.window_len_s / self.sample_interval_s).round() as u64
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| ScenarioError::Unreadable {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.version != SCENARIO_FORMAT_VERSION {
            return fail(format!("unsupported scenario version {}", self.version));
        }
        if self.features.is_empty() {
            return fail("feature list is empty".into());
        }
        if self.window_len_s <= 0.0 || self.sample_interval_s <= 0.0 {
            return fail("window length and sample interval must be positive".into());
        }
        if self.samples_per_window() < 2 {
            return fail("windows must hold at least 2 samples".into());
        }
        if !(1..=3).contains(&self.transition_windows) {
            return fail("transition_windows must be between 1 and 3".into());
        }
        if self.classes.is_empty() {
            return fail("at least one workload class is required".into());
        }
        if self.schedule.is_empty() {
            return fail("the schedule is empty".into());
        }
        self.config_space
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let f = self.features.len();
        let p = self.config_space.parameters.len();
        for class in &self.classes {
            if class.mean.len() != f || class.noise_std.len() != f {
                return fail(format!("class {} has wrong feature arity", class.name));
            }
            if class.optimal_indices.len() != p || class.runtime_weights.len() != p {
                return fail(format!("class {} has wrong parameter arity", class.name));
            }
            for (i, (&opt, param)) in class
                .optimal_indices
                .iter()
                .zip(&self.config_space.parameters)
                .enumerate()
            {
                if opt >= param.domain.len() {
                    return fail(format!(
                        "class {} optimal index {} out of range for parameter {i}",
                        class.name, opt
                    ));
                }
            }
            if class.runtime_base_s <= 0.0 {
                return fail(format!("class {} base runtime must be positive", class.name));
            }
        }
        for segment in &self.schedule {
            if segment.windows() < 3 {
                return fail("segments must last at least 3 windows".into());
            }
            let classes: Vec<&str> = match segment {
                Segment::Steady { class, .. } => vec![class],
                Segment::Hybrid { a, b, .. } => vec![a, b],
                Segment::Drift { class, mean_delta, .. } => {
                    if mean_delta.len() != f {
                        return fail("drift mean_delta has wrong feature arity".into());
                    }
                    vec![class]
                }
            };
            for name in classes {
                if self.class_index(name).is_none() {
                    return fail(format!("schedule references unknown class {name}"));
                }
            }
        }
        if !self.allow_overlap {
            // Classes must sit at least 10 pooled sample-stds apart.
            for i in 0..self.classes.len() {
                for j in i + 1..self.classes.len() {
                    let (a, b) = (&self.classes[i], &self.classes[j]);
                    let dist2: f64 = a
                        .mean
                        .iter()
                        .zip(&b.mean)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    let pooled2: f64 = a
                        .noise_std
                        .iter()
                        .zip(&b.noise_std)
                        .map(|(x, y)| 0.5 * (x * x + y * y))
                        .sum::<f64>()
                        / f as f64;
                    if dist2.sqrt() < 10.0 * pooled2.sqrt().max(1e-9) {
                        return fail(format!(
                            "classes {} and {} are closer than 10 pooled stds; \
                             set allow_overlap to test overlapping classes",
                            a.name, b.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Total windows the run will produce, transitions included.
    pub fn total_windows(&self) -> u64 {
        let steady: u64 = self.schedule.iter().map(|s| s.windows()).sum();
        steady + self.transition_windows * (self.schedule.len() as u64 - 1)
    }
}

/// Bundled scenario presets, also shipped as JSON files under `scenarios/`.
pub mod presets {
    use super::*;
    use crate::config::ConfigParameter;

    fn standard_features() -> Vec<String> {
        FeatureSchema::standard().names().to_vec()
    }

    fn space_3x5(defaults: [usize; 3]) -> ConfigSpace {
        let domains: [(&str, [&str; 5]); 3] = [
            ("executor_memory", ["1g", "2g", "4g", "8g", "16g"]),
            ("executor_cores", ["1", "2", "4", "6", "8"]),
            ("shuffle_partitions", ["64", "128", "256", "512", "1024"]),
        ];
        ConfigSpace {
            parameters: domains
                .iter()
                .zip(defaults)
                .map(|((name, domain), d)| ConfigParameter {
                    name: name.to_string(),
                    domain: domain.iter().map(|s| s.to_string()).collect(),
                    default: domain[d].to_string(),
                })
                .collect(),
        }
    }

    /// Telemetry means for a set of well-separated classes. Gaps are 20x
    /// the noise std on every active feature.
    fn class(
        name: &str,
        level: f64,
        optimal: [usize; 3],
        base: f64,
        weights: [f64; 3],
    ) -> WorkloadClassDef {
        let mean: Vec<f64> = (0..8).map(|f| 10.0 + level * (1.0 + f as f64 * 0.25)).collect();
        let noise_std: Vec<f64> = mean.iter().map(|m| 0.05 * m / 2.0).collect();
        WorkloadClassDef {
            name: name.to_string(),
            mean,
            noise_std,
            optimal_indices: optimal.to_vec(),
            runtime_base_s: base,
            runtime_weights: weights.to_vec(),
        }
    }

    fn base(name: &str, classes: Vec<WorkloadClassDef>, schedule: Vec<Segment>) -> Scenario {
        Scenario {
            version: SCENARIO_FORMAT_VERSION,
            name: name.to_string(),
            seed: 7,
            features: standard_features(),
            window_len_s: 10.0,
            sample_interval_s: 1.0,
            transition_windows: 2,
            jobs_per_window: 2,
            runtime_noise_frac: 0.0,
            allow_overlap: false,
            config_space: space_3x5([0, 0, 0]),
            classes,
            schedule,
            params: LoopParams {
                alpha: 1e-4,
                alpha_match: 1e-6,
                epsilon_drift: 3.0,
                discovery_interval: 60,
                ..LoopParams::default()
            },
        }
    }

    /// Three well-separated plateaus; the discovery benchmark.
    pub fn three_plateaus() -> Scenario {
        let classes = vec![
            class("etl", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]),
            class("analytics", 60.0, [1, 3, 4], 100.0, [1.5, 2.0, 1.0]),
            class("streaming", 120.0, [0, 4, 2], 60.0, [1.0, 1.0, 2.0]),
        ];
        let schedule = vec![
            Segment::Steady { class: "etl".into(), windows: 40 },
            Segment::Steady { class: "analytics".into(), windows: 40 },
            Segment::Steady { class: "streaming".into(), windows: 40 },
        ];
        let mut s = base("three_plateaus", classes, schedule);
        s.params.discovery_interval = 124;
        s
    }

    /// Six plateaus with five abrupt boundaries over 600 windows; the
    /// change-detection benchmark.
    pub fn mixed_transitions() -> Scenario {
        let classes = vec![
            class("ingest", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]),
            class("prepare", 60.0, [1, 3, 4], 100.0, [1.5, 2.0, 1.0]),
            class("train", 120.0, [0, 4, 2], 60.0, [1.0, 1.0, 2.0]),
            class("score", 200.0, [2, 0, 3], 90.0, [1.2, 1.8, 1.4]),
        ];
        let schedule = vec![
            Segment::Steady { class: "ingest".into(), windows: 98 },
            Segment::Steady { class: "prepare".into(), windows: 98 },
            Segment::Steady { class: "train".into(), windows: 98 },
            Segment::Steady { class: "score".into(), windows: 98 },
            Segment::Steady { class: "prepare".into(), windows: 98 },
            Segment::Steady { class: "ingest".into(), windows: 100 },
        ];
        let mut s = base("mixed_transitions", classes, schedule);
        s.params.discovery_interval = 150;
        s
    }

    /// A single noiseless plateau; the false-flag benchmark.
    pub fn noiseless_plateau(windows: u64) -> Scenario {
        let mut etl = class("etl", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]);
        etl.noise_std = vec![0.0; 8];
        let schedule = vec![Segment::Steady { class: "etl".into(), windows }];
        let mut s = base("noiseless_plateau", vec![etl], schedule);
        s.params.discovery_interval = windows.max(60);
        s
    }

    /// One class drifting twice, once below and once above the drift
    /// threshold, with an anchor class in every discovery batch.
    pub fn drift_pair() -> Scenario {
        let drifter = class("etl", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]);
        let anchor = class("analytics", 120.0, [1, 3, 4], 100.0, [1.5, 2.0, 1.0]);
        // Window-mean std per feature is noise_std / sqrt(samples); spread
        // the shift evenly so the Welch match still accepts at 2x epsilon.
        let n_samples = 10.0f64;
        let epsilon = 3.0;
        let f = 8.0f64;
        let small: Vec<f64> = drifter
            .noise_std
            .iter()
            .map(|s| 0.5 * epsilon * (s / n_samples.sqrt()) / f.sqrt())
            .collect();
        let large: Vec<f64> = small.iter().map(|d| 4.0 * d).collect();
        let schedule = vec![
            Segment::Steady { class: "etl".into(), windows: 14 },
            Segment::Steady { class: "analytics".into(), windows: 14 },
            Segment::Drift { class: "etl".into(), mean_delta: small, windows: 14 },
            Segment::Steady { class: "analytics".into(), windows: 14 },
            Segment::Drift { class: "etl".into(), mean_delta: large.clone(), windows: 14 },
            Segment::Steady { class: "analytics".into(), windows: 14 },
            Segment::Drift { class: "etl".into(), mean_delta: large, windows: 14 },
            Segment::Steady { class: "analytics".into(), windows: 14 },
        ];
        let mut s = base("drift_pair", vec![drifter, anchor], schedule);
        s.params.epsilon_drift = epsilon;
        s.params.discovery_interval = 32;
        s
    }

    /// Three classes recurring five times each; the repeat-encounter and
    /// tuning benchmark.
    pub fn repeat_daily() -> Scenario {
        let classes = vec![
            class("morning_etl", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]),
            class("midday_reports", 60.0, [1, 3, 4], 100.0, [1.5, 2.0, 1.0]),
            class("nightly_batch", 120.0, [0, 4, 2], 60.0, [1.0, 1.0, 2.0]),
        ];
        let mut schedule = Vec::new();
        for _ in 0..5 {
            for name in ["morning_etl", "midday_reports", "nightly_batch"] {
                schedule.push(Segment::Steady { class: name.into(), windows: 20 });
            }
        }
        let mut s = base("repeat_daily", classes, schedule);
        s.params.discovery_interval = 66;
        s
    }

    /// Two pure classes, then a 50/50 hybrid segment never seen in
    /// training; the anticipation benchmark.
    pub fn hybrid_zsl() -> Scenario {
        let classes = vec![
            class("etl", 20.0, [4, 2, 1], 80.0, [2.0, 1.5, 1.0]),
            class("analytics", 120.0, [1, 3, 4], 100.0, [1.5, 2.0, 1.0]),
        ];
        let schedule = vec![
            Segment::Steady { class: "etl".into(), windows: 30 },
            Segment::Steady { class: "analytics".into(), windows: 28 },
            Segment::Hybrid { a: "etl".into(), b: "analytics".into(), windows: 40 },
        ];
        let mut s = base("hybrid_zsl", classes, schedule);
        s.params.discovery_interval = 60;
        s
    }

    pub fn all() -> Vec<Scenario> {
        vec![
            three_plateaus(),
            mixed_transitions(),
            noiseless_plateau(300),
            drift_pair(),
            repeat_daily(),
            hybrid_zsl(),
        ]
    }
}
