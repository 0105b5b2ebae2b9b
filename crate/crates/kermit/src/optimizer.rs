//! The plug-in decision logic called on every resource request, and the
//! Explorer configuration search behind it.
//!
//! Decision order per call: staleness check against the context stream,
//! default config for unknown workloads, stored config when an optimum is
//! already known, local search from the last good configuration on drift,
//! global search otherwise. Search results are written back to the
//! WorkloadDB so a workload is only ever searched once.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, Configuration};
use crate::kb::WorkloadDb;
use crate::predict::WorkloadContext;
use crate::UNKNOWN_LABEL;

/// Objective to minimize: seconds per job under a candidate configuration.
pub type Objective<'a> = dyn FnMut(&Configuration) -> f64 + 'a;

/// Bounds and tolerances of the plug-in.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub global_budget: usize,
    pub local_budget: usize,
    /// Max age of the newest context, in seconds, before the plug-in logs
    /// an error and falls back to the default configuration.
    pub sync_tolerance_s: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self { global_budget: 60, local_budget: 20, sync_tolerance_s: 20.0 }
    }
}

/// Search outcome: best configuration found, its objective, and the probe
/// trace in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: Configuration,
    pub objective: f64,
    pub probes: usize,
    pub trace: Vec<(Configuration, f64)>,
    pub budget_exhausted: bool,
}

struct Prober<'a, 'b> {
    objective: &'a mut Objective<'b>,
    space: &'a ConfigSpace,
    budget: usize,
    memo: HashMap<Vec<usize>, f64>,
    trace: Vec<(Configuration, f64)>,
}

impl<'a, 'b> Prober<'a, 'b> {
    fn new(objective: &'a mut Objective<'b>, space: &'a ConfigSpace, budget: usize) -> Self {
        Self { objective, space, budget, memo: HashMap::new(), trace: Vec::new() }
    }

    /// Memoized evaluation; returns None once the budget is spent.
    fn eval(&mut self, indices: &[usize]) -> Option<f64> {
        if let Some(&v) = self.memo.get(indices) {
            return Some(v);
        }
        if self.trace.len() >= self.budget {
            return None;
        }
        let config = self.space.config_from_indices(indices);
        let value = (self.objective)(&config);
        self.memo.insert(indices.to_vec(), value);
        self.trace.push((config, value));
        Some(value)
    }

    fn exhausted(&self) -> bool {
        self.trace.len() >= self.budget
    }

    fn finish(self, best: Vec<usize>, objective: f64) -> SearchResult {
        let budget_exhausted = self.trace.len() >= self.budget;
        SearchResult {
            config: self.space.config_from_indices(&best),
            objective,
            probes: self.trace.len(),
            trace: self.trace,
            budget_exhausted,
        }
    }
}

/// Two-phase global search. Phase 1 sweeps each parameter's domain
/// endpoints and midpoint away from the default; phase 2 runs coordinate
/// descent from the best coarse point until a full pass yields no
/// single-parameter improvement or the budget runs out.
pub fn global_search(
    objective: &mut Objective<'_>,
    space: &ConfigSpace,
    budget: usize,
) -> SearchResult {
    assert!(budget >= 1);
    let default = space
        .indices_of(&space.default_config())
        .expect("default lies in its own space");
    let mut prober = Prober::new(objective, space, budget);
    let mut best = default.clone();
    let mut best_value = prober.eval(&default).expect("budget >= 1");

    // Coarse sweep.
    'sweep: for (p, param) in space.parameters.iter().enumerate() {
        let last = param.domain.len() - 1;
        for idx in [0, last / 2, last] {
            let mut candidate = default.clone();
            candidate[p] = idx;
            match prober.eval(&candidate) {
                Some(v) => {
                    if v < best_value {
                        best_value = v;
                        best = candidate;
                    }
                }
                None => break 'sweep,
            }
        }
    }

    coordinate_descent(&mut prober, space, &mut best, &mut best_value, None);
    prober.finish(best, best_value)
}

/// Coordinate descent restricted to +-1 domain-index moves, starting from
/// `start`. A zero budget returns the start point unprobed.
pub fn local_search(
    objective: &mut Objective<'_>,
    space: &ConfigSpace,
    start: &Configuration,
    budget: usize,
) -> SearchResult {
    let start_indices = space.indices_of(start).expect("start must lie in the space");
    let mut prober = Prober::new(objective, space, budget);
    let mut best = start_indices;
    let mut best_value = match prober.eval(&best) {
        Some(v) => v,
        None => {
            return SearchResult {
                config: start.clone(),
                objective: f64::INFINITY,
                probes: 0,
                trace: Vec::new(),
                budget_exhausted: true,
            }
        }
    };
    coordinate_descent(&mut prober, space, &mut best, &mut best_value, Some(1));
    prober.finish(best, best_value)
}

/// Iterated coordinate descent. `step` of None scans each parameter's whole
/// domain; Some(s) only indices within s of the current one. Moves happen
/// on strict improvement, so a constant objective stops after one pass.
fn coordinate_descent(
    prober: &mut Prober<'_, '_>,
    space: &ConfigSpace,
    best: &mut Vec<usize>,
    best_value: &mut f64,
    step: Option<usize>,
) {
    loop {
        let mut improved = false;
        for (p, param) in space.parameters.iter().enumerate() {
            let current = best[p];
            let range: Vec<usize> = match step {
                None => (0..param.domain.len()).collect(),
                Some(s) => {
                    let lo = current.saturating_sub(s);
                    let hi = (current + s).min(param.domain.len() - 1);
                    (lo..=hi).collect()
                }
            };
            for idx in range {
                if idx == current {
                    continue;
                }
                let mut candidate = best.clone();
                candidate[p] = idx;
                match prober.eval(&candidate) {
                    Some(v) => {
                        if v < *best_value {
                            *best_value = v;
                            *best = candidate;
                            improved = true;
                        }
                    }
                    None => return,
                }
            }
        }
        if !improved || prober.exhausted() {
            return;
        }
    }
}

/// Which branch of the decision logic fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Context stream stale; default configuration until it recovers.
    OutOfSync,
    /// Workload type not yet discovered; default configuration.
    Unknown,
    /// Optimal configuration already stored; zero probes.
    StoredOptimal,
    /// Drifting workload; local search from the last good configuration.
    DriftLocalSearch,
    /// Newly discovered workload; global search.
    GlobalSearch,
    /// Internal failure; degraded to the default configuration.
    Degraded,
}

/// One plug-in decision with its search accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginDecision {
    pub window_index: u64,
    pub label: u32,
    pub branch: Branch,
    pub config: Configuration,
    pub probes: usize,
}

/// The main plug-in decision, invoked whenever the resource manager
/// answers a resource request.
pub fn plugin_main(
    ctx: &WorkloadContext,
    now: f64,
    db: &mut WorkloadDb,
    kb: Option<&crate::kb::KnowledgeBase>,
    space: &ConfigSpace,
    objective: &mut Objective<'_>,
    params: &OptimizerParams,
) -> PluginDecision {
    let decision = |branch, config, probes| PluginDecision {
        window_index: ctx.window_index,
        label: ctx.current_label,
        branch,
        config,
        probes,
    };

    if now - ctx.emitted_at > params.sync_tolerance_s {
        log::error!(
            "context for window {} is {:.1}s old (tolerance {:.1}s); using default configuration",
            ctx.window_index,
            now - ctx.emitted_at,
            params.sync_tolerance_s
        );
        return decision(Branch::OutOfSync, space.default_config(), 0);
    }
    if ctx.current_label == UNKNOWN_LABEL {
        return decision(Branch::Unknown, space.default_config(), 0);
    }

    let record = match db.get_workload(ctx.current_label) {
        Ok(r) => r.clone(),
        Err(e) => {
            log::warn!("label {} not yet persisted ({e}); using default configuration", ctx.current_label);
            return decision(Branch::Degraded, space.default_config(), 0);
        }
    };

    if record.has_optimal_config {
        let config = record.config.clone().expect("optimal flag implies a stored config");
        return decision(Branch::StoredOptimal, config, 0);
    }

    let (branch, result) = if record.is_drifting {
        let start = record.config.clone().unwrap_or_else(|| space.default_config());
        let mut result = local_search(objective, space, &start, params.local_budget);
        if result.probes == 0 {
            // Zero local budget: keep the last good configuration.
            result.config = start;
        }
        (Branch::DriftLocalSearch, result)
    } else {
        (Branch::GlobalSearch, global_search(objective, space, params.global_budget))
    };

    let store = (|| -> Result<(), crate::kb::KbError> {
        db.set_config(kb, ctx.current_label, result.config.clone(), true)?;
        if branch == Branch::DriftLocalSearch {
            // The local optimum answers the drift; clear the flag so later
            // encounters take the stored-optimal path.
            db.set_drift(kb, ctx.current_label, false)?;
        }
        Ok(())
    })();
    if let Err(e) = store {
        log::error!("failed to persist search result for label {}: {e}", ctx.current_label);
        return decision(Branch::Degraded, space.default_config(), result.probes);
    }
    decision(branch, result.config, result.probes)
}
