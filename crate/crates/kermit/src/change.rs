//! The change detector: a training-free binary classifier that separates
//! steady-state windows from workload transitions with per-feature Welch
//! t-tests, in both streaming and batch modes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tdist;
use crate::telemetry::{ObservationWindow, SampleStats};

#[derive(Debug, Error, PartialEq)]
pub enum ChangeError {
    #[error("Welch's test needs at least 2 samples per side (got {0} and {1})")]
    TooFewSamples(u64, u64),
    #[error("windows {prev} and {curr} are not consecutive")]
    NonConsecutive { prev: u64, curr: u64 },
    #[error("batch detection needs at least 2 windows (got {0})")]
    TooFewWindows(usize),
    #[error("windows disagree on feature count: {0} vs {1}")]
    FeatureMismatch(usize, usize),
}

/// Outcome of one per-feature Welch test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    pub dof: f64,
    pub reject: bool,
    pub feature_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    Bonferroni,
}

/// Decision rule for flagging a window as a transition: at least
/// `min_features_rejecting` features must reject at the (possibly
/// corrected) significance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePolicy {
    pub alpha: f64,
    pub min_features_rejecting: usize,
    pub correction: Correction,
}

impl Default for ChangePolicy {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            min_features_rejecting: 1,
            correction: Correction::Bonferroni,
        }
    }
}

impl ChangePolicy {
    fn effective_alpha(&self, feature_count: usize) -> f64 {
        match self.correction {
            Correction::None => self.alpha,
            Correction::Bonferroni => self.alpha / feature_count.max(1) as f64,
        }
    }
}

/// Welch's two-sided unequal-variance t-test on two sample summaries.
///
/// When both sides have zero variance the stream is noiseless (a simulator
/// artifact): the test degenerates to an exact mean comparison with pooled
/// degrees of freedom and an infinite statistic on any difference.
pub fn welch_t(a: &SampleStats, b: &SampleStats, alpha: f64) -> Result<WelchResult, ChangeError> {
    welch_t_feature(a, b, alpha, 0)
}

/// As [`welch_t`] but tagging the result with a feature index.
pub fn welch_t_feature(
    a: &SampleStats,
    b: &SampleStats,
    alpha: f64,
    feature_index: usize,
) -> Result<WelchResult, ChangeError> {
    if a.n < 2 || b.n < 2 {
        return Err(ChangeError::TooFewSamples(a.n, b.n));
    }
    let va = a.std * a.std;
    let vb = b.std * b.std;
    if va == 0.0 && vb == 0.0 {
        let diff = a.mean - b.mean;
        let t_stat = if diff == 0.0 {
            0.0
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(WelchResult {
            t_stat,
            dof: (a.n + b.n - 2) as f64,
            reject: diff != 0.0,
            feature_index,
        });
    }
    let na = a.n as f64;
    let nb = b.n as f64;
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    let t_stat = (a.mean - b.mean) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let reject = t_stat.abs() > tdist::critical_value(dof, alpha);
    Ok(WelchResult {
        t_stat,
        dof,
        reject,
        feature_index,
    })
}

/// Streaming decision: does `curr` differ significantly from `prev`?
pub fn detect_stream(
    prev: &ObservationWindow,
    curr: &ObservationWindow,
    policy: &ChangePolicy,
) -> Result<bool, ChangeError> {
    if curr.index != prev.index + 1 {
        return Err(ChangeError::NonConsecutive {
            prev: prev.index,
            curr: curr.index,
        });
    }
    if prev.per_feature.len() != curr.per_feature.len() {
        return Err(ChangeError::FeatureMismatch(
            prev.per_feature.len(),
            curr.per_feature.len(),
        ));
    }
    let alpha = policy.effective_alpha(prev.per_feature.len());
    let mut rejecting = 0;
    for (i, (a, b)) in prev.per_feature.iter().zip(&curr.per_feature).enumerate() {
        if welch_t_feature(a, b, alpha, i)?.reject {
            rejecting += 1;
            if rejecting >= policy.min_features_rejecting {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Batch mode over a stored window sequence. The decision logic per pair is
/// exactly the streaming rule; index 0 is never flagged. Returned indices
/// are the windows' own stream indices.
pub fn detect_batch(
    windows: &[ObservationWindow],
    policy: &ChangePolicy,
) -> Result<BTreeSet<u64>, ChangeError> {
    if windows.len() < 2 {
        return Err(ChangeError::TooFewWindows(windows.len()));
    }
    let mut flagged = BTreeSet::new();
    for pair in windows.windows(2) {
        if detect_stream(&pair[0], &pair[1], policy)? {
            flagged.insert(pair[1].index);
        }
    }
    Ok(flagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{aggregate_window, FeatureSchema, RawSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn stats(mean: f64, std: f64, n: u64) -> SampleStats {
        SampleStats { mean, std, n, min: mean - 2.0 * std, max: mean + 2.0 * std }
    }

    #[test]
    fn identical_stats_never_reject() {
        let s = stats(5.0, 1.0, 30);
        let r = welch_t(&s, &s, 0.05).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn large_shift_rejects_with_expected_statistic() {
        let a = stats(0.0, 1.0, 30);
        let b = stats(10.0, 1.0, 30);
        let r = welch_t(&a, &b, 0.05).unwrap();
        let expected_t = -10.0 / (2.0f64 / 30.0).sqrt();
        assert!((r.t_stat - expected_t).abs() < 1e-12);
        assert!((r.t_stat.abs() - 38.729833462).abs() < 1e-6);
        assert!((r.dof - 58.0).abs() < 1e-12);
        assert!(r.reject);
    }

    #[test]
    fn equal_n_equal_std_gives_pooled_dof() {
        for n in [2u64, 5, 17, 40] {
            let a = stats(1.0, 2.5, n);
            let b = stats(1.3, 2.5, n);
            let r = welch_t(&a, &b, 0.05).unwrap();
            assert!((r.dof - (2 * n - 2) as f64).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn degenerate_variance_compares_means_exactly() {
        let a = stats(3.0, 0.0, 10);
        let b = stats(3.0, 0.0, 10);
        let same = welch_t(&a, &b, 0.05).unwrap();
        assert!(!same.reject);
        assert_eq!(same.t_stat, 0.0);
        assert_eq!(same.dof, 18.0);

        let c = stats(4.0, 0.0, 10);
        let diff = welch_t(&a, &c, 0.05).unwrap();
        assert!(diff.reject);
        assert_eq!(diff.t_stat, f64::NEG_INFINITY);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let a = stats(0.0, 1.0, 1);
        let b = stats(0.0, 1.0, 30);
        assert_eq!(welch_t(&a, &b, 0.05).unwrap_err(), ChangeError::TooFewSamples(1, 30));
    }

    #[test]
    fn antisymmetric_in_arguments() {
        let a = stats(1.0, 2.0, 12);
        let b = stats(4.0, 0.5, 7);
        let r1 = welch_t(&a, &b, 0.05).unwrap();
        let r2 = welch_t(&b, &a, 0.05).unwrap();
        assert_eq!(r1.t_stat, -r2.t_stat);
        assert_eq!(r1.dof, r2.dof);
        assert_eq!(r1.reject, r2.reject);
    }

    #[test]
    fn welch_matches_independent_reference_on_random_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(20412);
        for _ in 0..1000 {
            let a = stats(rng.gen_range(-50.0..50.0), rng.gen_range(0.1..20.0), rng.gen_range(2..200));
            let b = stats(rng.gen_range(-50.0..50.0), rng.gen_range(0.1..20.0), rng.gen_range(2..200));
            let alpha = rng.gen_range(0.001..0.2);
            let got = welch_t(&a, &b, alpha).unwrap();

            // Independent route: recompute from the definitions and decide
            // with the reference distribution.
            let (na, nb) = (a.n as f64, b.n as f64);
            let (sa, sb) = (a.std * a.std / na, b.std * b.std / nb);
            let t = (a.mean - b.mean) / (sa + sb).sqrt();
            let dof = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
            let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
            let reject = t.abs() > dist.inverse_cdf(1.0 - alpha / 2.0);

            assert!((got.t_stat - t).abs() <= 1e-9 * t.abs().max(1e-12));
            assert!((got.dof - dof).abs() <= 1e-9 * dof);
            assert_eq!(got.reject, reject);
        }
    }

    #[test]
    fn null_rejection_rate_tracks_alpha() {
        // Both samples from the same normal; the per-feature rejection rate
        // must sit within 1.5 percentage points of alpha.
        let alpha = 0.05;
        let mut rng = ChaCha20Rng::seed_from_u64(777);
        let mut rejects = 0u32;
        let trials = 10_000;
        for _ in 0..trials {
            let draw = |rng: &mut ChaCha20Rng| -> SampleStats {
                let values: Vec<f64> = (0..30)
                    .map(|_| {
                        let u1: f64 = rng.gen::<f64>().max(1e-12);
                        let u2: f64 = rng.gen();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                SampleStats::from_values(&values)
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            if welch_t(&a, &b, alpha).unwrap().reject {
                rejects += 1;
            }
        }
        let rate = rejects as f64 / trials as f64;
        assert!((rate - alpha).abs() <= 0.015, "null rejection rate {rate}");
    }

    fn window_from(values: &[f64], index: u64) -> ObservationWindow {
        let schema = FeatureSchema::new(vec!["f".into()]);
        let samples: Vec<RawSample> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| RawSample {
                timestamp: index as f64 * 10.0 + i as f64,
                source_id: "a".into(),
                values: vec![v],
            })
            .collect();
        aggregate_window(&samples, &schema, index, (index as f64 * 10.0, (index + 1) as f64 * 10.0))
            .unwrap()
    }

    #[test]
    fn stream_detects_a_ten_sigma_jump() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let noise = |rng: &mut ChaCha20Rng, mean: f64| -> Vec<f64> {
            (0..10).map(|_| mean + rng.gen_range(-0.5..0.5)).collect()
        };
        let w0 = window_from(&noise(&mut rng, 0.0), 0);
        let w1 = window_from(&noise(&mut rng, 10.0), 1);
        let policy = ChangePolicy { alpha: 0.05, min_features_rejecting: 1, correction: Correction::None };
        assert!(detect_stream(&w0, &w1, &policy).unwrap());

        // Same jump but the rule demands two rejecting features: one feature
        // can never satisfy it.
        let strict = ChangePolicy { min_features_rejecting: 2, ..policy };
        assert!(!detect_stream(&w0, &w1, &strict).unwrap());
    }

    #[test]
    fn identical_windows_are_steady() {
        let w0 = window_from(&[1.0, 2.0, 3.0, 2.0], 0);
        let mut w1 = w0.clone();
        w1.index = 1;
        assert!(!detect_stream(&w0, &w1, &ChangePolicy::default()).unwrap());
    }

    #[test]
    fn nonconsecutive_windows_rejected() {
        let w0 = window_from(&[1.0, 2.0], 0);
        let w5 = window_from(&[1.0, 2.0], 5);
        assert_eq!(
            detect_stream(&w0, &w5, &ChangePolicy::default()).unwrap_err(),
            ChangeError::NonConsecutive { prev: 0, curr: 5 }
        );
    }

    #[test]
    fn batch_flags_the_step_and_nothing_else() {
        let mut rng = ChaCha20Rng::seed_from_u64(4242);
        let mut windows = Vec::new();
        for t in 0..50u64 {
            let mean = if t < 25 { 0.0 } else { 50.0 };
            let values: Vec<f64> = (0..10).map(|_| mean + rng.gen_range(-1.0..1.0)).collect();
            windows.push(window_from(&values, t));
        }
        let policy = ChangePolicy { alpha: 0.001, ..ChangePolicy::default() };
        let flagged = detect_batch(&windows, &policy).unwrap();
        assert_eq!(flagged, BTreeSet::from([25]));

        // Batch result must equal the fold of the streaming decision.
        let mut streamed = BTreeSet::new();
        for pair in windows.windows(2) {
            if detect_stream(&pair[0], &pair[1], &policy).unwrap() {
                streamed.insert(pair[1].index);
            }
        }
        assert_eq!(flagged, streamed);
    }

    #[test]
    fn constant_batch_has_no_transitions() {
        let windows: Vec<_> = (0..50).map(|t| window_from(&[3.0; 10], t)).collect();
        assert!(detect_batch(&windows, &ChangePolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn batch_needs_two_windows() {
        let w = vec![window_from(&[1.0, 2.0], 0)];
        assert_eq!(
            detect_batch(&w, &ChangePolicy::default()).unwrap_err(),
            ChangeError::TooFewWindows(1)
        );
    }
}
