//! Anticipation of unseen hybrid workloads: pair the known pure classes,
//! synthesize a prototype characterization and instances for each pair, and
//! merge them into the workload-classifier training set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledInstance;
use crate::discovery::generate_label;
use crate::kb::{FeatureSummary, WorkloadCharacterization, WorkloadDb, WorkloadRecord};

#[derive(Debug, Error)]
pub enum ZslError {
    #[error("the WorkloadDB holds no observed workloads to pair")]
    NoPureClasses,
    #[error("characterizations disagree on feature count: {0} vs {1}")]
    SchemaMismatch(usize, usize),
    #[error("label {0} appears in both observed and synthetic training rows")]
    LabelCollision(u32),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
}

/// Pure classes plus every anticipated hybrid pairing, with the labels
/// assigned to the hybrids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDescriptor {
    pub pure_classes: Vec<(u32, WorkloadCharacterization)>,
    /// (label_a, label_b, hybrid_label), enumerated with label_a < label_b.
    pub hybrid_pairs: Vec<(u32, u32, u32)>,
}

/// Enumerate pure classes and hybrid pairs from the WorkloadDB. Pairs that
/// already have a synthetic record keep their label; new pairs get labels
/// from the shared integer counter.
pub fn build_class_descriptors(db: &WorkloadDb) -> Result<ClassDescriptor, ZslError> {
    let pure: Vec<(u32, WorkloadCharacterization)> = db
        .records()
        .filter(|r| !r.is_synthetic)
        .map(|r| (r.label, r.characterization.clone()))
        .collect();
    if pure.is_empty() {
        return Err(ZslError::NoPureClasses);
    }
    let mut next = generate_label(db);
    let mut hybrid_pairs = Vec::new();
    for i in 0..pure.len() {
        for j in i + 1..pure.len() {
            let (a, b) = (pure[i].0, pure[j].0);
            let label = db
                .records()
                .find(|r| r.hybrid_of == Some((a, b)))
                .map(|r| r.label)
                .unwrap_or_else(|| {
                    let l = next;
                    next += 1;
                    l
                });
            hybrid_pairs.push((a, b, label));
        }
    }
    Ok(ClassDescriptor { pure_classes: pure, hybrid_pairs })
}

/// Equal-weight two-component mixture of the parents, feature by feature:
/// mean is the midpoint, variance the mixture second central moment,
/// min/max the envelope, percentiles the midpoints of the parents' values.
/// window_count of zero marks the record as synthetic.
pub fn synthesize_prototype(
    a: &WorkloadCharacterization,
    b: &WorkloadCharacterization,
) -> Result<WorkloadCharacterization, ZslError> {
    if a.feature_count() != b.feature_count() {
        return Err(ZslError::SchemaMismatch(a.feature_count(), b.feature_count()));
    }
    let per_feature = a
        .per_feature
        .iter()
        .zip(&b.per_feature)
        .map(|(fa, fb)| {
            let gap = fa.mean - fb.mean;
            FeatureSummary {
                mean: 0.5 * (fa.mean + fb.mean),
                std: (0.5 * (fa.std * fa.std + fb.std * fb.std) + 0.25 * gap * gap).sqrt(),
                min: fa.min.min(fb.min),
                max: fa.max.max(fb.max),
                p90: 0.5 * (fa.p90 + fb.p90),
                p75: 0.5 * (fa.p75 + fb.p75),
            }
        })
        .collect();
    Ok(WorkloadCharacterization { per_feature, window_count: 0, window_ids: Vec::new() })
}

/// Draw labeled instances from a prototype: independent per-feature
/// Gaussians at (mean, std), clipped to [min, max]. Deterministic for a
/// fixed seed.
pub fn sample_synthetic_instances(
    proto: &WorkloadCharacterization,
    label: u32,
    n: usize,
    seed: u64,
) -> Vec<LabeledInstance> {
    assert!(n >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let features = proto
                .per_feature
                .iter()
                .map(|f| (f.mean + f.std * standard_normal(&mut rng)).clamp(f.min, f.max))
                .collect();
            LabeledInstance::new(features, label)
        })
        .collect()
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream position predictable.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Concatenate observed and synthetic rows, observed first. The two label
/// sets must be disjoint.
pub fn merge_training_sets(
    observed: &[LabeledInstance],
    synthetic: &[LabeledInstance],
) -> Result<Vec<LabeledInstance>, ZslError> {
    for s in synthetic {
        if observed.iter().any(|o| o.label == s.label) {
            return Err(ZslError::LabelCollision(s.label));
        }
    }
    let mut merged = Vec::with_capacity(observed.len() + synthetic.len());
    merged.extend_from_slice(observed);
    merged.extend_from_slice(synthetic);
    Ok(merged)
}

/// Run the whole anticipation step against the WorkloadDB: build the
/// descriptor, then insert a synthetic prototype record for every hybrid
/// pair that does not have one yet. Synthetic records never drift and never
/// hold a configuration at creation.
pub fn register_synthetic_prototypes(
    db: &mut WorkloadDb,
    kb: Option<&crate::kb::KnowledgeBase>,
) -> Result<ClassDescriptor, ZslError> {
    let descriptor = build_class_descriptors(db)?;
    for &(a, b, label) in &descriptor.hybrid_pairs {
        if db.get_workload(label).is_ok() {
            continue;
        }
        let proto = {
            let ca = &db.get_workload(a)?.characterization;
            let cb = &db.get_workload(b)?.characterization;
            synthesize_prototype(ca, cb)?
        };
        db.upsert_workload(
            kb,
            WorkloadRecord {
                label,
                characterization: proto,
                has_optimal_config: false,
                is_drifting: false,
                config: None,
                is_synthetic: true,
                hybrid_of: Some((a, b)),
            },
        )?;
    }
    Ok(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn characterization(means: &[f64], stds: &[f64], n: u64) -> WorkloadCharacterization {
        WorkloadCharacterization {
            per_feature: means
                .iter()
                .zip(stds)
                .map(|(&m, &s)| FeatureSummary {
                    mean: m,
                    std: s,
                    min: m - 3.0 * s - 1.0,
                    max: m + 3.0 * s + 1.0,
                    p90: m + s,
                    p75: m + 0.5 * s,
                })
                .collect(),
            window_count: n,
            window_ids: if n > 0 { vec![(0, n - 1)] } else { vec![] },
        }
    }

    fn pure_record(label: u32, means: &[f64]) -> WorkloadRecord {
        WorkloadRecord {
            label,
            characterization: characterization(means, &vec![1.0; means.len()], 10),
            has_optimal_config: false,
            is_drifting: false,
            config: None,
            is_synthetic: false,
            hybrid_of: None,
        }
    }

    #[test]
    fn pair_counts_follow_binomials() {
        let mut db = WorkloadDb::new();
        db.upsert_workload(None, pure_record(1, &[0.0])).unwrap();
        assert_eq!(build_class_descriptors(&db).unwrap().hybrid_pairs.len(), 0);
        db.upsert_workload(None, pure_record(2, &[5.0])).unwrap();
        assert_eq!(build_class_descriptors(&db).unwrap().hybrid_pairs.len(), 1);
        db.upsert_workload(None, pure_record(3, &[10.0])).unwrap();
        db.upsert_workload(None, pure_record(4, &[15.0])).unwrap();
        let d = build_class_descriptors(&db).unwrap();
        assert_eq!(d.hybrid_pairs.len(), 6);
        for (a, b, label) in &d.hybrid_pairs {
            assert!(a < b);
            assert!(*label > 4);
        }
        // No duplicated pair and no duplicated hybrid label.
        let mut labels: Vec<u32> = d.hybrid_pairs.iter().map(|p| p.2).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 6);
    }

    #[test]
    fn empty_db_has_no_pure_classes() {
        let db = WorkloadDb::new();
        assert!(matches!(build_class_descriptors(&db), Err(ZslError::NoPureClasses)));
    }

    #[test]
    fn prototype_of_identical_parents_is_the_parent() {
        let c = characterization(&[2.0, -1.0], &[0.5, 0.25], 10);
        let proto = synthesize_prototype(&c, &c).unwrap();
        for (p, f) in proto.per_feature.iter().zip(&c.per_feature) {
            assert!((p.mean - f.mean).abs() < 1e-12);
            assert!((p.std - f.std).abs() < 1e-12);
            assert_eq!(p.min, f.min);
            assert_eq!(p.max, f.max);
            assert_eq!(p.p90, f.p90);
            assert_eq!(p.p75, f.p75);
        }
        assert_eq!(proto.window_count, 0);
    }

    #[test]
    fn two_point_mixture_std_is_half_the_gap() {
        let a = characterization(&[0.0], &[0.0], 10);
        let b = characterization(&[10.0], &[0.0], 10);
        let proto = synthesize_prototype(&a, &b).unwrap();
        assert_eq!(proto.per_feature[0].mean, 5.0);
        assert_eq!(proto.per_feature[0].std, 5.0);
        assert!(proto.per_feature[0].min <= 0.0 && proto.per_feature[0].max >= 10.0);
    }

    #[test]
    fn prototype_is_symmetric() {
        let a = characterization(&[1.0, 2.0], &[0.3, 0.9], 10);
        let b = characterization(&[4.0, -2.0], &[1.1, 0.2], 10);
        assert_eq!(
            synthesize_prototype(&a, &b).unwrap(),
            synthesize_prototype(&b, &a).unwrap()
        );
    }

    #[test]
    fn mixture_moments_match_monte_carlo() {
        // 1e6 mixture draws; the prototype std must land within 1% relative.
        let a = characterization(&[3.0], &[1.2], 10);
        let b = characterization(&[8.0], &[0.4], 10);
        let proto = synthesize_prototype(&a, &b).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let (m, s) = if i % 2 == 0 { (3.0, 1.2) } else { (8.0, 0.4) };
            let x = m + s * standard_normal(&mut rng);
            sum += x;
            sumsq += x * x;
        }
        let mc_mean = sum / n as f64;
        let mc_std = (sumsq / n as f64 - mc_mean * mc_mean).sqrt();
        assert!((proto.per_feature[0].mean - mc_mean).abs() / mc_mean.abs() < 0.01);
        assert!((proto.per_feature[0].std - mc_std).abs() / mc_std < 0.01);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let a = characterization(&[0.0], &[1.0], 10);
        let b = characterization(&[0.0, 1.0], &[1.0, 1.0], 10);
        assert!(matches!(
            synthesize_prototype(&a, &b),
            Err(ZslError::SchemaMismatch(1, 2))
        ));
    }

    #[test]
    fn degenerate_prototype_samples_collapse_to_mean() {
        let mut proto = characterization(&[4.0, -2.0], &[0.0, 0.0], 0);
        for f in &mut proto.per_feature {
            f.min = f.mean;
            f.max = f.mean;
        }
        let instances = sample_synthetic_instances(&proto, 42, 5, 0);
        for inst in &instances {
            assert_eq!(inst.features, vec![4.0, -2.0]);
            assert_eq!(inst.label, 42);
        }
    }

    #[test]
    fn sample_mean_approaches_prototype_mean() {
        let proto = characterization(&[10.0, -3.0], &[2.0, 0.5], 0);
        let n = 10_000;
        let instances = sample_synthetic_instances(&proto, 1, n, 2024);
        assert_eq!(instances, sample_synthetic_instances(&proto, 1, n, 2024));
        for (i, f) in proto.per_feature.iter().enumerate() {
            let mean: f64 =
                instances.iter().map(|x| x.features[i]).sum::<f64>() / n as f64;
            assert!(
                (mean - f.mean).abs() <= 3.0 * f.std / (n as f64).sqrt() + 1e-9,
                "feature {i}: sample mean {mean} vs {}",
                f.mean
            );
            for inst in &instances {
                assert!(inst.features[i] >= f.min && inst.features[i] <= f.max);
            }
        }
    }

    #[test]
    fn merge_keeps_order_and_detects_collisions() {
        let observed = vec![
            LabeledInstance::new(vec![0.0], 1),
            LabeledInstance::new(vec![1.0], 2),
        ];
        let synthetic = vec![LabeledInstance::new(vec![2.0], 9)];
        let merged = merge_training_sets(&observed, &synthetic).unwrap();
        assert_eq!(merged.len(), 3);
        assert_eq!(merged[0].label, 1);
        assert_eq!(merged[2].label, 9);
        assert_eq!(merge_training_sets(&observed, &[]).unwrap(), observed);

        let clash = vec![LabeledInstance::new(vec![2.0], 2)];
        assert!(matches!(
            merge_training_sets(&observed, &clash),
            Err(ZslError::LabelCollision(2))
        ));
    }

    #[test]
    fn registration_inserts_every_hybrid_once() {
        let mut db = WorkloadDb::new();
        db.upsert_workload(None, pure_record(1, &[0.0, 0.0])).unwrap();
        db.upsert_workload(None, pure_record(2, &[10.0, 10.0])).unwrap();
        db.upsert_workload(None, pure_record(3, &[20.0, 0.0])).unwrap();
        let d1 = register_synthetic_prototypes(&mut db, None).unwrap();
        assert_eq!(d1.hybrid_pairs.len(), 3);
        for &(_, _, label) in &d1.hybrid_pairs {
            let rec = db.get_workload(label).unwrap();
            assert!(rec.is_synthetic);
            assert_eq!(rec.characterization.window_count, 0);
        }
        // Re-running reuses the same labels and adds nothing.
        let count = db.len();
        let d2 = register_synthetic_prototypes(&mut db, None).unwrap();
        assert_eq!(d1.hybrid_pairs, d2.hybrid_pairs);
        assert_eq!(db.len(), count);
    }
}
