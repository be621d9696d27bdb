//! Batch augmentation schedules: balanced (every feature is sent to a random
//! other class) and unbalanced (head-class features are sent to random tail
//! classes).
//!
//! Generation is deterministic: each feature index gets its own RNG stream
//! derived from the configured seed, so serial and parallel execution, and
//! repeated runs, produce identical batches.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SftError};
use crate::sphere::{self, ClassId, FeatureVector};
use crate::stats::ClassCenters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    Balanced,
    Unbalanced,
}

/// Which transform produces the generated features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Sft,
    SftD,
    Translation,
}

impl TransformKind {
    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Sft => "sft",
            TransformKind::SftD => "sft_d",
            TransformKind::Translation => "translation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub mode: SchedulerMode,
    /// Classes with fewer samples than this are tail classes (unbalanced mode).
    pub tail_threshold: u64,
    /// Weight of the generated-batch loss term.
    pub lambda: f64,
    pub rng_seed: u64,
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(SftError::NonFinite {
                context: "scheduler lambda",
            });
        }
        if self.mode == SchedulerMode::Unbalanced && self.tail_threshold < 1 {
            return Err(SftError::NonFinite {
                context: "tail threshold must be >= 1",
            });
        }
        Ok(())
    }
}

/// Where a generated feature came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub source_index: usize,
    pub source_class: ClassId,
    pub target_class: ClassId,
    pub kind: TransformKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    pub originals: Vec<FeatureVector>,
    pub generated: Vec<FeatureVector>,
    pub provenance: Vec<Provenance>,
}

fn per_feature_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn apply_kind(
    feature: &FeatureVector,
    mu_src_hat: &nalgebra::DVector<f64>,
    mu_dst_hat: &nalgebra::DVector<f64>,
    target: ClassId,
    kind: TransformKind,
) -> Result<FeatureVector> {
    match kind {
        TransformKind::Sft => sphere::sft_transform(feature, mu_src_hat, mu_dst_hat, target),
        TransformKind::SftD => {
            sphere::degenerated_sft(&feature.values, mu_src_hat, mu_dst_hat, target)
        }
        TransformKind::Translation => Ok(FeatureVector::new(
            sphere::translation_transform(&feature.values, mu_src_hat, mu_dst_hat),
            target,
        )),
    }
}

/// Balanced scheme: every feature is transformed into a uniformly random
/// class other than its own, drawn from classes with known centers.
///
/// Features whose own class has no center yet are passed over (nothing can
/// be rotated away from an unknown center); once every batch class is
/// centered the generated batch has exactly one feature per original.
pub fn balanced_augment(
    batch: &[FeatureVector],
    centers: &ClassCenters,
    kind: TransformKind,
    config: &SchedulerConfig,
) -> Result<AugmentedBatch> {
    config.validate()?;
    let eligible: Vec<ClassId> = centers.classes().collect();
    if eligible.len() < 2 {
        return Err(SftError::NoEligibleTarget);
    }
    let mut generated = Vec::with_capacity(batch.len());
    let mut provenance = Vec::with_capacity(batch.len());
    for (index, feature) in batch.iter().enumerate() {
        let mu_src = match centers.get(feature.label) {
            Some(mu) => mu,
            None => continue,
        };
        let targets: Vec<ClassId> = eligible
            .iter()
            .copied()
            .filter(|&c| c != feature.label)
            .collect();
        let mut rng = per_feature_rng(config.rng_seed, index);
        let target = targets[rng.gen_range(0..targets.len())];
        let mu_src_hat = sphere::normalize(mu_src)?;
        let mu_dst_hat = sphere::normalize(centers.get(target).expect("eligible class"))?;
        generated.push(apply_kind(feature, &mu_src_hat, &mu_dst_hat, target, kind)?);
        provenance.push(Provenance {
            source_index: index,
            source_class: feature.label,
            target_class: target,
            kind,
        });
    }
    Ok(AugmentedBatch {
        originals: batch.to_vec(),
        generated,
        provenance,
    })
}

/// Unbalanced scheme: features of head classes (dataset count at or above
/// the threshold) are transformed into uniformly random tail classes; tail
/// features generate nothing.
pub fn unbalanced_augment(
    batch: &[FeatureVector],
    centers: &ClassCenters,
    class_counts: &BTreeMap<ClassId, u64>,
    kind: TransformKind,
    config: &SchedulerConfig,
) -> Result<AugmentedBatch> {
    config.validate()?;
    let tails: Vec<ClassId> = centers
        .classes()
        .filter(|&c| class_counts.get(&c).copied().unwrap_or(0) < config.tail_threshold)
        .collect();
    if tails.is_empty() {
        return Err(SftError::NoTailClasses);
    }
    let mut generated = Vec::new();
    let mut provenance = Vec::new();
    for (index, feature) in batch.iter().enumerate() {
        let count = class_counts.get(&feature.label).copied().unwrap_or(0);
        if count < config.tail_threshold {
            continue;
        }
        let mu_src = match centers.get(feature.label) {
            Some(mu) => mu,
            None => continue,
        };
        let mut rng = per_feature_rng(config.rng_seed, index);
        let target = tails[rng.gen_range(0..tails.len())];
        let mu_src_hat = sphere::normalize(mu_src)?;
        let mu_dst_hat = sphere::normalize(centers.get(target).expect("tail class"))?;
        generated.push(apply_kind(feature, &mu_src_hat, &mu_dst_hat, target, kind)?);
        provenance.push(Provenance {
            source_index: index,
            source_class: feature.label,
            target_class: target,
            kind,
        });
    }
    Ok(AugmentedBatch {
        originals: batch.to_vec(),
        generated,
        provenance,
    })
}

/// Eq-10 style combination: `loss_orig + lambda * loss_gen`.
pub fn combined_loss(loss_orig: f64, loss_gen: f64, lambda: f64) -> Result<f64> {
    if !loss_orig.is_finite() {
        return Err(SftError::NonFinite {
            context: "original loss",
        });
    }
    if !loss_gen.is_finite() {
        return Err(SftError::NonFinite {
            context: "generated loss",
        });
    }
    if !lambda.is_finite() {
        return Err(SftError::NonFinite { context: "lambda" });
    }
    Ok(loss_orig + lambda * loss_gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_unit;
    use nalgebra::DVector;
    use rand_chacha::ChaCha8Rng;

    fn config(seed: u64) -> SchedulerConfig {
        SchedulerConfig {
            mode: SchedulerMode::Balanced,
            tail_threshold: 15,
            lambda: 0.2,
            rng_seed: seed,
        }
    }

    fn two_class_setup() -> (Vec<FeatureVector>, ClassCenters) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu0 = random_unit(6, &mut rng);
        let mu1 = random_unit(6, &mut rng);
        let mut centers = ClassCenters::new();
        centers.insert(0, mu0.clone(), 3);
        centers.insert(1, mu1.clone(), 3);
        let mut batch = Vec::new();
        for i in 0..6 {
            let base = if i % 2 == 0 { &mu0 } else { &mu1 };
            let x = sphere::normalize(&(base + random_unit(6, &mut rng) * 0.1)).unwrap();
            batch.push(FeatureVector::new(x, (i % 2) as ClassId));
        }
        (batch, centers)
    }

    #[test]
    fn balanced_with_two_classes_swaps_labels() {
        let (batch, centers) = two_class_setup();
        let out = balanced_augment(&batch, &centers, TransformKind::Sft, &config(0)).unwrap();
        assert_eq!(out.generated.len(), 6);
        for (g, f) in out.generated.iter().zip(batch.iter()) {
            assert_eq!(g.label, 1 - f.label);
            assert!((g.values.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn balanced_is_deterministic() {
        let (batch, centers) = two_class_setup();
        let a = balanced_augment(&batch, &centers, TransformKind::SftD, &config(42)).unwrap();
        let b = balanced_augment(&batch, &centers, TransformKind::SftD, &config(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_requires_two_centered_classes() {
        let (batch, _) = two_class_setup();
        let mut centers = ClassCenters::new();
        centers.insert(0, DVector::from_element(6, 0.4), 3);
        assert_eq!(
            balanced_augment(&batch, &centers, TransformKind::Sft, &config(0)).unwrap_err(),
            SftError::NoEligibleTarget
        );
    }

    #[test]
    fn balanced_never_self_transfers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut centers = ClassCenters::new();
        let mut batch = Vec::new();
        for class in 0..5u32 {
            let mu = random_unit(8, &mut rng);
            centers.insert(class, mu.clone(), 4);
            for _ in 0..4 {
                let x = sphere::normalize(&(&mu + random_unit(8, &mut rng) * 0.2)).unwrap();
                batch.push(FeatureVector::new(x, class));
            }
        }
        for seed in 0..50 {
            let out =
                balanced_augment(&batch, &centers, TransformKind::Sft, &config(seed)).unwrap();
            for p in &out.provenance {
                assert_ne!(p.source_class, p.target_class);
            }
        }
    }

    #[test]
    fn balanced_targets_are_uniform() {
        // 20 classes x 3 features; over 1000 seeds the pooled target counts
        // should be consistent with the uniform distribution. Chi-square
        // with 19 degrees of freedom: critical value 36.191 at p = 0.01.
        let dim = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut centers = ClassCenters::new();
        let mut batch = Vec::new();
        for class in 0..20u32 {
            let mu = random_unit(dim, &mut rng);
            centers.insert(class, mu.clone(), 3);
            for _ in 0..3 {
                batch.push(FeatureVector::new(mu.clone(), class));
            }
        }
        let mut counts = BTreeMap::new();
        for seed in 0..1000u64 {
            let out =
                balanced_augment(&batch, &centers, TransformKind::Sft, &config(seed)).unwrap();
            assert_eq!(out.generated.len(), 60);
            for p in &out.provenance {
                *counts.entry(p.target_class).or_insert(0u64) += 1;
            }
        }
        let total: u64 = counts.values().sum();
        assert_eq!(total, 60_000);
        let expected = total as f64 / 20.0;
        let chi2: f64 = (0..20u32)
            .map(|c| {
                let observed = counts.get(&c).copied().unwrap_or(0) as f64;
                (observed - expected).powi(2) / expected
            })
            .sum();
        assert!(chi2 < 36.191, "chi-square statistic too large: {chi2}");
    }

    #[test]
    fn unbalanced_sends_heads_to_single_tail() {
        let (batch, centers) = two_class_setup();
        let counts = BTreeMap::from([(0, 50u64), (1, 5u64)]);
        let cfg = SchedulerConfig {
            mode: SchedulerMode::Unbalanced,
            ..config(0)
        };
        // Batch: indices with label 0 are head features, label 1 is tail.
        let out =
            unbalanced_augment(&batch, &centers, &counts, TransformKind::Sft, &cfg).unwrap();
        assert_eq!(out.generated.len(), 3);
        for g in &out.generated {
            assert_eq!(g.label, 1);
        }
    }

    #[test]
    fn unbalanced_without_tails_errors() {
        let (batch, centers) = two_class_setup();
        let counts = BTreeMap::from([(0, 50u64), (1, 40u64)]);
        let cfg = SchedulerConfig {
            mode: SchedulerMode::Unbalanced,
            ..config(0)
        };
        assert_eq!(
            unbalanced_augment(&batch, &centers, &counts, TransformKind::Sft, &cfg).unwrap_err(),
            SftError::NoTailClasses
        );
    }

    #[test]
    fn unbalanced_tail_targets_are_even() {
        let dim = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut centers = ClassCenters::new();
        for class in 0..3u32 {
            centers.insert(class, random_unit(dim, &mut rng), 10);
        }
        let counts = BTreeMap::from([(0, 50u64), (1, 5u64), (2, 5u64)]);
        let head = centers.get(0).unwrap().clone();
        let batch: Vec<FeatureVector> = (0..100)
            .map(|_| FeatureVector::new(head.clone(), 0))
            .collect();
        let cfg = SchedulerConfig {
            mode: SchedulerMode::Unbalanced,
            ..config(0)
        };
        let mut to_b = 0u64;
        let mut total = 0u64;
        for seed in 0..200u64 {
            let cfg = SchedulerConfig {
                rng_seed: seed,
                ..cfg
            };
            let out =
                unbalanced_augment(&batch, &centers, &counts, TransformKind::Sft, &cfg).unwrap();
            assert_eq!(out.generated.len(), 100);
            for p in &out.provenance {
                total += 1;
                if p.target_class == 1 {
                    to_b += 1;
                }
            }
        }
        let frequency = to_b as f64 / total as f64;
        assert!(
            (frequency - 0.5).abs() < 0.02,
            "tail split should be near 50/50, got {frequency}"
        );
    }

    #[test]
    fn translation_kind_leaves_sphere() {
        let (batch, centers) = two_class_setup();
        let out =
            balanced_augment(&batch, &centers, TransformKind::Translation, &config(3)).unwrap();
        let max_dev = out
            .generated
            .iter()
            .map(|g| (g.values.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev > 1e-3, "translation output should leave the sphere");
    }

    #[test]
    fn combined_loss_arithmetic() {
        assert_eq!(combined_loss(1.0, 2.0, 0.2).unwrap(), 1.4);
        assert_eq!(combined_loss(1.0, 5.0, 0.0).unwrap(), 1.0);
        assert_eq!(combined_loss(0.7, 0.3, 1.0).unwrap(), 1.0);
        assert!(combined_loss(f64::NAN, 0.0, 0.2).is_err());
        assert!(combined_loss(0.0, f64::INFINITY, 0.2).is_err());
    }

    #[test]
    fn combined_loss_monotone_in_generated() {
        let base = combined_loss(1.0, 1.0, 0.5).unwrap();
        assert!(combined_loss(1.0, 1.5, 0.5).unwrap() > base);
    }
}
