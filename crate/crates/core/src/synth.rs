//! Controlled spherical class distributions.
//!
//! A template cloud is drawn as a tangent-space Gaussian at e1 with a chosen
//! eigenvalue spectrum, projected onto the sphere by normalization. Every
//! other class is a freshly sampled copy of the same cloud rotated onto a
//! random mean direction, so with `noise_mix = 0` the classes are exact
//! rotated copies of one another distributionally and share their covariance
//! spectrum. `noise_mix > 0` perturbs each class's spectrum by independent
//! per-eigenvalue factors.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SftError};
use crate::sphere::{self, ClassId, FeatureVector, RotationMatrix, RotationPlan};

pub const DEFAULT_MIN_SEPARATION_DEG: f64 = 30.0;

/// Attempts per class when rejection-sampling separated mean directions.
const SEPARATION_TRIES: usize = 1000;

/// Stream reserved for mean-direction sampling; class substreams use the
/// class index.
const MEANS_STREAM: u64 = u64::MAX;

fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION_DEG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    /// Tangent-space covariance spectrum, length dim - 1.
    pub template_eigenvalues: Vec<f64>,
    /// One count per class; unequal counts give long-tailed datasets.
    pub samples_per_class: Vec<u64>,
    /// 0 gives exactly spherical-homoscedastic classes; positive values
    /// scale each class's eigenvalues by independent 1 + noise_mix * U(-1,1)
    /// factors.
    pub noise_mix: f64,
    pub rng_seed: u64,
    /// Minimum pairwise angle between class means, degrees. Also applied as
    /// a cap below 180deg so rotation planes stay well conditioned.
    #[serde(default = "default_min_separation")]
    pub min_separation_deg: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(SftError::DimensionMismatch {
                expected: 3,
                got: self.dim,
            });
        }
        if self.num_classes < 2 {
            return Err(SftError::InsufficientClasses {
                got: self.num_classes,
            });
        }
        if self.template_eigenvalues.len() != self.dim - 1 {
            return Err(SftError::DimensionMismatch {
                expected: self.dim - 1,
                got: self.template_eigenvalues.len(),
            });
        }
        if self.template_eigenvalues.iter().any(|&l| !(l >= 0.0)) {
            return Err(SftError::NonFinite {
                context: "template eigenvalues must be >= 0",
            });
        }
        if self.samples_per_class.len() != self.num_classes {
            return Err(SftError::DimensionMismatch {
                expected: self.num_classes,
                got: self.samples_per_class.len(),
            });
        }
        if self.samples_per_class.iter().any(|&n| n == 0) {
            return Err(SftError::InsufficientSamples { needed: 1, got: 0 });
        }
        if !(0.0..=1.0).contains(&self.noise_mix) {
            return Err(SftError::NonFinite {
                context: "noise_mix must lie in [0, 1]",
            });
        }
        if !(0.0..180.0).contains(&self.min_separation_deg) {
            return Err(SftError::NonFinite {
                context: "min_separation_deg must lie in [0, 180)",
            });
        }
        Ok(())
    }

    pub fn total_samples(&self) -> u64 {
        self.samples_per_class.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<FeatureVector>,
    pub class_counts: BTreeMap<ClassId, u64>,
    /// Unit mean directions, one per class; class 0 sits at e1.
    pub ground_truth_centers: Vec<DVector<f64>>,
    /// Rotation carrying the template cloud onto each class; identity for
    /// class 0.
    pub ground_truth_rotations: Vec<RotationMatrix>,
}

/// Spec with per-class counts set to a head/tail split. Mirrors the
/// 50-versus-5 samples-per-class ratio of face-recognition long-tail
/// protocols at desk scale.
pub fn make_longtail(
    base: &SyntheticSpec,
    head_count: u64,
    tail_count: u64,
    head_classes: usize,
    tail_classes: usize,
) -> SyntheticSpec {
    let mut samples_per_class = vec![head_count; head_classes];
    samples_per_class.extend(std::iter::repeat(tail_count).take(tail_classes));
    SyntheticSpec {
        num_classes: head_classes + tail_classes,
        samples_per_class,
        ..base.clone()
    }
}

fn sample_mean_directions(spec: &SyntheticSpec) -> Result<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(MEANS_STREAM);
    let max_cos = spec.min_separation_deg.to_radians().cos();
    let mut e1 = DVector::zeros(spec.dim);
    e1[0] = 1.0;
    let mut means = vec![e1];
    for _ in 1..spec.num_classes {
        let mut placed = false;
        for _ in 0..SEPARATION_TRIES {
            let candidate = crate::synth::random_unit(spec.dim, &mut rng);
            // |dot| <= cos(min_sep) keeps the angle away from both 0 and 180.
            if means.iter().all(|m| m.dot(&candidate).abs() <= max_cos) {
                means.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SftError::InfeasibleSeparation {
                classes: spec.num_classes,
                dim: spec.dim,
                min_separation_deg: spec.min_separation_deg,
            });
        }
    }
    Ok(means)
}

pub(crate) fn random_unit(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    use rand_distr::StandardNormal;
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        if v.norm() > 1e-3 {
            return v / v.norm();
        }
    }
}

/// Generates the dataset described by `spec`, byte-identical per seed.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    let dataset = generate_with_holdout(spec, 0)?;
    Ok(dataset.0)
}

/// Like [`generate`], but additionally draws `holdout_per_class` extra
/// samples per class from the same class clouds (fresh substreams) for use
/// as a test split.
pub fn generate_with_holdout(
    spec: &SyntheticSpec,
    holdout_per_class: u64,
) -> Result<(LabeledDataset, Vec<FeatureVector>)> {
    spec.validate()?;
    let means = sample_mean_directions(spec)?;
    let dim = spec.dim;

    let mut plans: Vec<Option<RotationPlan>> = Vec::with_capacity(spec.num_classes);
    let mut rotations = Vec::with_capacity(spec.num_classes);
    plans.push(None);
    rotations.push(RotationMatrix::identity(dim));
    let e1 = means[0].clone();
    for mean in means.iter().skip(1) {
        let plan = sphere::schmidt_pair(&e1, mean)?;
        rotations.push(sphere::rodrigues_rotation(&plan));
        plans.push(Some(plan));
    }

    let mut features = Vec::new();
    let mut holdout = Vec::new();
    let mut class_counts = BTreeMap::new();
    for class in 0..spec.num_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        rng.set_stream(class as u64);
        // Per-class spectrum perturbation, drawn even at noise_mix = 0 so
        // the sample stream does not shift with the noise setting.
        let scales: Vec<f64> = spec
            .template_eigenvalues
            .iter()
            .map(|&l| {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                l * (1.0 + spec.noise_mix * u)
            })
            .collect();
        let normals: Vec<Normal<f64>> = scales
            .iter()
            .map(|&l| Normal::new(0.0, l.sqrt()).expect("nonnegative std dev"))
            .collect();
        let count = spec.samples_per_class[class];
        let mut draw = |rng: &mut ChaCha8Rng| -> FeatureVector {
            let mut raw = DVector::zeros(dim);
            raw[0] = 1.0;
            for (j, normal) in normals.iter().enumerate() {
                raw[j + 1] = normal.sample(rng);
            }
            // raw[0] = 1 keeps the norm >= 1, so this cannot fail.
            let mut x = sphere::normalize(&raw).expect("norm at least one");
            if let Some(plan) = &plans[class] {
                x = plan.apply(&x);
            }
            FeatureVector::new(x, class as ClassId)
        };
        for _ in 0..count {
            features.push(draw(&mut rng));
        }
        for _ in 0..holdout_per_class {
            holdout.push(draw(&mut rng));
        }
        class_counts.insert(class as ClassId, count);
    }

    Ok((
        LabeledDataset {
            features,
            class_counts,
            ground_truth_centers: means,
            ground_truth_rotations: rotations,
        },
        holdout,
    ))
}
