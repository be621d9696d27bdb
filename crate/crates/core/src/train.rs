//! Desk-scale training harness: a linear embedding model with L2-normalized
//! outputs, a batch-all triplet loss with hand-rolled gradients, plain SGD,
//! and the generate / update-centers / optimize loop.
//!
//! During a step the rotation (or translation) is a constant of the current
//! centers; gradients flow through the source feature only. Centers are
//! running statistics updated from original features after generation, never
//! parameters.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SftError};
use crate::scheduler::{
    balanced_augment, combined_loss, unbalanced_augment, AugmentedBatch, SchedulerConfig,
    SchedulerMode, TransformKind,
};
use crate::sphere::{self, ClassId, FeatureVector, RotationPlan, ZERO_NORM_EPS};
use crate::stats::ClassCenters;

const INIT_STREAM: u64 = u64::MAX - 2;
const BATCH_STREAM: u64 = u64::MAX - 1;

/// Linear map followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    /// d_out x d_in.
    pub weight: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
}

impl EmbeddingModel {
    pub fn new(weight: DMatrix<f64>, bias: Option<DVector<f64>>) -> Self {
        Self { weight, bias }
    }

    /// Gaussian init scaled by 1/sqrt(d_in); bias starts at zero.
    pub fn random(d_out: usize, d_in: usize, with_bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (d_in as f64).sqrt();
        let mut weight = DMatrix::zeros(d_out, d_in);
        for r in 0..d_out {
            for c in 0..d_in {
                let g: f64 = StandardNormal.sample(rng);
                weight[(r, c)] = g * scale;
            }
        }
        let bias = with_bias.then(|| DVector::zeros(d_out));
        Self { weight, bias }
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    /// Unit-norm embeddings of a batch of raw inputs.
    pub fn forward(&self, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        Ok(self.forward_cached(inputs)?.embeddings)
    }

    fn forward_cached(&self, inputs: &[DVector<f64>]) -> Result<ForwardCache> {
        let mut pre_norm = Vec::with_capacity(inputs.len());
        let mut norms = Vec::with_capacity(inputs.len());
        let mut embeddings = Vec::with_capacity(inputs.len());
        for input in inputs {
            if input.len() != self.d_in() {
                return Err(SftError::DimensionMismatch {
                    expected: self.d_in(),
                    got: input.len(),
                });
            }
            if input.iter().any(|v| !v.is_finite()) {
                return Err(SftError::NonFinite {
                    context: "model input",
                });
            }
            let mut z = &self.weight * input;
            if let Some(b) = &self.bias {
                z += b;
            }
            let norm = z.norm();
            if norm < ZERO_NORM_EPS {
                return Err(SftError::ZeroNorm);
            }
            embeddings.push(&z / norm);
            pre_norm.push(z);
            norms.push(norm);
        }
        Ok(ForwardCache {
            pre_norm,
            norms,
            embeddings,
        })
    }
}

struct ForwardCache {
    pre_norm: Vec<DVector<f64>>,
    norms: Vec<f64>,
    embeddings: Vec<DVector<f64>>,
}

/// Pullback of a gradient through x -> x/||x||, evaluated from the cached
/// unit output and pre-normalization norm. The result is tangent to the
/// unit vector.
fn normalize_pullback(unit: &DVector<f64>, norm: f64, grad: &DVector<f64>) -> DVector<f64> {
    let radial = unit.dot(grad);
    let mut out = grad.clone();
    out.axpy(-radial, unit, 1.0);
    out / norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletLossSpec {
    pub margin: f64,
}

impl Default for TripletLossSpec {
    fn default() -> Self {
        Self { margin: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct TripletResult {
    pub loss: f64,
    /// d loss / d embedding, one per input embedding.
    pub gradients: Vec<DVector<f64>>,
    pub active_triplets: usize,
    pub valid_triplets: usize,
}

/// Batch-all triplet loss with squared Euclidean distances, averaged over
/// the active (margin-violating) triplets.
pub fn triplet_loss(
    embeddings: &[DVector<f64>],
    labels: &[ClassId],
    spec: &TripletLossSpec,
) -> Result<TripletResult> {
    assert_eq!(embeddings.len(), labels.len());
    if !spec.margin.is_finite() {
        return Err(SftError::NonFinite {
            context: "triplet margin",
        });
    }
    let n = embeddings.len();
    let dim = embeddings.first().map(|e| e.len()).unwrap_or(0);

    let mut dist_sq = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (&embeddings[i] - &embeddings[j]).norm_squared();
            dist_sq[(i, j)] = d;
            dist_sq[(j, i)] = d;
        }
    }

    let mut loss = 0.0;
    let mut gradients = vec![DVector::zeros(dim); n];
    let mut active = 0usize;
    let mut valid = 0usize;
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                valid += 1;
                let hinge = dist_sq[(a, p)] - dist_sq[(a, neg)] + spec.margin;
                if hinge > 0.0 {
                    active += 1;
                    loss += hinge;
                    // d hinge / d e_a = 2 (e_n - e_p), etc.
                    gradients[a].axpy(2.0, &embeddings[neg], 1.0);
                    gradients[a].axpy(-2.0, &embeddings[p], 1.0);
                    gradients[p].axpy(2.0, &embeddings[p], 1.0);
                    gradients[p].axpy(-2.0, &embeddings[a], 1.0);
                    gradients[neg].axpy(2.0, &embeddings[a], 1.0);
                    gradients[neg].axpy(-2.0, &embeddings[neg], 1.0);
                }
            }
        }
    }
    if valid == 0 {
        return Err(SftError::NoValidTriplets);
    }
    if active > 0 {
        let inv = 1.0 / active as f64;
        loss *= inv;
        for g in &mut gradients {
            *g *= inv;
        }
    }
    Ok(TripletResult {
        loss,
        gradients,
        active_triplets: active,
        valid_triplets: valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub margin: f64,
    pub p_classes: usize,
    pub k_samples: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            margin: 0.1,
            p_classes: 20,
            k_samples: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity_weight: DMatrix<f64>,
    velocity_bias: Option<DVector<f64>>,
}

impl SgdState {
    fn for_model(model: &EmbeddingModel) -> Self {
        Self {
            velocity_weight: DMatrix::zeros(model.d_out(), model.d_in()),
            velocity_bias: model.bias.as_ref().map(|b| DVector::zeros(b.len())),
        }
    }
}

/// Losses, counters, and parameter gradients for one batch.
pub struct LossBundle {
    pub loss_orig: f64,
    pub loss_gen: f64,
    pub combined: f64,
    pub active_triplets: usize,
    pub generated: usize,
    pub grad_weight: DMatrix<f64>,
    pub grad_bias: Option<DVector<f64>>,
    pub embeddings: Vec<DVector<f64>>,
}

fn augment_for_training(
    features: &[FeatureVector],
    centers: &ClassCenters,
    kind: TransformKind,
    scheduler: &SchedulerConfig,
    class_counts: &BTreeMap<ClassId, u64>,
) -> Result<AugmentedBatch> {
    let empty = || AugmentedBatch {
        originals: features.to_vec(),
        generated: Vec::new(),
        provenance: Vec::new(),
    };
    let result = match scheduler.mode {
        SchedulerMode::Balanced => balanced_augment(features, centers, kind, scheduler),
        SchedulerMode::Unbalanced => {
            unbalanced_augment(features, centers, class_counts, kind, scheduler)
        }
    };
    match result {
        Ok(batch) => Ok(batch),
        // Warmup: not enough centers estimated yet to pick targets.
        Err(SftError::NoEligibleTarget) | Err(SftError::NoTailClasses) => Ok(empty()),
        Err(e) => Err(e),
    }
}

/// Forward, generation, both triplet losses, and gradients for the model
/// parameters. Centers are read, never written; the generated loss term is
/// skipped entirely from the gradient when lambda is zero so that the
/// trajectory is bitwise identical to a run without augmentation.
pub fn loss_and_gradients(
    model: &EmbeddingModel,
    inputs: &[DVector<f64>],
    labels: &[ClassId],
    centers: &ClassCenters,
    transform: Option<TransformKind>,
    scheduler: &SchedulerConfig,
    class_counts: &BTreeMap<ClassId, u64>,
    loss_spec: &TripletLossSpec,
) -> Result<LossBundle> {
    let cache = model.forward_cached(inputs)?;
    let features: Vec<FeatureVector> = cache
        .embeddings
        .iter()
        .zip(labels)
        .map(|(e, &label)| FeatureVector::new(e.clone(), label))
        .collect();

    let orig = triplet_loss(&cache.embeddings, labels, loss_spec)?;

    let augmented = match transform {
        Some(kind) => augment_for_training(&features, centers, kind, scheduler, class_counts)?,
        None => AugmentedBatch {
            originals: features,
            generated: Vec::new(),
            provenance: Vec::new(),
        },
    };

    let mut loss_gen = 0.0;
    let mut gen_active = 0usize;
    let mut gen_grads: Option<Vec<DVector<f64>>> = None;
    if !augmented.generated.is_empty() {
        let gen_embeddings: Vec<DVector<f64>> =
            augmented.generated.iter().map(|f| f.values.clone()).collect();
        let gen_labels: Vec<ClassId> = augmented.generated.iter().map(|f| f.label).collect();
        match triplet_loss(&gen_embeddings, &gen_labels, loss_spec) {
            Ok(res) => {
                loss_gen = res.loss;
                gen_active = res.active_triplets;
                gen_grads = Some(res.gradients);
            }
            // A generated batch can land with every label unique; it then
            // contributes nothing this step.
            Err(SftError::NoValidTriplets) => {}
            Err(e) => return Err(e),
        }
    }

    let combined = combined_loss(orig.loss, loss_gen, scheduler.lambda)?;

    // Gradient w.r.t. each original embedding.
    let mut embedding_grads = orig.gradients;
    if scheduler.lambda > 0.0 {
        if let Some(gen_grads) = gen_grads {
            for (record, grad) in augmented.provenance.iter().zip(gen_grads.iter()) {
                let source = record.source_index;
                let pulled = pull_back_through_transform(
                    record.kind,
                    &cache.embeddings[source],
                    centers,
                    record.source_class,
                    record.target_class,
                    grad,
                )?;
                embedding_grads[source].axpy(scheduler.lambda, &pulled, 1.0);
            }
        }
    }

    // Through the normalization, then into the parameters.
    let mut grad_weight = DMatrix::zeros(model.d_out(), model.d_in());
    let mut grad_bias = model.bias.as_ref().map(|b| DVector::zeros(b.len()));
    for (i, grad_e) in embedding_grads.iter().enumerate() {
        let grad_z = normalize_pullback(&cache.embeddings[i], cache.norms[i], grad_e);
        grad_weight.ger(1.0, &grad_z, &inputs[i], 1.0);
        if let Some(gb) = grad_bias.as_mut() {
            *gb += &grad_z;
        }
    }

    Ok(LossBundle {
        loss_orig: orig.loss,
        loss_gen,
        combined,
        active_triplets: orig.active_triplets + gen_active,
        generated: augmented.generated.len(),
        grad_weight,
        grad_bias,
        embeddings: cache.embeddings,
    })
}

/// Gradient of a generated feature pulled back to its source embedding,
/// treating centers (and hence the rotation) as constants of the step.
fn pull_back_through_transform(
    kind: TransformKind,
    source_embedding: &DVector<f64>,
    centers: &ClassCenters,
    source_class: ClassId,
    target_class: ClassId,
    grad: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mu_src = centers
        .get(source_class)
        .ok_or(SftError::MissingCenter(source_class))?;
    let mu_dst = centers
        .get(target_class)
        .ok_or(SftError::MissingCenter(target_class))?;
    let mu_src_hat = sphere::normalize(mu_src)?;
    let mu_dst_hat = sphere::normalize(mu_dst)?;
    match kind {
        TransformKind::Sft => match sphere::schmidt_pair(&mu_src_hat, &mu_dst_hat) {
            // A^T is the rotation by -alpha in the same plane.
            Ok(plan) => {
                let transposed = RotationPlan {
                    alpha: -plan.alpha,
                    ..plan
                };
                Ok(transposed.apply(grad))
            }
            Err(SftError::DegeneratePlane {
                antipodal: false, ..
            }) => Ok(grad.clone()),
            Err(e) => Err(e),
        },
        TransformKind::Translation => Ok(grad.clone()),
        TransformKind::SftD => {
            let translated =
                sphere::translation_transform(source_embedding, &mu_src_hat, &mu_dst_hat);
            let norm = translated.norm();
            if norm < ZERO_NORM_EPS {
                return Err(SftError::ZeroNorm);
            }
            let unit = translated / norm;
            Ok(normalize_pullback(&unit, norm, grad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub iteration: u64,
    pub loss_orig: f64,
    pub loss_gen: f64,
    pub combined: f64,
    pub active_triplets: usize,
    pub generated: usize,
}

/// Everything the training loop mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: EmbeddingModel,
    pub centers: ClassCenters,
    pub iteration: u64,
    pub hyper: Hyperparams,
    pub transform: Option<TransformKind>,
    pub scheduler: SchedulerConfig,
    pub class_counts: BTreeMap<ClassId, u64>,
    optimizer: SgdState,
    batch_rng: ChaCha8Rng,
    loss_spec: TripletLossSpec,
}

impl TrainState {
    /// Validates the configuration against the dataset label histogram.
    pub fn new(
        d_in: usize,
        d_out: usize,
        with_bias: bool,
        hyper: Hyperparams,
        transform: Option<TransformKind>,
        scheduler: SchedulerConfig,
        train_labels: &[ClassId],
        seed: u64,
    ) -> Result<Self> {
        scheduler.validate()?;
        let mut class_counts = BTreeMap::new();
        for &label in train_labels {
            *class_counts.entry(label).or_insert(0u64) += 1;
        }
        if class_counts.len() < 2 {
            return Err(SftError::InsufficientClasses {
                got: class_counts.len(),
            });
        }
        if transform.is_some() && scheduler.mode == SchedulerMode::Unbalanced {
            let has_tail = class_counts.values().any(|&c| c < scheduler.tail_threshold);
            if !has_tail {
                return Err(SftError::NoTailClasses);
            }
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(INIT_STREAM);
        let model = EmbeddingModel::random(d_out, d_in, with_bias, &mut init_rng);
        let optimizer = SgdState::for_model(&model);
        let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
        batch_rng.set_stream(BATCH_STREAM);
        Ok(Self {
            model,
            centers: ClassCenters::new(),
            iteration: 0,
            loss_spec: TripletLossSpec {
                margin: hyper.margin,
            },
            hyper,
            transform,
            scheduler,
            class_counts,
            optimizer,
            batch_rng,
        })
    }

    /// One pass of the training loop: forward, generate, update centers,
    /// combine losses, SGD step.
    pub fn step(&mut self, inputs: &[DVector<f64>], labels: &[ClassId]) -> Result<StepMetrics> {
        let bundle = loss_and_gradients(
            &self.model,
            inputs,
            labels,
            &self.centers,
            self.transform,
            &self.scheduler,
            &self.class_counts,
            &self.loss_spec,
        )?;

        // Centers move after generation, using only original features.
        let features: Vec<FeatureVector> = bundle
            .embeddings
            .iter()
            .zip(labels)
            .map(|(e, &l)| FeatureVector::new(e.clone(), l))
            .collect();
        self.centers.update(&features)?;

        self.apply_gradients(&bundle);
        self.iteration += 1;
        Ok(StepMetrics {
            iteration: self.iteration,
            loss_orig: bundle.loss_orig,
            loss_gen: bundle.loss_gen,
            combined: bundle.combined,
            active_triplets: bundle.active_triplets,
            generated: bundle.generated,
        })
    }

    fn apply_gradients(&mut self, bundle: &LossBundle) {
        let h = &self.hyper;
        let mut grad = bundle.grad_weight.clone();
        if h.weight_decay > 0.0 {
            grad += &self.model.weight * h.weight_decay;
        }
        if h.momentum > 0.0 {
            self.optimizer.velocity_weight *= h.momentum;
            self.optimizer.velocity_weight += &grad;
            self.model.weight -= &self.optimizer.velocity_weight * h.learning_rate;
        } else {
            self.model.weight -= &grad * h.learning_rate;
        }
        if let (Some(bias), Some(grad_bias)) = (self.model.bias.as_mut(), &bundle.grad_bias) {
            let mut grad = grad_bias.clone();
            if h.weight_decay > 0.0 {
                grad.axpy(h.weight_decay, bias, 1.0);
            }
            if h.momentum > 0.0 {
                let vb = self
                    .optimizer
                    .velocity_bias
                    .as_mut()
                    .expect("bias velocity allocated with bias");
                *vb *= h.momentum;
                *vb += &grad;
                bias.axpy(-h.learning_rate, vb, 1.0);
            } else {
                bias.axpy(-h.learning_rate, &grad, 1.0);
            }
        }
    }

    /// Draws the next P-classes-by-K-samples batch as dataset indices.
    /// P shrinks to the number of classes when the dataset is smaller.
    pub fn sample_batch(&mut self, by_class: &BTreeMap<ClassId, Vec<usize>>) -> Vec<usize> {
        sample_batch(
            by_class,
            self.hyper.p_classes,
            self.hyper.k_samples,
            &mut self.batch_rng,
        )
    }
}

pub fn class_index(labels: &[ClassId]) -> BTreeMap<ClassId, Vec<usize>> {
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    by_class
}

pub fn sample_batch(
    by_class: &BTreeMap<ClassId, Vec<usize>>,
    p_classes: usize,
    k_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let classes: Vec<ClassId> = by_class.keys().copied().collect();
    let p = p_classes.min(classes.len());
    let chosen = rand::seq::index::sample(rng, classes.len(), p);
    let mut batch = Vec::with_capacity(p * k_samples);
    for class_pos in chosen.iter() {
        let members = &by_class[&classes[class_pos]];
        if members.len() >= k_samples {
            for member_pos in rand::seq::index::sample(rng, members.len(), k_samples).iter() {
                batch.push(members[member_pos]);
            }
        } else {
            for _ in 0..k_samples {
                batch.push(members[rng.gen_range(0..members.len())]);
            }
        }
    }
    batch
}

/// Runs `iterations` steps over the dataset, invoking `on_metrics` once per
/// step.
pub fn train(
    state: &mut TrainState,
    inputs: &[DVector<f64>],
    labels: &[ClassId],
    iterations: u64,
    mut on_metrics: impl FnMut(&StepMetrics),
) -> Result<()> {
    let by_class = class_index(labels);
    for _ in 0..iterations {
        let batch_indices = state.sample_batch(&by_class);
        let batch_inputs: Vec<DVector<f64>> =
            batch_indices.iter().map(|&i| inputs[i].clone()).collect();
        let batch_labels: Vec<ClassId> = batch_indices.iter().map(|&i| labels[i]).collect();
        let metrics = state.step(&batch_inputs, &batch_labels)?;
        on_metrics(&metrics);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub recall_at_1: f64,
    pub per_class_accuracy: BTreeMap<ClassId, f64>,
    /// Mean per-class accuracy over classes at or above the tail threshold.
    pub head_accuracy: Option<f64>,
    /// Mean per-class accuracy over classes below the tail threshold.
    pub tail_accuracy: Option<f64>,
    pub queries: usize,
}

/// Retrieval and classification metrics on a held-out set.
///
/// Recall@1 is nearest-neighbor (excluding self) over test embeddings;
/// queries whose class has no second sample are skipped since they can
/// never succeed. Classification is nearest normalized center; the head /
/// tail split uses the training-set counts against `tail_threshold`.
pub fn evaluate(
    model: &EmbeddingModel,
    test_inputs: &[DVector<f64>],
    test_labels: &[ClassId],
    centers: &ClassCenters,
    train_counts: &BTreeMap<ClassId, u64>,
    tail_threshold: Option<u64>,
) -> Result<EvalMetrics> {
    if test_inputs.is_empty() {
        return Err(SftError::EmptyTestSet);
    }
    let distinct: std::collections::BTreeSet<ClassId> = test_labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(SftError::EmptyTestSet);
    }
    let embeddings = model.forward(test_inputs)?;
    let n = embeddings.len();

    let mut label_counts: BTreeMap<ClassId, u64> = BTreeMap::new();
    for &l in test_labels {
        *label_counts.entry(l).or_insert(0) += 1;
    }

    let mut hits = 0usize;
    let mut queries = 0usize;
    for i in 0..n {
        if label_counts[&test_labels[i]] < 2 {
            continue;
        }
        queries += 1;
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (&embeddings[i] - &embeddings[j]).norm_squared();
            if d < best_dist {
                best_dist = d;
                best = j;
            }
        }
        if test_labels[best] == test_labels[i] {
            hits += 1;
        }
    }
    if queries == 0 {
        return Err(SftError::NoPositivePairs);
    }

    let classes: Vec<ClassId> = centers.classes().collect();
    let mut unit_centers = Vec::with_capacity(classes.len());
    for &c in &classes {
        unit_centers.push(sphere::normalize(centers.get(c).expect("class listed"))?);
    }
    let mut correct: BTreeMap<ClassId, u64> = BTreeMap::new();
    let mut seen: BTreeMap<ClassId, u64> = BTreeMap::new();
    for (e, &label) in embeddings.iter().zip(test_labels) {
        if centers.get(label).is_none() {
            return Err(SftError::MissingCenter(label));
        }
        let mut best_class = classes[0];
        let mut best_sim = f64::NEG_INFINITY;
        for (&c, mu) in classes.iter().zip(&unit_centers) {
            let sim = e.dot(mu);
            if sim > best_sim {
                best_sim = sim;
                best_class = c;
            }
        }
        *seen.entry(label).or_insert(0) += 1;
        if best_class == label {
            *correct.entry(label).or_insert(0) += 1;
        }
    }
    let per_class_accuracy: BTreeMap<ClassId, f64> = seen
        .iter()
        .map(|(&c, &n)| (c, correct.get(&c).copied().unwrap_or(0) as f64 / n as f64))
        .collect();

    let (head_accuracy, tail_accuracy) = match tail_threshold {
        Some(threshold) => {
            let mut head = Vec::new();
            let mut tail = Vec::new();
            for (&c, &acc) in &per_class_accuracy {
                if train_counts.get(&c).copied().unwrap_or(0) >= threshold {
                    head.push(acc);
                } else {
                    tail.push(acc);
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            (mean(&head), mean(&tail))
        }
        None => (None, None),
    };

    Ok(EvalMetrics {
        recall_at_1: hits as f64 / queries as f64,
        per_class_accuracy,
        head_accuracy,
        tail_accuracy,
        queries,
    })
}
