//! Streaming class-center estimation, scatter matrices, and the spectral
//! diagnostics around the rotation prior.
//!
//! The center update follows the center-loss convention: each mini-batch
//! pulls the stored center toward the batch features of its class. All
//! diagnostics recompute from a held feature snapshot; there is no
//! cross-epoch streaming covariance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SftError};
use crate::sphere::{self, ClassId, FeatureVector};

/// Per-class running mean estimates with sample counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassCenters {
    centers: BTreeMap<ClassId, DVector<f64>>,
    counts: BTreeMap<ClassId, u64>,
}

impl ClassCenters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Per-class means of a feature snapshot, with counts.
    pub fn estimate_from(features: &[FeatureVector]) -> Result<Self> {
        if features.is_empty() {
            return Err(SftError::InsufficientSamples { needed: 1, got: 0 });
        }
        let mut out = Self::new();
        let dim = features[0].dim();
        let mut sums: BTreeMap<ClassId, DVector<f64>> = BTreeMap::new();
        for f in features {
            if f.dim() != dim {
                return Err(SftError::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                });
            }
            sums.entry(f.label)
                .or_insert_with(|| DVector::zeros(dim))
                .axpy(1.0, &f.values, 1.0);
            *out.counts.entry(f.label).or_insert(0) += 1;
        }
        for (class, sum) in sums {
            let n = out.counts[&class] as f64;
            out.centers.insert(class, sum / n);
        }
        Ok(out)
    }

    pub fn insert(&mut self, class: ClassId, center: DVector<f64>, count: u64) {
        self.centers.insert(class, center);
        self.counts.insert(class, count);
    }

    pub fn get(&self, class: ClassId) -> Option<&DVector<f64>> {
        self.centers.get(&class)
    }

    pub fn count(&self, class: ClassId) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    /// Class ids in ascending order.
    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.centers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.centers.values().next().map(|c| c.len())
    }

    /// Mini-batch center update.
    ///
    /// For each class j present in the batch,
    /// `delta = sum_{y_i = j} (mu_j - x_i) / (1 + m_j)` and
    /// `mu_j <- mu_j - delta`, pulling the center toward the batch features.
    /// Classes absent from the batch are untouched; a class seen for the
    /// first time is initialized to the mean of its batch features (the
    /// update is then a fixed point, so the two paths agree).
    pub fn update(&mut self, batch: &[FeatureVector]) -> Result<()> {
        if batch.is_empty() {
            return Err(SftError::InsufficientSamples { needed: 1, got: 0 });
        }
        let dim = self.dim().unwrap_or_else(|| batch[0].dim());
        let mut sums: BTreeMap<ClassId, (DVector<f64>, u64)> = BTreeMap::new();
        for f in batch {
            if f.dim() != dim {
                return Err(SftError::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                });
            }
            let entry = sums
                .entry(f.label)
                .or_insert_with(|| (DVector::zeros(dim), 0));
            entry.0.axpy(1.0, &f.values, 1.0);
            entry.1 += 1;
        }
        for (class, (sum, m)) in sums {
            match self.centers.get_mut(&class) {
                Some(mu) => {
                    // delta = (m*mu - sum) / (1 + m)
                    let delta = (&*mu * m as f64 - sum) / (1.0 + m as f64);
                    *mu -= delta;
                }
                None => {
                    self.centers.insert(class, sum / m as f64);
                }
            }
            *self.counts.entry(class).or_insert(0) += m;
        }
        Ok(())
    }
}

/// Gaussian approximation of a spherical distribution: sample mean and
/// biased (1/N) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianApprox {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn gaussian_approximation(features: &[DVector<f64>]) -> Result<GaussianApprox> {
    if features.len() < 2 {
        return Err(SftError::InsufficientSamples {
            needed: 2,
            got: features.len(),
        });
    }
    let dim = features[0].len();
    let n = features.len() as f64;
    let mut mean = DVector::zeros(dim);
    for f in features {
        if f.len() != dim {
            return Err(SftError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        mean.axpy(1.0, f, 1.0);
    }
    mean /= n;
    let mut covariance = DMatrix::zeros(dim, dim);
    for f in features {
        let d = f - &mean;
        covariance.syger(1.0 / n, &d, &d, 1.0);
    }
    covariance.fill_upper_triangle_with_lower_triangle();
    Ok(GaussianApprox { mean, covariance })
}

/// Within-class scatter of one class about a given center (outer-product
/// average of deviations).
pub fn class_scatter(
    features: &[FeatureVector],
    class: ClassId,
    center: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let dim = center.len();
    let mut scatter = DMatrix::zeros(dim, dim);
    let mut n = 0u64;
    for f in features.iter().filter(|f| f.label == class) {
        if f.dim() != dim {
            return Err(SftError::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        let d = &f.values - center;
        scatter.syger(1.0, &d, &d, 1.0);
        n += 1;
    }
    if n == 0 {
        return Err(SftError::EmptyClass(class));
    }
    scatter.fill_upper_triangle_with_lower_triangle();
    Ok(scatter / n as f64)
}

/// Trace of the per-class scatter matrix; measures intra-class spread.
pub fn class_divergence(
    features: &[FeatureVector],
    class: ClassId,
    center: &DVector<f64>,
) -> Result<f64> {
    Ok(class_scatter(features, class, center)?.trace())
}

/// Between-class and within-class scatter matrices.
///
/// `s_c` averages center outer products over all stored classes; `s_w`
/// averages per-class scatters about the stored centers, with classes that
/// have no samples contributing zero. Every feature's class must have a
/// center.
pub fn scatter_matrices(
    features: &[FeatureVector],
    centers: &ClassCenters,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = centers.dim().ok_or(SftError::InsufficientClasses { got: 0 })?;
    for f in features {
        if centers.get(f.label).is_none() {
            return Err(SftError::MissingCenter(f.label));
        }
    }
    let num_classes = centers.len() as f64;
    let mut s_c = DMatrix::zeros(dim, dim);
    let mut s_w = DMatrix::zeros(dim, dim);
    for class in centers.classes().collect::<Vec<_>>() {
        let mu = centers.get(class).expect("class listed");
        s_c.syger(1.0 / num_classes, mu, mu, 1.0);
        match class_scatter(features, class, mu) {
            Ok(scatter) => s_w += scatter / num_classes,
            Err(SftError::EmptyClass(_)) => {}
            Err(e) => return Err(e),
        }
    }
    s_c.fill_upper_triangle_with_lower_triangle();
    Ok((s_c, s_w))
}

/// Eigen-decomposition of a (nearly) symmetric matrix, eigenvalues in
/// descending order with matching eigenvector columns. The input is
/// symmetrized as (M + M^T)/2 first to absorb accumulation drift.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dim = m.nrows();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of a covariance matrix in descending order.
pub fn covariance_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen(m).0
}

/// Fraction of within-class scatter energy lying in the top-k eigenspace
/// of the between-class scatter: `trace(U^T S_w U) / trace(S_w)`.
///
/// 0 means the center and variance subspaces are orthogonal; 1 at k = D.
pub fn orthogonality_ratio(s_c: &DMatrix<f64>, s_w: &DMatrix<f64>, k: usize) -> Result<f64> {
    let dim = s_c.nrows();
    if k == 0 || k > dim {
        return Err(SftError::InvalidSubspaceSize { k, dim });
    }
    let total = s_w.trace();
    if total < 1e-15 {
        return Err(SftError::ZeroWithinScatter);
    }
    let (_, vectors) = sym_eigen(s_c);
    let mut energy = 0.0;
    for col in 0..k {
        let u = vectors.column(col);
        energy += (s_w * u).dot(&u);
    }
    Ok(energy / total)
}

/// How far the variance part of `x` is from the rotation's invariant
/// subspace: `d = ||A sigma - sigma||` with `sigma = x - mu_src/||mu_src||`.
///
/// Zero iff the rotation and the translation transform agree on `x`.
/// Parallel means give the identity rotation and d = 0; antipodal means are
/// rejected.
pub fn degeneration_distance(
    x: &FeatureVector,
    mu_src: &DVector<f64>,
    mu_dst: &DVector<f64>,
) -> Result<f64> {
    let mu_src_hat = sphere::normalize(mu_src)?;
    let sigma = x.variance_part(&mu_src_hat);
    match sphere::schmidt_pair(mu_src, mu_dst) {
        Ok(plan) => Ok((plan.apply(&sigma) - sigma).norm()),
        Err(SftError::DegeneratePlane {
            antipodal: false, ..
        }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Spectrum comparison across per-class Gaussian approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrumReport {
    /// Per-class covariance eigenvalues, descending.
    pub spectra: Vec<Vec<f64>>,
    /// Mean over class pairs and ranks of |l_i - l'_i| / max(l_i, l'_i).
    pub mean_relative_eigenvalue_difference: f64,
    /// Same measure on position-aligned covariance diagonal entries.
    pub mean_relative_diagonal_difference: f64,
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-15 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Compares covariance spectra and diagonals across classes.
///
/// Rotated copies of one distribution share the spectrum exactly while
/// their diagonals differ, which is the contrast this report quantifies.
pub fn eigen_spectrum_report(per_class: &[GaussianApprox]) -> Result<EigenSpectrumReport> {
    if per_class.len() < 2 {
        return Err(SftError::InsufficientClasses {
            got: per_class.len(),
        });
    }
    let spectra: Vec<Vec<f64>> = per_class
        .iter()
        .map(|g| covariance_eigenvalues(&g.covariance))
        .collect();
    let mut eig_sum = 0.0;
    let mut diag_sum = 0.0;
    let mut terms = 0usize;
    for i in 0..per_class.len() {
        for j in (i + 1)..per_class.len() {
            for r in 0..spectra[i].len() {
                eig_sum += relative_difference(spectra[i][r], spectra[j][r]);
                diag_sum += relative_difference(
                    per_class[i].covariance[(r, r)],
                    per_class[j].covariance[(r, r)],
                );
                terms += 1;
            }
        }
    }
    Ok(EigenSpectrumReport {
        spectra,
        mean_relative_eigenvalue_difference: eig_sum / terms as f64,
        mean_relative_diagonal_difference: diag_sum / terms as f64,
    })
}

/// Histogram bin edges for degeneration distances: 0.0, 0.05, ..., 2.0.
pub fn degeneration_bin_edges() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.05).collect()
}

/// Counts per bin; distances at or beyond the last edge land in the final
/// bin so totals always match the input length.
pub fn degeneration_histogram(distances: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; 40];
    for &d in distances {
        let bin = ((d / 0.05).floor() as usize).min(39);
        counts[bin] += 1;
    }
    counts
}

/// The full diagnostic bundle over a feature snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterReport {
    pub s_c: DMatrix<f64>,
    pub s_w: DMatrix<f64>,
    pub per_class_divergence: BTreeMap<ClassId, f64>,
    pub r_w_curve: Vec<(usize, f64)>,
    pub degeneration_distances: Vec<f64>,
}

/// Serialized form of [`ScatterReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterReportDoc {
    pub s_c_eigenvalues: Vec<f64>,
    pub per_class_divergence: BTreeMap<ClassId, f64>,
    pub r_w_curve: Vec<(usize, f64)>,
    pub degeneration_histogram: DegenerationHistogramDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerationHistogramDoc {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ScatterReport {
    /// Builds the report from a feature snapshot and its centers.
    ///
    /// Degeneration distances are sampled by assigning every feature a
    /// uniformly random target class other than its own, deterministically
    /// from `seed`.
    pub fn compute(features: &[FeatureVector], centers: &ClassCenters, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};

        let (s_c, s_w) = scatter_matrices(features, centers)?;
        let dim = s_c.nrows();

        let mut per_class_divergence = BTreeMap::new();
        for class in centers.classes().collect::<Vec<_>>() {
            let mu = centers.get(class).expect("class listed");
            match class_divergence(features, class, mu) {
                Ok(d) => {
                    per_class_divergence.insert(class, d);
                }
                Err(SftError::EmptyClass(_)) => {}
                Err(e) => return Err(e),
            }
        }

        let mut r_w_curve = Vec::with_capacity(dim);
        for k in 1..=dim {
            r_w_curve.push((k, orthogonality_ratio(&s_c, &s_w, k)?.clamp(0.0, 1.0)));
        }

        let classes: Vec<ClassId> = centers.classes().collect();
        let mut degeneration_distances = Vec::with_capacity(features.len());
        for (idx, f) in features.iter().enumerate() {
            let others: Vec<ClassId> =
                classes.iter().copied().filter(|&c| c != f.label).collect();
            if others.is_empty() {
                continue;
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let target = others[rng.gen_range(0..others.len())];
            let mu_src = centers.get(f.label).expect("checked above");
            let mu_dst = centers.get(target).expect("class listed");
            match degeneration_distance(f, mu_src, mu_dst) {
                Ok(d) => degeneration_distances.push(d),
                Err(SftError::DegeneratePlane { .. }) => {}
                Err(e) => return Err(e),
            }
        }

        Ok(Self {
            s_c,
            s_w,
            per_class_divergence,
            r_w_curve,
            degeneration_distances,
        })
    }

    pub fn to_doc(&self) -> ScatterReportDoc {
        ScatterReportDoc {
            s_c_eigenvalues: covariance_eigenvalues(&self.s_c),
            per_class_divergence: self.per_class_divergence.clone(),
            r_w_curve: self.r_w_curve.clone(),
            degeneration_histogram: DegenerationHistogramDoc {
                bin_edges: degeneration_bin_edges(),
                counts: degeneration_histogram(&self.degeneration_distances),
            },
        }
    }
}

/// Population standard deviation; 0 for fewer than two values.
pub fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}
