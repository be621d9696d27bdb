//! Unit-sphere vector operations and the three feature transforms.
//!
//! A feature of class 1 is carried onto class 2 either by translation along
//! the difference of class means (the flat-space prior), or by the rotation
//! that maps the mean direction of class 1 onto the mean direction of
//! class 2. The rotation acts in the plane spanned by the two means and
//! leaves the orthogonal complement fixed, so it keeps features on the
//! sphere and preserves all inner products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SftError};

/// Class labels are non-negative integers.
pub type ClassId = u32;

/// Norms below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-15;

/// |cos| above `1 - PLANE_EPS` means the two directions do not span a plane.
pub const PLANE_EPS: f64 = 1e-9;

/// A labeled embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: DVector<f64>,
    pub label: ClassId,
}

impl FeatureVector {
    pub fn new(values: DVector<f64>, label: ClassId) -> Self {
        Self { values, label }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The variance part relative to a class center: sigma = x - mu.
    pub fn variance_part(&self, center: &DVector<f64>) -> DVector<f64> {
        &self.values - center
    }
}

/// The data needed to build the rotation of [`sft_transform`]: an
/// orthonormal pair spanning the rotation plane and the rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationPlan {
    /// Unit vector along the source mean direction.
    pub n1: DVector<f64>,
    /// Unit vector orthogonal to `n1` in the span of both means.
    pub n2: DVector<f64>,
    /// Angle between the two mean directions, in [0, pi].
    pub alpha: f64,
}

impl RotationPlan {
    pub fn dim(&self) -> usize {
        self.n1.len()
    }

    /// Applies the rotation as a rank-2 update, O(D) per vector.
    ///
    /// Equivalent to multiplying by [`rodrigues_rotation`]'s matrix; the two
    /// routes agree within 1e-12 and the matrix form exists for tests.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let a = self.n1.dot(x);
        let b = self.n2.dot(x);
        let (sin_a, cos_a) = self.alpha.sin_cos();
        let mut out = x.clone();
        out.axpy(a * (cos_a - 1.0) - b * sin_a, &self.n1, 1.0);
        out.axpy(b * (cos_a - 1.0) + a * sin_a, &self.n2, 1.0);
        out
    }
}

/// A proper rotation acting in the plane of a [`RotationPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix {
    pub entries: DMatrix<f64>,
}

impl RotationMatrix {
    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.entries * x
    }
}

/// Scales a vector to unit L2 norm.
pub fn normalize(v: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if norm < ZERO_NORM_EPS {
        return Err(SftError::ZeroNorm);
    }
    Ok(v / norm)
}

/// Gram-Schmidt step producing the rotation plane between two mean vectors.
///
/// `n1` is the unit source direction, `n2` completes it to an orthonormal
/// basis of span{mu1, mu2}, and `alpha` is the angle between the directions.
/// Fails with [`SftError::DegeneratePlane`] when the directions are parallel
/// or antipodal, since no unique plane exists.
pub fn schmidt_pair(mu1: &DVector<f64>, mu2: &DVector<f64>) -> Result<RotationPlan> {
    if mu1.len() != mu2.len() {
        return Err(SftError::DimensionMismatch {
            expected: mu1.len(),
            got: mu2.len(),
        });
    }
    let n1 = normalize(mu1)?;
    let mu2_norm = mu2.norm();
    if mu2_norm < ZERO_NORM_EPS {
        return Err(SftError::ZeroNorm);
    }
    let cos_alpha = n1.dot(mu2) / mu2_norm;
    if cos_alpha.abs() > 1.0 - PLANE_EPS {
        return Err(SftError::DegeneratePlane {
            antipodal: cos_alpha < 0.0,
            cos_abs: cos_alpha.abs(),
        });
    }
    let mut residual = mu2.clone();
    residual.axpy(-mu2.dot(&n1), &n1, 1.0);
    let n2 = normalize(&residual)?;
    let alpha = cos_alpha.clamp(-1.0, 1.0).acos();
    Ok(RotationPlan { n1, n2, alpha })
}

/// Rodrigues form of the plane rotation:
/// `A = I + (n2 n1^T - n1 n2^T) sin(a) + (n1 n1^T + n2 n2^T)(cos(a) - 1)`.
///
/// `A` is orthogonal with determinant +1, maps `n1` to
/// `cos(a) n1 + sin(a) n2`, and fixes every vector orthogonal to the plane.
pub fn rodrigues_rotation(plan: &RotationPlan) -> RotationMatrix {
    let dim = plan.dim();
    let (sin_a, cos_a) = plan.alpha.sin_cos();
    let n1 = &plan.n1;
    let n2 = &plan.n2;
    let mut entries = DMatrix::identity(dim, dim);
    entries += (n2 * n1.transpose() - n1 * n2.transpose()) * sin_a;
    entries += (n1 * n1.transpose() + n2 * n2.transpose()) * (cos_a - 1.0);
    RotationMatrix { entries }
}

/// Rotates a feature from the source class onto the target class.
///
/// The rotation carries the unit source mean onto the unit target mean; the
/// centers are normalized to directions before the plane is built. Norm and
/// all inner products are preserved. Parallel means reduce to the identity
/// rotation (the feature is only relabeled); antipodal means are rejected.
pub fn sft_transform(
    x: &FeatureVector,
    mu_src: &DVector<f64>,
    mu_dst: &DVector<f64>,
    dst_label: ClassId,
) -> Result<FeatureVector> {
    match schmidt_pair(mu_src, mu_dst) {
        Ok(plan) => Ok(FeatureVector::new(plan.apply(&x.values), dst_label)),
        Err(SftError::DegeneratePlane {
            antipodal: false, ..
        }) => Ok(FeatureVector::new(x.values.clone(), dst_label)),
        Err(e) => Err(e),
    }
}

/// The flat-space transform: `x + mu_dst - mu_src`.
///
/// In general the result is not unit-norm; that failure on the sphere is
/// what motivates the rotation form.
pub fn translation_transform(
    x: &DVector<f64>,
    mu_src: &DVector<f64>,
    mu_dst: &DVector<f64>,
) -> DVector<f64> {
    x + mu_dst - mu_src
}

/// Translation followed by reprojection onto the sphere.
///
/// Coincides with [`sft_transform`] exactly when the variance part of `x`
/// lies in the rotation's invariant subspace and the centers are unit.
pub fn degenerated_sft(
    x: &DVector<f64>,
    mu_src: &DVector<f64>,
    mu_dst: &DVector<f64>,
    dst_label: ClassId,
) -> Result<FeatureVector> {
    let translated = translation_transform(x, mu_src, mu_dst);
    Ok(FeatureVector::new(normalize(&translated)?, dst_label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_unit;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn normalize_scales_to_unit() {
        let out = normalize(&dvec(&[3.0, 4.0])).unwrap();
        assert_relative_eq!(out[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(out[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn normalize_is_identity_on_unit_input() {
        let v = dvec(&[1.0, 0.0, 0.0]);
        assert_eq!(normalize(&v).unwrap(), v);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert_eq!(normalize(&dvec(&[0.0, 0.0])), Err(SftError::ZeroNorm));
    }

    #[test]
    fn schmidt_pair_orthogonal_inputs() {
        let plan = schmidt_pair(&dvec(&[1.0, 0.0]), &dvec(&[0.0, 1.0])).unwrap();
        assert_eq!(plan.n1, dvec(&[1.0, 0.0]));
        assert_eq!(plan.n2, dvec(&[0.0, 1.0]));
        assert_relative_eq!(plan.alpha, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn schmidt_pair_hand_case() {
        // mu1 = (2,0,0), mu2 = (1,1,0): residual (1,1,0) - 1*(1,0,0) = (0,1,0),
        // cos(alpha) = 1/sqrt(2).
        let plan = schmidt_pair(&dvec(&[2.0, 0.0, 0.0]), &dvec(&[1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(plan.n1.as_slice()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(plan.n2.as_slice()[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(plan.alpha, FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(plan.n1.dot(&plan.n2), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn schmidt_pair_rejects_parallel() {
        let err = schmidt_pair(&dvec(&[1.0, 0.0]), &dvec(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(
            err,
            SftError::DegeneratePlane {
                antipodal: false,
                ..
            }
        ));
    }

    #[test]
    fn schmidt_pair_rejects_antipodal() {
        let err = schmidt_pair(&dvec(&[1.0, 0.0]), &dvec(&[-2.0, 0.0])).unwrap_err();
        assert!(matches!(
            err,
            SftError::DegeneratePlane { antipodal: true, .. }
        ));
    }

    #[test]
    fn rodrigues_planar_quarter_turn() {
        let plan = RotationPlan {
            n1: dvec(&[1.0, 0.0, 0.0]),
            n2: dvec(&[0.0, 1.0, 0.0]),
            alpha: FRAC_PI_2,
        };
        let a = rodrigues_rotation(&plan);
        let e1 = a.apply(&dvec(&[1.0, 0.0, 0.0]));
        let e2 = a.apply(&dvec(&[0.0, 1.0, 0.0]));
        let e3 = a.apply(&dvec(&[0.0, 0.0, 1.0]));
        assert_relative_eq!((e1 - dvec(&[0.0, 1.0, 0.0])).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((e2 - dvec(&[-1.0, 0.0, 0.0])).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((e3 - dvec(&[0.0, 0.0, 1.0])).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rodrigues_zero_angle_is_identity() {
        let plan = RotationPlan {
            n1: dvec(&[1.0, 0.0, 0.0, 0.0]),
            n2: dvec(&[0.0, 0.0, 1.0, 0.0]),
            alpha: 0.0,
        };
        let a = rodrigues_rotation(&plan);
        assert_relative_eq!(
            (&a.entries - DMatrix::<f64>::identity(4, 4)).abs().max(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rodrigues_random_plane_in_4d() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n1 = random_unit(4, &mut rng);
        let mut n2 = random_unit(4, &mut rng);
        n2.axpy(-n2.dot(&n1), &n1, 1.0);
        n2 = normalize(&n2).unwrap();
        let plan = RotationPlan {
            n1: n1.clone(),
            n2: n2.clone(),
            alpha: 1.0,
        };
        let a = rodrigues_rotation(&plan);
        let gram = a.entries.transpose() * &a.entries;
        assert_relative_eq!(
            (gram - DMatrix::<f64>::identity(4, 4)).abs().max(),
            0.0,
            epsilon = 1e-12
        );
        let rotated = a.apply(&n1);
        let expected = &n1 * 1.0_f64.cos() + &n2 * 1.0_f64.sin();
        assert_relative_eq!((rotated - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank2_apply_matches_matrix_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2usize, 3, 8, 32] {
            let mu1 = random_unit(dim, &mut rng);
            let mu2 = random_unit(dim, &mut rng);
            let plan = match schmidt_pair(&mu1, &mu2) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let a = rodrigues_rotation(&plan);
            for _ in 0..10 {
                let x = random_unit(dim, &mut rng);
                let fast = plan.apply(&x);
                let slow = a.apply(&x);
                assert!((fast - slow).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sft_maps_center_to_center() {
        let x = FeatureVector::new(dvec(&[1.0, 0.0]), 0);
        let out = sft_transform(&x, &dvec(&[1.0, 0.0]), &dvec(&[0.0, 1.0]), 1).unwrap();
        assert_relative_eq!((out.values - dvec(&[0.0, 1.0])).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(out.label, 1);
    }

    #[test]
    fn sft_fixes_invariant_subspace_vector() {
        let x = FeatureVector::new(dvec(&[0.0, 0.0, 1.0]), 0);
        let out = sft_transform(&x, &dvec(&[1.0, 0.0, 0.0]), &dvec(&[0.0, 1.0, 0.0]), 1).unwrap();
        assert_relative_eq!((out.values - dvec(&[0.0, 0.0, 1.0])).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sft_preserves_norm_and_angle_to_center() {
        let x = FeatureVector::new(normalize(&dvec(&[0.9, 0.1, 0.42])).unwrap(), 0);
        let mu_src = dvec(&[1.0, 0.0, 0.0]);
        let mu_dst = dvec(&[1.0, 1.0, 0.0]);
        let out = sft_transform(&x, &mu_src, &mu_dst, 1).unwrap();
        // Oracle route: explicit matrix multiplication.
        let a = rodrigues_rotation(&schmidt_pair(&mu_src, &mu_dst).unwrap());
        assert!((out.values.clone() - a.apply(&x.values)).norm() < 1e-12);
        assert_relative_eq!(out.values.norm(), 1.0, epsilon = 1e-10);
        let mu_dst_hat = normalize(&mu_dst).unwrap();
        assert_relative_eq!(
            out.values.dot(&mu_dst_hat),
            x.values.dot(&mu_src),
            epsilon = 1e-10
        );
    }

    #[test]
    fn sft_parallel_means_relabels() {
        let x = FeatureVector::new(dvec(&[0.6, 0.8]), 0);
        let out = sft_transform(&x, &dvec(&[1.0, 0.0]), &dvec(&[2.0, 0.0]), 3).unwrap();
        assert_eq!(out.values, x.values);
        assert_eq!(out.label, 3);
    }

    #[test]
    fn sft_antipodal_means_rejected() {
        let x = FeatureVector::new(dvec(&[0.6, 0.8]), 0);
        let err = sft_transform(&x, &dvec(&[1.0, 0.0]), &dvec(&[-1.0, 0.0]), 1).unwrap_err();
        assert!(matches!(
            err,
            SftError::DegeneratePlane { antipodal: true, .. }
        ));
    }

    #[test]
    fn translation_moves_by_center_difference() {
        let out = translation_transform(&dvec(&[1.0, 0.0]), &dvec(&[1.0, 0.0]), &dvec(&[0.0, 1.0]));
        assert_eq!(out, dvec(&[0.0, 1.0]));

        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let x = dvec(&[inv_sqrt2, inv_sqrt2]);
        let out = translation_transform(&x, &dvec(&[1.0, 0.0]), &dvec(&[0.0, 1.0]));
        assert_relative_eq!(out[0], inv_sqrt2 - 1.0, epsilon = 1e-15);
        assert_relative_eq!(out[1], inv_sqrt2 + 1.0, epsilon = 1e-15);
        assert!((out.norm() - 1.0).abs() > 0.1, "leaves the sphere");
    }

    #[test]
    fn translation_maps_source_center_to_target() {
        let mu1 = dvec(&[0.3, -0.2, 0.9]);
        let mu2 = dvec(&[-0.5, 0.1, 0.4]);
        assert_eq!(translation_transform(&mu1, &mu1, &mu2), mu2);
    }

    #[test]
    fn degenerated_sft_on_centers() {
        let out = degenerated_sft(&dvec(&[1.0, 0.0]), &dvec(&[1.0, 0.0]), &dvec(&[0.0, 1.0]), 1)
            .unwrap();
        assert_relative_eq!((out.values - dvec(&[0.0, 1.0])).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerated_sft_matches_sft_for_invariant_sigma() {
        // sigma orthogonal to span{mu1, mu2}: A x = mu2 + sigma exactly, and
        // reprojection changes both routes identically.
        let mu1 = dvec(&[1.0, 0.0, 0.0, 0.0]);
        let mu2 = normalize(&dvec(&[1.0, 1.0, 0.0, 0.0])).unwrap();
        let sigma = dvec(&[0.0, 0.0, 0.3, -0.1]);
        let x = &mu1 + &sigma;
        let rotated = sft_transform(&FeatureVector::new(x.clone(), 0), &mu1, &mu2, 1).unwrap();
        assert!((rotated.values.clone() - (&mu2 + &sigma)).norm() < 1e-10);
        let reprojected = degenerated_sft(&x, &mu1, &mu2, 1).unwrap();
        let sft_renormalized = normalize(&rotated.values).unwrap();
        assert!((reprojected.values - sft_renormalized).norm() < 1e-10);
    }

    #[test]
    fn degenerated_sft_rejects_cancellation() {
        let mu1 = dvec(&[1.0, 0.0]);
        let mu2 = dvec(&[0.0, 1.0]);
        let x = &mu1 - &mu2;
        assert_eq!(
            degenerated_sft(&x, &mu1, &mu2, 1).unwrap_err(),
            SftError::ZeroNorm
        );
    }
}
