//! Helpers shared by unit tests across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_unit(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        if v.norm() > 1e-3 {
            return v / v.norm();
        }
    }
}

/// Random symmetric positive semidefinite matrix B^T B.
pub fn random_psd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    b.transpose() * b
}
