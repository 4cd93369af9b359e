use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Zero-mean gradient noise with `E‖w‖² ≤ variance_bound`.
///
/// Each coordinate is Gaussian with variance `variance_bound / dim`, truncated
/// symmetrically at three standard deviations. Truncation keeps the mean at
/// zero and only lowers the second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub variance_bound: T,
    pub enabled: bool,
}

const TRUNCATION: f64 = 3.0;

impl<T: Scalar> NoiseModel<T> {
    pub fn disabled() -> Self {
        Self {
            variance_bound: T::zero(),
            enabled: false,
        }
    }

    pub fn with_variance(variance_bound: T) -> Self {
        Self {
            variance_bound,
            enabled: true,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> super::WeightVector<T> {
        if !self.enabled || dim == 0 {
            return super::WeightVector::zeros(dim);
        }
        let sigma = (self.variance_bound.as_f64() / dim as f64).sqrt();
        let values: Vec<T> = (0..dim)
            .map(|_| loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= TRUNCATION {
                    break T::of(z * sigma);
                }
            })
            .collect();
        super::WeightVector::from(values)
    }
}
