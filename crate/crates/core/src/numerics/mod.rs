//! Models, losses and gradients.
//!
//! Two model families are supported: a strongly convex quadratic, whose Hessian
//! is known exactly and therefore makes the convergence bounds testable, and
//! a small fully connected network with tanh hidden layers used for load
//! forecasting and for the gradient-leakage experiments.

mod dataset;
mod linalg;
mod loss;
mod mlp;
mod noise;
mod quadratic;
mod weights;

pub use dataset::{Dataset, Sample};
pub use linalg::{solve_spd, symmetric_eigenvalues};
pub use loss::mse_loss;
pub use mlp::{mlp_forward, mlp_grad, Layer, MlpArch, MlpModel};
pub use noise::NoiseModel;
pub use quadratic::{quadratic_grad, summed_optimum, QuadraticTask};
pub use weights::WeightVector;

use rand::Rng;

use crate::{Error, Result, Scalar};

/// One local gradient step `theta - gamma * grad + w`, with `w` drawn from
/// `noise` (the zero vector when the model is disabled).
pub fn local_step<T: Scalar, R: Rng + ?Sized>(
    theta: &WeightVector<T>,
    grad: &WeightVector<T>,
    gamma: T,
    noise: &NoiseModel<T>,
    rng: &mut R,
) -> Result<WeightVector<T>> {
    if !(gamma >= T::zero()) {
        return Err(Error::invalid(format!(
            "learning rate must be >= 0, got {gamma}"
        )));
    }
    let mut out = theta.clone();
    out.axpy(-gamma, grad)?;
    if noise.enabled {
        let w = noise.sample(theta.dim(), rng);
        out.axpy(T::one(), &w)?;
    }
    Ok(out)
}
