use crate::{Error, Result, Scalar};

/// Mean over samples of the squared Euclidean error `‖y - ŷ‖²`.
pub fn mse_loss<T: Scalar>(predictions: &[Vec<T>], targets: &[Vec<T>]) -> Result<T> {
    if predictions.is_empty() {
        return Err(Error::Empty("mse of no samples"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    let mut total = T::zero();
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: p.len(),
            });
        }
        total += p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    Ok(total / T::of_usize(predictions.len()))
}
