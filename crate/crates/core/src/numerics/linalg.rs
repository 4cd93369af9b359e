use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, Scalar};

fn to_dmatrix<T: Scalar>(rows: usize, data: &[T]) -> DMatrix<f64> {
    DMatrix::from_row_iterator(rows, rows, data.iter().map(|v| v.as_f64()))
}

/// Eigenvalues of a symmetric row-major `n x n` matrix, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(n: usize, data: &[T]) -> Result<Vec<T>> {
    if data.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: data.len(),
        });
    }
    let mut eig: Vec<f64> = to_dmatrix(n, data)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig.into_iter().map(T::of).collect())
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major).
pub fn solve_spd<T: Scalar>(n: usize, data: &[T], b: &[T]) -> Result<Vec<T>> {
    if data.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: data.len(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let chol = to_dmatrix(n, data)
        .cholesky()
        .ok_or_else(|| Error::invalid("matrix is not positive definite"))?;
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v.as_f64()));
    Ok(chol.solve(&rhs).iter().map(|&v| T::of(v)).collect())
}

/// Random orthogonal matrix (row-major) from the QR factor of a Gaussian matrix.
pub(crate) fn random_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(q[(i, j)]);
        }
    }
    out
}
