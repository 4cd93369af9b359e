use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{random_orthogonal, solve_spd, symmetric_eigenvalues};
use super::WeightVector;
use crate::{Error, Result, Scalar};

/// Local objective `½ θᵀQθ − bᵀθ` with symmetric positive semidefinite `Q`.
///
/// The Hessian is `Q` everywhere, so its spectrum gives the curvature bounds
/// `p_lower`, `p_upper` exactly. `optimum` is a minimizer: `Q·optimum = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTask<T> {
    dim: usize,
    q: Vec<T>,
    b: Vec<T>,
    optimum: Vec<T>,
    p_lower: T,
    p_upper: T,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl<T: Scalar> QuadraticTask<T> {
    /// Strictly convex task from `Q` (row-major) and `b`; the optimum is `Q⁻¹b`.
    pub fn new(dim: usize, q: Vec<T>, b: Vec<T>) -> Result<Self> {
        let (p_lower, p_upper) = Self::check_matrix(dim, &q)?;
        if !(p_lower > T::zero()) {
            return Err(Error::invalid("Q must be positive definite"));
        }
        let optimum = solve_spd(dim, &q, &b)?;
        Ok(Self {
            dim,
            q,
            b,
            optimum,
            p_lower,
            p_upper,
        })
    }

    /// Task with a prescribed minimizer: `b = Q·optimum`. `Q` may be singular.
    pub fn with_optimum(dim: usize, q: Vec<T>, optimum: Vec<T>) -> Result<Self> {
        let (p_lower, p_upper) = Self::check_matrix(dim, &q)?;
        if optimum.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: optimum.len(),
            });
        }
        let b = matvec(dim, &q, &optimum);
        Ok(Self {
            dim,
            q,
            b,
            optimum,
            p_lower: p_lower.max(T::zero()),
            p_upper,
        })
    }

    pub fn diagonal(eigenvalues: Vec<T>, b: Vec<T>) -> Result<Self> {
        let n = eigenvalues.len();
        let mut q = vec![T::zero(); n * n];
        for (i, &e) in eigenvalues.iter().enumerate() {
            q[i * n + i] = e;
        }
        Self::new(n, q, b)
    }

    /// `Q = U diag(λ) Uᵀ` with a random rotation `U` and eigenvalues spread over
    /// `[p_lower, p_upper]` (both endpoints attained when `dim ≥ 2`).
    pub fn random_spd<R: Rng + ?Sized>(
        dim: usize,
        p_lower: f64,
        p_upper: f64,
        optimum: Vec<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || !(0.0 <= p_lower && p_lower <= p_upper) {
            return Err(Error::invalid("need dim >= 1 and 0 <= p_lower <= p_upper"));
        }
        let eig: Vec<f64> = (0..dim)
            .map(|i| match i {
                0 => p_upper,
                1 => p_lower,
                _ => rng.random_range(p_lower..=p_upper),
            })
            .collect();
        let eig = if dim == 1 { vec![p_upper] } else { eig };
        let u = random_orthogonal(dim, rng);
        let mut q = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v: f64 = (0..dim)
                    .map(|k| u[i * dim + k] * eig[k] * u[j * dim + k])
                    .sum();
                q[i * dim + j] = T::of(v);
                q[j * dim + i] = T::of(v);
            }
        }
        Self::with_optimum(dim, q, optimum)
    }

    fn check_matrix(dim: usize, q: &[T]) -> Result<(T, T)> {
        if dim == 0 {
            return Err(Error::Empty("quadratic task of dimension 0"));
        }
        if q.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: q.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (q[i * dim + j].as_f64(), q[j * dim + i].as_f64());
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(Error::invalid("Q must be symmetric"));
                }
            }
        }
        let eig = symmetric_eigenvalues(dim, q)?;
        let (lo, hi) = (eig[0], eig[dim - 1]);
        if lo.as_f64() < -1e-9 * (1.0 + hi.abs().as_f64()) {
            return Err(Error::invalid("Q must be positive semidefinite"));
        }
        Ok((lo, hi))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn optimum(&self) -> WeightVector<T> {
        WeightVector::from(self.optimum.clone())
    }

    /// Smallest Hessian eigenvalue.
    pub fn p_lower(&self) -> T {
        self.p_lower
    }

    /// Largest Hessian eigenvalue.
    pub fn p_upper(&self) -> T {
        self.p_upper
    }

    pub fn gradient(&self, theta: &WeightVector<T>) -> Result<WeightVector<T>> {
        quadratic_grad(self, theta)
    }

    pub fn loss(&self, theta: &WeightVector<T>) -> Result<T> {
        self.check(theta)?;
        let qt = matvec(self.dim, &self.q, theta.as_slice());
        let quad: T = qt.iter().zip(theta.iter()).map(|(&a, &b)| a * b).sum();
        let lin: T = self.b.iter().zip(theta.iter()).map(|(&a, &b)| a * b).sum();
        Ok(T::of(0.5) * quad - lin)
    }

    fn check(&self, theta: &WeightVector<T>) -> Result<()> {
        if theta.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.dim(),
            });
        }
        Ok(())
    }
}

fn matvec<T: Scalar>(dim: usize, q: &[T], x: &[T]) -> Vec<T> {
    (0..dim)
        .map(|i| {
            q[i * dim..(i + 1) * dim]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect()
}

/// Gradient `Qθ − b`.
pub fn quadratic_grad<T: Scalar>(
    task: &QuadraticTask<T>,
    theta: &WeightVector<T>,
) -> Result<WeightVector<T>> {
    task.check(theta)?;
    let mut g = matvec(task.dim, &task.q, theta.as_slice());
    for (gi, &bi) in g.iter_mut().zip(&task.b) {
        *gi -= bi;
    }
    Ok(WeightVector::from(g))
}

/// Minimizer of `Σᵢ Lᵢ`, i.e. the solution of `(Σ Qᵢ) θ = Σ bᵢ`.
pub fn summed_optimum<T: Scalar>(tasks: &[&QuadraticTask<T>]) -> Result<WeightVector<T>> {
    let first = tasks.first().ok_or(Error::Empty("no tasks"))?;
    let n = first.dim;
    let mut q = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    for t in tasks {
        if t.dim != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: t.dim,
            });
        }
        for (acc, &v) in q.iter_mut().zip(&t.q) {
            *acc += v;
        }
        for (acc, &v) in b.iter_mut().zip(&t.b) {
            *acc += v;
        }
    }
    Ok(WeightVector::from(solve_spd(n, &q, &b)?))
}
