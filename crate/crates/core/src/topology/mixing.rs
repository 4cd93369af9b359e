use super::Graph;
use crate::numerics::WeightVector;
use crate::{Error, Result, Scalar};

/// Row-stochastic averaging weights (dense, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix<T> {
    n: usize,
    entries: Vec<T>,
}

/// Uniform weights over the closed neighbourhood: `1 / (deg(i) + 1)` on `i`
/// itself and on each neighbour. An isolated agent gets the unit row `e_i`.
pub fn mixing_matrix<T: Scalar>(g: &Graph<T>) -> MixingMatrix<T> {
    let n = g.agent_count();
    let mut entries = vec![T::zero(); n * n];
    for (i, nbrs) in g.adjacency().into_iter().enumerate() {
        let w = T::one() / T::of_usize(nbrs.len() + 1);
        entries[i * n + i] = w;
        for j in nbrs {
            entries[i * n + j] = w;
        }
    }
    MixingMatrix { n, entries }
}

impl<T: Scalar> MixingMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|&v| v < T::zero()) {
                return Err(Error::invalid(format!("negative mixing weight in row {i}")));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs().as_f64() > 1e-12 {
                return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
            }
            entries.extend(row);
        }
        Ok(Self { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().copied().sum())
            .collect()
    }

    /// `Σ_j a_ij v_j` for agent `i`.
    pub fn mix_row(&self, i: usize, values: &[WeightVector<T>]) -> Result<WeightVector<T>> {
        if values.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        let mut out = WeightVector::zeros(values[0].dim());
        for (j, &a) in self.row(i).iter().enumerate() {
            if a != T::zero() {
                out.axpy(a, &values[j])?;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &v)| a * v).sum())
            .collect()
    }

    /// `‖A·diag(d)‖∞`, the largest weighted row sum.
    pub fn weighted_inf_norm(&self, diag: &[T]) -> T {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(diag)
                    .map(|(&a, &d)| a * d.abs())
                    .sum::<T>()
            })
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_cycle_weights() {
        let m = mixing_matrix(&Graph::<f64>::ring(4).unwrap());
        for i in 0..4 {
            assert_eq!(m.get(i, i), 1.0 / 3.0);
            assert_eq!(m.get(i, (i + 1) % 4), 1.0 / 3.0);
            assert_eq!(m.get(i, (i + 3) % 4), 1.0 / 3.0);
            assert_eq!(m.get(i, (i + 2) % 4), 0.0);
        }
    }

    #[test]
    fn complete_graph_is_uniform() {
        let m = mixing_matrix(&Graph::<f64>::complete(6));
        assert!((0..6).all(|i| (0..6).all(|j| (m.get(i, j) - 1.0 / 6.0).abs() < 1e-15)));
    }

    #[test]
    fn isolated_agent_keeps_itself() {
        let m = mixing_matrix(&Graph::<f64>::clique(5, &[0, 1, 2]));
        assert_eq!(m.row(4), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn from_rows_validates() {
        assert!(MixingMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).is_ok());
        assert!(MixingMatrix::from_rows(vec![vec![0.5, 0.4], vec![0.2, 0.8]]).is_err());
        assert!(MixingMatrix::from_rows(vec![vec![1.5, -0.5], vec![0.2, 0.8]]).is_err());
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_and_ones_is_fixed(n in 1usize..25, density in 0.0f64..1.0, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::<f64>::empty(n);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < density {
                        g.add_edge(i, j, 1.0).unwrap();
                    }
                }
            }
            let m = mixing_matrix(&g);
            for s in m.row_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && m.get(i, j) > 0.0 {
                        prop_assert!(g.weight(i, j).is_some());
                    }
                }
            }
            // power iteration from the all-ones vector stays put: spectral radius 1
            let mut v = vec![1.0; n];
            for _ in 0..10 {
                v = m.apply(&v);
            }
            prop_assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-12));

            // x·Lx ≥ 0 and zero row sums for the Laplacian
            let l = super::super::laplacian(&g);
            for row in &l {
                prop_assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let quad: f64 = (0..n).map(|i| x[i] * (0..n).map(|j| l[i][j] * x[j]).sum::<f64>()).sum();
            prop_assert!(quad >= -1e-12);
        }
    }
}
