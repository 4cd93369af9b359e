use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Flat parameter vector of a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Builds a vector, rejecting NaN or infinite entries.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight entry {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.check_dim(x)?;
        for (s, &v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: T) {
        for v in &mut self.0 {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect(),
        ))
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(&a, &b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> T {
        self.0.iter().map(|&v| v * v).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum())
    }

    /// Coordinate-wise mean of equally sized vectors.
    pub fn mean(vectors: &[Self]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty("mean of no vectors"))?;
        let mut acc = Self::zeros(first.dim());
        for v in vectors {
            acc.axpy(T::one(), v)?;
        }
        acc.scale(T::one() / T::of_usize(vectors.len()));
        Ok(acc)
    }

    pub fn cast<U: Scalar>(&self) -> WeightVector<U> {
        WeightVector(self.0.iter().map(|&v| U::of(v.as_f64())).collect())
    }
}

impl<T> From<Vec<T>> for WeightVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

impl<T> Index<usize> for WeightVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for WeightVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<'a, T> IntoIterator for &'a WeightVector<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
