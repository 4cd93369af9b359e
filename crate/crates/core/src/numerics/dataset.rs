use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
}

/// Non-empty collection of supervised samples with consistent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or(Error::Empty("dataset has no samples"))?;
        let (di, dt) = (first.input.len(), first.target.len());
        for s in &samples {
            if s.input.len() != di {
                return Err(Error::DimensionMismatch {
                    expected: di,
                    got: s.input.len(),
                });
            }
            if s.target.len() != dt {
                return Err(Error::DimensionMismatch {
                    expected: dt,
                    got: s.target.len(),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn single(input: Vec<T>, target: Vec<T>) -> Self {
        Self {
            samples: vec![Sample { input, target }],
        }
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples[0].input.len()
    }

    pub fn target_dim(&self) -> usize {
        self.samples[0].target.len()
    }

    /// Concatenation of several datasets (the pooled data of centralized training).
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a Dataset<T>>) -> Result<Self> {
        let samples = parts
            .into_iter()
            .flat_map(|d| d.samples.iter().cloned())
            .collect();
        Self::new(samples)
    }
}
