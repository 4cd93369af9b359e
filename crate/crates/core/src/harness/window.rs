use serde::{Deserialize, Serialize};

use crate::numerics::{Dataset, Sample};
use crate::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.7;
pub const VALIDATION_FRACTION: f64 = 0.15;

/// Min-max scaling fitted on the training windows of one household.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub range: f64,
}

impl MinMax {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        Self {
            min: lo,
            range: hi - lo,
        }
    }

    /// Zero range maps everything to 0.
    pub fn apply(&self, v: f64) -> f64 {
        if self.range > 0.0 {
            (v - self.min) / self.range
        } else {
            0.0
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.range + self.min
    }

    /// Converts a mean squared error on the scaled values back to units².
    pub fn unscale_mse(&self, mse: f64) -> f64 {
        mse * self.range * self.range
    }
}

/// Chronological train/validation/test split of sliding windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSplits {
    pub train: Dataset<f64>,
    pub validation: Option<Dataset<f64>>,
    pub test: Option<Dataset<f64>>,
    pub scale: MinMax,
}

impl WindowSplits {
    pub fn sample_count(&self) -> usize {
        self.train.len()
            + self.validation.as_ref().map_or(0, Dataset::len)
            + self.test.as_ref().map_or(0, Dataset::len)
    }
}

/// Stride-1 windows of `lookback` inputs and the next `horizon` targets,
/// split 70/15/15 in time order and scaled with the training windows' range.
pub fn window_dataset(series: &[f64], lookback: usize, horizon: usize) -> Result<WindowSplits> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::invalid("lookback and horizon must be at least 1"));
    }
    if series.len() < lookback + horizon {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than lookback {lookback} + horizon {horizon}",
            series.len()
        )));
    }
    let count = series.len() - lookback - horizon + 1;
    let n_train = ((TRAIN_FRACTION * count as f64).floor() as usize).max(1);
    let n_val = ((VALIDATION_FRACTION * count as f64).floor() as usize).min(count - n_train);
    // the training windows cover series[0 .. n_train - 1 + lookback + horizon]
    let scale = MinMax::fit(&series[..n_train - 1 + lookback + horizon]);
    let window = |s: usize| Sample {
        input: series[s..s + lookback]
            .iter()
            .map(|&v| scale.apply(v))
            .collect(),
        target: series[s + lookback..s + lookback + horizon]
            .iter()
            .map(|&v| scale.apply(v))
            .collect(),
    };
    let part = |range: std::ops::Range<usize>| -> Result<Option<Dataset<f64>>> {
        if range.is_empty() {
            Ok(None)
        } else {
            Dataset::new(range.map(window).collect()).map(Some)
        }
    };
    Ok(WindowSplits {
        train: Dataset::new((0..n_train).map(window).collect())?,
        validation: part(n_train..n_train + n_val)?,
        test: part(n_train + n_val..count)?,
        scale,
    })
}
