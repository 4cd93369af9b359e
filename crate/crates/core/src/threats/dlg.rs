use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{solve_spd, Dataset, MlpModel, WeightVector};
use crate::{Error, Result};

/// Attack budget and numerical settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlgOptions {
    /// Accepted-or-rejected steps per restart.
    pub iterations: usize,
    /// Independent random starts; the best residual wins.
    pub restarts: usize,
    /// Central-difference step for the outer derivative.
    pub fd_step: f64,
    /// A residual below this ends the attack early.
    pub tolerance: f64,
}

impl Default for DlgOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            restarts: 8,
            fd_step: 1e-5,
            tolerance: 1e-24,
        }
    }
}

/// Best dummy sample found and how well its gradient matched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// `‖∇L(x̂, ŷ) − g_obs‖²`.
    pub residual: f64,
    /// Residual after each accepted step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl ReconstructionResult {
    /// Mean squared error of the recovered input against the truth.
    pub fn input_mse(&self, truth: &[f64]) -> f64 {
        mse(&self.input, truth)
    }
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

struct Matcher<'a> {
    model: &'a MlpModel<f64>,
    observed: &'a WeightVector<f64>,
    input_dim: usize,
}

impl Matcher<'_> {
    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, y) = z.split_at(self.input_dim);
        let batch = Dataset::single(x.to_vec(), y.to_vec());
        let g = self.model.loss_and_grad(&batch)?.1;
        Ok(g.iter()
            .zip(self.observed.iter())
            .map(|(a, b)| a - b)
            .collect())
    }

    /// Columns `∂r/∂z_k` by central differences, stored column-major.
    fn jacobian(&self, z: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(z.len());
        let mut zp = z.to_vec();
        for k in 0..z.len() {
            let step = h * z[k].abs().max(1.0);
            zp[k] = z[k] + step;
            let up = self.residual(&zp)?;
            zp[k] = z[k] - step;
            let down = self.residual(&zp)?;
            zp[k] = z[k];
            cols.push(
                up.iter()
                    .zip(&down)
                    .map(|(u, d)| (u - d) / (2.0 * step))
                    .collect(),
            );
        }
        Ok(cols)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Damped Gauss–Newton descent from `start`. Steps are only accepted when
/// they lower the residual, so the history never increases.
pub fn dlg_reconstruct_from(
    model: &MlpModel<f64>,
    observed: &WeightVector<f64>,
    start: (Vec<f64>, Vec<f64>),
    opts: &DlgOptions,
) -> Result<ReconstructionResult> {
    let arch = model.arch();
    if observed.dim() != arch.param_count() {
        return Err(Error::DimensionMismatch {
            expected: arch.param_count(),
            got: observed.dim(),
        });
    }
    if start.0.len() != arch.input_dim() || start.1.len() != arch.output_dim() {
        return Err(Error::invalid("dummy sample does not fit the model"));
    }
    let m = Matcher {
        model,
        observed,
        input_dim: arch.input_dim(),
    };
    let mut z: Vec<f64> = start.0.into_iter().chain(start.1).collect();
    let mut r = m.residual(&z)?;
    let mut f = norm_sq(&r);
    if !f.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient-match residual {f} at the starting point"
        )));
    }
    let dim = z.len();
    let mut mu = 1e-3;
    let mut history = vec![f];
    let mut iterations = 0;
    while iterations < opts.iterations && f > opts.tolerance {
        iterations += 1;
        let cols = m.jacobian(&z, opts.fd_step)?;
        let mut a = vec![0.0; dim * dim];
        let mut g = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..dim {
                a[i * dim + j] = cols[i].iter().zip(&cols[j]).map(|(p, q)| p * q).sum();
            }
            g[i] = -cols[i].iter().zip(&r).map(|(p, q)| p * q).sum::<f64>();
        }
        let scale = (0..dim)
            .map(|i| a[i * dim + i])
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = a.clone();
            for i in 0..dim {
                damped[i * dim + i] += mu * (a[i * dim + i] + 1e-9 * scale);
            }
            if let Ok(delta) = solve_spd(dim, &damped, &g) {
                let trial: Vec<f64> = z.iter().zip(&delta).map(|(p, d)| p + d).collect();
                let rt = m.residual(&trial)?;
                let ft = norm_sq(&rt);
                if ft.is_finite() && ft < f {
                    z = trial;
                    r = rt;
                    f = ft;
                    mu = (mu / 3.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
        history.push(f);
    }
    let (x, y) = z.split_at(arch.input_dim());
    Ok(ReconstructionResult {
        input: x.to_vec(),
        target: y.to_vec(),
        residual: f,
        history,
        iterations,
    })
}

/// Reconstructs the single training sample behind `observed`, the gradient
/// of `model` on that sample, from random starts in the unit box.
pub fn dlg_reconstruct<R: Rng + ?Sized>(
    model: &MlpModel<f64>,
    observed: &WeightVector<f64>,
    opts: &DlgOptions,
    rng: &mut R,
) -> Result<ReconstructionResult> {
    let arch = model.arch();
    let mut best: Option<ReconstructionResult> = None;
    for _ in 0..opts.restarts.max(1) {
        let x: Vec<f64> = (0..arch.input_dim()).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..arch.output_dim()).map(|_| rng.random()).collect();
        let run = dlg_reconstruct_from(model, observed, (x, y), opts)?;
        let done = run.residual <= opts.tolerance;
        if best.as_ref().is_none_or(|b| run.residual < b.residual) {
            best = Some(run);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}
