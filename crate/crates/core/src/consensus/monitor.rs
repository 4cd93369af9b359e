use serde::Serialize;

use super::agent::{AgentState, LocalTask};
use crate::numerics::WeightVector;
use crate::topology::{MarkovSchedule, MixingMatrix};
use crate::{Error, Result, Scalar};

/// Squared distances of every agent's `theta` and `phi` to a known optimum,
/// one row per recorded round. Rows can be averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceMonitor {
    optimum: Vec<f64>,
    theta_sq: Vec<Vec<f64>>,
    phi_sq: Vec<Vec<f64>>,
    repetitions: usize,
}

impl ConvergenceMonitor {
    pub fn new<T: Scalar>(optimum: &WeightVector<T>) -> Self {
        Self {
            optimum: optimum.iter().map(|v| v.as_f64()).collect(),
            theta_sq: Vec::new(),
            phi_sq: Vec::new(),
            repetitions: 1,
        }
    }

    fn sq_err<T: Scalar>(&self, w: &WeightVector<T>) -> f64 {
        w.iter()
            .zip(&self.optimum)
            .map(|(a, b)| (a.as_f64() - b).powi(2))
            .sum()
    }

    pub fn record<T: Scalar>(&mut self, agents: &[AgentState<T>]) -> Result<()> {
        for a in agents {
            if a.dim() != self.optimum.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.optimum.len(),
                    got: a.dim(),
                });
            }
        }
        self.theta_sq
            .push(agents.iter().map(|a| self.sq_err(&a.theta)).collect());
        self.phi_sq
            .push(agents.iter().map(|a| self.sq_err(&a.phi)).collect());
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.theta_sq.len()
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    /// `‖θ_i − θ*‖²` per round and agent.
    pub fn theta_errors(&self) -> &[Vec<f64>] {
        &self.theta_sq
    }

    /// `‖φ_i − θ*‖²` per round and agent.
    pub fn phi_errors(&self) -> &[Vec<f64>] {
        &self.phi_sq
    }

    /// Largest per-agent error in each round.
    pub fn worst_mse(&self) -> Vec<f64> {
        self.theta_sq
            .iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Largest error in each round over the listed agents only.
    pub fn worst_mse_over(&self, agents: &[usize]) -> Vec<f64> {
        self.theta_sq
            .iter()
            .map(|r| agents.iter().map(|&i| r[i]).fold(0.0, f64::max))
            .collect()
    }

    /// Element-wise mean over independent repetitions of the same run.
    pub fn average(runs: &[ConvergenceMonitor]) -> Result<Self> {
        let first = runs.first().ok_or(Error::Empty("monitors"))?;
        let shape = |m: &ConvergenceMonitor| (m.rounds(), m.theta_sq.first().map_or(0, Vec::len));
        if runs.iter().any(|m| shape(m) != shape(first)) {
            return Err(Error::invalid("monitors have different shapes"));
        }
        let k = runs.len() as f64;
        let mean = |pick: fn(&ConvergenceMonitor) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let mut acc = pick(first).clone();
            for m in &runs[1..] {
                for (ra, rm) in acc.iter_mut().zip(pick(m)) {
                    for (a, v) in ra.iter_mut().zip(rm) {
                        *a += v;
                    }
                }
            }
            for r in &mut acc {
                for a in r {
                    *a /= k;
                }
            }
            acc
        };
        Ok(Self {
            optimum: first.optimum.clone(),
            theta_sq: mean(|m| &m.theta_sq),
            phi_sq: mean(|m| &m.phi_sq),
            repetitions: runs.iter().map(|m| m.repetitions).sum(),
        })
    }
}

/// Curvature, noise and step-size constants of a quadratic network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
    /// Noise second-moment bound `ξᵢ²`, zero when noise is off.
    pub xi_sq: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: f64,
}

impl BoundParams {
    pub fn from_agents<T: Scalar>(agents: &[AgentState<T>], alpha: T) -> Result<Self> {
        let mut p = Self {
            p_lower: vec![],
            p_upper: vec![],
            xi_sq: vec![],
            gamma: vec![],
            alpha: alpha.as_f64(),
        };
        for a in agents {
            let LocalTask::Quadratic(q) = &a.task else {
                return Err(Error::invalid(
                    "the optimum is only known for quadratic tasks",
                ));
            };
            p.p_lower.push(q.p_lower().as_f64());
            p.p_upper.push(q.p_upper().as_f64());
            p.xi_sq.push(if a.noise.enabled {
                a.noise.variance_bound.as_f64()
            } else {
                0.0
            });
            p.gamma.push(a.gamma.as_f64());
        }
        Ok(p)
    }

    /// `λ̄ᵢ = max((1 − γᵢp̲ᵢ)², (1 − γᵢp̄ᵢ)²)`.
    pub fn lambda_bar(&self) -> Vec<f64> {
        self.gamma
            .iter()
            .zip(self.p_lower.iter().zip(&self.p_upper))
            .map(|(g, (lo, hi))| (1.0 - g * lo).powi(2).max((1.0 - g * hi).powi(2)))
            .collect()
    }

    /// Per-round contraction factor `α‖AΛ‖∞` for mixing matrix `A`.
    pub fn contraction<T: Scalar>(&self, mixing: &MixingMatrix<T>) -> f64 {
        let diag: Vec<T> = self.lambda_bar().into_iter().map(T::of).collect();
        self.alpha * mixing.weighted_inf_norm(&diag).as_f64()
    }

    /// Largest contraction factor over the substructures of a schedule.
    pub fn worst_contraction<T: Scalar>(&self, schedule: &MarkovSchedule<T>) -> f64 {
        schedule
            .substructures()
            .iter()
            .map(|g| self.contraction(&crate::topology::mixing_matrix(g)))
            .fold(0.0, f64::max)
    }

    /// Limiting error level `α·max ξᵢ²`.
    pub fn noise_floor(&self) -> f64 {
        self.alpha * self.xi_sq.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckOptions {
    /// Multiplicative allowance on the noise floor for sampling error.
    pub floor_slack: f64,
    /// Fraction of the series treated as the tail.
    pub tail_fraction: f64,
    /// Additive allowance on the log rate.
    pub rate_margin: f64,
    /// Without noise the error must end below this.
    pub zero_floor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            floor_slack: 1.5,
            tail_fraction: 0.5,
            rate_margin: 0.01,
            zero_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lambda_bar: Vec<f64>,
    pub learning_rates_stable: bool,
    pub contraction: f64,
    pub rate_bound: f64,
    /// Least-squares slope of `ln ‖ℕ(k)‖∞`, noise-free runs only.
    pub empirical_rate: Option<f64>,
    pub rate_ok: bool,
    pub noise_floor_bound: f64,
    pub tail_mean: f64,
    pub floor_ok: bool,
    pub diverged: bool,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.learning_rates_stable && self.rate_ok && self.floor_ok && !self.diverged
    }
}

fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Compares a recorded worst-error series with the stability, rate and
/// noise-floor bounds implied by `params` and `mixing`.
pub fn convergence_bound_check<T: Scalar>(
    monitor: &ConvergenceMonitor,
    params: &BoundParams,
    mixing: &MixingMatrix<T>,
    opts: CheckOptions,
) -> Result<BoundReport> {
    if params.gamma.len() != mixing.size() {
        return Err(Error::DimensionMismatch {
            expected: mixing.size(),
            got: params.gamma.len(),
        });
    }
    let contraction = params.contraction(mixing);
    check_series(&monitor.worst_mse(), params, contraction, opts)
}

/// As [`convergence_bound_check`] with an explicit contraction factor, for
/// time-varying graphs.
pub fn check_series(
    worst: &[f64],
    params: &BoundParams,
    contraction: f64,
    opts: CheckOptions,
) -> Result<BoundReport> {
    if worst.is_empty() {
        return Err(Error::Empty("error series"));
    }
    let lambda_bar = params.lambda_bar();
    let learning_rates_stable = lambda_bar.iter().all(|&l| l <= 1.0 + 1e-12);
    let first = worst[0];
    let last = *worst.last().unwrap();
    let diverged = worst.iter().any(|v| !v.is_finite()) || (first > 0.0 && last > first * 1e6);

    let rate_bound = contraction.ln();
    let noise_free = params.noise_floor() == 0.0;
    let empirical_rate = if noise_free {
        let cut = (first * 1e-24).max(1e-300);
        let pts: Vec<(f64, f64)> = worst
            .iter()
            .enumerate()
            .take_while(|(_, &v)| v > cut)
            .map(|(k, &v)| (k as f64, v.ln()))
            .collect();
        ls_slope(&pts)
    } else {
        None
    };
    let rate_ok = empirical_rate.is_none_or(|r| r <= rate_bound + opts.rate_margin);

    let tail_len =
        ((worst.len() as f64 * opts.tail_fraction).ceil() as usize).clamp(1, worst.len());
    let tail = &worst[worst.len() - tail_len..];
    let tail_mean = tail.iter().sum::<f64>() / tail_len as f64;
    let noise_floor_bound = params.noise_floor();
    let floor_ok = if noise_free {
        last <= opts.zero_floor
    } else {
        tail_mean <= noise_floor_bound * opts.floor_slack
    };

    Ok(BoundReport {
        lambda_bar,
        learning_rates_stable,
        contraction,
        rate_bound,
        empirical_rate,
        rate_ok,
        noise_floor_bound,
        tail_mean,
        floor_ok,
        diverged,
    })
}
