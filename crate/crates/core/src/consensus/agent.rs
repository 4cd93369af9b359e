use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{
    local_step, Dataset, MlpArch, MlpModel, NoiseModel, QuadraticTask, WeightVector,
};
use crate::{Error, Result, Scalar};

/// Forecasting data held by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask<T> {
    pub arch: MlpArch,
    pub train: Dataset<T>,
    pub validation: Option<Dataset<T>>,
    pub test: Option<Dataset<T>>,
}

/// What an agent minimizes locally.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalTask<T> {
    Quadratic(QuadraticTask<T>),
    Forecast(ForecastTask<T>),
}

impl<T: Scalar> LocalTask<T> {
    pub fn dim(&self) -> usize {
        match self {
            LocalTask::Quadratic(q) => q.dim(),
            LocalTask::Forecast(f) => f.arch.param_count(),
        }
    }

    pub fn gradient(&self, theta: &WeightVector<T>) -> Result<WeightVector<T>> {
        match self {
            LocalTask::Quadratic(q) => q.gradient(theta),
            LocalTask::Forecast(f) => Ok(MlpModel::new(f.arch.clone(), theta.clone())?
                .loss_and_grad(&f.train)?
                .1),
        }
    }

    /// Training objective: the quadratic itself, or the training-set MSE.
    pub fn loss(&self, theta: &WeightVector<T>) -> Result<T> {
        match self {
            LocalTask::Quadratic(q) => q.loss(theta),
            LocalTask::Forecast(f) => MlpModel::new(f.arch.clone(), theta.clone())?.loss(&f.train),
        }
    }

    pub fn validation_loss(&self, theta: &WeightVector<T>) -> Result<Option<T>> {
        match self {
            LocalTask::Forecast(ForecastTask {
                arch,
                validation: Some(v),
                ..
            }) => Ok(Some(MlpModel::new(arch.clone(), theta.clone())?.loss(v)?)),
            _ => Ok(None),
        }
    }

    pub fn test_loss(&self, theta: &WeightVector<T>) -> Result<Option<T>> {
        match self {
            LocalTask::Forecast(ForecastTask {
                arch,
                test: Some(t),
                ..
            }) => Ok(Some(MlpModel::new(arch.clone(), theta.clone())?.loss(t)?)),
            _ => Ok(None),
        }
    }

    /// Largest Hessian eigenvalue when it is known.
    pub fn curvature_upper(&self) -> Option<T> {
        match self {
            LocalTask::Quadratic(q) => Some(q.p_upper()),
            LocalTask::Forecast(_) => None,
        }
    }

    pub fn curvature_lower(&self) -> Option<T> {
        match self {
            LocalTask::Quadratic(q) => Some(q.p_lower()),
            LocalTask::Forecast(_) => None,
        }
    }
}

/// Largest stable learning rate `2 / p_upper` for curvature bound `p_upper`.
pub fn lr_bound<T: Scalar>(p_upper: T) -> Result<T> {
    if !(p_upper > T::zero()) {
        return Err(Error::invalid(format!(
            "curvature bound must be > 0, got {p_upper}"
        )));
    }
    Ok(T::of(2.0) / p_upper)
}

/// One agent: current model `theta`, post-step model `phi`, learning rate,
/// local task and its private noise stream.
#[derive(Debug, Clone)]
pub struct AgentState<T> {
    pub id: usize,
    pub theta: WeightVector<T>,
    pub phi: WeightVector<T>,
    pub gamma: T,
    pub task: LocalTask<T>,
    pub noise: NoiseModel<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> AgentState<T> {
    pub fn new(
        id: usize,
        theta: WeightVector<T>,
        gamma: T,
        task: LocalTask<T>,
        noise: NoiseModel<T>,
        noise_seed: u64,
    ) -> Result<Self> {
        if theta.dim() != task.dim() {
            return Err(Error::DimensionMismatch {
                expected: task.dim(),
                got: theta.dim(),
            });
        }
        if !(gamma >= T::zero()) {
            return Err(Error::invalid(format!(
                "agent {id}: learning rate must be >= 0, got {gamma}"
            )));
        }
        Ok(Self {
            id,
            phi: theta.clone(),
            theta,
            gamma,
            task,
            noise,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    /// One noisy gradient step from `from`.
    pub fn step_from(&mut self, from: &WeightVector<T>) -> Result<WeightVector<T>> {
        let g = self.task.gradient(from)?;
        local_step(from, &g, self.gamma, &self.noise, &mut self.rng)
    }

    /// `phi ← theta − γ∇f(theta) + w`.
    pub fn learn(&mut self) -> Result<()> {
        let theta = self.theta.clone();
        self.phi = self.step_from(&theta)?;
        Ok(())
    }

    /// Errors when the learning rate exceeds `2 / p_upper`. Tasks with no
    /// known or zero curvature pass.
    pub fn check_learning_rate(&self) -> Result<()> {
        match self.task.curvature_upper() {
            Some(p) if p > T::zero() => {
                let bound = lr_bound(p)?;
                if self.gamma > bound {
                    return Err(Error::invalid(format!(
                        "agent {}: learning rate {} exceeds the stability bound {}",
                        self.id, self.gamma, bound
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
