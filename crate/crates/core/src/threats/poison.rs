use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::numerics::WeightVector;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonMode {
    /// `+ε` on every coordinate.
    #[default]
    Constant,
    /// `+ε·‖w‖/√dim` on every coordinate.
    Scaled,
}

/// Which agents tamper with what they broadcast, and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonPolicy<T> {
    malicious: BTreeSet<usize>,
    epsilon: T,
    mode: PoisonMode,
}

impl<T: Scalar> PoisonPolicy<T> {
    pub fn new(
        malicious: impl IntoIterator<Item = usize>,
        epsilon: T,
        mode: PoisonMode,
    ) -> Result<Self> {
        if !(epsilon >= T::zero()) {
            return Err(Error::invalid(format!(
                "poison magnitude must be >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            malicious: malicious.into_iter().collect(),
            epsilon,
            mode,
        })
    }

    /// Checks that every malicious id is a real agent.
    pub fn validate(&self, agent_count: usize) -> Result<()> {
        match self.malicious.iter().find(|&&i| i >= agent_count) {
            Some(i) => Err(Error::invalid(format!(
                "malicious agent {i} outside {agent_count} agents"
            ))),
            None => Ok(()),
        }
    }

    pub fn is_malicious(&self, agent: usize) -> bool {
        self.malicious.contains(&agent)
    }

    pub fn malicious(&self) -> &BTreeSet<usize> {
        &self.malicious
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn mode(&self) -> PoisonMode {
        self.mode
    }
}

/// The weights `agent` actually puts on the wire.
pub fn poison_broadcast<T: Scalar>(
    weights: &WeightVector<T>,
    policy: &PoisonPolicy<T>,
    agent: usize,
) -> WeightVector<T> {
    if !policy.is_malicious(agent) || policy.epsilon == T::zero() {
        return weights.clone();
    }
    let shift = match policy.mode {
        PoisonMode::Constant => policy.epsilon,
        PoisonMode::Scaled => {
            let dim = weights.dim().max(1);
            policy.epsilon * weights.norm() / T::of_usize(dim).sqrt()
        }
    };
    WeightVector::from(weights.iter().map(|&w| w + shift).collect::<Vec<_>>())
}
