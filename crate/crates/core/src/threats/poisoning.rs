use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::poison::{PoisonMode, PoisonPolicy};
use crate::consensus::{
    run_training, AgentState, Engine, LocalTask, Mixer, ServerState, StageOrder, StopRule,
    TrainingSetup,
};
use crate::numerics::{summed_optimum, NoiseModel, QuadraticTask, WeightVector};
use crate::streams::{derive_seed, stream_rng, Purpose};
use crate::topology::{default_subset_size, MarkovSchedule};
use crate::{Error, Result, Strategy};
use rand_distr::{Distribution, StandardNormal};

/// Poisoning run on a quadratic network with heterogeneous local optima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoisoningConfig {
    pub agents: usize,
    pub malicious: usize,
    pub epsilon: f64,
    pub mode: PoisonMode,
    pub rounds: usize,
    pub dim: usize,
    /// `E‖w‖²` of the per-step gradient noise; zero disables it.
    pub noise_variance: f64,
    /// Standard deviation of local optima around the common centre.
    pub heterogeneity: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub subset_size: Option<usize>,
    pub substructures: usize,
    /// Fraction of the final rounds averaged into the error.
    pub tail_fraction: f64,
    pub seed: u64,
}

impl Default for PoisoningConfig {
    fn default() -> Self {
        Self {
            agents: 30,
            malicious: 3,
            epsilon: 0.2,
            mode: PoisonMode::Constant,
            rounds: 1000,
            dim: 4,
            noise_variance: 0.01,
            heterogeneity: 0.1,
            p_lower: 0.5,
            p_upper: 2.0,
            subset_size: None,
            substructures: 8,
            tail_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub clean_error: f64,
    pub poisoned_error: f64,
    /// `poisoned_error / clean_error`.
    pub inflation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoisoningReport {
    pub seed: u64,
    pub malicious: Vec<usize>,
    pub dms: StrategyOutcome,
    pub fedavg: StrategyOutcome,
}

struct Network {
    tasks: Vec<QuadraticTask<f64>>,
    optimum: WeightVector<f64>,
    gamma: f64,
}

fn network(cfg: &PoisoningConfig) -> Result<Network> {
    let mut rng = stream_rng(cfg.seed, Purpose::Task, 0);
    let tasks = (0..cfg.agents)
        .map(|_| {
            let opt: Vec<f64> = (0..cfg.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1.0 + cfg.heterogeneity * z
                })
                .collect();
            QuadraticTask::random_spd(cfg.dim, cfg.p_lower, cfg.p_upper, opt, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let optimum = summed_optimum(&tasks.iter().collect::<Vec<_>>())?;
    Ok(Network {
        tasks,
        optimum,
        gamma: 1.0 / cfg.p_upper,
    })
}

fn run(
    cfg: &PoisoningConfig,
    net: &Network,
    strategy: Strategy,
    policy: &PoisonPolicy<f64>,
) -> Result<f64> {
    let noise = if cfg.noise_variance > 0.0 {
        NoiseModel::with_variance(cfg.noise_variance)
    } else {
        NoiseModel::disabled()
    };
    let agents = net
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            AgentState::new(
                i,
                WeightVector::zeros(cfg.dim),
                net.gamma,
                LocalTask::Quadratic(t.clone()),
                noise,
                derive_seed(cfg.seed, Purpose::Noise, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let engine = match strategy {
        Strategy::FedAvg => Engine::FedAvg {
            server: ServerState {
                global: WeightVector::zeros(cfg.dim),
            },
            local_epochs: 1,
        },
        Strategy::Dms => {
            let m = cfg
                .subset_size
                .unwrap_or_else(|| default_subset_size(cfg.agents));
            Engine::Decentralized {
                schedule: MarkovSchedule::subsets(
                    cfg.agents,
                    m,
                    cfg.substructures,
                    None,
                    derive_seed(cfg.seed, Purpose::Schedule, 0),
                )?,
                order: StageOrder::LearnThenConsensus,
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "poisoning compares dms and fed_avg, not {other}"
            )))
        }
    };
    let report = run_training(TrainingSetup {
        agents,
        engine,
        mixer: Mixer::plaintext(1.0)?.with_poison(policy.clone()),
        rounds: cfg.rounds,
        stop: StopRule::Budget,
        optimum: Some(net.optimum.clone()),
        halt_on_divergence: false,
    })?;
    let monitor = report.monitor.expect("optimum is known");
    let honest: Vec<usize> = (0..cfg.agents)
        .filter(|i| !policy.is_malicious(*i))
        .collect();
    let watched: Vec<usize> = if honest.is_empty() {
        (0..cfg.agents).collect()
    } else {
        honest
    };
    let series = monitor.worst_mse_over(&watched);
    let tail = ((series.len() as f64 * cfg.tail_fraction).ceil() as usize).clamp(1, series.len());
    Ok(series[series.len() - tail..].iter().sum::<f64>() / tail as f64)
}

/// Runs DMS and FedAvg with and without poisoned broadcasts on the same
/// tasks, noise and schedule, and reports how much the poisoning inflates
/// the tail worst-case error of the honest agents.
pub fn run_poisoning_experiment(cfg: &PoisoningConfig) -> Result<PoisoningReport> {
    if cfg.malicious > cfg.agents {
        return Err(Error::invalid(format!(
            "{} malicious agents out of {}",
            cfg.malicious, cfg.agents
        )));
    }
    if cfg.rounds == 0 {
        return Err(Error::invalid("poisoning needs at least one round"));
    }
    let net = network(cfg)?;
    let mut rng = stream_rng(cfg.seed, Purpose::Poison, 0);
    let mut malicious: Vec<usize> = sample(&mut rng, cfg.agents, cfg.malicious).into_vec();
    malicious.sort_unstable();
    let clean = PoisonPolicy::new([], cfg.epsilon, cfg.mode)?;
    let poisoned = PoisonPolicy::new(malicious.iter().copied(), cfg.epsilon, cfg.mode)?;
    let outcome = |s: Strategy| -> Result<StrategyOutcome> {
        let clean_error = run(cfg, &net, s, &clean)?;
        let poisoned_error = run(cfg, &net, s, &poisoned)?;
        Ok(StrategyOutcome {
            strategy: s,
            clean_error,
            poisoned_error,
            inflation: poisoned_error / clean_error,
        })
    };
    Ok(PoisoningReport {
        seed: cfg.seed,
        dms: outcome(Strategy::Dms)?,
        fedavg: outcome(Strategy::FedAvg)?,
        malicious,
    })
}
