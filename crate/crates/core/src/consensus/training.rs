use serde::Serialize;

use super::agent::AgentState;
use super::engine::{ctl_round, dms_round, fedavg_round, Mixer, RoundMetrics, ServerState};
use super::monitor::ConvergenceMonitor;
use crate::numerics::WeightVector;
use crate::secagg::{Transcript, TranscriptStats};
use crate::topology::MarkovSchedule;
use crate::{Error, Result, Scalar};

/// Error growth beyond this multiple of the starting level counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    LearnThenConsensus,
    ConsensusThenLearn,
}

/// How rounds are executed.
#[derive(Debug, Clone)]
pub enum Engine<T> {
    /// Peer-to-peer mixing over graphs drawn from `schedule`.
    Decentralized {
        schedule: MarkovSchedule<T>,
        order: StageOrder,
    },
    /// Central averaging server.
    FedAvg {
        server: ServerState<T>,
        local_epochs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Run the whole budget.
    Budget,
    /// Stop once the worst squared distance to the optimum drops below this.
    WorstMse(f64),
    /// Stop when mean validation loss has not strictly improved for
    /// `patience` rounds; the models from the best round are kept.
    Plateau { patience: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Tolerance,
    Plateau,
}

/// Everything a training run needs.
#[derive(Debug, Clone)]
pub struct TrainingSetup<T> {
    pub agents: Vec<AgentState<T>>,
    pub engine: Engine<T>,
    pub mixer: Mixer<T>,
    pub rounds: usize,
    pub stop: StopRule,
    /// Known minimizer of the global objective, if any.
    pub optimum: Option<WeightVector<T>>,
    pub halt_on_divergence: bool,
}

/// Metrics after one round (round 0 is the initial state).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub worst_mse: Option<f64>,
    pub disagreement: f64,
    #[serde(flatten)]
    pub metrics: RoundMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainingReport<T> {
    pub initial: RoundRecord,
    pub rounds: Vec<RoundRecord>,
    /// Final agent models (best-validation models under a plateau rule).
    pub models: Vec<WeightVector<T>>,
    pub rounds_to_tolerance: Option<usize>,
    pub stop_reason: StopReason,
    pub monitor: Option<ConvergenceMonitor>,
    pub transcript: Option<Transcript>,
    pub secure_stats: Option<TranscriptStats>,
}

/// Largest pairwise Euclidean distance between models.
pub fn disagreement<T: Scalar>(models: &[&WeightVector<T>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, x) in models.iter().enumerate() {
        for y in &models[a + 1..] {
            let d: f64 = x
                .iter()
                .zip(y.iter())
                .map(|(p, q)| (p.as_f64() - q.as_f64()).powi(2))
                .sum();
            worst = worst.max(d);
        }
    }
    worst.sqrt()
}

fn mean<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn snapshot<T: Scalar>(
    agents: &[AgentState<T>],
    monitor: Option<&ConvergenceMonitor>,
    metrics: RoundMetrics,
) -> Result<RoundRecord> {
    let train = agents
        .iter()
        .map(|a| a.task.loss(&a.theta).map(|v| v.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    let val = agents
        .iter()
        .map(|a| {
            a.task
                .validation_loss(&a.theta)
                .map(|o| o.map(|v| v.as_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let validation_loss = if val.iter().all(Option::is_some) && !val.is_empty() {
        Some(mean(val.into_iter().flatten()))
    } else {
        None
    };
    let thetas: Vec<&WeightVector<T>> = agents.iter().map(|a| &a.theta).collect();
    Ok(RoundRecord {
        round: metrics.round,
        train_loss: mean(train.into_iter()),
        validation_loss,
        worst_mse: monitor.and_then(|m| m.worst_mse().last().copied()),
        disagreement: disagreement(&thetas),
        metrics,
    })
}

fn check_divergence(record: &RoundRecord, initial: &RoundRecord) -> Result<()> {
    let round = record.round;
    let (value, start) = match (record.worst_mse, initial.worst_mse) {
        (Some(v), Some(s)) => (v, s),
        _ => (record.train_loss.abs(), initial.train_loss.abs()),
    };
    if !value.is_finite() || value > DIVERGENCE_FACTOR * start.max(1.0) {
        return Err(Error::Divergence { round, value });
    }
    Ok(())
}

/// Runs `setup` until its stop rule fires or the budget is spent.
pub fn run_training<T: Scalar>(setup: TrainingSetup<T>) -> Result<TrainingReport<T>> {
    let TrainingSetup {
        mut agents,
        mut engine,
        mut mixer,
        rounds,
        stop,
        optimum,
        halt_on_divergence,
    } = setup;
    if agents.is_empty() {
        return Err(Error::Empty("agents"));
    }
    if let Some(p) = mixer.poison() {
        p.validate(agents.len())?;
    }
    if let Engine::Decentralized { schedule, .. } = &engine {
        if schedule.agent_count() != agents.len() {
            return Err(Error::DimensionMismatch {
                expected: agents.len(),
                got: schedule.agent_count(),
            });
        }
    }
    let mut monitor = optimum.as_ref().map(ConvergenceMonitor::new);
    if let Some(m) = monitor.as_mut() {
        m.record(&agents)?;
    }
    let initial = snapshot(&agents, monitor.as_ref(), RoundMetrics::default())?;
    let mut records = Vec::with_capacity(rounds);
    let mut rounds_to_tolerance = None;
    let mut stop_reason = StopReason::Budget;
    let mut best: Option<(f64, usize, Vec<WeightVector<T>>)> = None;

    let met = |r: &RoundRecord| matches!((stop, r.worst_mse), (StopRule::WorstMse(tol), Some(v)) if v < tol);
    if met(&initial) {
        rounds_to_tolerance = Some(0);
        stop_reason = StopReason::Tolerance;
    }
    if let (StopRule::Plateau { .. }, Some(v)) = (stop, initial.validation_loss) {
        best = Some((v, 0, agents.iter().map(|a| a.theta.clone()).collect()));
    }

    let mut k = 0;
    while stop_reason == StopReason::Budget && k < rounds {
        k += 1;
        let metrics = match &mut engine {
            Engine::Decentralized {
                schedule,
                order: StageOrder::LearnThenConsensus,
            } => dms_round(&mut agents, schedule, &mut mixer, k)?,
            Engine::Decentralized {
                schedule,
                order: StageOrder::ConsensusThenLearn,
            } => ctl_round(&mut agents, schedule, &mut mixer, k)?,
            Engine::FedAvg {
                server,
                local_epochs,
            } => fedavg_round(&mut agents, server, &mut mixer, k, *local_epochs)?,
        };
        if let Some(m) = monitor.as_mut() {
            m.record(&agents)?;
        }
        let record = snapshot(&agents, monitor.as_ref(), metrics)?;
        if halt_on_divergence {
            check_divergence(&record, &initial)?;
        }
        if met(&record) {
            rounds_to_tolerance = Some(k);
            stop_reason = StopReason::Tolerance;
        }
        if let (StopRule::Plateau { patience }, Some(v)) = (stop, record.validation_loss) {
            match &best {
                Some((b, _, _)) if v >= *b => {}
                _ => best = Some((v, k, agents.iter().map(|a| a.theta.clone()).collect())),
            }
            if let Some((_, at, _)) = &best {
                if k - at >= patience {
                    stop_reason = StopReason::Plateau;
                }
            }
        }
        records.push(record);
    }

    let models = match best {
        Some((_, _, m)) => m,
        None => agents.iter().map(|a| a.theta.clone()).collect(),
    };
    let secure = mixer.into_secure();
    Ok(TrainingReport {
        initial,
        rounds: records,
        models,
        rounds_to_tolerance,
        stop_reason,
        monitor,
        secure_stats: secure.as_ref().map(|s| s.stats()),
        transcript: secure.map(|mut s| s.take_transcript()),
    })
}

/// Message and edge totals over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexitySummary {
    pub rounds: usize,
    pub total_messages: usize,
    pub total_bytes: usize,
    pub per_agent_messages: Vec<usize>,
    pub server_messages: usize,
    pub per_round_edges: Vec<usize>,
    pub mean_edges: f64,
    /// Σ over rounds of each agent's degree.
    pub degree_sums: Vec<usize>,
    /// Whether every agent sent exactly its degree sum.
    pub matches_degree_sum: bool,
}

pub fn complexity_counters<'a>(
    rounds: impl IntoIterator<Item = &'a RoundMetrics>,
) -> ComplexitySummary {
    let mut s = ComplexitySummary {
        rounds: 0,
        total_messages: 0,
        total_bytes: 0,
        per_agent_messages: Vec::new(),
        server_messages: 0,
        per_round_edges: Vec::new(),
        mean_edges: 0.0,
        degree_sums: Vec::new(),
        matches_degree_sum: true,
    };
    for m in rounds {
        s.rounds += 1;
        s.total_messages += m.messages;
        s.total_bytes += m.bytes;
        s.server_messages += m.server_messages;
        s.per_round_edges.push(m.edges);
        let n = m.agent_messages.len().max(m.degrees.len());
        s.per_agent_messages
            .resize(n.max(s.per_agent_messages.len()), 0);
        s.degree_sums.resize(n.max(s.degree_sums.len()), 0);
        for (i, &v) in m.agent_messages.iter().enumerate() {
            s.per_agent_messages[i] += v;
        }
        for (i, &d) in m.degrees.iter().enumerate() {
            s.degree_sums[i] += d;
        }
    }
    s.matches_degree_sum = s.per_agent_messages == s.degree_sums;
    if s.rounds > 0 {
        s.mean_edges = s.per_round_edges.iter().sum::<usize>() as f64 / s.rounds as f64;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::LocalTask;
    use crate::numerics::{NoiseModel, QuadraticTask};
    use crate::topology::{default_subset_size, Graph};

    fn agents(n: usize, gamma: f64) -> Vec<AgentState<f64>> {
        (0..n)
            .map(|i| {
                let t =
                    QuadraticTask::with_optimum(1, vec![1.0 + (i % 3) as f64], vec![1.0]).unwrap();
                AgentState::new(
                    i,
                    WeightVector::zeros(1),
                    gamma,
                    LocalTask::Quadratic(t),
                    NoiseModel::disabled(),
                    i as u64,
                )
                .unwrap()
            })
            .collect()
    }

    fn setup(n: usize, graph: Graph<f64>, rounds: usize, stop: StopRule) -> TrainingSetup<f64> {
        TrainingSetup {
            agents: agents(n, 0.3),
            engine: Engine::Decentralized {
                schedule: MarkovSchedule::fixed(graph, 0),
                order: StageOrder::LearnThenConsensus,
            },
            mixer: Mixer::plaintext(1.0).unwrap(),
            rounds,
            stop,
            optimum: Some(WeightVector::from(vec![1.0])),
            halt_on_divergence: true,
        }
    }

    #[test]
    fn zero_budget_keeps_initial_only() {
        let r = run_training(setup(4, Graph::complete(4), 0, StopRule::Budget)).unwrap();
        assert!(r.rounds.is_empty());
        assert_eq!(r.initial.worst_mse, Some(1.0));
        assert_eq!(r.stop_reason, StopReason::Budget);
    }

    #[test]
    fn tolerance_met_at_start() {
        let r = run_training(setup(4, Graph::complete(4), 50, StopRule::WorstMse(2.0))).unwrap();
        assert_eq!(r.rounds_to_tolerance, Some(0));
        assert!(r.rounds.is_empty());
    }

    #[test]
    fn converges_and_stops() {
        let r = run_training(setup(
            5,
            Graph::ring(5).unwrap(),
            10_000,
            StopRule::WorstMse(1e-8),
        ))
        .unwrap();
        let k = r.rounds_to_tolerance.unwrap();
        assert_eq!(r.rounds.len(), k);
        assert!(r.rounds[k - 1].worst_mse.unwrap() < 1e-8);
        assert!(r.rounds[k - 2].worst_mse.unwrap() >= 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = setup(1, Graph::empty(1), 100, StopRule::Budget);
        s.agents[0].gamma = 3.0;
        let err = run_training(s).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn ring_counters() {
        let r = run_training(setup(30, Graph::ring(30).unwrap(), 30, StopRule::Budget)).unwrap();
        let c = complexity_counters(r.rounds.iter().map(|x| &x.metrics));
        assert!(c.per_agent_messages.iter().all(|&m| m == 60));
        assert!(c.matches_degree_sum);
        assert_eq!(c.total_messages, 30 * 60);
        let r = run_training(setup(30, Graph::complete(30), 1, StopRule::Budget)).unwrap();
        let c = complexity_counters(r.rounds.iter().map(|x| &x.metrics));
        assert!(c.per_agent_messages.iter().all(|&m| m == 29));
    }

    #[test]
    fn complete_and_full_subset_schedule_agree() {
        let n = 6;
        let mut a = setup(n, Graph::complete(n), 40, StopRule::Budget);
        let mut b = setup(n, Graph::complete(n), 40, StopRule::Budget);
        a.engine = Engine::Decentralized {
            schedule: MarkovSchedule::fixed(Graph::complete(n), 11),
            order: StageOrder::LearnThenConsensus,
        };
        b.engine = Engine::Decentralized {
            schedule: MarkovSchedule::subsets(n, n, 8, None, 11).unwrap(),
            order: StageOrder::LearnThenConsensus,
        };
        let ra = run_training(a).unwrap();
        let rb = run_training(b).unwrap();
        assert_eq!(ra.rounds, rb.rounds);
        assert_eq!(ra.models, rb.models);
    }

    #[test]
    fn dms_counters_match_degrees() {
        let n = 30;
        let mut s = setup(n, Graph::complete(n), 200, StopRule::Budget);
        s.engine = Engine::Decentralized {
            schedule: MarkovSchedule::subsets(n, default_subset_size(n), 8, None, 5).unwrap(),
            order: StageOrder::LearnThenConsensus,
        };
        let r = run_training(s).unwrap();
        let c = complexity_counters(r.rounds.iter().map(|x| &x.metrics));
        assert!(c.matches_degree_sum);
        assert_eq!(c.mean_edges, 210.0);
    }

    #[test]
    fn plateau_keeps_best_models() {
        let d = crate::numerics::Dataset::single(vec![0.5], vec![0.25]);
        let arch = crate::numerics::MlpArch::new(vec![1, 2, 1]).unwrap();
        let task = super::super::agent::ForecastTask {
            arch: arch.clone(),
            train: d.clone(),
            validation: Some(d),
            test: None,
        };
        let a = AgentState::new(
            0,
            WeightVector::from(vec![0.1; arch.param_count()]),
            0.0,
            LocalTask::Forecast(task),
            NoiseModel::disabled(),
            0,
        )
        .unwrap();
        let s = TrainingSetup {
            agents: vec![a],
            engine: Engine::Decentralized {
                schedule: MarkovSchedule::fixed(Graph::empty(1), 0),
                order: StageOrder::LearnThenConsensus,
            },
            mixer: Mixer::plaintext(1.0).unwrap(),
            rounds: 100,
            stop: StopRule::Plateau { patience: 5 },
            optimum: None,
            halt_on_divergence: true,
        };
        let r = run_training(s).unwrap();
        // a zero learning rate never improves
        assert_eq!(r.stop_reason, StopReason::Plateau);
        assert_eq!(r.rounds.len(), 5);
    }

    #[test]
    fn disagreement_is_max_pairwise_distance() {
        let a = WeightVector::from(vec![0.0, 0.0]);
        let b = WeightVector::from(vec![3.0, 4.0]);
        let c = WeightVector::from(vec![1.0, 1.0]);
        assert_eq!(disagreement(&[&a, &b, &c]), 5.0);
        assert_eq!(disagreement::<f64>(&[&a]), 0.0);
    }
}
