use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{
    AttackSpec, ExperimentConfig, ForecastSpec, QuadraticLayout, QuadraticSpec, TaskSpec,
    DEFAULT_FORECAST_GAMMA,
};
use super::kmeans::{kmeans, select_from_largest};
use super::synth::{gen_synthetic_load_with, LoadProfile, SynthConfig};
use super::window::{window_dataset, MinMax};
use crate::consensus::{
    check_series, complexity_counters, run_training, AgentState, BoundParams, BoundReport,
    CheckOptions, ConvergenceMonitor, Engine, ForecastTask, LocalTask, Mixer, RoundRecord,
    ServerState, StageOrder, StopReason, StopRule, TrainingSetup,
};
use crate::numerics::{
    summed_optimum, Dataset, MlpArch, MlpModel, NoiseModel, QuadraticTask, WeightVector,
};
use crate::secagg::{SecureAggregator, Transcript, TranscriptStats};
use crate::streams::{derive_seed, stream_rng, Purpose};
use crate::threats::{dlg_compare_topologies, DlgConfig, LeakageReport, PoisonPolicy};
use crate::topology::{Graph, MarkovSchedule};
use crate::{Error, Result, Strategy};

/// Identifies what was run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub strategy: Strategy,
    pub model: String,
    /// Number of trained models: 1 for the centralized baseline.
    pub agents: usize,
    /// Household ids behind the agents of a forecast run.
    pub households: Vec<usize>,
    pub dim: usize,
    pub seed: u64,
    pub optimum_known: bool,
    pub malicious: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub rounds_run: usize,
    pub rounds_to_tolerance: Option<usize>,
    pub stop_reason: StopReason,
    pub final_train_loss: f64,
    pub final_validation_loss: Option<f64>,
    pub final_worst_mse: Option<f64>,
    pub final_disagreement: f64,
    /// Test MSE in kWh², averaged over households.
    pub test_mse: Option<f64>,
    /// Test MSE on the min-max scaled series.
    pub test_mse_scaled: Option<f64>,
    pub total_messages: usize,
    pub total_bytes: usize,
    pub mean_edges: f64,
    pub server_messages: usize,
    pub per_agent_messages: Vec<usize>,
    pub secure: Option<TranscriptStats>,
    /// Convergence bound check on the repetition-averaged error, for
    /// quadratic runs over a graph schedule.
    pub bounds: Option<BoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackRecord {
    Poison { malicious: Vec<usize>, epsilon: f64 },
    Dlg(LeakageReport),
}

/// Everything a run produced. Serialized fields go to `report.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub header: ReportHeader,
    pub initial: RoundRecord,
    pub rounds: Vec<RoundRecord>,
    pub summary: RunSummary,
    pub attack: Option<AttackRecord>,
    #[serde(skip)]
    pub transcript: Option<Transcript>,
    /// Error series averaged over all repetitions.
    #[serde(skip)]
    pub monitor: Option<ConvergenceMonitor>,
    #[serde(skip)]
    pub models: Vec<WeightVector<f64>>,
}

impl ExperimentReport {
    /// Worst squared error per recorded round, starting with round 0.
    pub fn worst_mse_series(&self) -> Vec<f64> {
        std::iter::once(&self.initial)
            .chain(&self.rounds)
            .filter_map(|r| r.worst_mse)
            .collect()
    }
}

/// Local objectives for every agent plus what evaluation needs.
struct Workload {
    tasks: Vec<LocalTask<f64>>,
    gammas: Vec<f64>,
    optimum: Option<WeightVector<f64>>,
    households: Vec<usize>,
    /// Per-household test sets and scalings of a forecast run.
    tests: Vec<(Option<Dataset<f64>>, MinMax)>,
}

fn quadratic_workload(cfg: &ExperimentConfig, spec: &QuadraticSpec) -> Result<Workload> {
    let n = cfg.agents;
    let mut rng = stream_rng(cfg.seed, Purpose::Task, 0);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let centre: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
    let spread = spec.p_upper - spec.p_lower;
    let tasks = (0..n)
        .map(|i| {
            let upper = spec.p_lower + spread * rng.random_range(0.5..=1.0);
            match spec.layout {
                QuadraticLayout::CommonOptimum => QuadraticTask::random_spd(
                    spec.dim,
                    spec.p_lower,
                    upper,
                    centre.clone(),
                    &mut rng,
                ),
                QuadraticLayout::Anchored if i < spec.informed => QuadraticTask::random_spd(
                    spec.dim,
                    spec.p_lower,
                    spec.p_upper,
                    centre.clone(),
                    &mut rng,
                ),
                QuadraticLayout::Anchored => QuadraticTask::with_optimum(
                    spec.dim,
                    vec![0.0; spec.dim * spec.dim],
                    centre.clone(),
                ),
                QuadraticLayout::Heterogeneous => {
                    let local: Vec<f64> = centre
                        .iter()
                        .map(|c| c + spec.heterogeneity * normal(&mut rng))
                        .collect();
                    QuadraticTask::random_spd(spec.dim, spec.p_lower, upper, local, &mut rng)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let optimum = summed_optimum(&tasks.iter().collect::<Vec<_>>())?;
    let tasks = if cfg.strategy == Strategy::Centralized {
        let dim = spec.dim;
        let mean = |f: &dyn Fn(&QuadraticTask<f64>) -> &[f64], len: usize| -> Vec<f64> {
            (0..len)
                .map(|k| tasks.iter().map(|t| f(t)[k]).sum::<f64>() / n as f64)
                .collect()
        };
        vec![QuadraticTask::new(
            dim,
            mean(&|t| t.q(), dim * dim),
            mean(&|t| t.b(), dim),
        )?]
    } else {
        tasks
    };
    let gammas = tasks
        .iter()
        .map(|t| match cfg.learning.gamma {
            Some(g) => g,
            None if t.p_upper() > 0.0 => cfg.learning.gamma_scale / t.p_upper(),
            None => cfg.learning.gamma_scale / spec.p_upper,
        })
        .collect();
    Ok(Workload {
        tasks: tasks.into_iter().map(LocalTask::Quadratic).collect(),
        gammas,
        optimum: Some(optimum),
        households: Vec::new(),
        tests: Vec::new(),
    })
}

/// Synthetic households, clustered by daily load shape; the agents are the
/// households of the largest cluster closest to its centre.
pub fn select_households(cfg: &ExperimentConfig, spec: &ForecastSpec) -> Result<Vec<LoadProfile>> {
    let profiles = gen_synthetic_load_with(&SynthConfig {
        households: spec.households,
        days: spec.days,
        seed: cfg.seed,
        noise_level: spec.noise_level,
        ..Default::default()
    })?;
    let features: Vec<Vec<f64>> = profiles.iter().map(LoadProfile::daily_average).collect();
    let clustering = kmeans(&features, spec.clusters, cfg.seed)?;
    let mut picked = select_from_largest(&features, &clustering, cfg.agents)?;
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| profiles[i].clone()).collect())
}

fn forecast_workload(cfg: &ExperimentConfig, spec: &ForecastSpec) -> Result<Workload> {
    let arch = MlpArch::new(spec.layer_sizes())?;
    let chosen = select_households(cfg, spec)?;
    let splits = chosen
        .iter()
        .map(|p| window_dataset(&p.series, spec.lookback, spec.horizon))
        .collect::<Result<Vec<_>>>()?;
    let tests = splits.iter().map(|s| (s.test.clone(), s.scale)).collect();
    let tasks: Vec<ForecastTask<f64>> = if cfg.strategy == Strategy::Centralized {
        let pooled = |pick: &dyn Fn(&super::WindowSplits) -> Option<&Dataset<f64>>| -> Result<Option<Dataset<f64>>> {
            let parts: Vec<&Dataset<f64>> = splits.iter().filter_map(pick).collect();
            if parts.is_empty() {
                Ok(None)
            } else {
                Dataset::pooled(parts).map(Some)
            }
        };
        vec![ForecastTask {
            arch: arch.clone(),
            train: Dataset::pooled(splits.iter().map(|s| &s.train))?,
            validation: pooled(&|s| s.validation.as_ref())?,
            test: pooled(&|s| s.test.as_ref())?,
        }]
    } else {
        splits
            .into_iter()
            .map(|s| ForecastTask {
                arch: arch.clone(),
                train: s.train,
                validation: s.validation,
                test: s.test,
            })
            .collect()
    };
    let gamma = cfg.learning.gamma.unwrap_or(DEFAULT_FORECAST_GAMMA);
    Ok(Workload {
        gammas: vec![gamma; tasks.len()],
        tasks: tasks.into_iter().map(LocalTask::Forecast).collect(),
        optimum: None,
        households: chosen.iter().map(|p| p.household).collect(),
        tests,
    })
}

fn initial_model(cfg: &ExperimentConfig, task: &LocalTask<f64>, index: u64) -> WeightVector<f64> {
    let mut rng = stream_rng(cfg.seed, Purpose::Init, index);
    let s = cfg.learning.init_scale;
    match task {
        LocalTask::Quadratic(q) => WeightVector::from(
            (0..q.dim())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                })
                .collect::<Vec<f64>>(),
        ),
        LocalTask::Forecast(f) => MlpModel::<f64>::random(f.arch.clone(), &mut rng)
            .params()
            .scaled(s),
    }
}

fn build_agents(
    cfg: &ExperimentConfig,
    work: &Workload,
    repetition: usize,
) -> Result<Vec<AgentState<f64>>> {
    let noise = if cfg.noise.variance > 0.0 {
        NoiseModel::with_variance(cfg.noise.variance)
    } else {
        NoiseModel::disabled()
    };
    let shared = cfg.learning.shared_init || cfg.strategy == Strategy::FedAvg;
    let n = work.tasks.len();
    work.tasks
        .iter()
        .zip(&work.gammas)
        .enumerate()
        .map(|(i, (task, &gamma))| {
            let theta = initial_model(cfg, task, if shared { 0 } else { i as u64 });
            let noise_seed = derive_seed(cfg.seed, Purpose::Noise, (repetition * n + i) as u64);
            let agent = AgentState::new(i, theta, gamma, task.clone(), noise, noise_seed)?;
            if !cfg.allow_unstable {
                agent
                    .check_learning_rate()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            Ok(agent)
        })
        .collect()
}

/// Graph schedule for the decentralized strategies.
pub fn build_schedule(cfg: &ExperimentConfig) -> Result<Option<MarkovSchedule<f64>>> {
    let n = cfg.agents;
    let seed = derive_seed(cfg.seed, Purpose::Schedule, 0);
    Ok(match cfg.strategy {
        Strategy::Dms | Strategy::Ctl => Some(MarkovSchedule::subsets(
            n,
            cfg.subset_size(),
            cfg.dms.substructures,
            cfg.dms.transition.clone(),
            seed,
        )?),
        Strategy::Dring => Some(MarkovSchedule::fixed(Graph::ring(n)?, seed)),
        Strategy::Dfc => Some(MarkovSchedule::fixed(Graph::complete(n), seed)),
        Strategy::Centralized => Some(MarkovSchedule::fixed(Graph::empty(1), seed)),
        Strategy::FedAvg => None,
    })
}

fn malicious_agents(cfg: &ExperimentConfig) -> Vec<usize> {
    match &cfg.attack {
        Some(AttackSpec::Poison(p)) => {
            let mut rng = stream_rng(cfg.seed, Purpose::Poison, 0);
            let mut ids = sample(&mut rng, cfg.agents, p.malicious).into_vec();
            ids.sort_unstable();
            ids
        }
        _ => Vec::new(),
    }
}

fn setup(
    cfg: &ExperimentConfig,
    work: &Workload,
    repetition: usize,
    malicious: &[usize],
) -> Result<TrainingSetup<f64>> {
    let agents = build_agents(cfg, work, repetition)?;
    let engine = match build_schedule(cfg)? {
        Some(schedule) => Engine::Decentralized {
            schedule,
            order: if cfg.strategy == Strategy::Ctl {
                StageOrder::ConsensusThenLearn
            } else {
                StageOrder::LearnThenConsensus
            },
        },
        None => Engine::FedAvg {
            server: ServerState {
                global: agents[0].theta.clone(),
            },
            local_epochs: cfg.learning.local_epochs,
        },
    };
    let mut mixer = Mixer::plaintext(cfg.alpha)?;
    if cfg.secure.enabled {
        let seed = derive_seed(cfg.seed, Purpose::SecAgg, repetition as u64);
        mixer = mixer.with_secure(SecureAggregator::new(
            cfg.field()?,
            cfg.codec()?,
            seed,
            cfg.secure.keep_payloads,
        ));
    }
    if let Some(AttackSpec::Poison(p)) = &cfg.attack {
        mixer = mixer.with_poison(PoisonPolicy::new(
            malicious.iter().copied(),
            p.epsilon,
            p.mode,
        )?);
    }
    let stop = match (cfg.tolerance, cfg.patience) {
        (Some(t), _) => StopRule::WorstMse(t),
        (None, Some(p)) => StopRule::Plateau { patience: p },
        (None, None) => StopRule::Budget,
    };
    Ok(TrainingSetup {
        agents,
        engine,
        mixer,
        rounds: cfg.rounds,
        stop,
        optimum: work.optimum.clone(),
        halt_on_divergence: cfg.halt_on_divergence,
    })
}

fn test_error(work: &Workload, models: &[WeightVector<f64>]) -> Result<(Option<f64>, Option<f64>)> {
    if work.tests.is_empty() {
        return Ok((None, None));
    }
    let (mut raw, mut scaled, mut count) = (0.0, 0.0, 0usize);
    for (h, (test, scale)) in work.tests.iter().enumerate() {
        let Some(test) = test else { continue };
        // the centralized baseline has one model for every household
        let (model, task) = if models.len() == 1 {
            (&models[0], &work.tasks[0])
        } else {
            (&models[h], &work.tasks[h])
        };
        let LocalTask::Forecast(f) = task else {
            unreachable!("forecast workload")
        };
        let loss = MlpModel::new(f.arch.clone(), model.clone())?.loss(test)?;
        raw += scale.unscale_mse(loss);
        scaled += loss;
        count += 1;
    }
    if count == 0 {
        return Ok((None, None));
    }
    Ok((Some(raw / count as f64), Some(scaled / count as f64)))
}

/// Builds the data, topology and agents described by `cfg`, trains, and
/// collects the per-round records and summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let work = match &cfg.task {
        TaskSpec::Quadratic(q) => quadratic_workload(cfg, q)?,
        TaskSpec::Forecast(f) => forecast_workload(cfg, f)?,
    };
    let malicious = malicious_agents(cfg);
    let first = setup(cfg, &work, 0, &malicious)?;
    let bound_inputs = match (&first.engine, &work.optimum) {
        (Engine::Decentralized { schedule, .. }, Some(_)) => {
            let params = BoundParams::from_agents(&first.agents, cfg.alpha)?;
            let contraction = params.worst_contraction(schedule);
            Some((params, contraction))
        }
        _ => None,
    };
    let report = run_training(first)?;

    let monitor = match &report.monitor {
        Some(m) if cfg.repetitions > 1 => {
            let mut runs = vec![m.clone()];
            let extra = (1..cfg.repetitions)
                .into_par_iter()
                .map(|r| -> Result<ConvergenceMonitor> {
                    let rep = run_training(setup(cfg, &work, r, &malicious)?)?;
                    Ok(rep.monitor.expect("optimum is known"))
                })
                .collect::<Result<Vec<_>>>()?;
            runs.extend(extra);
            Some(ConvergenceMonitor::average(&runs)?)
        }
        other => other.clone(),
    };
    let bounds = match (&bound_inputs, &monitor) {
        (Some((params, contraction)), Some(m)) => Some(check_series(
            &m.worst_mse(),
            params,
            *contraction,
            CheckOptions::default(),
        )?),
        _ => None,
    };

    let last = report.rounds.last().unwrap_or(&report.initial);
    let complexity = complexity_counters(report.rounds.iter().map(|r| &r.metrics));
    let (test_mse, test_mse_scaled) = test_error(&work, &report.models)?;
    let summary = RunSummary {
        rounds_run: report.rounds.len(),
        rounds_to_tolerance: report.rounds_to_tolerance,
        stop_reason: report.stop_reason,
        final_train_loss: last.train_loss,
        final_validation_loss: last.validation_loss,
        final_worst_mse: last.worst_mse,
        final_disagreement: last.disagreement,
        test_mse,
        test_mse_scaled,
        total_messages: complexity.total_messages,
        total_bytes: complexity.total_bytes,
        mean_edges: complexity.mean_edges,
        server_messages: complexity.server_messages,
        per_agent_messages: complexity.per_agent_messages,
        secure: report.secure_stats,
        bounds,
    };
    let attack = match &cfg.attack {
        Some(AttackSpec::Poison(p)) => Some(AttackRecord::Poison {
            malicious: malicious.clone(),
            epsilon: p.epsilon,
        }),
        Some(AttackSpec::Dlg(d)) => Some(AttackRecord::Dlg(dlg_compare_topologies(&DlgConfig {
            seed: cfg.seed,
            ..d.clone()
        })?)),
        None => None,
    };
    Ok(ExperimentReport {
        header: ReportHeader {
            strategy: cfg.strategy,
            model: cfg.task.model_label(),
            agents: work.tasks.len(),
            households: work.households.clone(),
            dim: work.tasks[0].dim(),
            seed: cfg.seed,
            optimum_known: work.optimum.is_some(),
            malicious,
        },
        config: cfg.clone(),
        initial: report.initial,
        rounds: report.rounds,
        summary,
        attack,
        transcript: report.transcript,
        monitor,
        models: report.models,
    })
}

/// One cell of a scalability sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub strategy: Strategy,
    pub agents: usize,
    pub rounds_to_tolerance: Option<usize>,
    pub rounds_run: usize,
    pub final_worst_mse: Option<f64>,
    pub total_messages: usize,
    pub mean_edges: f64,
}

/// Runs `base` for every strategy and agent count, in parallel.
pub fn run_sweep(
    base: &ExperimentConfig,
    strategies: &[Strategy],
    agent_counts: &[usize],
) -> Result<Vec<SweepPoint>> {
    let grid: Vec<(Strategy, usize)> = strategies
        .iter()
        .flat_map(|&s| agent_counts.iter().map(move |&n| (s, n)))
        .collect();
    grid.into_par_iter()
        .map(|(strategy, agents)| {
            let mut cfg = ExperimentConfig {
                strategy,
                agents,
                ..base.clone()
            };
            cfg.dms.subset_size = base.dms.subset_size.map(|m| m.min(agents));
            let r = run_experiment(&cfg)?;
            Ok(SweepPoint {
                strategy,
                agents,
                rounds_to_tolerance: r.summary.rounds_to_tolerance,
                rounds_run: r.summary.rounds_run,
                final_worst_mse: r.summary.final_worst_mse,
                total_messages: r.summary.total_messages,
                mean_edges: r.summary.mean_edges,
            })
        })
        .collect()
}
