use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dlg::{dlg_reconstruct, mse, DlgOptions};
use super::intercept::{infer_gradient, InterceptedTrace};
use crate::consensus::{
    dms_round, fedavg_round, AgentState, ForecastTask, LocalTask, Mixer, ServerState,
};
use crate::numerics::{Dataset, MlpArch, MlpModel, NoiseModel, WeightVector};
use crate::secagg::{FixedPointCodec, PrimeField, SecureAggregator};
use crate::streams::{derive_seed, stream_rng, Purpose};
use crate::topology::{default_subset_size, MarkovSchedule};
use crate::{Error, Result};

/// One leakage comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlgConfig {
    pub agents: usize,
    pub layer_sizes: Vec<usize>,
    pub gamma: f64,
    /// DMS subset size; the default 70% rule when absent.
    pub subset_size: Option<usize>,
    pub substructures: usize,
    /// Broadcasts the eavesdropper collects from the DMS victim.
    pub snapshots: usize,
    pub victim: usize,
    pub seed: u64,
    pub success_threshold: f64,
    /// Also run FedAvg with secure aggregation and inspect its transcript.
    pub secure: bool,
    pub options: DlgOptions,
}

impl Default for DlgConfig {
    fn default() -> Self {
        Self {
            agents: 30,
            layer_sizes: vec![2, 4, 1],
            gamma: 0.1,
            subset_size: None,
            substructures: 8,
            snapshots: 4,
            victim: 0,
            seed: 0,
            success_threshold: 1e-3,
            secure: false,
            options: DlgOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub input_mse: f64,
    pub residual: f64,
    pub success: bool,
    /// `‖inferred − true gradient‖` for the snapshot pair attacked.
    pub gradient_mismatch: f64,
    pub pairs_attacked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecureLeakage {
    /// Whether any transcript payload equals an encoded coordinate of an
    /// individual upload or gradient.
    pub transcript_leaks: bool,
    pub records_inspected: usize,
    /// Attack on the revealed aggregate, scored against the victim.
    pub aggregate_mse: f64,
    /// Victim input against the mean input of all agents.
    pub baseline_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub seed: u64,
    pub fedavg: AttackOutcome,
    pub dms: AttackOutcome,
    pub secure: Option<SecureLeakage>,
}

fn private_samples(cfg: &DlgConfig, arch: &MlpArch) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..cfg.agents)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, Purpose::Data, i as u64);
            let x = (0..arch.input_dim()).map(|_| rng.random()).collect();
            let y = (0..arch.output_dim()).map(|_| rng.random()).collect();
            (x, y)
        })
        .collect()
}

fn build_agents(
    cfg: &DlgConfig,
    arch: &MlpArch,
    samples: &[(Vec<f64>, Vec<f64>)],
    init: impl Fn(usize) -> WeightVector<f64>,
) -> Result<Vec<AgentState<f64>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let task = ForecastTask {
                arch: arch.clone(),
                train: Dataset::single(x.clone(), y.clone()),
                validation: None,
                test: None,
            };
            AgentState::new(
                i,
                init(i),
                cfg.gamma,
                LocalTask::Forecast(task),
                NoiseModel::disabled(),
                0,
            )
        })
        .collect()
}

fn attack<R: Rng>(
    arch: &MlpArch,
    weights: &WeightVector<f64>,
    gradient: &WeightVector<f64>,
    truth: &[f64],
    opts: &DlgOptions,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let model = MlpModel::new(arch.clone(), weights.clone())?;
    let r = dlg_reconstruct(&model, gradient, opts, rng)?;
    Ok((r.input_mse(truth), r.residual))
}

/// Eavesdrops on one victim under FedAvg and under DMS and runs gradient
/// leakage against both.
///
/// Under FedAvg every client starts from the same known model and uploads
/// after one clean local step, so the tapped pair (global, upload) yields the
/// exact gradient. Under DMS the initial models are private and consecutive
/// broadcasts are separated by a mixing step as well as a local step; the
/// attacker treats the earlier broadcast as the model and keeps the
/// reconstruction with the smallest residual.
pub fn dlg_compare_topologies(cfg: &DlgConfig) -> Result<LeakageReport> {
    if cfg.victim >= cfg.agents {
        return Err(Error::invalid(format!(
            "victim {} outside {} agents",
            cfg.victim, cfg.agents
        )));
    }
    if cfg.snapshots < 2 {
        return Err(Error::invalid(
            "the eavesdropper needs at least two snapshots",
        ));
    }
    let arch = MlpArch::new(cfg.layer_sizes.clone())?;
    let samples = private_samples(cfg, &arch);
    let truth = &samples[cfg.victim].0;
    let mut attack_rng = stream_rng(cfg.seed, Purpose::Attack, 0);

    // FedAvg: shared, known initialisation
    let shared = MlpModel::random(arch.clone(), &mut stream_rng(cfg.seed, Purpose::Init, 0))
        .params()
        .clone();
    let mut agents = build_agents(cfg, &arch, &samples, |_| shared.clone())?;
    let mut server = ServerState {
        global: shared.clone(),
    };
    let mut mixer = Mixer::plaintext(1.0)?;
    fedavg_round(&mut agents, &mut server, &mut mixer, 1, 1)?;
    let mut trace = InterceptedTrace::new(cfg.victim);
    trace.observe(0, shared.clone())?;
    trace.observe(1, agents[cfg.victim].phi.clone())?;
    let inferred = infer_gradient(&trace, 0, cfg.gamma)?;
    let true_grad = agents[cfg.victim].task.gradient(&shared)?;
    let (input_mse, residual) = attack(
        &arch,
        &shared,
        &inferred,
        truth,
        &cfg.options,
        &mut attack_rng,
    )?;
    let fedavg = AttackOutcome {
        input_mse,
        residual,
        success: input_mse < cfg.success_threshold,
        gradient_mismatch: inferred.sub(&true_grad)?.norm(),
        pairs_attacked: 1,
    };

    // DMS: private initialisations, mixing between broadcasts
    let mut agents = build_agents(cfg, &arch, &samples, |i| {
        MlpModel::random(
            arch.clone(),
            &mut stream_rng(cfg.seed, Purpose::Init, i as u64 + 1),
        )
        .params()
        .clone()
    })?;
    let m = cfg
        .subset_size
        .unwrap_or_else(|| default_subset_size(cfg.agents));
    let mut schedule = MarkovSchedule::subsets(
        cfg.agents,
        m,
        cfg.substructures,
        None,
        derive_seed(cfg.seed, Purpose::Schedule, 0),
    )?;
    let mut mixer = Mixer::plaintext(1.0)?;
    let mut trace = InterceptedTrace::new(cfg.victim);
    // model each broadcast was computed from, for the mismatch diagnostic
    let mut origins = Vec::new();
    let mut round = 0;
    while trace.len() < cfg.snapshots && round < 100 * cfg.snapshots {
        round += 1;
        let before = agents[cfg.victim].theta.clone();
        dms_round(&mut agents, &mut schedule, &mut mixer, round)?;
        if schedule.current_graph().degrees()[cfg.victim] > 0 {
            trace.observe(round, agents[cfg.victim].phi.clone())?;
            origins.push(before);
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    let mut pairs = 0;
    for i in trace.consecutive_pairs().collect::<Vec<_>>() {
        pairs += 1;
        let g = infer_gradient(&trace, i, cfg.gamma)?;
        let model_guess = &trace.snapshots()[i].weights;
        let true_grad = agents[cfg.victim].task.gradient(&origins[i + 1])?;
        let (mse_i, res_i) = attack(&arch, model_guess, &g, truth, &cfg.options, &mut attack_rng)?;
        if best.is_none_or(|b| res_i < b.1) {
            best = Some((mse_i, res_i, g.sub(&true_grad)?.norm()));
        }
    }
    let dms = match best {
        Some((input_mse, residual, gradient_mismatch)) => AttackOutcome {
            input_mse,
            residual,
            success: input_mse < cfg.success_threshold,
            gradient_mismatch,
            pairs_attacked: pairs,
        },
        // nothing usable on the line: the attacker can only guess
        None => {
            let guess: Vec<f64> = truth.iter().map(|_| attack_rng.random()).collect();
            let input_mse = mse(&guess, truth);
            AttackOutcome {
                input_mse,
                residual: f64::INFINITY,
                success: input_mse < cfg.success_threshold,
                gradient_mismatch: f64::INFINITY,
                pairs_attacked: 0,
            }
        }
    };

    let secure = if cfg.secure {
        Some(secure_fedavg(
            cfg,
            &arch,
            &samples,
            &shared,
            &mut attack_rng,
        )?)
    } else {
        None
    };
    Ok(LeakageReport {
        seed: cfg.seed,
        fedavg,
        dms,
        secure,
    })
}

fn secure_fedavg<R: Rng>(
    cfg: &DlgConfig,
    arch: &MlpArch,
    samples: &[(Vec<f64>, Vec<f64>)],
    shared: &WeightVector<f64>,
    rng: &mut R,
) -> Result<SecureLeakage> {
    let mut agents = build_agents(cfg, arch, samples, |_| shared.clone())?;
    let mut server = ServerState {
        global: shared.clone(),
    };
    let agg = SecureAggregator::new(
        PrimeField::default(),
        FixedPointCodec::default(),
        derive_seed(cfg.seed, Purpose::SecAgg, 0),
        true,
    );
    let mut mixer = Mixer::plaintext(1.0)?.with_secure(agg);
    fedavg_round(&mut agents, &mut server, &mut mixer, 1, 1)?;
    let agg = mixer.into_secure().expect("secure mixer");
    let field = *agg.field();
    let codec = *agg.codec();
    let transcript = agg.transcript();

    let mut transcript_leaks = false;
    for a in &agents {
        let grad = shared.sub(&a.phi)?.scaled(1.0 / cfg.gamma);
        for &v in a.phi.iter().chain(grad.iter()) {
            if transcript.contains_element(codec.encode(v, &field)?) {
                transcript_leaks = true;
            }
        }
    }

    // the server sees only the average step
    let aggregate = shared.sub(&server.global)?.scaled(1.0 / cfg.gamma);
    let truth = &samples[cfg.victim].0;
    let (aggregate_mse, _) = attack(arch, shared, &aggregate, truth, &cfg.options, rng)?;
    let dim = truth.len();
    let mean_x: Vec<f64> = (0..dim)
        .map(|k| samples.iter().map(|s| s.0[k]).sum::<f64>() / samples.len() as f64)
        .collect();
    Ok(SecureLeakage {
        transcript_leaks,
        records_inspected: transcript.len(),
        aggregate_mse,
        baseline_mse: mse(&mean_x, truth),
    })
}
