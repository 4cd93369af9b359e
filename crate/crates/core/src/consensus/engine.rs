use rayon::prelude::*;
use serde::Serialize;

use super::agent::AgentState;
use crate::numerics::WeightVector;
use crate::secagg::{party_placement, Endpoint, SecureAggregator};
use crate::threats::{poison_broadcast, PoisonPolicy};
use crate::topology::{mixing_matrix, Graph, MarkovSchedule};
use crate::{Error, Result, Scalar, Strategy};

/// Communication in one round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub edges: usize,
    pub messages: usize,
    pub bytes: usize,
    /// Messages sent by each agent.
    pub agent_messages: Vec<usize>,
    /// Degree of each agent in the round's graph.
    pub degrees: Vec<usize>,
    pub server_messages: usize,
}

/// The consensus step: plaintext or secure averaging, optionally with
/// poisoned broadcasts.
#[derive(Debug, Clone)]
pub struct Mixer<T> {
    pub alpha: T,
    secure: Option<SecureAggregator>,
    poison: Option<PoisonPolicy<T>>,
}

fn abort(round: usize, e: Error) -> Error {
    Error::RoundAborted {
        round,
        source: Box::new(e),
    }
}

impl<T: Scalar> Mixer<T> {
    pub fn plaintext(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            secure: None,
            poison: None,
        })
    }

    pub fn with_secure(mut self, aggregator: SecureAggregator) -> Self {
        self.secure = Some(aggregator);
        self
    }

    pub fn with_poison(mut self, policy: PoisonPolicy<T>) -> Self {
        self.poison = Some(policy);
        self
    }

    pub fn secure(&self) -> Option<&SecureAggregator> {
        self.secure.as_ref()
    }

    pub fn secure_mut(&mut self) -> Option<&mut SecureAggregator> {
        self.secure.as_mut()
    }

    pub fn into_secure(self) -> Option<SecureAggregator> {
        self.secure
    }

    pub fn poison(&self) -> Option<&PoisonPolicy<T>> {
        self.poison.as_ref()
    }

    /// What agent `id` sends when it means to send `w`.
    pub fn broadcast(&self, id: usize, w: &WeightVector<T>) -> WeightVector<T> {
        match &self.poison {
            Some(p) => poison_broadcast(w, p, id),
            None => w.clone(),
        }
    }

    /// New models `α Σ_j a_ij b_j`, where `b_j` is agent `j`'s broadcast of
    /// `values[j]`. Isolated agents keep `α·values[i]`.
    pub fn mix(
        &mut self,
        round: usize,
        graph: &Graph<T>,
        values: &[WeightVector<T>],
    ) -> Result<(Vec<WeightVector<T>>, RoundMetrics)> {
        let n = values.len();
        if graph.agent_count() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: graph.agent_count(),
            });
        }
        let degrees = graph.degrees();
        let sent: Vec<WeightVector<T>> = (0..n)
            .map(|j| {
                if degrees[j] > 0 {
                    self.broadcast(j, &values[j])
                } else {
                    values[j].clone()
                }
            })
            .collect();
        let dim = values.first().map_or(0, WeightVector::dim);
        let mut metrics = RoundMetrics {
            round,
            edges: graph.edge_count(),
            degrees: degrees.clone(),
            ..Default::default()
        };
        let mut out: Vec<Option<WeightVector<T>>> = vec![None; n];

        match self.secure.as_mut() {
            None => {
                let a = mixing_matrix(graph);
                for i in 0..n {
                    if degrees[i] > 0 {
                        out[i] = Some(a.mix_row(i, &sent)?.scaled(self.alpha));
                    }
                }
                metrics.agent_messages = degrees.clone();
                metrics.messages = degrees.iter().sum();
                metrics.bytes = metrics.messages * dim * std::mem::size_of::<T>();
            }
            Some(agg) => {
                metrics.agent_messages = vec![0; n];
                let sessions =
                    party_placement(Strategy::Dms, graph).map_err(|e| abort(round, e))?;
                for s in &sessions {
                    let inputs: Vec<&WeightVector<T>> =
                        s.contributors.iter().map(|&c| &sent[c]).collect();
                    let (sum, stats) = agg
                        .aggregate(round, s, &inputs)
                        .map_err(|e| abort(round, e))?;
                    let avg = sum.scaled(self.alpha / T::of_usize(s.contributors.len()));
                    for r in &s.recipients {
                        if let Endpoint::Agent(i) = *r {
                            out[i] = Some(avg.clone());
                        }
                    }
                    for &c in &s.contributors {
                        metrics.agent_messages[c] += s.party_count();
                    }
                    for p in &s.parties {
                        if let Endpoint::Agent(i) = *p {
                            metrics.agent_messages[i] += s.recipients.len();
                        }
                    }
                    metrics.messages += stats.messages;
                    metrics.bytes += stats.payload_bytes;
                }
            }
        }
        let thetas = out
            .into_iter()
            .zip(values)
            .map(|(o, v)| o.unwrap_or_else(|| v.scaled(self.alpha)))
            .collect();
        Ok((thetas, metrics))
    }
}

fn check_dims<T: Scalar>(agents: &[AgentState<T>]) -> Result<()> {
    let Some(first) = agents.first() else {
        return Err(Error::Empty("agents"));
    };
    for a in agents {
        if a.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: a.dim(),
            });
        }
    }
    Ok(())
}

fn learn_all<T: Scalar>(agents: &mut [AgentState<T>]) -> Result<()> {
    agents.par_iter_mut().try_for_each(AgentState::learn)
}

/// Learn then consensus: every agent takes a local step to `phi`, the next
/// graph is drawn and `theta` becomes the mixed `phi` of the neighbourhood.
pub fn dms_round<T: Scalar>(
    agents: &mut [AgentState<T>],
    schedule: &mut MarkovSchedule<T>,
    mixer: &mut Mixer<T>,
    round: usize,
) -> Result<RoundMetrics> {
    check_dims(agents)?;
    learn_all(agents)?;
    let phis: Vec<WeightVector<T>> = agents.iter().map(|a| a.phi.clone()).collect();
    let (thetas, metrics) = mixer.mix(round, schedule.advance(), &phis)?;
    for (a, t) in agents.iter_mut().zip(thetas) {
        a.theta = t;
    }
    Ok(metrics)
}

/// Consensus then learn: `theta` becomes the mixed previous `phi`, then the
/// local step from it gives the new `phi`.
pub fn ctl_round<T: Scalar>(
    agents: &mut [AgentState<T>],
    schedule: &mut MarkovSchedule<T>,
    mixer: &mut Mixer<T>,
    round: usize,
) -> Result<RoundMetrics> {
    check_dims(agents)?;
    let phis: Vec<WeightVector<T>> = agents.iter().map(|a| a.phi.clone()).collect();
    let (thetas, metrics) = mixer.mix(round, schedule.advance(), &phis)?;
    for (a, t) in agents.iter_mut().zip(thetas) {
        a.theta = t;
    }
    learn_all(agents)?;
    Ok(metrics)
}

/// Global model held by the FedAvg server.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState<T> {
    pub global: WeightVector<T>,
}

/// Server broadcasts the global model, every client runs `local_epochs`
/// steps from it and uploads, the server keeps the uniform average and the
/// clients adopt it.
pub fn fedavg_round<T: Scalar>(
    agents: &mut [AgentState<T>],
    server: &mut ServerState<T>,
    mixer: &mut Mixer<T>,
    round: usize,
    local_epochs: usize,
) -> Result<RoundMetrics> {
    check_dims(agents)?;
    server.global.check_dim(&agents[0].theta)?;
    let n = agents.len();
    let global = server.global.clone();
    agents.par_iter_mut().try_for_each(|a| -> Result<()> {
        a.theta = global.clone();
        let mut w = global.clone();
        for _ in 0..local_epochs {
            w = a.step_from(&w)?;
        }
        a.phi = w;
        Ok(())
    })?;
    let uploads: Vec<WeightVector<T>> = agents
        .iter()
        .map(|a| mixer.broadcast(a.id, &a.phi))
        .collect();
    let dim = global.dim();
    let mut metrics = RoundMetrics {
        round,
        edges: n,
        degrees: vec![1; n],
        agent_messages: vec![1; n],
        server_messages: n,
        ..Default::default()
    };
    let sum = match mixer.secure_mut() {
        None => {
            metrics.messages = 2 * n;
            metrics.bytes = metrics.messages * dim * std::mem::size_of::<T>();
            let mut s = WeightVector::zeros(dim);
            for u in &uploads {
                s.axpy(T::one(), u)?;
            }
            s
        }
        Some(agg) => {
            let sessions = party_placement(Strategy::FedAvg, &Graph::<T>::star(n))
                .map_err(|e| abort(round, e))?;
            let s = &sessions[0];
            let inputs: Vec<&WeightVector<T>> = uploads.iter().collect();
            let (sum, stats) = agg
                .aggregate(round, s, &inputs)
                .map_err(|e| abort(round, e))?;
            metrics.agent_messages = vec![s.party_count(); n];
            metrics.messages = stats.messages + n;
            metrics.bytes = stats.payload_bytes + n * dim * std::mem::size_of::<T>();
            sum
        }
    };
    server.global = sum.scaled(T::one() / T::of_usize(n));
    for a in agents.iter_mut() {
        a.theta = server.global.clone();
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::LocalTask;
    use crate::numerics::{summed_optimum, NoiseModel, QuadraticTask};
    use crate::secagg::{FixedPointCodec, PrimeField};
    use crate::threats::PoisonMode;

    fn quad_agents(bs: &[f64], gamma: f64) -> Vec<AgentState<f64>> {
        bs.iter()
            .enumerate()
            .map(|(i, &b)| {
                let t = QuadraticTask::diagonal(vec![1.0 + i as f64, 2.0], vec![b, -b]).unwrap();
                AgentState::new(
                    i,
                    WeightVector::zeros(2),
                    gamma,
                    LocalTask::Quadratic(t),
                    NoiseModel::disabled(),
                    i as u64,
                )
                .unwrap()
            })
            .collect()
    }

    fn optimum(agents: &[AgentState<f64>]) -> WeightVector<f64> {
        let tasks: Vec<&QuadraticTask<f64>> = agents
            .iter()
            .map(|a| match &a.task {
                LocalTask::Quadratic(q) => q,
                _ => unreachable!(),
            })
            .collect();
        summed_optimum(&tasks).unwrap()
    }

    #[test]
    fn single_agent_is_gradient_descent() {
        let mut agents = quad_agents(&[1.0], 0.25);
        let mut sched = MarkovSchedule::fixed(Graph::empty(1), 0);
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        let mut reference = agents[0].clone();
        for k in 0..5 {
            dms_round(&mut agents, &mut sched, &mut mixer, k).unwrap();
            reference.learn().unwrap();
            reference.theta = reference.phi.clone();
            assert_eq!(agents[0].theta, reference.theta);
        }
        let mut ctl = quad_agents(&[1.0], 0.25);
        for k in 0..5 {
            ctl_round(&mut ctl, &mut sched, &mut mixer, k).unwrap();
        }
        // ctl lags by the final local step
        assert_eq!(ctl[0].phi, agents[0].theta);
    }

    #[test]
    fn identical_agents_stay_identical() {
        let mut agents: Vec<_> = (0..4)
            .map(|i| {
                let t = QuadraticTask::diagonal(vec![2.0], vec![1.0]).unwrap();
                AgentState::new(
                    i,
                    WeightVector::from(vec![3.0]),
                    0.1,
                    LocalTask::Quadratic(t),
                    NoiseModel::disabled(),
                    0,
                )
                .unwrap()
            })
            .collect();
        let mut sched = MarkovSchedule::fixed(Graph::complete(4), 0);
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        for k in 0..10 {
            dms_round(&mut agents, &mut sched, &mut mixer, k).unwrap();
            assert!(agents.iter().all(|a| a.theta == agents[0].theta));
        }
    }

    #[test]
    fn three_agents_reach_summed_optimum() {
        let mut ltc = quad_agents(&[1.0, -2.0, 4.0], 0.2);
        let mut ctl = ltc.clone();
        let opt = optimum(&ltc);
        let mut sched = MarkovSchedule::fixed(Graph::complete(3), 0);
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        for k in 0..500 {
            dms_round(&mut ltc, &mut sched, &mut mixer, k).unwrap();
            ctl_round(&mut ctl, &mut sched, &mut mixer, k).unwrap();
        }
        for a in &ltc {
            assert!(a.theta.dist_sq(&opt).unwrap().sqrt() < 1e-6);
        }
        for (a, b) in ltc.iter().zip(&ctl) {
            assert!(a.theta.dist_sq(&b.theta).unwrap().sqrt() < 1e-5);
        }
    }

    #[test]
    fn pure_averaging_disagreement_shrinks() {
        let mut agents: Vec<_> = (0..5)
            .map(|i| {
                let t = QuadraticTask::diagonal(vec![1.0], vec![0.0]).unwrap();
                AgentState::new(
                    i,
                    WeightVector::from(vec![i as f64]),
                    0.0,
                    LocalTask::Quadratic(t),
                    NoiseModel::disabled(),
                    0,
                )
                .unwrap()
            })
            .collect();
        let mut sched = MarkovSchedule::fixed(Graph::ring(5).unwrap(), 0);
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        let spread = |a: &[AgentState<f64>]| {
            let v: Vec<f64> = a.iter().map(|x| x.theta[0]).collect();
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
        };
        let mut last = spread(&agents);
        for k in 0..20 {
            ctl_round(&mut agents, &mut sched, &mut mixer, k).unwrap();
            let now = spread(&agents);
            assert!(now < last);
            last = now;
        }
        assert!((agents.iter().map(|a| a.theta[0]).sum::<f64>() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn plaintext_messages_equal_degrees() {
        let mut agents = quad_agents(&[1.0; 6], 0.1);
        let mut sched = MarkovSchedule::fixed(Graph::ring(6).unwrap(), 0);
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        let m = dms_round(&mut agents, &mut sched, &mut mixer, 0).unwrap();
        assert_eq!(m.edges, 6);
        assert_eq!(m.agent_messages, vec![2; 6]);
        assert_eq!(m.messages, 12);
        assert_eq!(m.bytes, 12 * 2 * 8);
    }

    #[test]
    fn secure_matches_plaintext_within_quantization() {
        let codec = FixedPointCodec::default();
        for graph in [
            Graph::complete(5),
            Graph::ring(5).unwrap(),
            Graph::clique(5, &[0, 2, 3]),
        ] {
            let mut plain = quad_agents(&[1.0, -1.0, 0.5, 2.0, -3.0], 0.2);
            let mut secure = plain.clone();
            let mut s1 = MarkovSchedule::fixed(graph.clone(), 0);
            let mut s2 = MarkovSchedule::fixed(graph, 0);
            let mut m1 = Mixer::plaintext(1.0).unwrap();
            let agg = SecureAggregator::new(PrimeField::default(), codec, 1, false);
            let mut m2 = Mixer::plaintext(1.0).unwrap().with_secure(agg);
            for k in 0..5 {
                dms_round(&mut plain, &mut s1, &mut m1, k).unwrap();
                dms_round(&mut secure, &mut s2, &mut m2, k).unwrap();
                let tol = 2.0 * codec.resolution() * 5.0;
                for (a, b) in plain.iter().zip(&secure) {
                    for (x, y) in a.theta.iter().zip(b.theta.iter()) {
                        assert!((x - y).abs() <= tol, "{x} vs {y}");
                    }
                }
                // keep the trajectories aligned so the tolerance does not compound
                for (a, b) in plain.iter().zip(secure.iter_mut()) {
                    b.theta = a.theta.clone();
                }
            }
        }
    }

    #[test]
    fn secure_tamper_aborts_round() {
        let mut agents = quad_agents(&[1.0; 4], 0.1);
        let mut sched = MarkovSchedule::fixed(Graph::complete(4), 0);
        let mut agg =
            SecureAggregator::new(PrimeField::default(), FixedPointCodec::default(), 1, false);
        agg.corrupt_next_session(1);
        let mut mixer = Mixer::plaintext(1.0).unwrap().with_secure(agg);
        let err = dms_round(&mut agents, &mut sched, &mut mixer, 7).unwrap_err();
        assert!(matches!(err, Error::RoundAborted { round: 7, .. }));
        assert!(err.is_secagg_abort());
    }

    #[test]
    fn fedavg_one_agent_is_local_training() {
        let mut agents = quad_agents(&[2.0], 0.25);
        let mut server = ServerState {
            global: WeightVector::zeros(2),
        };
        let mut mixer = Mixer::plaintext(1.0).unwrap();
        let mut reference = agents[0].clone();
        for k in 0..4 {
            fedavg_round(&mut agents, &mut server, &mut mixer, k, 1).unwrap();
            reference.learn().unwrap();
            reference.theta = reference.phi.clone();
        }
        assert_eq!(server.global, reference.theta);
    }

    #[test]
    fn fedavg_secure_and_poisoned() {
        let mut agents = quad_agents(&[1.0, 2.0, 3.0, 4.0], 0.1);
        let mut plain = agents.clone();
        let mut server = ServerState {
            global: WeightVector::zeros(2),
        };
        let mut server_plain = server.clone();
        let agg =
            SecureAggregator::new(PrimeField::default(), FixedPointCodec::default(), 3, false);
        let mut mixer = Mixer::plaintext(1.0).unwrap().with_secure(agg);
        let mut mp = Mixer::plaintext(1.0).unwrap();
        let m = fedavg_round(&mut agents, &mut server, &mut mixer, 0, 2).unwrap();
        fedavg_round(&mut plain, &mut server_plain, &mut mp, 0, 2).unwrap();
        assert_eq!(m.agent_messages, vec![3; 4]);
        assert_eq!(m.messages, 4 * 3 + 3 + 4);
        for (x, y) in server.global.iter().zip(server_plain.global.iter()) {
            assert!((x - y).abs() < 1e-4);
        }
        let mut poisoned = quad_agents(&[1.0, 2.0, 3.0, 4.0], 0.1);
        let mut sp = ServerState {
            global: WeightVector::zeros(2),
        };
        let policy = PoisonPolicy::new([0], 0.4, PoisonMode::Constant).unwrap();
        let mut mixer = Mixer::plaintext(1.0).unwrap().with_poison(policy);
        fedavg_round(&mut poisoned, &mut sp, &mut mixer, 0, 2).unwrap();
        for (x, y) in sp.global.iter().zip(server_plain.global.iter()) {
            assert!((x - y - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_agents_are_not_poisoned() {
        let mut agents = quad_agents(&[1.0, 1.0, 1.0, 1.0], 0.0);
        let policy = PoisonPolicy::new([3], 1.0, PoisonMode::Constant).unwrap();
        let mut mixer = Mixer::plaintext(1.0).unwrap().with_poison(policy);
        let mut sched = MarkovSchedule::fixed(Graph::clique(4, &[0, 1, 2]), 0);
        dms_round(&mut agents, &mut sched, &mut mixer, 0).unwrap();
        assert_eq!(agents[3].theta.as_slice(), &[0.0, 0.0]);
        assert_eq!(agents[0].theta.as_slice(), &[0.0, 0.0]);
    }
}
