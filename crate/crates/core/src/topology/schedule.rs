use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{make_topology, union_connectivity, Graph, TopologyKind};
use crate::{Error, Result, Scalar};

/// Default aggregation subset size: 70% of the agents (21 of 30), at least 3.
pub fn default_subset_size(n: usize) -> usize {
    ((0.7 * n as f64).round() as usize).max(3).min(n)
}

const MAX_RESAMPLES: usize = 1000;
const CESARO_STEPS: usize = 10_000;

/// Markov chain over a fixed set of graph substructures.
///
/// Each call to [`advance`](Self::advance) samples the next state from the
/// row of the transition matrix belonging to the current state, using the
/// schedule's own deterministic stream.
#[derive(Debug, Clone)]
pub struct MarkovSchedule<T> {
    substructures: Vec<Graph<T>>,
    transition: Vec<Vec<f64>>,
    current: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> MarkovSchedule<T> {
    pub fn new(
        substructures: Vec<Graph<T>>,
        transition: Vec<Vec<f64>>,
        initial: usize,
        seed: u64,
    ) -> Result<Self> {
        let q = substructures.len();
        if q == 0 {
            return Err(Error::Empty("schedule without substructures"));
        }
        let n = substructures[0].agent_count();
        if substructures.iter().any(|g| g.agent_count() != n) {
            return Err(Error::invalid("substructures have different agent counts"));
        }
        if transition.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: transition.len(),
            });
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: row.len(),
                });
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "transition row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("transition row {i} sums to {s}")));
            }
        }
        if initial >= q {
            return Err(Error::invalid(format!(
                "initial state {initial} out of {q}"
            )));
        }
        Ok(Self {
            substructures,
            transition,
            current: initial,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// I.i.d. switching: every row of the transition matrix is uniform.
    pub fn uniform(substructures: Vec<Graph<T>>, seed: u64) -> Result<Self> {
        let q = substructures.len();
        Self::new(
            substructures,
            vec![vec![1.0 / q as f64; q]; q.max(1)],
            0,
            seed,
        )
    }

    /// A static topology expressed as a one-state chain.
    pub fn fixed(graph: Graph<T>, seed: u64) -> Self {
        Self::new(vec![graph], vec![vec![1.0]], 0, seed).expect("one-state chain is valid")
    }

    /// `q` pre-sampled complete graphs on random `m`-subsets of `n` agents,
    /// resampled until their union is connected, with the given transition
    /// matrix (uniform when `None`).
    pub fn subsets(
        n: usize,
        m: usize,
        q: usize,
        transition: Option<Vec<Vec<f64>>>,
        seed: u64,
    ) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("need at least one substructure"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for _ in 0..MAX_RESAMPLES {
            let graphs = (0..q)
                .map(|_| make_topology(TopologyKind::Subset(m), n, &mut rng))
                .collect::<Result<Vec<Graph<T>>>>()?;
            if union_connectivity(&graphs)? {
                return match transition {
                    Some(t) => Self::new(graphs, t, 0, seed),
                    None => Self::uniform(graphs, seed),
                };
            }
        }
        Err(Error::invalid(format!(
            "could not draw {q} subsets of size {m} whose union connects {n} agents"
        )))
    }

    pub fn advance(&mut self) -> &Graph<T> {
        let u: f64 = self.rng.random();
        let row = &self.transition[self.current];
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        // rounding can leave u ≥ Σp; fall back to the last state with mass
        if u >= acc {
            next = row.iter().rposition(|&p| p > 0.0).unwrap_or(next);
        }
        self.current = next;
        &self.substructures[next]
    }

    pub fn current_state(&self) -> usize {
        self.current
    }

    pub fn current_graph(&self) -> &Graph<T> {
        &self.substructures[self.current]
    }

    pub fn substructures(&self) -> &[Graph<T>] {
        &self.substructures
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agent_count(&self) -> usize {
        self.substructures[0].agent_count()
    }

    /// Long-run state occupancy starting from the current state (Cesàro
    /// average of the chain's distribution, so periodic chains are handled).
    pub fn stationary_distribution(&self) -> Vec<f64> {
        let q = self.substructures.len();
        let mut dist = vec![0.0; q];
        dist[self.current] = 1.0;
        let mut avg = vec![0.0; q];
        for _ in 0..CESARO_STEPS {
            let mut next = vec![0.0; q];
            for (i, &pi) in dist.iter().enumerate() {
                if pi != 0.0 {
                    for (j, &t) in self.transition[i].iter().enumerate() {
                        next[j] += pi * t;
                    }
                }
            }
            dist = next;
            for (a, &d) in avg.iter_mut().zip(&dist) {
                *a += d / CESARO_STEPS as f64;
            }
        }
        avg
    }

    /// Stationary-weighted mean edge count.
    pub fn expected_edges(&self) -> f64 {
        self.stationary_distribution()
            .iter()
            .zip(&self.substructures)
            .map(|(p, g)| p * g.edge_count() as f64)
            .sum()
    }
}
