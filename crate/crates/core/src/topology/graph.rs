use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Undirected weighted graph over agents `0..agent_count`.
///
/// Edges are stored once as `(min, max)`; self loops are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    agent_count: usize,
    edges: BTreeMap<(usize, usize), T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// `n` clients attached to a hub with index `n`.
    Star,
    Ring,
    Complete,
    /// Complete graph on a uniformly sampled subset of this size; the
    /// remaining agents are isolated.
    Subset(usize),
}

impl<T: Scalar> Graph<T> {
    pub fn empty(agent_count: usize) -> Self {
        Self {
            agent_count,
            edges: BTreeMap::new(),
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize, weight: T) -> Result<()> {
        if i == j {
            return Err(Error::invalid(format!("self loop on agent {i}")));
        }
        if i >= self.agent_count || j >= self.agent_count {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) outside {} agents",
                self.agent_count
            )));
        }
        if !(weight > T::zero()) {
            return Err(Error::invalid("edge weights must be positive"));
        }
        self.edges.insert((i.min(j), i.max(j)), weight);
        Ok(())
    }

    pub fn complete(n: usize) -> Self {
        Self::clique(n, &(0..n).collect::<Vec<_>>())
    }

    /// Complete graph on `members`, all other agents isolated.
    pub fn clique(n: usize, members: &[usize]) -> Self {
        let mut g = Self::empty(n);
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                g.edges.insert((i.min(j), i.max(j)), T::one());
            }
        }
        g
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!(
                "a ring needs at least 3 agents, got {n}"
            )));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            g.add_edge(i, (i + 1) % n, T::one())?;
        }
        Ok(g)
    }

    pub fn star(clients: usize) -> Self {
        let mut g = Self::empty(clients + 1);
        for i in 0..clients {
            g.edges.insert((i, clients), T::one());
        }
        g
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<T> {
        self.edges.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.agent_count];
        for &(i, j) in self.edges.keys() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Neighbour lists, ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.agent_count];
        for &(i, j) in self.edges.keys() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

/// Dense Laplacian: `−a_ij` off the diagonal and the weighted degree on it.
pub fn laplacian<T: Scalar>(g: &Graph<T>) -> Vec<Vec<T>> {
    let n = g.agent_count();
    let mut l = vec![vec![T::zero(); n]; n];
    for (i, j, w) in g.edges() {
        l[i][j] -= w;
        l[j][i] -= w;
        l[i][i] += w;
        l[j][j] += w;
    }
    l
}

/// Builds one of the baseline topologies. `Subset` draws its members from `rng`.
pub fn make_topology<T: Scalar, R: Rng + ?Sized>(
    kind: TopologyKind,
    n: usize,
    rng: &mut R,
) -> Result<Graph<T>> {
    match kind {
        TopologyKind::Star => Ok(Graph::star(n)),
        TopologyKind::Ring => Graph::ring(n),
        TopologyKind::Complete => Ok(Graph::complete(n)),
        TopologyKind::Subset(m) => {
            if m < 3 {
                return Err(Error::invalid(format!(
                    "aggregation subsets need at least 3 agents, got {m}"
                )));
            }
            if m > n {
                return Err(Error::invalid(format!("subset of {m} from {n} agents")));
            }
            let mut members = sample(rng, n, m).into_vec();
            members.sort_unstable();
            Ok(Graph::clique(n, &members))
        }
    }
}

/// Whether the union of all edge sets connects every agent.
pub fn union_connectivity<T: Scalar>(graphs: &[Graph<T>]) -> Result<bool> {
    let first = graphs.first().ok_or(Error::Empty("no graphs"))?;
    let n = first.agent_count();
    if graphs.iter().any(|g| g.agent_count() != n) {
        return Err(Error::invalid("graphs have different agent counts"));
    }
    if n == 0 {
        return Ok(true);
    }
    let mut uf = UnionFind::<usize>::new(n);
    for g in graphs {
        for (i, j, _) in g.edges() {
            uf.union(i, j);
        }
    }
    let root = uf.find(0);
    Ok((1..n).all(|i| uf.find(i) == root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type G = Graph<f64>;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn path_laplacian() {
        let mut g = G::empty(2);
        g.add_edge(0, 1, 1.0).unwrap();
        assert_eq!(laplacian(&g), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn triangle_laplacian() {
        let l = laplacian(&G::complete(3));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[i][j], if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn empty_laplacian_is_zero() {
        assert!(laplacian(&G::empty(4)).iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn topology_edge_counts() {
        let c: G = make_topology(TopologyKind::Complete, 30, &mut rng()).unwrap();
        assert_eq!(c.edge_count(), 435);
        let r: G = make_topology(TopologyKind::Ring, 5, &mut rng()).unwrap();
        assert_eq!(r.edge_count(), 5);
        assert!(r.degrees().iter().all(|&d| d == 2));
        let s: G = make_topology(TopologyKind::Subset(21), 30, &mut rng()).unwrap();
        assert_eq!(s.edge_count(), 210);
        assert_eq!(s.degrees().iter().filter(|&&d| d == 20).count(), 21);
        assert_eq!(s.degrees().iter().filter(|&&d| d == 0).count(), 9);
        let star: G = make_topology(TopologyKind::Star, 30, &mut rng()).unwrap();
        assert_eq!(star.edge_count(), 30);
        assert_eq!(star.degrees()[30], 30);
    }

    #[test]
    fn invalid_topologies_rejected() {
        assert!(make_topology::<f64, _>(TopologyKind::Subset(2), 30, &mut rng()).is_err());
        assert!(make_topology::<f64, _>(TopologyKind::Subset(31), 30, &mut rng()).is_err());
        assert!(make_topology::<f64, _>(TopologyKind::Ring, 2, &mut rng()).is_err());
        let mut g = G::empty(3);
        assert!(g.add_edge(1, 1, 1.0).is_err());
        assert!(g.add_edge(0, 1, 0.0).is_err());
        assert!(g.add_edge(0, 3, 1.0).is_err());
    }

    #[test]
    fn make_topology_is_deterministic() {
        let a: G = make_topology(
            TopologyKind::Subset(7),
            20,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b: G = make_topology(
            TopologyKind::Subset(7),
            20,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn connectivity_cases() {
        assert!(union_connectivity(&[G::complete(5)]).unwrap());
        let two_triangles = {
            let mut g = G::clique(6, &[0, 1, 2]);
            for (i, j, _) in G::clique(6, &[3, 4, 5]).edges().collect::<Vec<_>>() {
                g.add_edge(i, j, 1.0).unwrap();
            }
            g
        };
        assert!(!union_connectivity(&[two_triangles]).unwrap());
        assert!(union_connectivity::<f64>(&[]).is_err());
        assert!(union_connectivity(&[G::complete(3), G::complete(4)]).is_err());
    }

    #[test]
    fn round_robin_window_is_connected() {
        // overlapping windows {0,1,2}, {2,3,4}, ... cover all agents
        let n = 9;
        let graphs: Vec<G> = (0..n / 2)
            .map(|k| G::clique(n, &[2 * k, 2 * k + 1, (2 * k + 2) % n]))
            .collect();
        let expected = bfs_connected(&graphs, n);
        assert!(expected);
        assert_eq!(union_connectivity(&graphs).unwrap(), expected);
        // dropping the last window strands agent 8
        let partial = &graphs[..graphs.len() - 1];
        assert_eq!(
            union_connectivity(partial).unwrap(),
            bfs_connected(partial, n)
        );
    }

    fn bfs_connected(graphs: &[G], n: usize) -> bool {
        let mut adj = vec![vec![]; n];
        for g in graphs {
            for (i, j, _) in g.edges() {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
