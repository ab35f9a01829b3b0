use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GraphError;

/// One time slot of the communication digraph.
///
/// An edge `(j, i)` means agent `j` can send to agent `i` in this slot. Agents
/// are numbered `0..agent_count`. Self-loops are never stored, since every agent
/// always belongs to its own in-neighborhood.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    pub fn new(
        agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if agents == 0 {
            return Err(GraphError::NoAgents);
        }
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            if j >= agents || i >= agents {
                return Err(GraphError::EdgeOutOfRange { from: j, to: i, agents });
            }
            if j != i {
                set.insert((j, i));
            }
        }
        Ok(Self { agents, edges: set })
    }

    pub fn empty(agents: usize) -> Result<Self, GraphError> {
        Self::new(agents, std::iter::empty())
    }

    pub fn agent_count(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// In-neighbors of `agent`, excluding the agent itself.
    pub fn in_neighbors(&self, agent: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, i)| i == agent)
            .map(|&(j, _)| j)
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(j, i)| self.edges.contains(&(i, j)))
    }

    pub fn symmetrized(&self) -> Digraph {
        let edges = self
            .edges
            .iter()
            .flat_map(|&(j, i)| [(j, i), (i, j)])
            .collect();
        Digraph {
            agents: self.agents,
            edges,
        }
    }

    /// Undirected degree of every agent after symmetrization.
    pub fn undirected_degrees(&self) -> Vec<usize> {
        let sym = self.symmetrized();
        let mut deg = vec![0; self.agents];
        for (j, _) in sym.edges() {
            deg[j] += 1;
        }
        deg
    }

    pub fn union(&self, other: &Digraph) -> Result<Digraph, GraphError> {
        if self.agents != other.agents {
            return Err(GraphError::AgentMismatch {
                expected: self.agents,
                found: other.agents,
            });
        }
        Ok(Digraph {
            agents: self.agents,
            edges: self.edges.union(&other.edges).copied().collect(),
        })
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.agents];
        for &(j, i) in &self.edges {
            if forward {
                adj[j].push(i);
            } else {
                adj[i].push(j);
            }
        }
        let mut seen = vec![false; self.agents];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Returns an ordered pair `(from, to)` such that `to` cannot be reached from
    /// `from`, or `None` when the digraph is strongly connected.
    pub fn unreachable_pair(&self) -> Option<(usize, usize)> {
        if let Some(v) = self.reach(0, true).iter().position(|&r| !r) {
            return Some((0, v));
        }
        if let Some(v) = self.reach(0, false).iter().position(|&r| !r) {
            return Some((v, 0));
        }
        None
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.unreachable_pair().is_none()
    }

    pub fn check_strongly_connected(&self) -> Result<(), GraphError> {
        match self.unreachable_pair() {
            None => Ok(()),
            Some((from, to)) => Err(GraphError::NotStronglyConnected { from, to }),
        }
    }

    /// Directed cycle `0 → 1 → … → n-1 → 0`.
    pub fn directed_ring(agents: usize) -> Result<Self, GraphError> {
        Self::new(agents, (0..agents).map(|j| (j, (j + 1) % agents)))
    }

    /// Undirected cycle, both directions stored.
    pub fn ring(agents: usize) -> Result<Self, GraphError> {
        Ok(Self::directed_ring(agents)?.symmetrized())
    }

    /// Undirected path `0 – 1 – … – n-1`.
    pub fn path(agents: usize) -> Result<Self, GraphError> {
        Ok(Self::new(agents, (1..agents).map(|i| (i - 1, i)))?.symmetrized())
    }

    pub fn complete(agents: usize) -> Result<Self, GraphError> {
        Self::new(
            agents,
            (0..agents).flat_map(|j| (0..agents).map(move |i| (j, i))),
        )
    }

    /// Undirected Erdős–Rényi graph conditioned on connectivity. Draws are
    /// repeated from one seeded stream until a connected sample appears.
    pub fn erdos_renyi(agents: usize, p: f64, seed: u64) -> Result<Self, GraphError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(GraphError::Generation(format!(
                "edge probability {p} must lie in (0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let mut edges = Vec::new();
            for j in 0..agents {
                for i in (j + 1)..agents {
                    if rng.random::<f64>() < p {
                        edges.push((j, i));
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::new(agents, edges)?;
            if g.is_strongly_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::Generation(format!(
            "no connected Erdős–Rényi sample with {agents} agents and p = {p}"
        )))
    }

    /// Undirected random geometric graph over the unit square. The radius is
    /// grown by 10% steps until the sample is connected.
    pub fn random_geometric(agents: usize, radius: f64, seed: u64) -> Result<Self, GraphError> {
        if !(radius > 0.0) {
            return Err(GraphError::Generation(format!("radius {radius} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..agents)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let mut r = radius;
        loop {
            let mut edges = Vec::new();
            for j in 0..agents {
                for i in (j + 1)..agents {
                    let d = ((pts[j].0 - pts[i].0).powi(2) + (pts[j].1 - pts[i].1).powi(2)).sqrt();
                    if d <= r {
                        edges.push((j, i));
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::new(agents, edges)?;
            if g.is_strongly_connected() {
                return Ok(g);
            }
            r *= 1.1;
        }
    }
}
