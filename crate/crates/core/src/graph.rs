//! Underlying communication graph and the random edge activation process.
//!
//! Agents and edges are 0-based inside the crate. The JSON format uses
//! 1-based agent indices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one agent")]
    Empty,
    #[error("self-loop at agent {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("agent {node} out of range for {n} agents")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge {edge} has activation probability {sigma}, expected (0, 1]")]
    InvalidProbability { edge: usize, sigma: f64 },
    #[error("expected {expected} activation probabilities, got {got}")]
    ProbabilityCount { expected: usize, got: usize },
    #[error("no connected graph found after {0} attempts")]
    GenerationFailed(usize),
}

/// Connected undirected graph with a fixed lexicographic edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnderlyingGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// Per agent, `(neighbor, edge id)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl UnderlyingGraph {
    /// Validates and normalizes an edge list. Each pair is stored as
    /// `(min, max)` and the list is sorted lexicographically.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut sorted = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            sorted.push((a.min(b), a.max(b)));
        }
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (id, &(i, j)) in sorted.iter().enumerate() {
            adjacency[i].push((j, id));
            adjacency[j].push((i, id));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let g = Self {
            n,
            edges: sorted,
            adjacency,
        };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in their fixed order; edge ids index into this slice.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    /// `(neighbor, edge id)` pairs of agent `i`, ascending by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|s| *s)
    }

    /// One row per undirected edge `(i, j)`, `i < j`: `+1` at `i`, `−1` at `j`.
    pub fn incidence_matrix(&self) -> DMatrix<i32> {
        let mut m = DMatrix::zeros(self.edges.len(), self.n);
        for (r, &(i, j)) in self.edges.iter().enumerate() {
            m[(r, i)] = 1;
            m[(r, j)] = -1;
        }
        m
    }

    /// One row per directed edge, ordered `(i, j), (j, i)` for each undirected
    /// edge in turn: row `2ℓ` is `+1` at `i`, `−1` at `j`; row `2ℓ + 1` is the
    /// reverse. This is the layout of a block vector.
    pub fn directed_incidence_matrix(&self) -> DMatrix<i32> {
        let mut m = DMatrix::zeros(2 * self.edges.len(), self.n);
        for (l, &(i, j)) in self.edges.iter().enumerate() {
            m[(2 * l, i)] = 1;
            m[(2 * l, j)] = -1;
            m[(2 * l + 1, j)] = 1;
            m[(2 * l + 1, i)] = -1;
        }
        m
    }
}

/// Erdős–Rényi graph `G(n, p)`, redrawn until connected.
pub fn erdos_renyi_connected(
    n: usize,
    p: f64,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<UnderlyingGraph, GraphError> {
    for _ in 0..max_attempts {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        match UnderlyingGraph::new(n, &edges) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::GenerationFailed(max_attempts))
}

/// Edges active at one round with the induced neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundActivation {
    pub t: u64,
    /// Ids of the active edges, ascending.
    pub active_edges: Vec<usize>,
    /// Per agent, active neighbors ascending.
    pub neighbors: Vec<Vec<usize>>,
}

impl RoundActivation {
    pub fn from_active(graph: &UnderlyingGraph, t: u64, active: impl Fn(usize) -> bool) -> Self {
        let active_edges: Vec<usize> = (0..graph.num_edges()).filter(|&e| active(e)).collect();
        let mut neighbors = vec![Vec::new(); graph.n_agents()];
        for &e in &active_edges {
            let (i, j) = graph.edges()[e];
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            t,
            active_edges,
            neighbors,
        }
    }
}

/// Source of per-round edge activations.
pub trait EdgeActivation: Sync {
    /// Whether `edge` is active at round `t`. Must be a pure function.
    fn is_active(&self, edge: usize, t: u64) -> bool;

    fn sample_round(&self, graph: &UnderlyingGraph, t: u64) -> RoundActivation {
        RoundActivation::from_active(graph, t, |e| self.is_active(e, t))
    }
}

/// Independent Bernoulli activations, one ChaCha substream per edge.
///
/// The draw for `(edge, t)` is read at a fixed position of the edge's
/// stream, so any subset of rounds can be sampled in any order.
#[derive(Debug, Clone)]
pub struct ActivationModel {
    probabilities: Vec<f64>,
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl ActivationModel {
    pub fn new(
        graph: &UnderlyingGraph,
        probabilities: Vec<f64>,
        seed: u64,
    ) -> Result<Self, GraphError> {
        if probabilities.len() != graph.num_edges() {
            return Err(GraphError::ProbabilityCount {
                expected: graph.num_edges(),
                got: probabilities.len(),
            });
        }
        if let Some((edge, &sigma)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s > 0.0 && **s <= 1.0))
        {
            return Err(GraphError::InvalidProbability { edge, sigma });
        }
        let streams = (0..probabilities.len())
            .map(|e| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(e as u64);
                rng
            })
            .collect();
        Ok(Self {
            probabilities,
            seed,
            streams,
        })
    }

    /// Same probability on every edge.
    pub fn uniform(graph: &UnderlyingGraph, sigma: f64, seed: u64) -> Result<Self, GraphError> {
        Self::new(graph, vec![sigma; graph.num_edges()], seed)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` for `(edge, t)`.
    pub fn draw(&self, edge: usize, t: u64) -> f64 {
        let mut rng = self.streams[edge].clone();
        // One f64 consumes two 32-bit words.
        rng.set_word_pos(2 * t as u128);
        rng.gen()
    }
}

impl EdgeActivation for ActivationModel {
    fn is_active(&self, edge: usize, t: u64) -> bool {
        let sigma = self.probabilities[edge];
        sigma >= 1.0 || self.draw(edge, t) < sigma
    }
}

/// Explicit activation pattern: round `t` uses `rounds[t]`, later rounds
/// have no active edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedActivation {
    pub rounds: Vec<Vec<bool>>,
}

impl RecordedActivation {
    /// Records the first `rounds` rounds of another activation source.
    pub fn record(source: &dyn EdgeActivation, graph: &UnderlyingGraph, rounds: u64) -> Self {
        Self {
            rounds: (0..rounds)
                .map(|t| (0..graph.num_edges()).map(|e| source.is_active(e, t)).collect())
                .collect(),
        }
    }
}

impl EdgeActivation for RecordedActivation {
    fn is_active(&self, edge: usize, t: u64) -> bool {
        self.rounds
            .get(t as usize)
            .and_then(|r| r.get(edge))
            .copied()
            .unwrap_or(false)
    }
}

/// Graph together with its activation model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "EdgeProcessFile", into = "EdgeProcessFile")]
pub struct EdgeProcess {
    pub graph: UnderlyingGraph,
    pub activation: ActivationModel,
}

impl EdgeProcess {
    pub fn new(graph: UnderlyingGraph, probabilities: Vec<f64>, seed: u64) -> Result<Self, GraphError> {
        let activation = ActivationModel::new(&graph, probabilities, seed)?;
        Ok(Self { graph, activation })
    }

    pub fn sample_round(&self, t: u64) -> RoundActivation {
        self.activation.sample_round(&self.graph, t)
    }

    /// Same graph and probabilities with a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(self.graph.clone(), self.activation.probabilities.clone(), seed)
            .expect("probabilities were already validated")
    }
}

/// `{"n": 5, "edges": [[1, 4, 0.5], ...], "seed": 0}` with 1-based agents.
#[derive(Serialize, Deserialize)]
struct EdgeProcessFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    seed: u64,
}

impl From<EdgeProcess> for EdgeProcessFile {
    fn from(p: EdgeProcess) -> Self {
        let edges = p
            .graph
            .edges()
            .iter()
            .zip(p.activation.probabilities())
            .map(|(&(i, j), &s)| (i + 1, j + 1, s))
            .collect();
        Self {
            n: p.graph.n_agents(),
            edges,
            seed: p.activation.seed(),
        }
    }
}

impl TryFrom<EdgeProcessFile> for EdgeProcess {
    type Error = GraphError;

    fn try_from(f: EdgeProcessFile) -> Result<Self, Self::Error> {
        let mut pairs = Vec::with_capacity(f.edges.len());
        for &(i, j, _) in &f.edges {
            for node in [i, j] {
                if node == 0 || node > f.n {
                    return Err(GraphError::NodeOutOfRange { node, n: f.n });
                }
            }
            pairs.push((i - 1, j - 1));
        }
        let graph = UnderlyingGraph::new(f.n, &pairs)?;
        let mut probabilities = vec![0.0; graph.num_edges()];
        for (&(i, j), &(_, _, s)) in pairs.iter().zip(&f.edges) {
            probabilities[graph.edge_index(i, j).expect("edge was just inserted")] = s;
        }
        Self::new(graph, probabilities, f.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> UnderlyingGraph {
        UnderlyingGraph::new(3, &[(1, 2), (0, 1)]).unwrap()
    }

    #[test]
    fn smallest_graph() {
        let g = UnderlyingGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.incidence_matrix(), DMatrix::from_row_slice(1, 2, &[1, -1]));
    }

    #[test]
    fn rejects_invalid_edge_lists() {
        assert_eq!(
            UnderlyingGraph::new(4, &[(0, 1), (2, 3)]),
            Err(GraphError::Disconnected)
        );
        assert_eq!(UnderlyingGraph::new(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            UnderlyingGraph::new(2, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            UnderlyingGraph::new(2, &[(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, n: 2 })
        );
    }

    #[test]
    fn path_incidence_uses_lexicographic_order() {
        let g = path3();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(
            g.incidence_matrix(),
            DMatrix::from_row_slice(2, 3, &[1, -1, 0, 0, 1, -1])
        );
        assert_eq!(g.neighbors(1), &[(0, 0), (2, 1)]);
    }

    #[test]
    fn directed_incidence_pairs_rows() {
        let d = path3().directed_incidence_matrix();
        assert_eq!(d.nrows(), 4);
        assert_eq!(d.row(1).iter().copied().collect::<Vec<_>>(), vec![-1, 1, 0]);
        assert_eq!(d.row(2).iter().copied().collect::<Vec<_>>(), vec![0, 1, -1]);
    }

    #[test]
    fn probability_one_always_active() {
        let g = path3();
        let a = ActivationModel::uniform(&g, 1.0, 3).unwrap();
        for t in 0..50 {
            assert_eq!(a.sample_round(&g, t).active_edges, vec![0, 1]);
        }
    }

    #[test]
    fn draws_are_pure_in_seed_edge_and_round() {
        let g = path3();
        let a = ActivationModel::uniform(&g, 0.5, 9).unwrap();
        let b = ActivationModel::uniform(&g, 0.5, 9).unwrap();
        let late = a.sample_round(&g, 7);
        for t in 0..7 {
            a.sample_round(&g, t);
        }
        assert_eq!(late, b.sample_round(&g, 7));
        assert_eq!(a.draw(1, 1000), b.draw(1, 1000));
        assert_ne!(a.draw(0, 5), a.draw(1, 5));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let g = path3();
        assert!(matches!(
            ActivationModel::new(&g, vec![0.5, 0.0], 0),
            Err(GraphError::InvalidProbability { edge: 1, .. })
        ));
        assert!(matches!(
            ActivationModel::new(&g, vec![0.5], 0),
            Err(GraphError::ProbabilityCount { .. })
        ));
    }

    #[test]
    fn json_is_one_based_and_round_trips() {
        let text = r#"{"n": 3, "edges": [[2, 3, 0.4], [1, 2, 0.9]], "seed": 5}"#;
        let p: EdgeProcess = serde_json::from_str(text).unwrap();
        assert_eq!(p.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(p.activation.probabilities(), &[0.9, 0.4]);
        let back: EdgeProcess = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back.graph, p.graph);
        assert_eq!(back.activation.probabilities(), p.activation.probabilities());
        let bad = r#"{"n": 3, "edges": [[0, 1, 0.5]], "seed": 5}"#;
        assert!(serde_json::from_str::<EdgeProcess>(bad).is_err());
    }
}
