//! Communication graphs and doubly stochastic consensus weights.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on row and column sums of `W`.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected simple graph over agents `0..n`. Edges are stored as `(u, v)`
/// with `u < v`; self-weights live in the consensus matrix, not here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("a graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::Parameter(format!("self-loop at {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::Parameter(format!("edge ({u}, {v}) out of range for N = {n}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == u || b == u).count()
    }

    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        let adj: Vec<Vec<usize>> = (0..self.n).map(|u| self.neighbors(u)).collect();
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Named topologies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    Ring,
    Star,
    ErdosRenyi { p: f64 },
}

const ER_ATTEMPTS: u64 = 100;

/// Builds a named topology; Erdős–Rényi graphs are redrawn (seed + attempt)
/// until connected.
pub fn generate_graph(kind: GraphKind, n: usize, seed: u64) -> Result<CommGraph> {
    if n == 0 {
        return Err(Error::Parameter("N must be at least 1".into()));
    }
    match kind {
        GraphKind::Complete => {
            CommGraph::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
        }
        GraphKind::Ring => CommGraph::new(n, (0..n).filter_map(|u| {
            let v = (u + 1) % n;
            (u != v).then_some((u, v))
        })),
        GraphKind::Star => CommGraph::new(n, (1..n).map(|v| (0, v))),
        GraphKind::ErdosRenyi { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!("edge probability {p} outside [0, 1]")));
            }
            for attempt in 0..ER_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((u, v));
                        }
                    }
                }
                let g = CommGraph::new(n, edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::GenerationCap {
                attempts: ER_ATTEMPTS as usize,
                what: "connected Erdős–Rényi graph".into(),
            })
        }
    }
}

/// First violated clause of the consensus-matrix requirements.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusDefect {
    #[error("shape: W is {rows}x{cols}, graph has {n} agents")]
    Shape { rows: usize, cols: usize, n: usize },
    #[error("negative entry at ({row}, {col})")]
    Negative { row: usize, col: usize },
    #[error("row sums: row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("column sums: column {col} sums to {sum}")]
    ColumnSum { col: usize, sum: f64 },
    #[error("diagonal: W[{node}][{node}] is not positive")]
    Diagonal { node: usize },
    #[error("sparsity: W[{row}][{col}] does not match the graph")]
    Sparsity { row: usize, col: usize },
}

/// Checks double stochasticity, positive self-weights and that the
/// off-diagonal support equals the edge set.
pub fn validate_consensus(w: &DMatrix<f64>, g: &CommGraph) -> std::result::Result<(), ConsensusDefect> {
    let n = g.num_agents();
    if w.nrows() != n || w.ncols() != n {
        return Err(ConsensusDefect::Shape { rows: w.nrows(), cols: w.ncols(), n });
    }
    for i in 0..n {
        for j in 0..n {
            if !(w[(i, j)] >= 0.0) {
                return Err(ConsensusDefect::Negative { row: i, col: j });
            }
        }
    }
    for i in 0..n {
        let sum: f64 = w.row(i).iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ConsensusDefect::RowSum { row: i, sum });
        }
    }
    for j in 0..n {
        let sum: f64 = w.column(j).iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ConsensusDefect::ColumnSum { col: j, sum });
        }
    }
    for u in 0..n {
        if !(w[(u, u)] > 0.0) {
            return Err(ConsensusDefect::Diagonal { node: u });
        }
    }
    for u in 0..n {
        for v in 0..n {
            if u != v && (w[(u, v)] > 0.0) != g.has_edge(u, v) {
                return Err(ConsensusDefect::Sparsity { row: u, col: v });
            }
        }
    }
    Ok(())
}

/// A validated consensus matrix together with its second singular value and
/// a sparse row view used by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    w: DMatrix<f64>,
    sigma2: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ConsensusMatrix {
    /// Validates `w` against `g` and computes `σ₂`.
    pub fn new(w: DMatrix<f64>, g: &CommGraph) -> Result<Self> {
        validate_consensus(&w, g)?;
        let sv = linalg::singular_values_desc(&w);
        let sigma2 = sv.get(1).copied().unwrap_or(0.0);
        if sigma2 >= 1.0 - 1e-12 {
            return Err(Error::Parameter(format!("second singular value {sigma2} is not below 1")));
        }
        let n = w.nrows();
        let rows = (0..n)
            .map(|u| (0..n).filter(|&v| w[(u, v)] != 0.0).map(|v| (v, w[(u, v)])).collect())
            .collect();
        Ok(Self { w, sigma2, rows })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Second largest singular value; 0 for a single agent.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn num_agents(&self) -> usize {
        self.w.nrows()
    }

    /// Nonzero entries `(u, W[v][u])` of row `v`, in column order.
    pub fn row_entries(&self, v: usize) -> &[(usize, f64)] {
        &self.rows[v]
    }
}

/// Metropolis–Hastings weights: `W[u][v] = 1/(1 + max(deg u, deg v))` on
/// edges, remaining mass on the diagonal.
pub fn metropolis_weights(g: &CommGraph) -> Result<ConsensusMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.num_agents();
    let deg: Vec<usize> = (0..n).map(|u| g.degree(u)).collect();
    let mut w = DMatrix::zeros(n, n);
    for &(u, v) in g.edges() {
        let x = 1.0 / (1.0 + deg[u].max(deg[v]) as f64);
        w[(u, v)] = x;
        w[(v, u)] = x;
    }
    for u in 0..n {
        let off: f64 = (0..n).filter(|&v| v != u).map(|v| w[(u, v)]).sum();
        w[(u, u)] = 1.0 - off;
    }
    ConsensusMatrix::new(w, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent() {
        let g = generate_graph(GraphKind::Complete, 1, 0).unwrap();
        let cm = metropolis_weights(&g).unwrap();
        assert_eq!(cm.matrix(), &DMatrix::from_element(1, 1, 1.0));
        assert_eq!(cm.sigma2(), 0.0);
    }

    #[test]
    fn two_agents_complete() {
        let g = generate_graph(GraphKind::Complete, 2, 0).unwrap();
        let cm = metropolis_weights(&g).unwrap();
        assert_eq!(cm.matrix(), &DMatrix::from_element(2, 2, 0.5));
        // [[½,½],[½,½]] = ½·11ᵀ has singular values 1 and 0.
        assert!(cm.sigma2().abs() < 1e-15);
    }

    #[test]
    fn ring_of_four() {
        let g = generate_graph(GraphKind::Ring, 4, 0).unwrap();
        assert_eq!(g.edges().len(), 4);
        assert!((0..4).all(|u| g.degree(u) == 2));
        let cm = metropolis_weights(&g).unwrap();
        for u in 0..4 {
            assert!((cm.matrix()[(u, u)] - 1.0 / 3.0).abs() < 1e-15);
            assert!((cm.matrix()[(u, (u + 1) % 4)] - 1.0 / 3.0).abs() < 1e-15);
        }
        // Circulant with first row (1/3, 1/3, 0, 1/3): eigenvalues
        // 1/3 + (2/3)cos(2πk/4) = 1, 1/3, -1/3, 1/3. Symmetric, so σ₂ = 1/3.
        assert!((cm.sigma2() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn complete_of_three_has_three_edges() {
        assert_eq!(generate_graph(GraphKind::Complete, 3, 0).unwrap().edges().len(), 3);
    }

    #[test]
    fn erdos_renyi_is_connected_and_reproducible() {
        let a = generate_graph(GraphKind::ErdosRenyi { p: 0.5 }, 8, 42).unwrap();
        let b = generate_graph(GraphKind::ErdosRenyi { p: 0.5 }, 8, 42).unwrap();
        assert!(a.is_connected());
        assert_eq!(a, b);
        assert!(metropolis_weights(&a).is_ok());
    }

    #[test]
    fn erdos_renyi_with_zero_probability_hits_cap() {
        assert!(matches!(
            generate_graph(GraphKind::ErdosRenyi { p: 0.0 }, 3, 1),
            Err(Error::GenerationCap { .. })
        ));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let g = CommGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(metropolis_weights(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn row_stochastic_only_fails_column_sums() {
        let g = generate_graph(GraphKind::Complete, 2, 0).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let err = validate_consensus(&w, &g).unwrap_err();
        assert!(matches!(err, ConsensusDefect::ColumnSum { .. }));
        assert!(err.to_string().contains("column sums"));
    }

    #[test]
    fn weight_on_non_edge_fails_sparsity() {
        let g = generate_graph(GraphKind::Ring, 4, 0).unwrap();
        let mut w = metropolis_weights(&g).unwrap().matrix().clone();
        // Move mass onto the non-edge (0, 2) while keeping sums at 1.
        w[(0, 2)] += 0.1;
        w[(2, 0)] += 0.1;
        w[(0, 0)] -= 0.1;
        w[(2, 2)] -= 0.1;
        let err = validate_consensus(&w, &g).unwrap_err();
        assert!(matches!(err, ConsensusDefect::Sparsity { row: 0, col: 2 }));
        assert!(err.to_string().contains("sparsity"));
    }
}
