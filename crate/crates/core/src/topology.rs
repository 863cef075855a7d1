//! Communication graphs, gossip matrices and their spectra.
//!
//! A [`GossipMatrix`] is a symmetric doubly-stochastic matrix supported on a
//! connected graph. Its second largest eigenvalue in magnitude, `sigma2`,
//! controls how fast repeated neighbour averaging reaches consensus: the
//! disagreement of `P^t a` shrinks at least as fast as `sigma2^t`.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const RANDOM_REGULAR_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Cycle,
    Grid2d,
    Star,
    RandomRegular,
    CustomEdgeList,
}

impl TopologyKind {
    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Complete => "complete",
            TopologyKind::Cycle => "cycle",
            TopologyKind::Grid2d => "grid2d",
            TopologyKind::Star => "star",
            TopologyKind::RandomRegular => "random_regular",
            TopologyKind::CustomEdgeList => "custom_edge_list",
        }
    }
}

/// Description of a communication graph prior to construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Complete {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    Grid2d {
        rows: usize,
        cols: usize,
    },
    Star {
        n: usize,
    },
    RandomRegular {
        n: usize,
        degree: usize,
        seed: u64,
    },
    CustomEdgeList {
        n: usize,
        edges: Vec<(usize, usize)>,
    },
}

impl Topology {
    pub fn kind(&self) -> TopologyKind {
        match self {
            Topology::Complete { .. } => TopologyKind::Complete,
            Topology::Cycle { .. } => TopologyKind::Cycle,
            Topology::Grid2d { .. } => TopologyKind::Grid2d,
            Topology::Star { .. } => TopologyKind::Star,
            Topology::RandomRegular { .. } => TopologyKind::RandomRegular,
            Topology::CustomEdgeList { .. } => TopologyKind::CustomEdgeList,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Topology::Complete { n }
            | Topology::Cycle { n }
            | Topology::Star { n }
            | Topology::RandomRegular { n, .. }
            | Topology::CustomEdgeList { n, .. } => *n,
            Topology::Grid2d { rows, cols } => rows * cols,
        }
    }
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range endpoints. Connectivity is not checked here.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::validation(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::validation(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::validation(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        for nb in &mut neighbours {
            nb.sort_unstable();
        }
        Ok(Graph {
            n,
            edges,
            neighbours,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.neighbours[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbours[v].len()
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbours[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }
}

pub fn build_topology(spec: &Topology) -> Result<Graph> {
    let graph = match *spec {
        Topology::Complete { n } => {
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    edges.push((a, b));
                }
            }
            Graph::from_edges(n, &edges)?
        }
        Topology::Cycle { n } => {
            if n < 3 {
                return Err(Error::validation("cycle needs n >= 3"));
            }
            let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
            Graph::from_edges(n, &edges)?
        }
        Topology::Grid2d { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::validation("grid2d needs positive rows and cols"));
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            Graph::from_edges(rows * cols, &edges)?
        }
        Topology::Star { n } => {
            if n < 2 {
                return Err(Error::validation("star needs n >= 2"));
            }
            let edges: Vec<_> = (1..n).map(|v| (0, v)).collect();
            Graph::from_edges(n, &edges)?
        }
        Topology::RandomRegular { n, degree, seed } => random_regular(n, degree, seed)?,
        Topology::CustomEdgeList { n, ref edges } => Graph::from_edges(n, edges)?,
    };
    if !graph.is_connected() {
        return Err(Error::Construction(format!(
            "{} graph on {} nodes is disconnected",
            spec.kind().name(),
            graph.n()
        )));
    }
    Ok(graph)
}

/// Pairing-model draw with rejection of self-loops, multi-edges and
/// disconnected results.
fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if degree == 0 || degree >= n {
        return Err(Error::validation(format!(
            "random_regular needs 0 < degree < n (degree {degree}, n {n})"
        )));
    }
    if !(degree * n).is_multiple_of(2) {
        return Err(Error::validation("random_regular needs degree * n even"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n)
        .flat_map(|v| std::iter::repeat_n(v, degree))
        .collect();
    'attempt: for _ in 0..RANDOM_REGULAR_RETRIES {
        stubs.shuffle(&mut rng);
        let mut set = BTreeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !set.insert((a, b)) {
                continue 'attempt;
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let graph = Graph::from_edges(n, &edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::Construction(format!(
        "no simple connected {degree}-regular graph on {n} nodes after {RANDOM_REGULAR_RETRIES} draws"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `P_vw = 1 / (2 max(deg v, deg w))` on edges; self-weight at least 1/2.
    #[default]
    MetropolisLazy,
    /// `P_vw = 1 / (max degree + 1)` on edges.
    MaxDegree,
    /// `P = 11^T / n`, only on complete graphs.
    UniformComplete,
    /// Matrix supplied directly rather than derived from a graph.
    Custom,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::MetropolisLazy => "metropolis_lazy",
            WeightScheme::MaxDegree => "max_degree",
            WeightScheme::UniformComplete => "uniform_complete",
            WeightScheme::Custom => "custom",
        }
    }
}

/// Symmetric doubly-stochastic matrix with cached spectrum.
#[derive(Debug, Clone)]
pub struct GossipMatrix {
    entries: DMatrix<f64>,
    scheme: WeightScheme,
    eigenvalues: Vec<f64>,
    sigma2: f64,
    degree: usize,
    /// Nonzero off-diagonal weights of each row, ascending by column.
    rows: Vec<Vec<(usize, f64)>>,
    chebyshev_order: Option<usize>,
    nonnegative: bool,
}

pub fn build_gossip_matrix(graph: &Graph, scheme: WeightScheme) -> Result<GossipMatrix> {
    let n = graph.n();
    let mut p = DMatrix::<f64>::zeros(n, n);
    match scheme {
        WeightScheme::MetropolisLazy | WeightScheme::MaxDegree => {
            let max_deg = (0..n).map(|v| graph.degree(v)).max().unwrap_or(0);
            for &(a, b) in graph.edges() {
                let w = match scheme {
                    WeightScheme::MetropolisLazy => {
                        1.0 / (2.0 * graph.degree(a).max(graph.degree(b)) as f64)
                    }
                    _ => 1.0 / (max_deg as f64 + 1.0),
                };
                p[(a, b)] = w;
                p[(b, a)] = w;
            }
            for v in 0..n {
                let off: f64 = graph.neighbours(v).iter().map(|&w| p[(v, w)]).sum();
                p[(v, v)] = 1.0 - off;
            }
        }
        WeightScheme::UniformComplete => {
            if !graph.is_complete() {
                return Err(Error::validation(
                    "uniform_complete weights require a complete graph",
                ));
            }
            p.fill(1.0 / n as f64);
            // The averaging matrix is a rank-one projector: spectrum {1, 0, ..., 0}.
            let mut eigenvalues = vec![0.0; n];
            eigenvalues[0] = 1.0;
            return Ok(GossipMatrix::assemble(p, scheme, Some(eigenvalues), None));
        }
        WeightScheme::Custom => {
            return Err(Error::validation(
                "custom weights are supplied through GossipMatrix::from_dense",
            ));
        }
    }
    Ok(GossipMatrix::assemble(p, scheme, None, None))
}

impl GossipMatrix {
    /// Wraps an explicit matrix after checking symmetry, row sums and
    /// nonnegativity.
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::validation(
                "gossip matrix must be square and non-empty",
            ));
        }
        for v in 0..n {
            for w in 0..n {
                if entries[(v, w)] != entries[(w, v)] {
                    return Err(Error::validation(format!(
                        "gossip matrix not symmetric at ({v}, {w})"
                    )));
                }
                if !(entries[(v, w)] >= 0.0) {
                    return Err(Error::validation(format!(
                        "gossip matrix entry ({v}, {w}) is negative or NaN"
                    )));
                }
            }
            let sum: f64 = entries.row(v).iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!("row {v} sums to {sum}, not 1")));
            }
        }
        Ok(Self::assemble(entries, WeightScheme::Custom, None, None))
    }

    fn assemble(
        entries: DMatrix<f64>,
        scheme: WeightScheme,
        eigenvalues: Option<Vec<f64>>,
        chebyshev_order: Option<usize>,
    ) -> Self {
        let n = entries.nrows();
        let eigenvalues = eigenvalues.unwrap_or_else(|| symmetric_eigenvalues(&entries));
        let sigma2 = if n == 1 {
            0.0
        } else {
            eigenvalues[1].abs().max(eigenvalues[n - 1].abs())
        };
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|v| {
                (0..n)
                    .filter(|&w| entries[(v, w)] != 0.0)
                    .map(|w| (w, entries[(v, w)]))
                    .collect()
            })
            .collect();
        let degree = rows.iter().map(Vec::len).max().unwrap_or(0);
        let nonnegative = entries.iter().all(|&x| x >= 0.0);
        GossipMatrix {
            entries,
            scheme,
            eigenvalues,
            sigma2,
            degree,
            rows,
            chebyshev_order,
            nonnegative,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, v: usize, w: usize) -> f64 {
        self.entries[(v, w)]
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Second largest eigenvalue in magnitude, `max(|l_2|, |l_n|)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Largest number of nonzero entries in a row, self-weight included.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Nonzero entries of row `v` as `(column, weight)`, ascending by column.
    pub fn row_support(&self, v: usize) -> &[(usize, f64)] {
        &self.rows[v]
    }

    pub fn chebyshev_order(&self) -> Option<usize> {
        self.chebyshev_order
    }

    /// False when acceleration produced negative weights.
    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    /// `P a`, summing each row in ascending column order.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(w, p)| p * a[w]).sum())
            .collect()
    }

    /// Writes `n` on the first line and then one comma-separated row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.n())?;
        for v in 0..self.n() {
            let row: Vec<String> = self.entries.row(v).iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// `1 - sigma2`.
pub fn spectral_gap(p: &GossipMatrix) -> f64 {
    1.0 - p.sigma2()
}

/// Chebyshev acceleration of `p` with a degree-`k` polynomial.
///
/// Uses `T_k(P / sigma2) / T_k(1 / sigma2)`, the minimax polynomial on
/// `[-sigma2, sigma2]` normalised to take the value 1 at 1. Every non-unit
/// eigenvalue is mapped into `[-1/T_k(1/sigma2), 1/T_k(1/sigma2)]`. The result
/// is symmetric with unit row sums but may contain negative weights and has
/// support on `k`-hop neighbourhoods.
pub fn chebyshev_accelerate(p: &GossipMatrix, k: usize) -> Result<GossipMatrix> {
    if k == 0 {
        return Err(Error::validation("chebyshev order must be at least 1"));
    }
    let sigma2 = p.sigma2();
    if sigma2 >= 1.0 {
        return Err(Error::validation("chebyshev acceleration needs sigma2 < 1"));
    }
    if k == 1 || sigma2 == 0.0 {
        let mut out = p.clone();
        out.chebyshev_order = Some(k);
        return Ok(out);
    }
    let n = p.n();
    let x = p.entries() / sigma2;
    let mut prev = DMatrix::<f64>::identity(n, n);
    let mut curr = x.clone();
    let (mut s_prev, mut s_curr) = (1.0, 1.0 / sigma2);
    for _ in 1..k {
        let next = &x * &curr * 2.0 - &prev;
        let s_next = 2.0 * s_curr / sigma2 - s_prev;
        prev = std::mem::replace(&mut curr, next);
        s_prev = std::mem::replace(&mut s_curr, s_next);
    }
    let mut out = curr / s_curr;
    // Matrix products drift from exact symmetry by rounding; restore it.
    for v in 0..n {
        for w in v + 1..n {
            let avg = 0.5 * (out[(v, w)] + out[(w, v)]);
            out[(v, w)] = avg;
            out[(w, v)] = avg;
        }
    }
    Ok(GossipMatrix::assemble(out, p.scheme(), None, Some(k)))
}

/// Largest Chebyshev value `T_k(x)` for `x >= 1`, via `cosh(k acosh x)`.
pub fn chebyshev_at(k: usize, x: f64) -> f64 {
    (k as f64 * x.acosh()).cosh()
}

/// Copy of a vector with its mean removed.
pub fn centred(a: &DVector<f64>) -> DVector<f64> {
    let mean = a.mean();
    a.map(|x| x - mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn edges(t: &Topology) -> Vec<(usize, usize)> {
        build_topology(t).unwrap().edges().to_vec()
    }

    #[test]
    fn cycle_of_four() {
        assert_eq!(
            edges(&Topology::Cycle { n: 4 }),
            vec![(0, 1), (0, 3), (1, 2), (2, 3)]
        );
    }

    #[test]
    fn complete_on_three_nodes() {
        assert_eq!(
            edges(&Topology::Complete { n: 3 }),
            vec![(0, 1), (0, 2), (1, 2)]
        );
    }

    #[test]
    fn two_by_two_grid_is_four_cycle() {
        // Row-major labels: the cycle is 0-1-3-2-0.
        assert_eq!(
            edges(&Topology::Grid2d { rows: 2, cols: 2 }),
            vec![(0, 1), (0, 2), (1, 3), (2, 3)]
        );
        let g = build_topology(&Topology::Grid2d { rows: 2, cols: 2 }).unwrap();
        assert!((0..4).all(|v| g.degree(v) == 2));
        assert!(g.is_connected());
    }

    #[test]
    fn invalid_topologies_are_rejected() {
        assert!(matches!(
            build_topology(&Topology::Cycle { n: 2 }),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            build_topology(&Topology::RandomRegular {
                n: 5,
                degree: 3,
                seed: 1
            }),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            build_topology(&Topology::RandomRegular {
                n: 4,
                degree: 4,
                seed: 1
            }),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            build_topology(&Topology::CustomEdgeList {
                n: 4,
                edges: vec![(0, 1), (2, 3)]
            }),
            Err(Error::Construction(_))
        ));
        assert!(matches!(
            build_topology(&Topology::CustomEdgeList {
                n: 3,
                edges: vec![(0, 1), (1, 0)]
            }),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn random_regular_is_regular_connected_and_seeded() {
        let spec = Topology::RandomRegular {
            n: 20,
            degree: 3,
            seed: 11,
        };
        let g = build_topology(&spec).unwrap();
        assert!((0..20).all(|v| g.degree(v) == 3));
        assert!(g.is_connected());
        assert_eq!(g, build_topology(&spec).unwrap());
    }

    #[test]
    fn uniform_complete_averages() {
        let g = build_topology(&Topology::Complete { n: 4 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::UniformComplete).unwrap();
        assert!(p.entries().iter().all(|&x| x == 0.25));
        assert_eq!(p.sigma2(), 0.0);
        assert_eq!(spectral_gap(&p), 1.0);
    }

    #[test]
    fn uniform_complete_requires_complete_graph() {
        let g = build_topology(&Topology::Cycle { n: 4 }).unwrap();
        assert!(matches!(
            build_gossip_matrix(&g, WeightScheme::UniformComplete),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn lazy_metropolis_on_four_cycle() {
        let g = build_topology(&Topology::Cycle { n: 4 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::MetropolisLazy).unwrap();
        assert_eq!(p.get(0, 1), 0.25);
        assert_eq!(p.get(0, 3), 0.25);
        assert_eq!(p.get(0, 2), 0.0);
        assert_eq!(p.get(0, 0), 0.5);
        // Circulant spectrum 1/2 + cos(2 pi j / 4) / 2 = {1, 1/2, 1/2, 0}.
        let ev = p.eigenvalues();
        for (got, want) in ev.iter().zip([1.0, 0.5, 0.5, 0.0]) {
            assert_close(*got, want, 1e-12);
        }
        assert_close(p.sigma2(), 0.5, 1e-12);
        assert_close(spectral_gap(&p), 0.5, 1e-12);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn lazy_metropolis_on_single_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::MetropolisLazy).unwrap();
        assert!(p.entries().iter().all(|&x| x == 0.5));
        assert_close(p.sigma2(), 0.0, 1e-15);
    }

    #[test]
    fn max_degree_weights() {
        let g = build_topology(&Topology::Star { n: 5 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::MaxDegree).unwrap();
        assert_eq!(p.get(0, 1), 0.2);
        assert_close(p.get(1, 1), 0.8, 1e-15);
        assert!(p.sigma2() < 1.0);
    }

    #[test]
    fn from_dense_validation() {
        assert!(GossipMatrix::from_dense(DMatrix::identity(3, 3)).is_ok());
        let swap = DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.6, 0.4]);
        assert!(GossipMatrix::from_dense(swap).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.6, 0.5]);
        assert!(GossipMatrix::from_dense(bad).is_err());
    }

    #[test]
    fn chebyshev_order_one_is_identity_map() {
        let g = build_topology(&Topology::Cycle { n: 9 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::MetropolisLazy).unwrap();
        let q = chebyshev_accelerate(&p, 1).unwrap();
        assert_eq!(q.entries(), p.entries());
        assert!(chebyshev_accelerate(&p, 0).is_err());
    }

    #[test]
    fn chebyshev_on_complete_stays_averaging() {
        let g = build_topology(&Topology::Complete { n: 6 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::UniformComplete).unwrap();
        let q = chebyshev_accelerate(&p, 7).unwrap();
        assert_eq!(q.sigma2(), 0.0);
    }

    #[test]
    fn chebyshev_improves_cycle() {
        let g = build_topology(&Topology::Cycle { n: 32 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::MetropolisLazy).unwrap();
        let q = chebyshev_accelerate(&p, 10).unwrap();
        assert!(q.sigma2() < p.sigma2());
        let bound = 1.0 / chebyshev_at(10, 1.0 / p.sigma2());
        assert_close(q.sigma2(), bound, 1e-9);
        for v in 0..32 {
            let s: f64 = q.entries().row(v).iter().sum();
            assert_close(s, 1.0, 1e-10);
            for w in 0..32 {
                assert_eq!(q.get(v, w), q.get(w, v));
            }
        }
        assert_close(q.eigenvalues()[0], 1.0, 1e-10);
    }

    #[test]
    fn matrix_csv_layout() {
        let g = build_topology(&Topology::Complete { n: 2 }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::UniformComplete).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2\n0.5,0.5\n0.5,0.5\n");
    }
}
