//! Port-numbered graphs.
//!
//! Nodes carry dense indices that only the simulator sees. Agents observe a
//! node's degree and the local port labels `0..deg` of its incident edges.
//! The two endpoints of an edge may label it differently.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::Port;

/// Dense node index in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge endpoint {node} out of range for n = {n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("port {port} used twice at node {node}")]
    PortClash { node: usize, port: usize },
    #[error("ports at node {node} are not contiguous from 0 (degree {degree})")]
    PortGap { node: usize, degree: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("invalid port {port} at node {node} (degree {degree})")]
    InvalidPort {
        node: usize,
        port: i32,
        degree: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no connected sample after {0} attempts")]
    ConnectivityFailure(u32),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GraphError {
    fn from(e: std::io::Error) -> Self {
        GraphError::Io(e.to_string())
    }
}

/// One endpoint of an edge as seen from the node that owns the port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HalfEdge {
    to: NodeId,
    back: u32,
}

/// One undirected edge with both port labels: `(u, p_u, v, p_v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PortEdge {
    pub u: usize,
    pub port_u: usize,
    pub v: usize,
    pub port_v: usize,
}

impl PortEdge {
    pub fn new(u: usize, port_u: usize, v: usize, port_v: usize) -> Self {
        PortEdge {
            u,
            port_u,
            v,
            port_v,
        }
    }
}

/// Simple connected undirected graph with local port labels.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortGraph {
    adj: Vec<Vec<HalfEdge>>,
    edges: usize,
}

impl PortGraph {
    /// Builds a graph from port-labelled edges, validating the port structure.
    pub fn from_edge_list(n: usize, edges: &[PortEdge]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut slots: Vec<Vec<Option<HalfEdge>>> = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for e in edges {
            for node in [e.u, e.v] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if e.u == e.v {
                return Err(GraphError::SelfLoop(e.u));
            }
            for (node, port, other, other_port) in [
                (e.u, e.port_u, e.v, e.port_v),
                (e.v, e.port_v, e.u, e.port_u),
            ] {
                let row = &mut slots[node];
                if row.len() <= port {
                    row.resize(port + 1, None);
                }
                if row[port].is_some() {
                    return Err(GraphError::PortClash { node, port });
                }
                row[port] = Some(HalfEdge {
                    to: NodeId(other),
                    back: other_port as u32,
                });
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
        }
        let mut adj = Vec::with_capacity(n);
        for (node, row) in slots.into_iter().enumerate() {
            let degree = row.len();
            let row: Option<Vec<HalfEdge>> = row.into_iter().collect();
            match row {
                Some(r) => adj.push(r),
                None => return Err(GraphError::PortGap { node, degree }),
            }
        }
        let g = PortGraph {
            adj,
            edges: edges.len(),
        };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v.0].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adj.len()).map(NodeId)
    }

    /// Where an agent leaving `v` via `port` arrives, and the port it arrives
    /// through (the `pin` it will observe).
    pub fn neighbor_via(&self, v: NodeId, port: Port) -> Result<(NodeId, Port), GraphError> {
        let row = &self.adj[v.0];
        match port.index() {
            Some(p) if p < row.len() => {
                let h = row[p];
                Ok((h.to, Port::new(h.back as i32)))
            }
            _ => Err(GraphError::InvalidPort {
                node: v.0,
                port: port.get(),
                degree: row.len(),
            }),
        }
    }

    /// Canonical edge list: each edge once, written from its smaller endpoint,
    /// ordered by (smaller endpoint, port at that endpoint).
    pub fn edges(&self) -> Vec<PortEdge> {
        let mut out = Vec::with_capacity(self.edges);
        for (u, row) in self.adj.iter().enumerate() {
            for (p, h) in row.iter().enumerate() {
                if u < h.to.0 {
                    out.push(PortEdge::new(u, p, h.to.0, h.back as usize));
                }
            }
        }
        out
    }

    /// `min(m, floor(k * Δ / 2), k(k-1)/2)`: the number of distinct edges a
    /// truncated DFS with `k` agents can traverse.
    pub fn m_prime(&self, k: usize) -> usize {
        let m = self.edges;
        let by_degree = k * self.max_degree() / 2;
        let by_pairs = k * k.saturating_sub(1) / 2;
        m.min(by_degree).min(by_pairs)
    }

    fn is_connected(&self) -> bool {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for h in &self.adj[v] {
                if !seen[h.to.0] {
                    seen[h.to.0] = true;
                    count += 1;
                    queue.push_back(h.to.0);
                }
            }
        }
        count == n
    }

    /// Writes the line-oriented text format: `n m`, then `u p_u v p_v` per edge.
    pub fn save<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "{} {}", self.node_count(), self.edges)?;
        for e in self.edges() {
            writeln!(sink, "{} {} {} {}", e.u, e.port_u, e.v, e.port_v)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self, GraphError> {
        let mut lines = source
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (line, header) = match lines.next() {
            Some((i, l)) => (i, l?),
            None => {
                return Err(GraphError::Parse {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        };
        let head = parse_fields::<2>(&header, line)?;
        let (n, m) = (head[0], head[1]);
        let mut edges = Vec::with_capacity(m);
        for (i, l) in lines {
            let l = l?;
            if edges.len() == m {
                return Err(GraphError::Parse {
                    line: i,
                    msg: format!("more than the {m} declared edges"),
                });
            }
            let f = parse_fields::<4>(&l, i)?;
            edges.push(PortEdge::new(f[0], f[1], f[2], f[3]));
        }
        if edges.len() != m {
            return Err(GraphError::Parse {
                line: line + edges.len(),
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        PortGraph::from_edge_list(n, &edges)
    }
}

fn parse_fields<const N: usize>(s: &str, line: usize) -> Result<[usize; N], GraphError> {
    let mut out = [0usize; N];
    let mut it = s.split_whitespace();
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| GraphError::Parse {
            line,
            msg: format!("expected {N} fields"),
        })?;
        *slot = tok.parse().map_err(|_| GraphError::Parse {
            line,
            msg: format!("not a non-negative integer: {tok:?}"),
        })?;
    }
    if it.next().is_some() {
        return Err(GraphError::Parse {
            line,
            msg: format!("expected {N} fields"),
        });
    }
    Ok(out)
}

/// Graph family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Path {
        n: usize,
    },
    Ring {
        n: usize,
    },
    /// Random attachment tree: node `i > 0` attaches to a uniform node `< i`.
    Tree {
        n: usize,
    },
    /// 4-neighbour lattice on `n` nodes laid out row-major with width
    /// `ceil(sqrt(n))`; the last row may be partial.
    Grid {
        n: usize,
    },
    ErdosRenyi {
        n: usize,
        p: f64,
    },
    Complete {
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Path { .. } => "path",
            Family::Ring { .. } => "ring",
            Family::Tree { .. } => "tree",
            Family::Grid { .. } => "grid",
            Family::ErdosRenyi { .. } => "erdos-renyi",
            Family::Complete { .. } => "complete",
            Family::File { .. } => "file",
        }
    }
}

/// A reproducible graph instance: family parameters plus the seed that
/// drives both topology and port labelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
}

/// Rejection budget for connected Erdős–Rényi samples.
pub const ER_RETRIES: u32 = 1000;

impl GraphSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        GraphSpec { family, seed }
    }

    /// Builds the graph. Ports at each node are a uniformly random
    /// permutation drawn from the seed.
    pub fn generate(&self) -> Result<PortGraph, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (n, pairs) = match self.family {
            Family::Path { n } => {
                check_n(n, 1)?;
                (n, (1..n).map(|i| (i - 1, i)).collect())
            }
            Family::Ring { n } => {
                check_n(n, 3)?;
                let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                e.push((0, n - 1));
                (n, e)
            }
            Family::Tree { n } => {
                check_n(n, 1)?;
                (n, (1..n).map(|i| (rng.gen_range(0..i), i)).collect())
            }
            Family::Grid { n } => {
                check_n(n, 1)?;
                let w = (n as f64).sqrt().ceil() as usize;
                let mut e = Vec::new();
                for i in 0..n {
                    if (i + 1) % w != 0 && i + 1 < n {
                        e.push((i, i + 1));
                    }
                    if i + w < n {
                        e.push((i, i + w));
                    }
                }
                (n, e)
            }
            Family::Complete { n } => {
                check_n(n, 1)?;
                let mut e = Vec::with_capacity(n * (n - 1) / 2);
                for u in 0..n {
                    for v in u + 1..n {
                        e.push((u, v));
                    }
                }
                (n, e)
            }
            Family::ErdosRenyi { n, p } => {
                check_n(n, 1)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(GraphError::InvalidParams(format!("p = {p} not in [0, 1]")));
                }
                (n, sample_connected_gnp(n, p, &mut rng)?)
            }
            Family::File { ref path } => {
                let f = std::fs::File::open(path)?;
                return PortGraph::load(std::io::BufReader::new(f));
            }
        };
        let edges = assign_ports(n, &pairs, &mut rng);
        PortGraph::from_edge_list(n, &edges)
    }
}

fn check_n(n: usize, min: usize) -> Result<(), GraphError> {
    if n < min {
        Err(GraphError::InvalidParams(format!(
            "n = {n}, need at least {min}"
        )))
    } else {
        Ok(())
    }
}

fn sample_connected_gnp(
    n: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>, GraphError> {
    for _ in 0..ER_RETRIES {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    e.push((u, v));
                }
            }
        }
        if pairs_connected(n, &e) {
            return Ok(e);
        }
    }
    Err(GraphError::ConnectivityFailure(ER_RETRIES))
}

fn pairs_connected(n: usize, pairs: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Labels each node's incident edges with a random permutation of `0..deg`.
fn assign_ports(n: usize, pairs: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<PortEdge> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &(u, v)) in pairs.iter().enumerate() {
        incident[u].push(i);
        incident[v].push(i);
    }
    let mut port_u = vec![0; pairs.len()];
    let mut port_v = vec![0; pairs.len()];
    for (node, list) in incident.iter_mut().enumerate() {
        list.shuffle(rng);
        for (port, &i) in list.iter().enumerate() {
            if pairs[i].0 == node {
                port_u[i] = port;
            } else {
                port_v[i] = port;
            }
        }
    }
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| PortEdge::new(u, port_u[i], v, port_v[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> PortGraph {
        PortGraph::from_edge_list(3, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(1, 1, 2, 0)])
            .unwrap()
    }

    #[test]
    fn smallest_graph() {
        let g = PortGraph::from_edge_list(2, &[PortEdge::new(0, 0, 1, 0)]).unwrap();
        assert_eq!(g.degree(NodeId(0)), 1);
        assert_eq!(g.degree(NodeId(1)), 1);
        assert_eq!(
            g.neighbor_via(NodeId(0), Port::new(0)).unwrap(),
            (NodeId(1), Port::new(0))
        );
    }

    #[test]
    fn port_clash_is_rejected() {
        let err =
            PortGraph::from_edge_list(2, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(0, 0, 1, 1)])
                .unwrap_err();
        assert_eq!(err, GraphError::PortClash { node: 0, port: 0 });
        let err =
            PortGraph::from_edge_list(3, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(0, 0, 2, 0)])
                .unwrap_err();
        assert_eq!(err, GraphError::PortClash { node: 0, port: 0 });
    }

    #[test]
    fn path_three_ports() {
        let g = p3();
        assert_eq!(
            g.neighbor_via(NodeId(1), Port::new(0)).unwrap(),
            (NodeId(0), Port::new(0))
        );
        assert_eq!(
            g.neighbor_via(NodeId(1), Port::new(1)).unwrap(),
            (NodeId(2), Port::new(0))
        );
    }

    #[test]
    fn structural_errors() {
        assert_eq!(
            PortGraph::from_edge_list(2, &[PortEdge::new(0, 1, 1, 0)]).unwrap_err(),
            GraphError::PortGap { node: 0, degree: 2 }
        );
        assert_eq!(
            PortGraph::from_edge_list(2, &[PortEdge::new(1, 0, 1, 1)]).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert_eq!(
            PortGraph::from_edge_list(2, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(1, 1, 0, 1)])
                .unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert_eq!(
            PortGraph::from_edge_list(4, &[PortEdge::new(0, 0, 1, 0), PortEdge::new(2, 0, 3, 0)])
                .unwrap_err(),
            GraphError::Disconnected
        );
        assert_eq!(
            PortGraph::from_edge_list(2, &[PortEdge::new(0, 0, 5, 0)]).unwrap_err(),
            GraphError::NodeOutOfRange { node: 5, n: 2 }
        );
    }

    #[test]
    fn invalid_port_lookup() {
        let g = p3();
        assert!(matches!(
            g.neighbor_via(NodeId(0), Port::new(1)),
            Err(GraphError::InvalidPort {
                node: 0,
                port: 1,
                degree: 1
            })
        ));
        assert!(g.neighbor_via(NodeId(0), Port::NONE).is_err());
    }

    #[test]
    fn generated_families() {
        let path = GraphSpec::new(Family::Path { n: 5 }, 1).generate().unwrap();
        assert_eq!((path.edge_count(), path.max_degree()), (4, 2));
        let k4 = GraphSpec::new(Family::Complete { n: 4 }, 7)
            .generate()
            .unwrap();
        assert_eq!((k4.edge_count(), k4.max_degree()), (6, 3));
        let tri = GraphSpec::new(Family::Ring { n: 3 }, 0).generate().unwrap();
        let mut pairs: Vec<_> = tri.edges().iter().map(|e| (e.u, e.v)).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn grid_is_lattice() {
        let g = GraphSpec::new(Family::Grid { n: 9 }, 3).generate().unwrap();
        assert_eq!(g.edge_count(), 12);
        assert_eq!(g.max_degree(), 4);
        let partial = GraphSpec::new(Family::Grid { n: 7 }, 3).generate().unwrap();
        // 3 columns: rows {0,1,2},{3,4,5},{6}: 2+2 horizontal, 3+1 vertical
        assert_eq!(partial.edge_count(), 8);
    }

    #[test]
    fn family_params_validated() {
        assert!(matches!(
            GraphSpec::new(Family::Ring { n: 2 }, 0).generate(),
            Err(GraphError::InvalidParams(_))
        ));
        assert!(matches!(
            GraphSpec::new(Family::ErdosRenyi { n: 5, p: 1.5 }, 0).generate(),
            Err(GraphError::InvalidParams(_))
        ));
        assert_eq!(
            GraphSpec::new(Family::ErdosRenyi { n: 30, p: 0.0 }, 0)
                .generate()
                .unwrap_err(),
            GraphError::ConnectivityFailure(ER_RETRIES)
        );
    }

    #[test]
    fn m_prime_formula() {
        let k4 = GraphSpec::new(Family::Complete { n: 4 }, 7)
            .generate()
            .unwrap();
        assert_eq!(k4.m_prime(2), 1);
        let p5 = GraphSpec::new(Family::Path { n: 5 }, 1).generate().unwrap();
        assert_eq!(p5.m_prime(5), 4);
        let ring = GraphSpec::new(Family::Ring { n: 10 }, 0)
            .generate()
            .unwrap();
        assert_eq!(ring.m_prime(4), 4);
        assert_eq!(ring.m_prime(1), 0);
    }

    #[test]
    fn save_load_examples() {
        let g = p3();
        let mut buf = Vec::new();
        g.save(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "3 2\n0 0 1 0\n1 1 2 0\n"
        );
        let back = PortGraph::load(&buf[..]).unwrap();
        assert_eq!(back, g);
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(again, buf);

        let p2 = PortGraph::load("2 1\n0 0 1 0\n".as_bytes()).unwrap();
        assert_eq!(p2.node_count(), 2);
        assert_eq!(p2.edge_count(), 1);

        assert!(matches!(
            PortGraph::load("3 2\n0 0 1 0\n".as_bytes()),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            PortGraph::load("2 1\n0 0 1 0\n0 1 1 1\n".as_bytes()),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            PortGraph::load("2 1\n0 0 x 0\n".as_bytes()),
            Err(GraphError::Parse { .. })
        ));
    }
}
