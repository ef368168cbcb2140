//! Mixed causal graphs in the signed-adjacency convention.
//!
//! `m[i][j] = -1, m[j][i] = 1` encodes the directed edge `i -> j`;
//! `m[i][j] = m[j][i] = 1` encodes the undirected edge `i -- j`; both zero
//! means no edge. Any other pair is rejected.
//!
//! Vertices are addressed by index internally. The index order of the
//! matrix is the canonical order used for every report and tie-break.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vertex = usize;

/// Exhaustive routines (path enumeration, subset search) refuse graphs larger than this.
pub const DEFAULT_MAX_EXHAUSTIVE_NODES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    Statistical,
    Provider,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeta {
    pub source: EdgeSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Confidence of a belief that contradicts a statistically forced orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contested: Option<f64>,
}

impl EdgeMeta {
    pub fn statistical() -> Self {
        EdgeMeta {
            source: EdgeSource::Statistical,
            confidence: None,
            contested: None,
        }
    }

    pub fn oriented(source: EdgeSource, confidence: f64) -> Self {
        EdgeMeta {
            source,
            confidence: Some(confidence),
            contested: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: Vertex,
    pub to: Vertex,
    pub directed: bool,
}

impl Edge {
    pub fn directed(from: Vertex, to: Vertex) -> Self {
        Edge {
            from,
            to,
            directed: true,
        }
    }

    pub fn undirected(a: Vertex, b: Vertex) -> Self {
        Edge {
            from: a.min(b),
            to: a.max(b),
            directed: false,
        }
    }

    pub fn reversed(&self) -> Self {
        Edge {
            from: self.to,
            to: self.from,
            directed: self.directed,
        }
    }

    /// Key under which edge metadata is stored.
    fn key(&self) -> (Vertex, Vertex) {
        if self.directed {
            (self.from, self.to)
        } else {
            (self.from.min(self.to), self.from.max(self.to))
        }
    }
}

pub type SignedMatrix = Vec<Vec<i32>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct CausalGraph {
    names: Vec<String>,
    adj: Vec<i8>,
    meta: BTreeMap<(Vertex, Vertex), EdgeMeta>,
}

/// Wire form: `{"nodes": [...], "matrix": [[...]], "edge_meta": {"i->j": {...}}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    pub matrix: SignedMatrix,
    #[serde(default)]
    pub edge_meta: BTreeMap<String, EdgeMeta>,
}

impl TryFrom<GraphJson> for CausalGraph {
    type Error = Error;

    fn try_from(json: GraphJson) -> Result<Self> {
        let mut g = CausalGraph::from_signed_matrix(&json.matrix, &json.nodes)?;
        for (key, meta) in json.edge_meta {
            let (a, b) = key
                .split_once("->")
                .ok_or_else(|| Error::Parse(format!("bad edge_meta key `{key}`")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad edge_meta key `{key}`")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            let edge = g
                .edge_between(a, b)
                .ok_or_else(|| Error::EdgeNotFound(format!("edge_meta key `{key}`")))?;
            if edge.directed && (edge.from, edge.to) != (a, b) {
                return Err(Error::EdgeNotFound(format!("edge_meta key `{key}`")));
            }
            g.meta.insert(edge.key(), meta);
        }
        Ok(g)
    }
}

impl From<CausalGraph> for GraphJson {
    fn from(g: CausalGraph) -> Self {
        let edge_meta = g
            .meta
            .iter()
            .map(|((a, b), m)| (format!("{a}->{b}"), m.clone()))
            .collect();
        GraphJson {
            matrix: g.to_signed_matrix(),
            nodes: g.names,
            edge_meta,
        }
    }
}

impl CausalGraph {
    /// Edgeless graph over the given names.
    pub fn empty(names: &[String]) -> Result<Self> {
        check_names(names)?;
        let n = names.len();
        Ok(CausalGraph {
            names: names.to_vec(),
            adj: vec![0; n * n],
            meta: BTreeMap::new(),
        })
    }

    pub fn from_signed_matrix<S: AsRef<str>>(matrix: &[Vec<i32>], names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let n = matrix.len();
        if names.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: names.len(),
            });
        }
        for row in matrix {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        check_names(&names)?;
        let mut g = CausalGraph::empty(&names)?;
        for i in 0..n {
            if matrix[i][i] != 0 {
                return Err(Error::InvalidEncoding {
                    i,
                    j: i,
                    a: matrix[i][i],
                    b: matrix[i][i],
                });
            }
            for j in (i + 1)..n {
                let (a, b) = (matrix[i][j], matrix[j][i]);
                match (a, b) {
                    (0, 0) => {}
                    (-1, 1) => g.set(i, j, -1, 1),
                    (1, -1) => g.set(i, j, 1, -1),
                    (1, 1) => g.set(i, j, 1, 1),
                    _ => return Err(Error::InvalidEncoding { i, j, a, b }),
                }
            }
        }
        Ok(g)
    }

    pub fn to_signed_matrix(&self) -> SignedMatrix {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.adj[i * n + j] as i32).collect())
            .collect()
    }

    fn set(&mut self, i: Vertex, j: Vertex, ij: i8, ji: i8) {
        let n = self.n();
        self.adj[i * n + j] = ij;
        self.adj[j * n + i] = ji;
    }

    fn cell(&self, i: Vertex, j: Vertex) -> i8 {
        self.adj[i * self.n() + j]
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: Vertex) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Result<Vertex> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVertex(name.to_string()))
    }

    fn check_vertex(&self, v: Vertex) -> Result<()> {
        if v < self.n() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(v.to_string()))
        }
    }

    pub fn has_directed(&self, from: Vertex, to: Vertex) -> bool {
        from != to && self.cell(from, to) == -1 && self.cell(to, from) == 1
    }

    pub fn has_undirected(&self, a: Vertex, b: Vertex) -> bool {
        a != b && self.cell(a, b) == 1 && self.cell(b, a) == 1
    }

    pub fn adjacent(&self, a: Vertex, b: Vertex) -> bool {
        a != b && self.cell(a, b) != 0
    }

    /// The edge joining `a` and `b`, in whichever orientation it has.
    pub fn edge_between(&self, a: Vertex, b: Vertex) -> Option<Edge> {
        if a >= self.n() || b >= self.n() {
            return None;
        }
        if self.has_directed(a, b) {
            Some(Edge::directed(a, b))
        } else if self.has_directed(b, a) {
            Some(Edge::directed(b, a))
        } else if self.has_undirected(a, b) {
            Some(Edge::undirected(a, b))
        } else {
            None
        }
    }

    pub fn contains(&self, e: &Edge) -> bool {
        if e.directed {
            e.from < self.n() && e.to < self.n() && self.has_directed(e.from, e.to)
        } else {
            e.from < self.n() && e.to < self.n() && self.has_undirected(e.from, e.to)
        }
    }

    /// All edges, in row-major order of their canonical endpoint pair.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if let Some(e) = self.edge_between(i, j) {
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn directed_edges(&self) -> Vec<Edge> {
        self.edges().into_iter().filter(|e| e.directed).collect()
    }

    pub fn undirected_edges(&self) -> Vec<Edge> {
        self.edges().into_iter().filter(|e| !e.directed).collect()
    }

    pub fn is_fully_directed(&self) -> bool {
        self.edges().iter().all(|e| e.directed)
    }

    pub fn parents(&self, v: Vertex) -> Vec<Vertex> {
        (0..self.n()).filter(|&u| self.has_directed(u, v)).collect()
    }

    pub fn children(&self, v: Vertex) -> Vec<Vertex> {
        (0..self.n()).filter(|&u| self.has_directed(v, u)).collect()
    }

    /// Vertices joined to `v` by an undirected edge.
    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        (0..self.n()).filter(|&u| self.has_undirected(u, v)).collect()
    }

    /// Every vertex adjacent to `v`, regardless of edge type.
    pub fn adjacencies(&self, v: Vertex) -> Vec<Vertex> {
        (0..self.n()).filter(|&u| self.adjacent(u, v)).collect()
    }

    pub fn set_directed(&mut self, from: Vertex, to: Vertex, meta: Option<EdgeMeta>) {
        self.remove_meta(from, to);
        self.set(from, to, -1, 1);
        if let Some(m) = meta {
            self.meta.insert((from, to), m);
        }
    }

    pub fn set_undirected(&mut self, a: Vertex, b: Vertex) {
        self.remove_meta(a, b);
        self.set(a, b, 1, 1);
    }

    pub fn remove_edge(&mut self, a: Vertex, b: Vertex) {
        self.remove_meta(a, b);
        self.set(a, b, 0, 0);
    }

    fn remove_meta(&mut self, a: Vertex, b: Vertex) {
        self.meta.remove(&(a, b));
        self.meta.remove(&(b, a));
    }

    pub fn meta(&self, e: &Edge) -> Option<&EdgeMeta> {
        self.meta.get(&e.key())
    }

    pub fn set_meta(&mut self, e: &Edge, meta: EdgeMeta) -> Result<()> {
        if !self.contains(e) {
            return Err(Error::EdgeNotFound(self.edge_label(e)));
        }
        self.meta.insert(e.key(), meta);
        Ok(())
    }

    pub fn edge_meta(&self) -> &BTreeMap<(Vertex, Vertex), EdgeMeta> {
        &self.meta
    }

    /// `A->B` for directed edges, `A--B` for undirected ones.
    pub fn edge_label(&self, e: &Edge) -> String {
        let name = |v: Vertex| self.names.get(v).cloned().unwrap_or_else(|| v.to_string());
        if e.directed {
            format!("{}->{}", name(e.from), name(e.to))
        } else {
            format!("{}--{}", name(e.from), name(e.to))
        }
    }

    /// Parses `A->B` (directed) or `A--B` (undirected) and checks the edge exists.
    pub fn parse_edge(&self, label: &str) -> Result<Edge> {
        let (edge, directed) = if let Some((a, b)) = label.split_once("->") {
            ((a, b), true)
        } else if let Some((a, b)) = label.split_once("--") {
            ((a, b), false)
        } else {
            return Err(Error::InvalidInput(format!("bad edge label `{label}`")));
        };
        let a = self.index_of(edge.0.trim())?;
        let b = self.index_of(edge.1.trim())?;
        let e = if directed {
            Edge::directed(a, b)
        } else {
            Edge::undirected(a, b)
        };
        if !self.contains(&e) {
            return Err(Error::EdgeNotFound(label.to_string()));
        }
        Ok(e)
    }

    /// Proper descendants of `v` along directed edges; `v` itself is excluded.
    pub fn descendants(&self, v: Vertex) -> Result<BTreeSet<Vertex>> {
        self.check_vertex(v)?;
        let mut out = self.reach(&[v], |g, u| g.children(u));
        out.remove(&v);
        Ok(out)
    }

    /// Proper ancestors of `v` along directed edges.
    pub fn ancestors(&self, v: Vertex) -> Result<BTreeSet<Vertex>> {
        self.check_vertex(v)?;
        let mut out = self.reach(&[v], |g, u| g.parents(u));
        out.remove(&v);
        Ok(out)
    }

    fn reach(&self, start: &[Vertex], next: impl Fn(&Self, Vertex) -> Vec<Vertex>) -> BTreeSet<Vertex> {
        let mut seen = vec![false; self.n()];
        let mut queue: VecDeque<Vertex> = start.iter().copied().collect();
        let mut out = BTreeSet::new();
        while let Some(u) = queue.pop_front() {
            for w in next(self, u) {
                if !seen[w] {
                    seen[w] = true;
                    out.insert(w);
                    queue.push_back(w);
                }
            }
        }
        out
    }

    /// True when some directed path leads from `from` to `to` (length ≥ 1).
    pub fn has_directed_path(&self, from: Vertex, to: Vertex) -> bool {
        self.reach(&[from], |g, u| g.children(u)).contains(&to)
    }

    /// True iff the directed part has no directed cycle; undirected edges are ignored.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// A topological order of the directed part, smallest index first among ties.
    pub fn topological_order(&self) -> Option<Vec<Vertex>> {
        let n = self.n();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.parents(v).len()).collect();
        let mut ready: BTreeSet<Vertex> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// `Err(GraphNotDag)` unless the graph is fully directed and acyclic.
    pub fn require_dag(&self) -> Result<()> {
        if let Some(e) = self.undirected_edges().first() {
            return Err(Error::GraphNotDag(format!(
                "undirected edge {}",
                self.edge_label(e)
            )));
        }
        if !self.is_acyclic() {
            return Err(Error::GraphNotDag("directed cycle".into()));
        }
        Ok(())
    }

    /// Copy of the graph with the directed edge `e` reversed. Metadata moves
    /// with the edge. The result may contain a cycle; callers decide.
    pub fn flip_edge(&self, e: &Edge) -> Result<CausalGraph> {
        if !e.directed {
            return Err(Error::EdgeNotDirected(self.edge_label(e)));
        }
        if e.from >= self.n() || e.to >= self.n() {
            return Err(Error::EdgeNotFound(self.edge_label(e)));
        }
        if !self.has_directed(e.from, e.to) {
            if self.has_undirected(e.from, e.to) {
                return Err(Error::EdgeNotDirected(self.edge_label(e)));
            }
            return Err(Error::EdgeNotFound(self.edge_label(e)));
        }
        let mut g = self.clone();
        let meta = g.meta.remove(&(e.from, e.to));
        g.set(e.from, e.to, 1, -1);
        if let Some(m) = meta {
            g.meta.insert((e.to, e.from), m);
        }
        Ok(g)
    }

    /// Copy with every directed edge out of `v` removed.
    pub fn without_outgoing(&self, v: Vertex) -> CausalGraph {
        let mut g = self.clone();
        for c in self.children(v) {
            g.remove_edge(v, c);
        }
        g
    }

    /// d-separation of `a` and `b` given `z` (reachability / "Bayes ball").
    pub fn d_separated(&self, a: &[Vertex], b: &[Vertex], z: &[Vertex]) -> Result<bool> {
        self.require_dag()?;
        for v in a.iter().chain(b).chain(z) {
            self.check_vertex(*v)?;
        }
        let sa: BTreeSet<_> = a.iter().copied().collect();
        let sb: BTreeSet<_> = b.iter().copied().collect();
        let sz: BTreeSet<_> = z.iter().copied().collect();
        if !sa.is_disjoint(&sb) || !sa.is_disjoint(&sz) || !sb.is_disjoint(&sz) {
            return Err(Error::VertexOverlap);
        }
        let reachable = self.d_connected_from(&sa, &sz);
        Ok(sb.iter().all(|v| !reachable[*v]))
    }

    /// Marks every vertex d-connected to `sources` given `z`.
    fn d_connected_from(&self, sources: &BTreeSet<Vertex>, z: &BTreeSet<Vertex>) -> Vec<bool> {
        let n = self.n();
        let mut z_or_anc = vec![false; n];
        for &v in z {
            z_or_anc[v] = true;
            for a in self.reach(&[v], |g, u| g.parents(u)) {
                z_or_anc[a] = true;
            }
        }
        // state: (vertex, arrived_from_child)
        let mut visited = vec![[false; 2]; n];
        let mut reachable = vec![false; n];
        let mut queue: VecDeque<(Vertex, bool)> = sources.iter().map(|&s| (s, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            let slot = usize::from(up);
            if visited[v][slot] {
                continue;
            }
            visited[v][slot] = true;
            let in_z = z.contains(&v);
            if !in_z {
                reachable[v] = true;
            }
            if up {
                if !in_z {
                    for p in self.parents(v) {
                        queue.push_back((p, true));
                    }
                    for c in self.children(v) {
                        queue.push_back((c, false));
                    }
                }
            } else {
                if !in_z {
                    for c in self.children(v) {
                        queue.push_back((c, false));
                    }
                }
                if z_or_anc[v] {
                    for p in self.parents(v) {
                        queue.push_back((p, true));
                    }
                }
            }
        }
        reachable
    }

    /// All simple paths from `w` to `y` whose first edge points into `w`.
    pub fn backdoor_paths(&self, w: Vertex, y: Vertex) -> Result<Vec<Vec<Vertex>>> {
        self.require_dag()?;
        self.check_vertex(w)?;
        self.check_vertex(y)?;
        if w == y {
            return Err(Error::VertexOverlap);
        }
        if self.n() > DEFAULT_MAX_EXHAUSTIVE_NODES {
            return Err(Error::GraphTooLarge {
                nodes: self.n(),
                cap: DEFAULT_MAX_EXHAUSTIVE_NODES,
            });
        }
        let mut out = Vec::new();
        let mut on_path = vec![false; self.n()];
        on_path[w] = true;
        for p in self.parents(w) {
            let mut path = vec![w, p];
            on_path[p] = true;
            self.extend_paths(&mut path, &mut on_path, y, &mut out);
            on_path[p] = false;
        }
        Ok(out)
    }

    fn extend_paths(
        &self,
        path: &mut Vec<Vertex>,
        on_path: &mut [bool],
        target: Vertex,
        out: &mut Vec<Vec<Vertex>>,
    ) {
        let last = *path.last().expect("path is never empty");
        if last == target {
            out.push(path.clone());
            return;
        }
        for next in self.adjacencies(last) {
            if !on_path[next] {
                on_path[next] = true;
                path.push(next);
                self.extend_paths(path, on_path, target, out);
                path.pop();
                on_path[next] = false;
            }
        }
    }
}

fn check_names(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Builds a DAG from `(from, to)` name pairs; convenient for fixtures.
pub fn dag_from_edges(names: &[&str], edges: &[(&str, &str)]) -> Result<CausalGraph> {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let mut g = CausalGraph::empty(&names)?;
    for (a, b) in edges {
        let (a, b) = (g.index_of(a)?, g.index_of(b)?);
        g.set_directed(a, b, None);
    }
    Ok(g)
}
