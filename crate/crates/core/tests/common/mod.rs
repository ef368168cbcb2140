//! Brute-force oracles shared by the integration tests. Nothing here calls the
//! library's graph algorithms; graphs are plain parent/child lists.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use muas_core::discovery::{CITestResult, CiTest};
use muas_core::CausalGraph;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Dag {
            n,
            edges: edges.into_iter().collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("V{i}")).collect()
    }

    pub fn to_graph(&self) -> CausalGraph {
        let mut m = vec![vec![0; self.n]; self.n];
        for &(a, b) in &self.edges {
            m[a][b] = -1;
            m[b][a] = 1;
        }
        CausalGraph::from_signed_matrix(&m, &self.names()).expect("valid dag")
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == v).map(|e| e.1)
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b)) || self.edges.contains(&(b, a))
    }

    /// Proper descendants by depth-first search.
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }

    pub fn is_acyclic(&self) -> bool {
        (0..self.n).all(|v| !self.descendants(v).contains(&v))
    }

    pub fn flipped(&self, e: (usize, usize)) -> Dag {
        let mut edges = self.edges.clone();
        edges.remove(&e);
        edges.insert((e.1, e.0));
        Dag { n: self.n, edges }
    }

    pub fn without_outgoing(&self, v: usize) -> Dag {
        Dag {
            n: self.n,
            edges: self.edges.iter().copied().filter(|e| e.0 != v).collect(),
        }
    }

    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for c in 0..self.n {
            let parents: Vec<usize> = self.edges.iter().filter(|e| e.1 == c).map(|e| e.0).collect();
            for (i, &a) in parents.iter().enumerate() {
                for &b in &parents[i + 1..] {
                    if !self.adjacent(a, b) {
                        out.insert((a.min(b), c, a.max(b)));
                    }
                }
            }
        }
        out
    }
}

/// Random DAG: a shuffled vertex order, each forward pair joined with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> Dag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((order[i], order[j]));
            }
        }
    }
    Dag::new(n, edges)
}

/// Every labelled DAG on `n` vertices.
pub fn all_dags(n: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match c % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            c /= 3;
        }
        let d = Dag::new(n, edges);
        if d.is_acyclic() {
            out.push(d);
        }
    }
    out
}

fn simple_paths(dag: &Dag, a: usize, b: usize) -> Vec<Vec<usize>> {
    fn walk(dag: &Dag, path: &mut Vec<usize>, b: usize, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == b {
            out.push(path.clone());
            return;
        }
        for v in 0..dag.n {
            if dag.adjacent(last, v) && !path.contains(&v) {
                path.push(v);
                walk(dag, path, b, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(dag, &mut vec![a], b, &mut out);
    out
}

fn path_blocked(dag: &Dag, path: &[usize], z: &BTreeSet<usize>) -> bool {
    for k in 1..path.len() - 1 {
        let (p, m, q) = (path[k - 1], path[k], path[k + 1]);
        let collider = dag.edges.contains(&(p, m)) && dag.edges.contains(&(q, m));
        if collider {
            let open = z.contains(&m) || dag.descendants(m).iter().any(|d| z.contains(d));
            if !open {
                return true;
            }
        } else if z.contains(&m) {
            return true;
        }
    }
    false
}

/// Path-blocking d-separation: every simple path between any `a` and any `b` is blocked.
pub fn dsep_oracle(dag: &Dag, a: &[usize], b: &[usize], z: &[usize]) -> bool {
    let z: BTreeSet<usize> = z.iter().copied().collect();
    a.iter().all(|&x| {
        b.iter()
            .all(|&y| simple_paths(dag, x, y).iter().all(|p| path_blocked(dag, p, &z)))
    })
}

/// Back-door criterion from its definition: no descendant of `w` in `z`, and
/// every path from `w` to `y` that starts with an arrow into `w` is blocked.
pub fn backdoor_oracle(dag: &Dag, w: usize, y: usize, z: &[usize]) -> bool {
    let desc = dag.descendants(w);
    if z.iter().any(|v| desc.contains(v)) {
        return false;
    }
    let zs: BTreeSet<usize> = z.iter().copied().collect();
    simple_paths(dag, w, y)
        .iter()
        .filter(|p| dag.edges.contains(&(p[1], w)))
        .all(|p| path_blocked(dag, p, &zs))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleMuas {
    pub z: Vec<usize>,
    pub cost: f64,
    pub critical: Vec<(usize, usize)>,
    pub tie: bool,
}

/// Exhaustive minimum-uncertainty adjustment set. Candidates are all subsets of
/// the other vertices up to `max_size`; cost is the largest `u` over edges whose
/// reversal (when acyclic) invalidates the candidate.
pub fn muas_oracle(
    dag: &Dag,
    w: usize,
    y: usize,
    u: &BTreeMap<(usize, usize), f64>,
    max_size: usize,
) -> Option<OracleMuas> {
    let others: Vec<usize> = (0..dag.n).filter(|&v| v != w && v != y).collect();
    let mut found: Vec<OracleMuas> = Vec::new();
    for mask in 0u32..(1 << others.len()) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        let z: Vec<usize> = others
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &v)| v)
            .collect();
        if !backdoor_oracle(dag, w, y, &z) {
            continue;
        }
        let mut critical = Vec::new();
        for &e in &dag.edges {
            let f = dag.flipped(e);
            if f.is_acyclic() && !backdoor_oracle(&f, w, y, &z) {
                critical.push(e);
            }
        }
        let cost = critical.iter().map(|e| u.get(e).copied().unwrap_or(0.0)).fold(0.0, f64::max);
        found.push(OracleMuas {
            z,
            cost,
            critical,
            tie: false,
        });
    }
    found.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then(a.z.len().cmp(&b.z.len()))
            .then(a.z.cmp(&b.z))
    });
    let best_cost = found.first()?.cost;
    let tie = found.iter().filter(|c| c.cost == best_cost).count() > 1;
    let mut best = found.swap_remove(0);
    best.tie = tie;
    Some(best)
}

/// CPDAG from the equivalence class: enumerate every orientation of the
/// skeleton, keep the acyclic ones with the same v-structures, and leave an
/// edge undirected when members disagree. Returns the signed adjacency.
pub fn cpdag_oracle(dag: &Dag) -> Vec<Vec<i32>> {
    let skel: Vec<(usize, usize)> = dag.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let vs = dag.v_structures();
    let mut dir: Vec<Option<Option<bool>>> = vec![None; skel.len()];
    for mask in 0u64..(1 << skel.len()) {
        let cand = Dag::new(
            dag.n,
            skel.iter()
                .enumerate()
                .map(|(i, &(a, b))| if mask & (1 << i) != 0 { (b, a) } else { (a, b) }),
        );
        if !cand.is_acyclic() || cand.v_structures() != vs {
            continue;
        }
        for (i, d) in dir.iter_mut().enumerate() {
            let forward = mask & (1 << i) == 0;
            *d = match *d {
                None => Some(Some(forward)),
                Some(Some(f)) if f == forward => Some(Some(f)),
                _ => Some(None),
            };
        }
    }
    let mut m = vec![vec![0; dag.n]; dag.n];
    for (i, &(a, b)) in skel.iter().enumerate() {
        match dir[i].expect("the dag itself is a member") {
            Some(true) => {
                m[a][b] = -1;
                m[b][a] = 1;
            }
            Some(false) => {
                m[b][a] = -1;
                m[a][b] = 1;
            }
            None => {
                m[a][b] = 1;
                m[b][a] = 1;
            }
        }
    }
    m
}

/// CI test answering with the path-blocking oracle on a known DAG.
pub struct PathOracleCi<'a>(pub &'a Dag);

impl CiTest for PathOracleCi<'_> {
    fn test(&self, i: usize, j: usize, s: &[usize], _alpha: f64) -> muas_core::Result<CITestResult> {
        let sep = dsep_oracle(self.0, &[i], &[j], s);
        Ok(CITestResult {
            statistic: if sep { 0.0 } else { f64::INFINITY },
            p_value: if sep { 1.0 } else { 0.0 },
            independent: sep,
            conditioning_set: s.to_vec(),
        })
    }
}

/// Random disjoint (A, B, Z) over `n` vertices with A and B nonempty.
pub fn random_query<R: Rng>(rng: &mut R, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    loop {
        let (mut a, mut b, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for v in 0..n {
            match rng.random_range(0..6) {
                0 => a.push(v),
                1 => b.push(v),
                2 | 3 => z.push(v),
                _ => {}
            }
        }
        if !a.is_empty() && !b.is_empty() {
            return (a, b, z);
        }
    }
}
