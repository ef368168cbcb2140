//! The PC algorithm (order-independent skeleton phase, v-structures, Meek rules R1–R3).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ci::{AutoTest, CiTest};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Edge, EdgeMeta};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MAX_COND_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcOptions {
    pub alpha: f64,
    /// Largest conditioning set tried; `None` means unbounded.
    pub max_cond_size: Option<usize>,
}

impl Default for PcOptions {
    fn default() -> Self {
        PcOptions {
            alpha: DEFAULT_ALPHA,
            max_cond_size: Some(DEFAULT_MAX_COND_SIZE),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcOutput {
    pub graph: CausalGraph,
    /// Separating set found for each removed pair `(i, j)`, `i < j`.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    pub n_tests: usize,
}

/// PC on data with the automatic CI test (chi-squared for all-discrete
/// conditioning problems, Fisher-z otherwise).
pub fn pc_discover<S: AsRef<str>>(data: &DMatrix<f64>, names: &[S], alpha: f64) -> Result<CausalGraph> {
    pc_discover_with(data, names, &PcOptions {
        alpha,
        ..PcOptions::default()
    })
    .map(|o| o.graph)
}

pub fn pc_discover_with<S: AsRef<str>>(
    data: &DMatrix<f64>,
    names: &[S],
    opts: &PcOptions,
) -> Result<PcOutput> {
    if data.nrows() < 30 {
        return Err(Error::InsufficientSamples {
            n: data.nrows(),
            needed: 29,
        });
    }
    if data.ncols() < 2 {
        return Err(Error::InvalidInput("PC needs at least two columns".into()));
    }
    if names.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            got: names.len(),
        });
    }
    let test = AutoTest::new(data);
    pc_with_test(&test, names, opts)
}

/// PC with an arbitrary CI test; used with a d-separation oracle in tests.
pub fn pc_with_test<S: AsRef<str>>(
    test: &dyn CiTest,
    names: &[S],
    opts: &PcOptions,
) -> Result<PcOutput> {
    let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    let n = names.len();
    let mut adj = vec![vec![true; n]; n];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut sepsets = BTreeMap::new();
    let mut n_tests = 0;

    let mut level = 0;
    loop {
        if opts.max_cond_size.is_some_and(|m| level > m) {
            break;
        }
        let snapshot: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| adj[i][j]).collect())
            .collect();
        let mut any = false;
        for i in 0..n {
            for &j in &snapshot[i] {
                if !adj[i][j] {
                    continue;
                }
                let cand: Vec<usize> = snapshot[i].iter().copied().filter(|&k| k != j).collect();
                if cand.len() < level {
                    continue;
                }
                any = true;
                for s in combinations(&cand, level) {
                    n_tests += 1;
                    if test.test(i, j, &s, opts.alpha)?.independent {
                        adj[i][j] = false;
                        adj[j][i] = false;
                        sepsets.insert((i.min(j), i.max(j)), s);
                        break;
                    }
                }
            }
        }
        if !any {
            break;
        }
        level += 1;
    }

    let mut g = CausalGraph::empty(&names)?;
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[i][j] {
                g.set_undirected(i, j);
            }
        }
    }
    orient_v_structures(&mut g, &sepsets);
    apply_meek_rules(&mut g);
    for e in g.directed_edges() {
        g.set_meta(&e, EdgeMeta::statistical())?;
    }
    Ok(PcOutput {
        graph: g,
        sepsets,
        n_tests,
    })
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (idx, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[idx + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Orients `i -> k <- j` for every unshielded triple with `k` outside sepset(i, j).
/// Triples are collected from the skeleton first; a conflicting later triple
/// does not override an earlier orientation.
fn orient_v_structures(g: &mut CausalGraph, sepsets: &BTreeMap<(usize, usize), Vec<usize>>) {
    let n = g.n();
    let mut triples = Vec::new();
    for k in 0..n {
        let nb = g.adjacencies(k);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if g.adjacent(i, j) {
                    continue;
                }
                let sep = sepsets.get(&(i.min(j), i.max(j)));
                if sep.is_some_and(|s| !s.contains(&k)) {
                    triples.push((i, k, j));
                }
            }
        }
    }
    for (i, k, j) in triples {
        for p in [i, j] {
            if g.has_undirected(p, k) {
                g.set_directed(p, k, None);
            }
        }
    }
}

/// Meek rules R1–R3 applied until nothing changes.
pub fn apply_meek_rules(g: &mut CausalGraph) {
    loop {
        let mut changed = false;
        for e in g.undirected_edges() {
            for (a, b) in [(e.from, e.to), (e.to, e.from)] {
                if g.has_undirected(a, b) && meek_orients(g, a, b) {
                    g.set_directed(a, b, None);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether one of R1–R3 forces the undirected edge `a -- b` to become `a -> b`.
fn meek_orients(g: &CausalGraph, a: usize, b: usize) -> bool {
    let n = g.n();
    // R1: c -> a -- b, c and b non-adjacent
    if g.parents(a).iter().any(|&c| c != b && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if (0..n).any(|c| g.has_directed(a, c) && g.has_directed(c, b)) {
        return true;
    }
    // R3: a -- c -> b, a -- d -> b, c and d non-adjacent
    let mids: Vec<usize> = g
        .neighbors(a)
        .into_iter()
        .filter(|&c| c != b && g.has_directed(c, b))
        .collect();
    for (x, &c) in mids.iter().enumerate() {
        for &d in &mids[x + 1..] {
            if !g.adjacent(c, d) {
                return true;
            }
        }
    }
    false
}

/// The CPDAG edges that PC leaves undirected, for reporting.
pub fn unresolved_edges(g: &CausalGraph) -> Vec<Edge> {
    g.undirected_edges()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::ci::DSeparationOracle;
    use crate::graph::dag_from_edges;

    fn oracle_pc(dag: &CausalGraph) -> CausalGraph {
        let t = DSeparationOracle { dag };
        pc_with_test(&t, dag.names(), &PcOptions {
            alpha: 0.05,
            max_cond_size: None,
        })
        .unwrap()
        .graph
    }

    #[test]
    fn chain_stays_undirected() {
        let dag = dag_from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let g = oracle_pc(&dag);
        assert_eq!(g.undirected_edges(), vec![Edge::undirected(0, 1), Edge::undirected(1, 2)]);
        assert!(g.directed_edges().is_empty());
    }

    #[test]
    fn collider_is_oriented() {
        let dag = dag_from_edges(&["A", "B", "C"], &[("A", "C"), ("B", "C")]).unwrap();
        let g = oracle_pc(&dag);
        assert_eq!(g.directed_edges(), vec![Edge::directed(0, 2), Edge::directed(1, 2)]);
        for e in g.directed_edges() {
            assert_eq!(g.meta(&e), Some(&EdgeMeta::statistical()));
        }
    }

    #[test]
    fn meek_r1_propagates() {
        // A -> C <- B, C -> D : D's edge forced by R1
        let dag = dag_from_edges(
            &["A", "B", "C", "D"],
            &[("A", "C"), ("B", "C"), ("C", "D")],
        )
        .unwrap();
        let g = oracle_pc(&dag);
        assert!(g.has_directed(2, 3));
    }

    #[test]
    fn independent_columns_give_empty_graph() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(11);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let data = DMatrix::from_fn(500, 2, |_, _| nd.sample(&mut rng));
        let g = pc_discover(&data, &["X", "Y"], 0.05).unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn preconditions() {
        let data = DMatrix::<f64>::zeros(10, 2);
        assert!(matches!(
            pc_discover(&data, &["A", "B"], 0.05),
            Err(Error::InsufficientSamples { .. })
        ));
        let data = DMatrix::<f64>::zeros(40, 1);
        assert!(pc_discover(&data, &["A"], 0.05).is_err());
    }

    #[test]
    fn combinations_in_order() {
        assert_eq!(
            combinations(&[1, 2, 3], 2),
            vec![vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(combinations(&[1], 2), Vec::<Vec<usize>>::new());
    }
}
