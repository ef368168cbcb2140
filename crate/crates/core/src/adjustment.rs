//! Back-door adjustment sets ranked by how much their validity depends on
//! uncertain edge orientations.
//!
//! An oriented edge is *critical* for `Z` when reversing it makes `Z` stop
//! satisfying the back-door criterion. The cost of `Z` aggregates the
//! uncertainty of its critical edges (the maximum, by default), and the
//! minimum uncertainty adjustment set is the cheapest valid `Z`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Edge, Vertex, DEFAULT_MAX_EXHAUSTIVE_NODES};

pub const DEFAULT_MAX_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostAggregator {
    /// `max` over the critical edges' uncertainties.
    #[default]
    Max,
    /// Sum of uncertainties, capped at 1. Experimental.
    Sum,
}

impl CostAggregator {
    fn aggregate(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            CostAggregator::Max => values.fold(0.0, f64::max),
            CostAggregator::Sum => values.sum::<f64>().min(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentOptions {
    pub max_size: usize,
    /// Vertices allowed in `Z` (observed covariates); `None` allows all.
    pub allowed: Option<BTreeSet<Vertex>>,
    pub aggregator: CostAggregator,
}

impl Default for AdjustmentOptions {
    fn default() -> Self {
        AdjustmentOptions {
            max_size: DEFAULT_MAX_SIZE,
            allowed: None,
            aggregator: CostAggregator::Max,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjustmentCandidate {
    pub z: Vec<Vertex>,
    pub critical_edges: Vec<Edge>,
    pub cost: f64,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalEdges {
    pub critical: Vec<Edge>,
    /// Flips skipped because the reversed edge closes a directed cycle.
    pub skipped: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedFlip {
    pub z: Vec<Vertex>,
    pub edge: Edge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuasResult {
    pub chosen: AdjustmentCandidate,
    pub all_candidates: Vec<AdjustmentCandidate>,
    /// More than one candidate attained the minimum cost.
    pub tie_broken: bool,
    pub skipped_flips: Vec<SkippedFlip>,
    pub max_size: usize,
}

/// Back-door validity: no vertex of `z` descends from `w`, and `z` d-separates
/// `w` from `y` once the edges out of `w` are removed.
pub fn check_backdoor_valid(g: &CausalGraph, w: Vertex, y: Vertex, z: &[Vertex]) -> Result<bool> {
    g.require_dag()?;
    check_zw(g, w, y, z)?;
    let desc = g.descendants(w)?;
    if z.iter().any(|v| desc.contains(v)) {
        return Ok(false);
    }
    g.without_outgoing(w).d_separated(&[w], &[y], z)
}

fn check_zw(g: &CausalGraph, w: Vertex, y: Vertex, z: &[Vertex]) -> Result<()> {
    for v in [w, y].iter().chain(z) {
        if *v >= g.n() {
            return Err(Error::UnknownVertex(v.to_string()));
        }
    }
    if w == y {
        return Err(Error::VertexOverlap);
    }
    if z.contains(&w) || z.contains(&y) {
        return Err(Error::InvalidZ(format!(
            "adjustment set may not contain {} or {}",
            g.name(w),
            g.name(y)
        )));
    }
    Ok(())
}

/// Every valid `Z` with `|Z| <= max_size` drawn from the non-descendants of `w`,
/// ordered by cardinality then lexicographically by vertex index.
pub fn find_valid_sets(
    g: &CausalGraph,
    w: Vertex,
    y: Vertex,
    max_size: usize,
) -> Result<Vec<Vec<Vertex>>> {
    find_valid_sets_with(g, w, y, &AdjustmentOptions {
        max_size,
        ..AdjustmentOptions::default()
    })
}

pub fn find_valid_sets_with(
    g: &CausalGraph,
    w: Vertex,
    y: Vertex,
    opts: &AdjustmentOptions,
) -> Result<Vec<Vec<Vertex>>> {
    g.require_dag()?;
    check_zw(g, w, y, &[])?;
    if g.n() > DEFAULT_MAX_EXHAUSTIVE_NODES {
        return Err(Error::GraphTooLarge {
            nodes: g.n(),
            cap: DEFAULT_MAX_EXHAUSTIVE_NODES,
        });
    }
    let desc = g.descendants(w)?;
    let pool: Vec<Vertex> = (0..g.n())
        .filter(|v| *v != w && *v != y && !desc.contains(v))
        .filter(|v| opts.allowed.as_ref().is_none_or(|a| a.contains(v)))
        .collect();
    subsets_canonical(&pool, opts.max_size)
        .into_par_iter()
        .map(|z| check_backdoor_valid(g, w, y, &z).map(|ok| ok.then_some(z)))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// All subsets of `pool` up to `max_size`, by size then lexicographic order.
fn subsets_canonical(pool: &[Vertex], max_size: usize) -> Vec<Vec<Vertex>> {
    let mut out = vec![Vec::new()];
    for k in 1..=max_size.min(pool.len()) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| pool[i]).collect());
            // advance to the next k-combination
            let mut i = k;
            while i > 0 && idx[i - 1] == pool.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Oriented edges whose reversal invalidates `z`. Reversals that would close a
/// directed cycle are skipped and returned separately.
pub fn find_critical_edges(
    g: &CausalGraph,
    w: Vertex,
    y: Vertex,
    z: &[Vertex],
    oriented: &[Edge],
) -> Result<CriticalEdges> {
    if !check_backdoor_valid(g, w, y, z)? {
        return Err(Error::InvalidCandidate);
    }
    let mut critical = Vec::new();
    let mut skipped = Vec::new();
    for e in oriented {
        let flipped = g.flip_edge(e)?;
        if !flipped.is_acyclic() {
            skipped.push(*e);
            continue;
        }
        if !check_backdoor_valid(&flipped, w, y, z)? {
            critical.push(*e);
        }
    }
    Ok(CriticalEdges { critical, skipped })
}

/// 0 for an empty critical set, otherwise the maximum uncertainty.
pub fn uncertainty_cost(critical: &[Edge], u: impl Fn(&Edge) -> f64) -> f64 {
    CostAggregator::Max.aggregate(critical.iter().map(u))
}

/// Evaluates every valid candidate and returns the cheapest, breaking ties by
/// cardinality and then lexicographic order. Every directed edge is treated as
/// oriented; edges absent from `u` have uncertainty 0.
pub fn find_muas(
    g: &CausalGraph,
    w: Vertex,
    y: Vertex,
    u: &BTreeMap<(Vertex, Vertex), f64>,
    opts: &AdjustmentOptions,
) -> Result<MuasResult> {
    let candidates = find_valid_sets_with(g, w, y, opts)?;
    if candidates.is_empty() {
        return Err(Error::NoValidAdjustmentSet {
            max_size: opts.max_size,
        });
    }
    let oriented = g.directed_edges();
    let uf = |e: &Edge| u.get(&(e.from, e.to)).copied().unwrap_or(0.0);

    let evaluated: Vec<(AdjustmentCandidate, Vec<Edge>)> = candidates
        .into_par_iter()
        .map(|z| {
            let crit = find_critical_edges(g, w, y, &z, &oriented)?;
            let cost = opts.aggregator.aggregate(crit.critical.iter().map(uf));
            Ok((
                AdjustmentCandidate {
                    z,
                    critical_edges: crit.critical,
                    cost,
                    valid: true,
                },
                crit.skipped,
            ))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, (c, _)) in evaluated.iter().enumerate() {
        if c.cost < evaluated[best].0.cost {
            best = i;
        }
    }
    let min_cost = evaluated[best].0.cost;
    let tie_broken = evaluated.iter().filter(|(c, _)| c.cost == min_cost).count() > 1;
    let skipped_flips = evaluated
        .iter()
        .flat_map(|(c, sk)| sk.iter().map(|e| SkippedFlip { z: c.z.clone(), edge: *e }))
        .collect();
    let all_candidates: Vec<AdjustmentCandidate> = evaluated.into_iter().map(|(c, _)| c).collect();
    Ok(MuasResult {
        chosen: all_candidates[best].clone(),
        all_candidates,
        tie_broken,
        skipped_flips,
        max_size: opts.max_size,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    #[serde(rename = "Z")]
    pub z: Vec<String>,
    pub cost: f64,
    pub critical_edges: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFlipReport {
    #[serde(rename = "Z")]
    pub z: Vec<String>,
    pub edge: String,
}

/// JSON form of a [`MuasResult`], with vertices and edges named.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuasReport {
    pub chosen: CandidateReport,
    pub candidates: Vec<CandidateReport>,
    pub skipped_flips: Vec<SkippedFlipReport>,
    pub tie_broken: bool,
    pub max_size: usize,
}

impl MuasResult {
    pub fn report(&self, g: &CausalGraph) -> MuasReport {
        let cand = |c: &AdjustmentCandidate| CandidateReport {
            z: c.z.iter().map(|v| g.name(*v).to_string()).collect(),
            cost: c.cost,
            critical_edges: c.critical_edges.iter().map(|e| g.edge_label(e)).collect(),
        };
        MuasReport {
            chosen: cand(&self.chosen),
            candidates: self.all_candidates.iter().map(cand).collect(),
            skipped_flips: self
                .skipped_flips
                .iter()
                .map(|s| SkippedFlipReport {
                    z: s.z.iter().map(|v| g.name(*v).to_string()).collect(),
                    edge: g.edge_label(&s.edge),
                })
                .collect(),
            tie_broken: self.tie_broken,
            max_size: self.max_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::dag_from_edges;

    fn chain_confounder() -> CausalGraph {
        // W=0, Y=1, X1=2, X2=3
        dag_from_edges(
            &["W", "Y", "X1", "X2"],
            &[("X1", "W"), ("X1", "X2"), ("X2", "Y"), ("W", "Y")],
        )
        .unwrap()
    }

    #[test]
    fn backdoor_examples() {
        let g = dag_from_edges(&["W", "Y"], &[("W", "Y")]).unwrap();
        assert!(check_backdoor_valid(&g, 0, 1, &[]).unwrap());

        let g = dag_from_edges(&["W", "M", "Y"], &[("W", "M"), ("M", "Y")]).unwrap();
        assert!(!check_backdoor_valid(&g, 0, 2, &[1]).unwrap());

        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        assert!(check_backdoor_valid(&g, 0, 2, &[1]).unwrap());
        assert!(!check_backdoor_valid(&g, 0, 2, &[]).unwrap());
        assert!(matches!(
            check_backdoor_valid(&g, 0, 2, &[0]),
            Err(Error::InvalidZ(_))
        ));
    }

    #[test]
    fn valid_set_examples() {
        let g = dag_from_edges(&["W", "Y", "A"], &[("W", "Y")]).unwrap();
        assert_eq!(find_valid_sets(&g, 0, 1, 2).unwrap(), vec![vec![], vec![2]]);

        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        assert_eq!(find_valid_sets(&g, 0, 2, 4).unwrap(), vec![vec![1]]);

        let g = chain_confounder();
        assert_eq!(
            find_valid_sets(&g, 0, 1, 4).unwrap(),
            vec![vec![2], vec![3], vec![2, 3]]
        );
    }

    #[test]
    fn subsets_are_canonical() {
        let s = subsets_canonical(&[1, 4, 7], 2);
        assert_eq!(
            s,
            vec![vec![], vec![1], vec![4], vec![7], vec![1, 4], vec![1, 7], vec![4, 7]]
        );
        assert_eq!(subsets_canonical(&[1, 2], 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn critical_edge_examples() {
        let g = dag_from_edges(&["W", "Y"], &[("W", "Y")]).unwrap();
        let c = find_critical_edges(&g, 0, 1, &[], &[Edge::directed(0, 1)]).unwrap();
        // reversing W->Y opens the back-door path W<-Y
        assert_eq!(c.critical, vec![Edge::directed(0, 1)]);

        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        let c = find_critical_edges(&g, 0, 2, &[1], &[Edge::directed(1, 0)]).unwrap();
        assert_eq!(c.critical, vec![Edge::directed(1, 0)]);

        let g = chain_confounder();
        let c = find_critical_edges(
            &g,
            0,
            1,
            &[2],
            &[Edge::directed(2, 3), Edge::directed(3, 1)],
        )
        .unwrap();
        assert!(c.critical.is_empty());

        assert!(matches!(
            find_critical_edges(&g, 0, 1, &[], &[]),
            Err(Error::InvalidCandidate)
        ));
    }

    #[test]
    fn cycle_creating_flips_are_skipped() {
        // X->W->Y and X->Y: reversing X->Y gives Y->X->W->Y
        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        let c = find_critical_edges(&g, 0, 2, &[1], &g.directed_edges()).unwrap();
        assert_eq!(c.skipped, vec![Edge::directed(1, 2)]);
    }

    #[test]
    fn muas_on_chain_confounder() {
        let g = chain_confounder();
        let u = BTreeMap::from([((2, 0), 0.0), ((2, 3), 0.8), ((3, 1), 0.1), ((0, 1), 0.0)]);
        let r = find_muas(&g, 0, 1, &u, &AdjustmentOptions::default()).unwrap();
        assert_eq!(r.chosen.z, vec![2]);
        assert_eq!(r.chosen.cost, 0.0);
        let costs: Vec<f64> = r.all_candidates.iter().map(|c| c.cost).collect();
        assert_eq!(costs, vec![0.0, 0.1, 0.1]);
        let rep = r.report(&g);
        assert_eq!(rep.candidates[1].z, vec!["X2"]);
        assert!(rep.candidates[1].critical_edges.contains(&"X2->Y".to_string()));
    }

    #[test]
    fn shaky_confounder_edge_ties_all_candidates() {
        // Reversing X1->W makes both X1 and X2 descendants of W, so every candidate pays 0.9.
        let g = chain_confounder();
        let u = BTreeMap::from([((2, 0), 0.9), ((3, 1), 0.2)]);
        let r = find_muas(&g, 0, 1, &u, &AdjustmentOptions::default()).unwrap();
        assert_eq!(r.chosen.z, vec![2]);
        assert!((r.chosen.cost - 0.9).abs() < 1e-12);
        assert!(r.tie_broken);
    }

    #[test]
    fn single_candidate_returned_regardless_of_cost() {
        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        let u = BTreeMap::from([((1, 0), 0.95)]);
        let r = find_muas(&g, 0, 2, &u, &AdjustmentOptions::default()).unwrap();
        assert_eq!(r.chosen.z, vec![1]);
        assert!((r.chosen.cost - 0.95).abs() < 1e-12);
        assert!(!r.tie_broken);
    }

    #[test]
    fn failure_when_required_covariate_excluded() {
        let g = dag_from_edges(&["W", "X", "Y"], &[("X", "W"), ("X", "Y"), ("W", "Y")]).unwrap();
        let opts = AdjustmentOptions {
            allowed: Some(BTreeSet::new()),
            ..AdjustmentOptions::default()
        };
        assert!(matches!(
            find_muas(&g, 0, 2, &BTreeMap::new(), &opts),
            Err(Error::NoValidAdjustmentSet { .. })
        ));
        let opts = AdjustmentOptions {
            max_size: 0,
            ..AdjustmentOptions::default()
        };
        assert!(matches!(
            find_muas(&g, 0, 2, &BTreeMap::new(), &opts),
            Err(Error::NoValidAdjustmentSet { max_size: 0 })
        ));
    }

    #[test]
    fn zero_uncertainty_reduces_to_tie_break() {
        let g = chain_confounder();
        let r = find_muas(&g, 0, 1, &BTreeMap::new(), &AdjustmentOptions::default()).unwrap();
        assert!(r.all_candidates.iter().all(|c| c.cost == 0.0));
        assert_eq!(r.chosen.z, vec![2]);
        assert!(r.tie_broken);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(uncertainty_cost(&[], |_| 1.0), 0.0);
        let e1 = Edge::directed(0, 1);
        let e2 = Edge::directed(1, 2);
        let u = |e: &Edge| if *e == e1 { 0.5 } else { 0.1 };
        assert_eq!(uncertainty_cost(&[e1, e2], u), 0.5);
        assert_eq!(uncertainty_cost(&[e1], |_| 0.0), 0.0);
        assert_eq!(CostAggregator::Sum.aggregate([0.5, 0.1].into_iter()), 0.6);
    }

    #[test]
    fn report_json_shape() {
        let g = chain_confounder();
        let u = BTreeMap::from([((3, 1), 0.1)]);
        let r = find_muas(&g, 0, 1, &u, &AdjustmentOptions::default()).unwrap();
        let v = serde_json::to_value(r.report(&g)).unwrap();
        assert_eq!(v["chosen"]["Z"], serde_json::json!(["X1"]));
        assert!(v["candidates"].is_array());
        assert!(v["skipped_flips"].is_array());
    }

    #[test]
    fn deterministic() {
        let g = chain_confounder();
        let u = BTreeMap::from([((2, 0), 0.3), ((2, 3), 0.8), ((3, 1), 0.1)]);
        let a = find_muas(&g, 0, 1, &u, &AdjustmentOptions::default()).unwrap();
        for _ in 0..5 {
            assert_eq!(find_muas(&g, 0, 1, &u, &AdjustmentOptions::default()).unwrap(), a);
        }
    }
}
