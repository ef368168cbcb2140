//! Edge orientation from external knowledge.
//!
//! Undirected (or contested) edges are sent to an [`OrientationProvider`]; the
//! answers become [`EdgeBelief`]s which [`apply_beliefs`] merges into the graph.
//! Downstream code reads orientation uncertainty through [`uncertainty`].

mod provider;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Edge, EdgeMeta, EdgeSource, Vertex};

pub use provider::{FilePriors, FileProvider, HttpProvider, HttpProviderConfig, OrientationProvider};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSource {
    Provider,
    User,
    File,
}

impl BeliefSource {
    fn edge_source(self) -> EdgeSource {
        match self {
            BeliefSource::User => EdgeSource::User,
            BeliefSource::Provider | BeliefSource::File => EdgeSource::Provider,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationQuery {
    pub pair: [String; 2],
    #[serde(default)]
    pub variable_descriptions: BTreeMap<String, String>,
    #[serde(default)]
    pub context: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationAnswer {
    pub direction: Direction,
    pub confidence: f64,
    #[serde(default)]
    pub rationale: String,
}

impl OrientationAnswer {
    pub fn unknown(rationale: impl Into<String>) -> Self {
        OrientationAnswer {
            direction: Direction::Unknown,
            confidence: 0.0,
            rationale: rationale.into(),
        }
    }
}

/// A proposed orientation `a -> b` (or `b -> a`) with a confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeBelief {
    pub a: String,
    pub b: String,
    pub direction: Direction,
    pub confidence: f64,
    #[serde(default)]
    pub rationale: String,
    pub source: BeliefSource,
}

impl EdgeBelief {
    pub fn directed(
        from: impl Into<String>,
        to: impl Into<String>,
        confidence: f64,
        source: BeliefSource,
    ) -> Self {
        EdgeBelief {
            a: from.into(),
            b: to.into(),
            direction: Direction::AToB,
            confidence: clamp01(confidence),
            rationale: String::new(),
            source,
        }
    }

    fn from_answer(a: &str, b: &str, answer: OrientationAnswer, source: BeliefSource) -> Self {
        let confidence = match answer.direction {
            Direction::Unknown => 0.0,
            _ => clamp01(answer.confidence),
        };
        EdgeBelief {
            a: a.to_string(),
            b: b.to_string(),
            direction: answer.direction,
            confidence,
            rationale: answer.rationale,
            source,
        }
    }

    /// Proposed `(from, to)` names, or `None` when the direction is unknown.
    pub fn proposed(&self) -> Option<(&str, &str)> {
        match self.direction {
            Direction::AToB => Some((&self.a, &self.b)),
            Direction::BToA => Some((&self.b, &self.a)),
            Direction::Unknown => None,
        }
    }

    pub fn label(&self) -> String {
        match self.proposed() {
            Some((f, t)) => format!("{f}->{t}"),
            None => format!("{}--{}", self.a, self.b),
        }
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Edges that need an external opinion: undirected ones and directed ones already contested.
pub fn edges_to_orient(g: &CausalGraph) -> Vec<Edge> {
    g.edges()
        .into_iter()
        .filter(|e| !e.directed || g.meta(e).is_some_and(|m| m.contested.is_some()))
        .collect()
}

/// Queries `provider` once per undirected or contested edge. Individual failures
/// become `unknown` beliefs; only a batch in which every query fails is an error.
pub fn propose_orientations(
    g: &CausalGraph,
    provider: &dyn OrientationProvider,
    descriptions: &BTreeMap<String, String>,
    context: &str,
) -> Result<Vec<EdgeBelief>> {
    let edges = edges_to_orient(g);
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let queries: Vec<OrientationQuery> = edges
        .iter()
        .map(|e| {
            let (a, b) = (g.name(e.from.min(e.to)), g.name(e.from.max(e.to)));
            OrientationQuery {
                pair: [a.to_string(), b.to_string()],
                variable_descriptions: [a, b]
                    .iter()
                    .filter_map(|n| descriptions.get(*n).map(|d| (n.to_string(), d.clone())))
                    .collect(),
                context: context.to_string(),
            }
        })
        .collect();

    let answers = run_queries(provider, &queries);
    let failures = answers.iter().filter(|a| a.is_err()).count();
    if failures == answers.len() {
        let first = answers
            .into_iter()
            .find_map(|a| a.err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(Error::ProviderUnavailable(first));
    }
    let source = provider.source();
    Ok(queries
        .iter()
        .zip(answers)
        .map(|(q, ans)| {
            let ans = ans.unwrap_or_else(|e| OrientationAnswer::unknown(format!("provider error: {e}")));
            EdgeBelief::from_answer(&q.pair[0], &q.pair[1], ans, source)
        })
        .collect())
}

/// Runs queries on at most `provider.max_concurrency()` threads, preserving order.
fn run_queries(
    provider: &dyn OrientationProvider,
    queries: &[OrientationQuery],
) -> Vec<Result<OrientationAnswer>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let workers = provider.max_concurrency().clamp(1, queries.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<OrientationAnswer>>>> =
        Mutex::new((0..queries.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= queries.len() {
                    break;
                }
                let res = provider.query(&queries[i]);
                slots.lock().expect("query slots poisoned")[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .expect("query slots poisoned")
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::Internal("query not executed".into()))))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    /// Edges oriented (or re-oriented) by a belief, as `A->B`.
    pub applied: Vec<String>,
    /// Beliefs refused because they would close a directed cycle.
    pub rejected_cycles: Vec<String>,
    /// Statistically forced edges that a provider belief disagreed with.
    pub contested: Vec<String>,
    /// Edges whose beliefs carried no direction.
    pub unknown: Vec<String>,
    /// Provider beliefs that tried to override a user orientation.
    pub ignored: Vec<String>,
}

/// Merges beliefs into `g`. Statistically forced orientations are only changed
/// by user beliefs; provider beliefs against them mark the edge contested.
/// Orientations that would close a directed cycle are refused and reported.
pub fn apply_beliefs(g: &CausalGraph, beliefs: &[EdgeBelief]) -> Result<(CausalGraph, ApplyReport)> {
    // group by unordered vertex pair, in canonical order
    let mut groups: BTreeMap<(Vertex, Vertex), Vec<&EdgeBelief>> = BTreeMap::new();
    for b in beliefs {
        let (x, y) = (g.index_of(&b.a)?, g.index_of(&b.b)?);
        if x == y || !g.adjacent(x, y) {
            return Err(Error::EdgeNotFound(format!("{}--{}", b.a, b.b)));
        }
        groups.entry((x.min(y), x.max(y))).or_default().push(b);
    }

    let mut out = g.clone();
    let mut report = ApplyReport::default();
    for ((x, y), group) in groups {
        let Some(belief) = resolve_group(&group, &format!("{}--{}", g.name(x), g.name(y)))? else {
            report.unknown.push(out.edge_label(&out.edge_between(x, y).expect("adjacent")));
            continue;
        };
        let (from, to) = belief.proposed().expect("resolved beliefs are directed");
        let (from, to) = (out.index_of(from)?, out.index_of(to)?);
        let label = format!("{}->{}", out.name(from), out.name(to));
        let current = out.edge_between(from, to).expect("adjacent");
        let current_meta = out.meta(&current).cloned();
        let meta = EdgeMeta::oriented(belief.source.edge_source(), belief.confidence);
        let is_user = belief.source == BeliefSource::User;

        if current.directed && current.from == from {
            // already pointing the proposed way
            match current_meta.as_ref().map(|m| m.source) {
                None | Some(EdgeSource::Statistical) if !is_user => {}
                Some(EdgeSource::User) if !is_user => report.ignored.push(label.clone()),
                _ => {
                    out.set_meta(&current, meta)?;
                    report.applied.push(label);
                }
            }
            continue;
        }

        if current.directed {
            let existing = current_meta.as_ref().map(|m| m.source).unwrap_or(EdgeSource::Statistical);
            if !is_user && existing == EdgeSource::Statistical {
                let mut m = current_meta.unwrap_or_else(EdgeMeta::statistical);
                m.contested = Some(belief.confidence);
                out.set_meta(&current, m)?;
                report.contested.push(out.edge_label(&current));
                continue;
            }
            if !is_user && existing == EdgeSource::User {
                report.ignored.push(label);
                continue;
            }
        }

        // want from -> to; refuse if to already reaches from without this edge
        let mut probe = out.clone();
        probe.remove_edge(from, to);
        if probe.has_directed_path(to, from) {
            report.rejected_cycles.push(label);
            continue;
        }
        out.set_directed(from, to, Some(meta));
        report.applied.push(label);
    }
    Ok((out, report))
}

/// Picks the effective belief for one edge: the last user belief if any,
/// otherwise the common direction of the directed beliefs.
fn resolve_group<'a>(group: &[&'a EdgeBelief], label: &str) -> Result<Option<&'a EdgeBelief>> {
    if let Some(user) = group
        .iter()
        .rev()
        .find(|b| b.source == BeliefSource::User && b.proposed().is_some())
    {
        return Ok(Some(user));
    }
    let directed: Vec<&EdgeBelief> = group.iter().copied().filter(|b| b.proposed().is_some()).collect();
    let Some(first) = directed.first() else {
        return Ok(None);
    };
    let dirs: BTreeSet<(&str, &str)> = directed.iter().map(|b| b.proposed().unwrap()).collect();
    if dirs.len() > 1 {
        return Err(Error::ConflictingBeliefs(label.to_string()));
    }
    // same direction everywhere: keep the most confident one
    let best = directed
        .iter()
        .copied()
        .max_by(|x, y| x.confidence.total_cmp(&y.confidence))
        .unwrap_or(first);
    Ok(Some(best))
}

/// A user override of a single edge. Unlike [`apply_beliefs`], a cycle is an error.
pub fn override_edge(
    g: &CausalGraph,
    from: &str,
    to: &str,
    confidence: f64,
) -> Result<CausalGraph> {
    let (f, t) = (g.index_of(from)?, g.index_of(to)?);
    if f == t || !g.adjacent(f, t) {
        return Err(Error::EdgeNotFound(format!("{from}--{to}")));
    }
    let mut probe = g.clone();
    probe.remove_edge(f, t);
    if probe.has_directed_path(t, f) {
        return Err(Error::WouldCreateCycle(format!("{from}->{to}")));
    }
    let mut out = g.clone();
    out.set_directed(f, t, Some(EdgeMeta::oriented(EdgeSource::User, clamp01(confidence))));
    Ok(out)
}

/// `u(e)`: `1 - c(e)` for provider/user-oriented edges, 0 for statistical ones.
/// A contested statistical edge carries the confidence of the contradicting belief.
pub fn uncertainty(g: &CausalGraph, e: &Edge) -> Result<f64> {
    if !g.contains(e) {
        return Err(Error::EdgeNotFound(g.edge_label(e)));
    }
    Ok(match g.meta(e) {
        None => 0.0,
        Some(m) => match m.source {
            EdgeSource::Statistical => m.contested.map(clamp01).unwrap_or(0.0),
            EdgeSource::Provider | EdgeSource::User => 1.0 - clamp01(m.confidence.unwrap_or(0.0)),
        },
    })
}

/// `u(e)` for every directed edge, keyed by `(from, to)`.
pub fn uncertainty_map(g: &CausalGraph) -> BTreeMap<(Vertex, Vertex), f64> {
    g.directed_edges()
        .into_iter()
        .map(|e| ((e.from, e.to), uncertainty(g, &e).expect("edge from graph")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::dag_from_edges;

    fn undirected(names: &[&str], pairs: &[(&str, &str)]) -> CausalGraph {
        let mut g = dag_from_edges(names, &[]).unwrap();
        for (a, b) in pairs {
            let (a, b) = (g.index_of(a).unwrap(), g.index_of(b).unwrap());
            g.set_undirected(a, b);
        }
        g
    }

    struct MapProvider(BTreeMap<String, Result<OrientationAnswer, String>>);

    impl OrientationProvider for MapProvider {
        fn query(&self, q: &OrientationQuery) -> Result<OrientationAnswer> {
            match self.0.get(&format!("{}|{}", q.pair[0], q.pair[1])) {
                Some(Ok(a)) => Ok(a.clone()),
                Some(Err(e)) => Err(Error::ProviderUnavailable(e.clone())),
                None => Ok(OrientationAnswer::unknown("no entry")),
            }
        }
        fn source(&self) -> BeliefSource {
            BeliefSource::Provider
        }
    }

    fn ans(d: Direction, c: f64) -> Result<OrientationAnswer, String> {
        Ok(OrientationAnswer {
            direction: d,
            confidence: c,
            rationale: "r".into(),
        })
    }

    #[test]
    fn propose_dispatches_to_provider() {
        let g = undirected(&["A", "B"], &[("A", "B")]);
        let p = MapProvider(BTreeMap::from([("A|B".to_string(), ans(Direction::AToB, 0.8))]));
        let beliefs = propose_orientations(&g, &p, &BTreeMap::new(), "").unwrap();
        assert_eq!(beliefs.len(), 1);
        assert_eq!(beliefs[0].proposed(), Some(("A", "B")));
        assert_eq!(beliefs[0].confidence, 0.8);
    }

    #[test]
    fn propose_on_directed_graph_is_empty() {
        let g = dag_from_edges(&["A", "B"], &[("A", "B")]).unwrap();
        let p = MapProvider(BTreeMap::new());
        assert!(propose_orientations(&g, &p, &BTreeMap::new(), "").unwrap().is_empty());
    }

    #[test]
    fn provider_failure_yields_unknown_belief() {
        let g = undirected(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C"), ("C", "D")]);
        let p = MapProvider(BTreeMap::from([
            ("A|B".to_string(), ans(Direction::AToB, 0.9)),
            ("B|C".to_string(), Err("timeout".to_string())),
            ("C|D".to_string(), ans(Direction::BToA, 1.7)),
        ]));
        let beliefs = propose_orientations(&g, &p, &BTreeMap::new(), "").unwrap();
        assert_eq!(beliefs.len(), 3);
        assert_eq!(beliefs[1].direction, Direction::Unknown);
        assert_eq!(beliefs[1].confidence, 0.0);
        // clamped
        assert_eq!(beliefs[2].confidence, 1.0);
        assert_eq!(beliefs[2].proposed(), Some(("D", "C")));

        let all_fail = MapProvider(BTreeMap::from([("A|B".to_string(), Err("down".to_string()))]));
        let g = undirected(&["A", "B"], &[("A", "B")]);
        assert!(matches!(
            propose_orientations(&g, &all_fail, &BTreeMap::new(), ""),
            Err(Error::ProviderUnavailable(_))
        ));
    }

    #[test]
    fn belief_orients_undirected_edge() {
        let g = undirected(&["A", "B"], &[("A", "B")]);
        let b = EdgeBelief::directed("A", "B", 0.9, BeliefSource::Provider);
        let (out, report) = apply_beliefs(&g, &[b]).unwrap();
        let e = Edge::directed(0, 1);
        assert!(out.contains(&e));
        assert_eq!(out.meta(&e).unwrap().confidence, Some(0.9));
        assert_eq!(report.applied, vec!["A->B"]);
        assert!((uncertainty(&out, &e).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cycle_closing_belief_is_rejected() {
        let mut g = dag_from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        g.set_undirected(0, 2);
        let b = EdgeBelief::directed("C", "A", 0.9, BeliefSource::Provider);
        let (out, report) = apply_beliefs(&g, &[b]).unwrap();
        assert!(out.has_undirected(0, 2));
        assert_eq!(report.rejected_cycles, vec!["C->A"]);
        assert!(out.is_acyclic());
    }

    #[test]
    fn user_beats_statistical_provider_does_not() {
        let g = dag_from_edges(&["A", "B", "C"], &[("A", "C"), ("B", "C")]).unwrap();
        let prov = EdgeBelief::directed("C", "A", 0.7, BeliefSource::Provider);
        let (out, report) = apply_beliefs(&g, &[prov]).unwrap();
        assert!(out.has_directed(0, 2));
        assert_eq!(report.contested, vec!["A->C"]);
        let u = uncertainty(&out, &Edge::directed(0, 2)).unwrap();
        assert!((u - 0.7).abs() < 1e-12);

        let user = EdgeBelief::directed("C", "A", 1.0, BeliefSource::User);
        let (out, _) = apply_beliefs(&g, &[user]).unwrap();
        let e = Edge::directed(2, 0);
        assert!(out.contains(&e));
        assert_eq!(out.meta(&e).unwrap().source, EdgeSource::User);
    }

    #[test]
    fn conflicting_provider_beliefs_error() {
        let g = undirected(&["A", "B"], &[("A", "B")]);
        let beliefs = [
            EdgeBelief::directed("A", "B", 0.6, BeliefSource::Provider),
            EdgeBelief::directed("B", "A", 0.6, BeliefSource::File),
        ];
        assert!(matches!(
            apply_beliefs(&g, &beliefs),
            Err(Error::ConflictingBeliefs(_))
        ));
        let with_user = [
            EdgeBelief::directed("A", "B", 0.6, BeliefSource::Provider),
            EdgeBelief::directed("B", "A", 0.6, BeliefSource::User),
        ];
        let (out, _) = apply_beliefs(&g, &with_user).unwrap();
        assert!(out.has_directed(1, 0));
    }

    #[test]
    fn belief_on_missing_edge_errors() {
        let g = undirected(&["A", "B", "C"], &[("A", "B")]);
        let b = EdgeBelief::directed("A", "C", 0.6, BeliefSource::Provider);
        assert!(matches!(apply_beliefs(&g, &[b]), Err(Error::EdgeNotFound(_))));
    }

    #[test]
    fn apply_is_idempotent() {
        let g = undirected(
            &["A", "B", "C", "D"],
            &[("A", "B"), ("B", "C"), ("C", "A"), ("C", "D")],
        );
        let beliefs = vec![
            EdgeBelief::directed("A", "B", 0.9, BeliefSource::Provider),
            EdgeBelief::directed("B", "C", 0.8, BeliefSource::Provider),
            EdgeBelief::directed("C", "A", 0.5, BeliefSource::Provider),
            EdgeBelief::directed("D", "C", 0.4, BeliefSource::File),
        ];
        let (once, _) = apply_beliefs(&g, &beliefs).unwrap();
        let (twice, _) = apply_beliefs(&once, &beliefs).unwrap();
        assert_eq!(once, twice);
        assert!(once.is_acyclic());
    }

    #[test]
    fn uncertainty_values() {
        let mut g = dag_from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let e = Edge::directed(0, 1);
        g.set_meta(&e, EdgeMeta::oriented(EdgeSource::Provider, 0.8)).unwrap();
        assert!((uncertainty(&g, &e).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(uncertainty(&g, &Edge::directed(1, 2)).unwrap(), 0.0);
        g.set_meta(&e, EdgeMeta::oriented(EdgeSource::Provider, 1.0)).unwrap();
        assert_eq!(uncertainty(&g, &e).unwrap(), 0.0);
        assert!(matches!(
            uncertainty(&g, &Edge::directed(0, 2)),
            Err(Error::EdgeNotFound(_))
        ));
    }

    #[test]
    fn override_rejects_cycles_and_missing_edges() {
        let mut g = dag_from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        g.set_directed(0, 2, None);
        assert!(matches!(
            override_edge(&g, "C", "A", 1.0),
            Err(Error::WouldCreateCycle(_))
        ));
        let g2 = dag_from_edges(&["A", "B", "C"], &[("A", "B")]).unwrap();
        assert!(matches!(
            override_edge(&g2, "A", "C", 1.0),
            Err(Error::EdgeNotFound(_))
        ));
        let flipped = override_edge(&g2, "B", "A", 0.6).unwrap();
        assert!(flipped.has_directed(1, 0));
    }

    proptest::proptest! {
        #[test]
        fn apply_keeps_acyclic(seed in 0u64..300) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(seed);
            let names = ["A", "B", "C", "D", "E"];
            let mut g = dag_from_edges(&names, &[]).unwrap();
            for i in 0..5 {
                for j in (i + 1)..5 {
                    match rng.random_range(0..4) {
                        0 => g.set_directed(i, j, None),
                        1 => g.set_undirected(i, j),
                        _ => {}
                    }
                }
            }
            let beliefs: Vec<EdgeBelief> = g.edges().iter().map(|e| {
                let (f, t) = if rng.random_bool(0.5) { (e.from, e.to) } else { (e.to, e.from) };
                EdgeBelief::directed(names[f], names[t], rng.random::<f64>(), BeliefSource::Provider)
            }).collect();
            let (out, _) = apply_beliefs(&g, &beliefs).unwrap();
            proptest::prop_assert!(out.is_acyclic());
            for e in out.directed_edges() {
                let u = uncertainty(&out, &e).unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&u));
            }
        }
    }
}
