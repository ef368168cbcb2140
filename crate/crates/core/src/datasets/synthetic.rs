//! Seeded generators with known structure and effect. Every generator is a
//! pure function of `(n, seed)` over SplitMix64.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::{dag_from_edges, CausalGraph};
use crate::orientation::{Direction, FilePriors, OrientationAnswer};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub true_dag: CausalGraph,
    pub tau_true: Vec<f64>,
    pub ate_true: f64,
}

/// Sidecar form: `{"ate_true": 1.05, "dag": <graph JSON>}`. `tau_true` is
/// written only when the effect varies by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub ate_true: f64,
    pub dag: CausalGraph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_true: Option<Vec<f64>>,
}

impl SyntheticTruth {
    fn constant(dag: CausalGraph, tau: f64, n: usize) -> Self {
        SyntheticTruth {
            true_dag: dag,
            tau_true: vec![tau; n],
            ate_true: tau,
        }
    }

    pub fn to_file(&self) -> TruthFile {
        let constant = self.tau_true.iter().all(|t| *t == self.ate_true);
        TruthFile {
            ate_true: self.ate_true,
            dag: self.true_dag.clone(),
            tau_true: (!constant).then(|| self.tau_true.clone()),
        }
    }
}

impl TruthFile {
    pub fn tau_for(&self, n: usize) -> Vec<f64> {
        self.tau_true.clone().unwrap_or_else(|| vec![self.ate_true; n])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Sodium,
    ConfounderChain,
    ColliderTrap,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Sodium => "sodium",
            Generator::ConfounderChain => "confounder_chain",
            Generator::ColliderTrap => "collider_trap",
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sodium" => Ok(Generator::Sodium),
            "confounder_chain" | "confounder-chain" => Ok(Generator::ConfounderChain),
            "collider_trap" | "collider-trap" => Ok(Generator::ColliderTrap),
            other => Err(Error::InvalidInput(format!(
                "unknown generator `{other}` (expected sodium, confounder_chain, collider_trap)"
            ))),
        }
    }
}

pub fn generate(kind: Generator, n: usize, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    match kind {
        Generator::Sodium => generate_sodium(n, seed),
        Generator::ConfounderChain => generate_confounder_chain(n, seed),
        Generator::ColliderTrap => generate_collider_trap(n, seed),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn bernoulli(rng: &mut SplitMix64, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::InsufficientSamples { n, needed: 99 });
    }
    Ok(())
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Age confounds sodium intake W and blood pressure BP; Proteinuria is a
/// collider of W and BP. Constant effect 1.05.
pub fn generate_sodium(n: usize, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    check_n(n)?;
    const TAU: f64 = 1.05;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let age_d = Normal::new(65.0, 5.0).expect("valid");
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let half = Normal::new(0.0, 0.5).expect("valid");
    let mut m = DMatrix::zeros(n, 4);
    for r in 0..n {
        let age: f64 = age_d.sample(&mut rng);
        let w = bernoulli(&mut rng, sigmoid(0.3 * (age - 65.0)));
        let bp = TAU * w + 2.0 * (age - 65.0) / 5.0 + unit.sample(&mut rng);
        let prot = 0.9 * bp + 0.9 * w + half.sample(&mut rng);
        m[(r, 0)] = age;
        m[(r, 1)] = w;
        m[(r, 2)] = bp;
        m[(r, 3)] = prot;
    }
    let cols = ["Age", "W", "BP", "Proteinuria"];
    let dag = dag_from_edges(
        &cols,
        &[
            ("Age", "W"),
            ("Age", "BP"),
            ("W", "BP"),
            ("W", "Proteinuria"),
            ("BP", "Proteinuria"),
        ],
    )?;
    let ds = Dataset::new(names(&cols), m, "W", "BP")?;
    Ok((ds, SyntheticTruth::constant(dag, TAU, n)))
}

/// X1 -> W, X1 -> X2, X2 -> Y, W -> Y with effect 1.5.
pub fn generate_confounder_chain(n: usize, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    check_n(n)?;
    const TAU: f64 = 1.5;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let mut m = DMatrix::zeros(n, 4);
    for r in 0..n {
        let x1: f64 = unit.sample(&mut rng);
        let w = bernoulli(&mut rng, sigmoid(x1));
        let x2 = 0.8 * x1 + unit.sample(&mut rng);
        let y = TAU * w + x2 + unit.sample(&mut rng);
        m[(r, 0)] = x1;
        m[(r, 1)] = x2;
        m[(r, 2)] = w;
        m[(r, 3)] = y;
    }
    let cols = ["X1", "X2", "W", "Y"];
    let dag = dag_from_edges(&cols, &[("X1", "W"), ("X1", "X2"), ("X2", "Y"), ("W", "Y")])?;
    let ds = Dataset::new(names(&cols), m, "W", "Y")?;
    Ok((ds, SyntheticTruth::constant(dag, TAU, n)))
}

/// X confounds W and Y; C is a common effect of W and Y. Effect 1.0.
pub fn generate_collider_trap(n: usize, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    check_n(n)?;
    const TAU: f64 = 1.0;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let half = Normal::new(0.0, 0.5).expect("valid");
    let mut m = DMatrix::zeros(n, 4);
    for r in 0..n {
        let x: f64 = unit.sample(&mut rng);
        let w = bernoulli(&mut rng, sigmoid(x));
        let y = TAU * w + x + unit.sample(&mut rng);
        let c = w + y + half.sample(&mut rng);
        m[(r, 0)] = x;
        m[(r, 1)] = w;
        m[(r, 2)] = y;
        m[(r, 3)] = c;
    }
    let cols = ["X", "W", "Y", "C"];
    let dag = dag_from_edges(&cols, &[("X", "W"), ("X", "Y"), ("W", "Y"), ("W", "C"), ("Y", "C")])?;
    let ds = Dataset::new(names(&cols), m, "W", "Y")?;
    Ok((ds, SyntheticTruth::constant(dag, TAU, n)))
}

/// Orientation priors asserting every edge of `dag` with the given confidence.
pub fn priors_from_dag(dag: &CausalGraph, confidence: f64) -> FilePriors {
    dag.directed_edges()
        .into_iter()
        .map(|e| {
            let (a, b) = (dag.name(e.from), dag.name(e.to));
            (
                format!("{a}|{b}"),
                OrientationAnswer {
                    direction: Direction::AToB,
                    confidence,
                    rationale: format!("{a} precedes {b} in the generating process"),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sodium_truth_and_determinism() {
        let (a, ta) = generate_sodium(500, 7).unwrap();
        let (b, _) = generate_sodium(500, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.ate_true, 1.05);
        assert!(ta.tau_true.iter().all(|t| *t == 1.05));
        assert_eq!(a.names(), vec!["Age", "W", "BP", "Proteinuria"]);
        assert_eq!((a.treatment(), a.outcome()), ("W", "BP"));
        let (c, _) = generate_sodium(500, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn confounder_chain_dag_matches_fixture() {
        let (_, t) = generate_confounder_chain(200, 0).unwrap();
        let labels: Vec<String> = t
            .true_dag
            .directed_edges()
            .iter()
            .map(|e| t.true_dag.edge_label(e))
            .collect();
        let mut labels = labels;
        labels.sort();
        assert_eq!(labels, vec!["W->Y", "X1->W", "X1->X2", "X2->Y"]);
    }

    #[test]
    fn small_n_rejected() {
        assert!(generate_sodium(99, 0).is_err());
    }

    #[test]
    fn truth_file_round_trip() {
        let (_, t) = generate_collider_trap(150, 1).unwrap();
        let f = t.to_file();
        assert!(f.tau_true.is_none());
        let json = serde_json::to_value(&f).unwrap();
        assert_eq!(json["ate_true"], 1.0);
        let back: TruthFile = serde_json::from_value(json).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.tau_for(3), vec![1.0; 3]);
    }

    #[test]
    fn priors_cover_every_edge() {
        let (_, t) = generate_sodium(100, 0).unwrap();
        let p = priors_from_dag(&t.true_dag, 0.9);
        assert_eq!(p.len(), 5);
        assert_eq!(p["Age|W"].direction, Direction::AToB);
    }
}
