//! Overlap diagnostics on fitted propensities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::learner::BaseLearner;
use super::meta::split_arms;

pub const HISTOGRAM_BINS: usize = 10;
/// Share of propensities outside the trim bounds above which overlap is flagged.
pub const VIOLATION_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub trim: (f64, f64),
    /// Counts over `[0, 1]` in equal-width bins.
    pub histogram: Vec<usize>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub fraction_outside: f64,
    pub violated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Diagnostic only; failures are reported in the result rather than raised.
pub fn positivity_check(t: &DVector<f64>, x: &DMatrix<f64>, trim: (f64, f64)) -> PositivityReport {
    let (lo, hi) = trim;
    let empty = |note: String| PositivityReport {
        trim,
        histogram: vec![0; HISTOGRAM_BINS],
        min: None,
        max: None,
        mean: None,
        fraction_outside: 1.0,
        violated: true,
        note: Some(note),
    };
    if let Err(e) = split_arms(t) {
        return empty(format!("{}: {e}", e.code().as_str()));
    }
    let g = match BaseLearner::Logistic.fit(x, t) {
        Ok(m) => m.predict(x),
        Err(e) => return empty(format!("propensity model failed: {e}")),
    };
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for p in g.iter() {
        let b = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[b] += 1;
    }
    let outside = g.iter().filter(|p| **p < lo || **p > hi).count();
    let fraction_outside = outside as f64 / g.len() as f64;
    PositivityReport {
        trim,
        histogram,
        min: Some(g.min()),
        max: Some(g.max()),
        mean: Some(g.mean()),
        fraction_outside,
        violated: fraction_outside > VIOLATION_FRACTION,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::meta::DEFAULT_TRIM;
    use rand::{Rng, SeedableRng};

    #[test]
    fn randomized_assignment_has_overlap() {
        let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(0);
        let n = 2000;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let t = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
        let r = positivity_check(&t, &x, DEFAULT_TRIM);
        assert!(!r.violated);
        assert_eq!(r.fraction_outside, 0.0);
        assert_eq!(r.histogram.iter().sum::<usize>(), n);
    }

    #[test]
    fn deterministic_assignment_violates() {
        let n = 1000;
        let x = DMatrix::from_fn(n, 1, |r, _| r as f64 / n as f64 - 0.5);
        let t = DVector::from_fn(n, |r, _| if x[(r, 0)] > 0.0 { 1.0 } else { 0.0 });
        let r = positivity_check(&t, &x, DEFAULT_TRIM);
        assert!(r.violated);
        assert!(r.fraction_outside > 0.5);
    }

    #[test]
    fn no_controls_reported() {
        let x = DMatrix::zeros(10, 1);
        let t = DVector::from_element(10, 1.0);
        let r = positivity_check(&t, &x, DEFAULT_TRIM);
        assert!(r.violated);
        assert!(r.note.unwrap().contains("DegenerateTreatment"));
    }
}
