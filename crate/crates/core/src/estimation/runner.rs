//! Estimator plugins and the multi-seed runner that aggregates their effects.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learner::{BaseLearner, DEFAULT_RIDGE_LAMBDA};
use super::meta::{s_learner_on, t_learner_on, x_learner_on, DEFAULT_TRIM};
use crate::error::{Error, Result};
use crate::options::{opt_bool, opt_f64, opt_str, Options};

pub const DEFAULT_N_RUNS: usize = 10;

pub trait EstimatorPlugin: Send + Sync {
    fn name(&self) -> &str;

    /// Per-row effect estimates for one seed.
    fn estimate_once(
        &self,
        y: &DVector<f64>,
        t: &DVector<f64>,
        x: &DMatrix<f64>,
        seed: u64,
        options: &Options,
    ) -> Result<DVector<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub ate_mean: f64,
    pub ate_std: f64,
    pub pehe_mean: Option<f64>,
    pub pehe_std: Option<f64>,
    pub n_runs: usize,
    pub per_run_ate: Vec<f64>,
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Runs seeds `0..n_runs` (in parallel), reporting in seed order. The first
/// failing seed aborts the run.
pub fn run_estimator(
    plugin: &dyn EstimatorPlugin,
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    n_runs: usize,
    tau_true: Option<&[f64]>,
    options: &Options,
) -> Result<EstimationResult> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    for len in [t.len(), x.nrows()] {
        if len != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: len,
            });
        }
    }
    if let Some(tt) = tau_true {
        if tt.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: tt.len(),
            });
        }
    }
    let runs: Vec<Result<(f64, Option<f64>)>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|seed| {
            let tau = plugin
                .estimate_once(y, t, x, seed, options)
                .map_err(|e| Error::EstimatorRun {
                    seed,
                    source: Box::new(e),
                })?;
            if tau.len() != y.len() {
                return Err(Error::EstimatorRun {
                    seed,
                    source: Box::new(Error::DimensionMismatch {
                        expected: y.len(),
                        got: tau.len(),
                    }),
                });
            }
            let ate = tau.mean();
            let pehe = tau_true.map(|tt| {
                (tau.iter().zip(tt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tt.len() as f64).sqrt()
            });
            Ok((ate, pehe))
        })
        .collect();
    let mut ates = Vec::with_capacity(n_runs);
    let mut pehes = Vec::with_capacity(n_runs);
    for r in runs {
        let (a, p) = r?;
        ates.push(a);
        if let Some(p) = p {
            pehes.push(p);
        }
    }
    let (ate_mean, ate_std) = mean_std(&ates);
    let (pehe_mean, pehe_std) = if tau_true.is_some() {
        let (m, s) = mean_std(&pehes);
        (Some(round4(m)), Some(round4(s)))
    } else {
        (None, None)
    };
    Ok(EstimationResult {
        ate_mean: round4(ate_mean),
        ate_std: round4(ate_std),
        pehe_mean,
        pehe_std,
        n_runs,
        per_run_ate: ates,
    })
}

#[derive(Clone, Default)]
pub struct EstimatorRegistry {
    plugins: BTreeMap<String, Arc<dyn EstimatorPlugin>>,
}

impl EstimatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        for kind in [MetaKind::S, MetaKind::T, MetaKind::X] {
            r.register(Arc::new(MetaLearnerPlugin { kind })).expect("fresh registry");
        }
        r
    }

    pub fn register(&mut self, plugin: Arc<dyn EstimatorPlugin>) -> Result<()> {
        let name = plugin.name().to_string();
        if name.is_empty() {
            return Err(Error::InvalidInput("plugin name must be nonempty".into()));
        }
        if self.plugins.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.plugins.insert(name, plugin);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn EstimatorPlugin>> {
        self.plugins
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownPlugin(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.plugins.keys().cloned().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaKind {
    S,
    T,
    X,
}

/// `s_learner`, `t_learner`, `x_learner`. Each seed fits on a bootstrap
/// resample of the rows and predicts on the original rows.
///
/// Options: `learner` (`ols` | `ridge`, default `ridge`), `lambda`
/// (default 1e-6), `bootstrap` (default true).
pub struct MetaLearnerPlugin {
    pub kind: MetaKind,
}

pub fn learner_from_options(options: &Options) -> Result<BaseLearner> {
    match opt_str(options, "learner")?.unwrap_or("ridge") {
        "ols" => Ok(BaseLearner::Ols),
        "ridge" => {
            let lambda = opt_f64(options, "lambda", DEFAULT_RIDGE_LAMBDA)?;
            if !(lambda >= 0.0) {
                return Err(Error::InvalidInput("lambda must be non-negative".into()));
            }
            Ok(BaseLearner::Ridge { lambda })
        }
        other => Err(Error::InvalidInput(format!(
            "learner `{other}` is not an outcome model (use ols or ridge)"
        ))),
    }
}

pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

impl EstimatorPlugin for MetaLearnerPlugin {
    fn name(&self) -> &str {
        match self.kind {
            MetaKind::S => "s_learner",
            MetaKind::T => "t_learner",
            MetaKind::X => "x_learner",
        }
    }

    fn estimate_once(
        &self,
        y: &DVector<f64>,
        t: &DVector<f64>,
        x: &DMatrix<f64>,
        seed: u64,
        options: &Options,
    ) -> Result<DVector<f64>> {
        let learner = learner_from_options(options)?;
        let (yb, tb, xb) = if opt_bool(options, "bootstrap", true)? {
            let idx = bootstrap_indices(y.len(), seed);
            (y.select_rows(&idx), t.select_rows(&idx), x.select_rows(&idx))
        } else {
            (y.clone(), t.clone(), x.clone())
        };
        match self.kind {
            MetaKind::S => s_learner_on(&yb, &tb, &xb, x, &learner),
            MetaKind::T => t_learner_on(&yb, &tb, &xb, x, &learner),
            MetaKind::X => x_learner_on(&yb, &tb, &xb, x, &learner, &BaseLearner::Logistic, DEFAULT_TRIM)
                .map(|f| DVector::from_vec(f.tau)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);
    impl EstimatorPlugin for Constant {
        fn name(&self) -> &str {
            "const"
        }
        fn estimate_once(&self, y: &DVector<f64>, _: &DVector<f64>, _: &DMatrix<f64>, _: u64, _: &Options) -> Result<DVector<f64>> {
            Ok(DVector::from_element(y.len(), self.0))
        }
    }

    struct SeedValued;
    impl EstimatorPlugin for SeedValued {
        fn name(&self) -> &str {
            "seed"
        }
        fn estimate_once(&self, y: &DVector<f64>, _: &DVector<f64>, _: &DMatrix<f64>, seed: u64, _: &Options) -> Result<DVector<f64>> {
            if seed == 99 {
                return Err(Error::SingularDesign);
            }
            Ok(DVector::from_element(y.len(), seed as f64))
        }
    }

    fn inputs(n: usize) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        (
            DVector::from_fn(n, |r, _| r as f64),
            DVector::from_fn(n, |r, _| (r % 2) as f64),
            DMatrix::zeros(n, 0),
        )
    }

    #[test]
    fn constant_plugin() {
        let (y, t, x) = inputs(5);
        let r = run_estimator(&Constant(1.25), &y, &t, &x, 10, None, &Options::new()).unwrap();
        assert_eq!(r.ate_mean, 1.25);
        assert_eq!(r.ate_std, 0.0);
        assert_eq!(r.pehe_mean, None);
        assert_eq!(r.pehe_std, None);
        let tt = vec![1.25; 5];
        let r = run_estimator(&Constant(1.25), &y, &t, &x, 1, Some(&tt), &Options::new()).unwrap();
        assert_eq!(r.pehe_mean, Some(0.0));
        assert_eq!(r.ate_std, 0.0);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["pehe_std"].is_number());
        let none = run_estimator(&Constant(1.0), &y, &t, &x, 1, None, &Options::new()).unwrap();
        assert!(serde_json::to_value(&none).unwrap()["pehe_mean"].is_null());
    }

    #[test]
    fn seed_valued_plugin_population_std() {
        let (y, t, x) = inputs(3);
        let r = run_estimator(&SeedValued, &y, &t, &x, 10, None, &Options::new()).unwrap();
        assert_eq!(r.ate_mean, 4.5);
        assert_eq!(r.ate_std, 2.8723);
        assert_eq!(r.per_run_ate, (0..10).map(|s| s as f64).collect::<Vec<_>>());
    }

    #[test]
    fn failing_seed_reported() {
        let (y, t, x) = inputs(3);
        match run_estimator(&SeedValued, &y, &t, &x, 100, None, &Options::new()) {
            Err(Error::EstimatorRun { seed, .. }) => assert_eq!(seed, 99),
            other => panic!("{other:?}"),
        }
        assert!(run_estimator(&SeedValued, &y, &t, &x, 0, None, &Options::new()).is_err());
    }

    #[test]
    fn registry() {
        let mut r = EstimatorRegistry::with_builtins();
        assert_eq!(r.names(), vec!["s_learner", "t_learner", "x_learner"]);
        assert!(matches!(r.get("bart"), Err(Error::UnknownPlugin(_))));
        assert!(matches!(
            r.register(Arc::new(MetaLearnerPlugin { kind: MetaKind::S })),
            Err(Error::DuplicateName(_))
        ));
    }

    #[test]
    fn rounding() {
        assert_eq!(round4(1.23456), 1.2346);
        assert_eq!(round4(round4(0.98765)), round4(0.98765));
    }
}
