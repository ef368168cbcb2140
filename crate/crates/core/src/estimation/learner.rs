//! Base regression models: OLS, ridge and logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
const LOGISTIC_TOL: f64 = 1e-8;
const LOGISTIC_MAX_ITER: usize = 100;
/// Penalty applied to logistic slopes so separated data keeps finite parameters.
const LOGISTIC_FLOOR: f64 = 1e-6;
/// Relative singular-value cutoff for declaring an OLS design rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLearner {
    Ols,
    Ridge { lambda: f64 },
    Logistic,
}

impl Default for BaseLearner {
    fn default() -> Self {
        BaseLearner::Ridge {
            lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

impl BaseLearner {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(BaseLearner::Ols),
            "ridge" => Ok(BaseLearner::default()),
            "logistic" => Ok(BaseLearner::Logistic),
            other => Err(Error::InvalidInput(format!("unknown learner `{other}`"))),
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::InsufficientSamples { n: 0, needed: 1 });
        }
        match *self {
            BaseLearner::Ols => fit_linear(x, y, None),
            BaseLearner::Ridge { lambda } => {
                if !(lambda >= 0.0) {
                    return Err(Error::InvalidInput("ridge lambda must be non-negative".into()));
                }
                fit_linear(x, y, Some(lambda))
            }
            BaseLearner::Logistic => fit_logistic(x, y),
        }
    }
}

/// Linear or logistic model; `predict` returns the mean response (a
/// probability for logistic models).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub logistic: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |r, _| {
            self.intercept + self.coef.iter().enumerate().map(|(c, b)| b * x[(r, c)]).sum::<f64>()
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let eta = self.linear_predictor(x);
        if self.logistic {
            eta.map(sigmoid)
        } else {
            eta
        }
    }
}

pub fn fit_predict(learner: &BaseLearner, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
    learner.fit(x, y)
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols()).map(|c| x.column(c).sum() / n).collect()
}

/// Slopes on centered data so the intercept is never penalized.
fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, lambda: Option<f64>) -> Result<FittedModel> {
    let p = x.ncols();
    let mx = column_means(x);
    let my = y.mean();
    if p == 0 {
        return Ok(FittedModel {
            intercept: my,
            coef: Vec::new(),
            logistic: false,
            iterations: 0,
        });
    }
    let xc = DMatrix::from_fn(x.nrows(), p, |r, c| x[(r, c)] - mx[c]);
    let yc = y.map(|v| v - my);
    let beta = match lambda {
        None => {
            let svd = xc.clone().svd(true, true);
            let smax = svd.singular_values.max();
            if smax == 0.0 || svd.singular_values.min() <= RANK_TOL * smax {
                return Err(Error::SingularDesign);
            }
            svd.solve(&yc, 0.0).map_err(|_| Error::SingularDesign)?
        }
        Some(l) => {
            let mut a = xc.transpose() * &xc;
            for i in 0..p {
                a[(i, i)] += l;
            }
            let b = xc.transpose() * &yc;
            match a.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                None => a
                    .svd(true, true)
                    .solve(&b, 1e-12)
                    .map_err(|e| Error::Internal(e.to_string()))?,
            }
        }
    };
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = my - coef.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
    Ok(FittedModel {
        intercept,
        coef,
        logistic: false,
        iterations: 0,
    })
}

fn penalized_loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let ll: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(e, yi)| yi * e - softplus(*e))
        .sum();
    ll - 0.5 * LOGISTIC_FLOOR * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Newton–Raphson (IRLS) with step halving on the penalized log-likelihood.
fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::InvalidInput("logistic regression needs a 0/1 target".into()));
    }
    let (n, p) = x.shape();
    let design = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] });
    let mut beta = DVector::zeros(p + 1);
    let mut ll = penalized_loglik(&design, y, &beta);
    let mut iterations = 0;
    for it in 0..LOGISTIC_MAX_ITER {
        iterations = it + 1;
        let mu = (&design * &beta).map(sigmoid);
        let mut grad = design.transpose() * (y - &mu);
        for k in 1..=p {
            grad[k] -= LOGISTIC_FLOOR * beta[k];
        }
        if grad.norm() < LOGISTIC_TOL {
            break;
        }
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let weighted = DMatrix::from_fn(n, p + 1, |r, c| design[(r, c)] * w[r]);
        let mut h = design.transpose() * weighted;
        for k in 1..=p {
            h[(k, k)] += LOGISTIC_FLOOR;
        }
        h[(0, 0)] += 1e-12;
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => h
                .svd(true, true)
                .solve(&grad, 1e-12)
                .map_err(|e| Error::Internal(e.to_string()))?,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &beta + t * &step;
            let cand_ll = penalized_loglik(&design, y, &cand);
            if cand_ll.is_finite() && cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Internal("logistic fit diverged".into()));
    }
    Ok(FittedModel {
        intercept: beta[0],
        coef: beta.iter().skip(1).copied().collect(),
        logistic: true,
        iterations,
    })
}
