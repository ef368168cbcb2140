//! Meta-learners built on a [`BaseLearner`]: S-, T- and X-learner, plus the
//! plain regression-adjustment ATE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::learner::BaseLearner;
use crate::datasets::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_TRIM: (f64, f64) = (0.01, 0.99);

/// Validates a 0/1 treatment vector and returns the (control, treated) row indices.
pub fn split_arms(t: &DVector<f64>) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut controls = Vec::new();
    let mut treated = Vec::new();
    for (i, v) in t.iter().enumerate() {
        match *v {
            0.0 => controls.push(i),
            1.0 => treated.push(i),
            _ => return Err(Error::TreatmentNotBinary(format!("value {v} at row {i}"))),
        }
    }
    if controls.is_empty() || treated.is_empty() {
        return Err(Error::DegenerateTreatment(format!(
            "{} treated, {} control rows",
            treated.len(),
            controls.len()
        )));
    }
    Ok((controls, treated))
}

fn check_shapes(y: &DVector<f64>, t: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    for len in [t.len(), x.nrows()] {
        if len != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: len,
            });
        }
    }
    Ok(())
}

fn with_treatment(x: &DMatrix<f64>, t: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let p = x.ncols();
    DMatrix::from_fn(x.nrows(), p + 1, |r, c| if c < p { x[(r, c)] } else { t(r) })
}

/// One model on `(X, T)`; `tau_i = mu(x_i, 1) - mu(x_i, 0)`.
pub fn s_learner(y: &DVector<f64>, t: &DVector<f64>, x: &DMatrix<f64>, learner: &BaseLearner) -> Result<DVector<f64>> {
    s_learner_on(y, t, x, x, learner)
}

/// S-learner fitted on `(y, t, x)` and evaluated at the rows of `x_eval`.
pub fn s_learner_on(
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    x_eval: &DMatrix<f64>,
    learner: &BaseLearner,
) -> Result<DVector<f64>> {
    check_shapes(y, t, x)?;
    split_arms(t)?;
    let model = learner.fit(&with_treatment(x, |r| t[r]), y)?;
    let mu1 = model.predict(&with_treatment(x_eval, |_| 1.0));
    let mu0 = model.predict(&with_treatment(x_eval, |_| 0.0));
    Ok(mu1 - mu0)
}

/// Separate models per arm; `tau_i = mu1(x_i) - mu0(x_i)`.
pub fn t_learner(y: &DVector<f64>, t: &DVector<f64>, x: &DMatrix<f64>, learner: &BaseLearner) -> Result<DVector<f64>> {
    t_learner_on(y, t, x, x, learner)
}

pub fn t_learner_on(
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    x_eval: &DMatrix<f64>,
    learner: &BaseLearner,
) -> Result<DVector<f64>> {
    check_shapes(y, t, x)?;
    let (c, tr) = split_arms(t)?;
    let m0 = learner.fit(&x.select_rows(&c), &y.select_rows(&c))?;
    let m1 = learner.fit(&x.select_rows(&tr), &y.select_rows(&tr))?;
    Ok(m1.predict(x_eval) - m0.predict(x_eval))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XLearnerFit {
    pub tau: Vec<f64>,
    /// Second-stage effect model fitted on controls.
    pub tau0: Vec<f64>,
    /// Second-stage effect model fitted on treated rows.
    pub tau1: Vec<f64>,
    /// Propensities after clipping to the trim bounds.
    pub propensity: Vec<f64>,
}

pub fn x_learner(
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    learner: &BaseLearner,
    propensity_learner: &BaseLearner,
) -> Result<DVector<f64>> {
    x_learner_on(y, t, x, x, learner, propensity_learner, DEFAULT_TRIM).map(|f| DVector::from_vec(f.tau))
}

pub fn x_learner_on(
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    x_eval: &DMatrix<f64>,
    learner: &BaseLearner,
    propensity_learner: &BaseLearner,
    trim: (f64, f64),
) -> Result<XLearnerFit> {
    check_shapes(y, t, x)?;
    split_arms(t)?;
    let g = propensity_learner.fit(x, t)?.predict(x_eval);
    x_learner_with_propensity(y, t, x, x_eval, learner, &g, trim)
}

/// X-learner with caller-supplied propensities `g` over the rows of `x_eval`.
pub fn x_learner_with_propensity(
    y: &DVector<f64>,
    t: &DVector<f64>,
    x: &DMatrix<f64>,
    x_eval: &DMatrix<f64>,
    learner: &BaseLearner,
    g: &DVector<f64>,
    trim: (f64, f64),
) -> Result<XLearnerFit> {
    check_shapes(y, t, x)?;
    let (c, tr) = split_arms(t)?;
    let (lo, hi) = trim;
    if g.len() != x_eval.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_eval.nrows(),
            got: g.len(),
        });
    }
    if g.iter().all(|p| *p < lo || *p > hi) {
        return Err(Error::PropensityDegenerate);
    }
    let xc = x.select_rows(&c);
    let xt = x.select_rows(&tr);
    let m0 = learner.fit(&xc, &y.select_rows(&c))?;
    let m1 = learner.fit(&xt, &y.select_rows(&tr))?;
    let d1 = y.select_rows(&tr) - m0.predict(&xt);
    let d0 = m1.predict(&xc) - y.select_rows(&c);
    let tau1 = learner.fit(&xt, &d1)?.predict(x_eval);
    let tau0 = learner.fit(&xc, &d0)?.predict(x_eval);
    let gc = g.map(|p| p.clamp(lo, hi));
    let tau = DVector::from_fn(x_eval.nrows(), |i, _| gc[i] * tau0[i] + (1.0 - gc[i]) * tau1[i]);
    Ok(XLearnerFit {
        tau: tau.iter().copied().collect(),
        tau0: tau0.iter().copied().collect(),
        tau1: tau1.iter().copied().collect(),
        propensity: gc.iter().copied().collect(),
    })
}

/// `mean_i [mu(1, z_i) - mu(0, z_i)]` with a single outcome model on `(Z, W)`.
pub fn ate_by_adjustment<S: AsRef<str>>(
    ds: &Dataset,
    w_col: &str,
    y_col: &str,
    z: &[S],
    learner: &BaseLearner,
) -> Result<f64> {
    let mut wanted: Vec<&str> = vec![w_col, y_col];
    wanted.extend(z.iter().map(|s| s.as_ref()));
    ds.indices_of(&wanted)?;
    if z.iter().any(|s| s.as_ref() == w_col || s.as_ref() == y_col) {
        return Err(Error::InvalidZ("adjustment set contains treatment or outcome".into()));
    }
    let y = ds.column(y_col)?;
    let t = ds.column(w_col)?;
    let x = ds.select(z)?;
    Ok(s_learner(&y, &t, &x, learner)?.mean())
}
