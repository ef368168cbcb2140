//! DirectLiNGAM: causal ordering of linear non-Gaussian models by repeatedly
//! picking the most exogenous variable, followed by regression on the
//! ordering and thresholding of standardized coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ci::discrete_codes;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, EdgeMeta};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;
/// Residuals whose Jarque–Bera p-value exceeds this look Gaussian.
const GAUSSIAN_P: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LingamFit {
    pub graph: CausalGraph,
    pub causal_order: Vec<usize>,
    /// `coefficients[(i, j)]` is the effect of column `j` on column `i`.
    pub coefficients: Vec<Vec<f64>>,
    /// Columns whose final residuals are indistinguishable from Gaussian noise.
    pub gaussian_residuals: Vec<usize>,
    /// Set when two or more residuals look Gaussian; the ordering is then not identified.
    pub low_identifiability: bool,
}

pub fn direct_lingam<S: AsRef<str>>(data: &DMatrix<f64>, names: &[S]) -> Result<LingamFit> {
    direct_lingam_with(data, names, DEFAULT_PRUNE_THRESHOLD)
}

pub fn direct_lingam_with<S: AsRef<str>>(
    data: &DMatrix<f64>,
    names: &[S],
    prune_threshold: f64,
) -> Result<LingamFit> {
    let (n, d) = data.shape();
    if names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: names.len(),
        });
    }
    if n < 100 {
        return Err(Error::InsufficientSamples { n, needed: 99 });
    }
    for c in 0..d {
        if discrete_codes(data, c).is_some() {
            return Err(Error::NonContinuousData(names[c].as_ref().to_string()));
        }
    }

    let order = causal_order(data);
    let mut graph = CausalGraph::empty(&names.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>())?;
    let mut coefficients = vec![vec![0.0; d]; d];
    let mut gaussian_residuals = Vec::new();
    let sd: Vec<f64> = (0..d).map(|c| std_dev(&data.column(c).into_owned())).collect();

    for (pos, &target) in order.iter().enumerate() {
        let preds = &order[..pos];
        let y = data.column(target).into_owned();
        let mut parents: Vec<usize> = Vec::new();
        if !preds.is_empty() {
            let beta = ols(data, preds, &y)?;
            parents = preds
                .iter()
                .zip(beta.iter())
                .filter(|(&p, &b)| (b * sd[p] / sd[target]).abs() >= prune_threshold)
                .map(|(&p, _)| p)
                .collect();
        }
        let resid = if parents.is_empty() {
            let m = y.mean();
            y.map(|v| v - m)
        } else {
            let beta = ols(data, &parents, &y)?;
            for (&p, &b) in parents.iter().zip(beta.iter()) {
                coefficients[target][p] = b;
                graph.set_directed(p, target, Some(EdgeMeta::statistical()));
            }
            residuals(data, &parents, &y, &beta)
        };
        if jarque_bera_p(&resid) > GAUSSIAN_P {
            gaussian_residuals.push(target);
        }
    }
    gaussian_residuals.sort_unstable();
    let low_identifiability = gaussian_residuals.len() >= 2;
    Ok(LingamFit {
        graph,
        causal_order: order,
        coefficients,
        gaussian_residuals,
        low_identifiability,
    })
}

fn causal_order(data: &DMatrix<f64>) -> Vec<usize> {
    let d = data.ncols();
    let mut x: Vec<DVector<f64>> = (0..d).map(|c| data.column(c).into_owned()).collect();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    while !remaining.is_empty() {
        let m = if remaining.len() == 1 {
            remaining[0]
        } else {
            let std: Vec<(usize, DVector<f64>)> = remaining.iter().map(|&i| (i, standardize(&x[i]))).collect();
            let mut best = (f64::INFINITY, remaining[0]);
            for (i, xi) in &std {
                let mut score = 0.0;
                for (j, xj) in &std {
                    if i == j {
                        continue;
                    }
                    let d = diff_mutual_info(xi, xj);
                    score += d.min(0.0).powi(2);
                }
                if score < best.0 {
                    best = (score, *i);
                }
            }
            best.1
        };
        let xm = x[m].clone();
        for &i in &remaining {
            if i != m {
                x[i] = residual_on(&x[i], &xm);
            }
        }
        remaining.retain(|&i| i != m);
        order.push(m);
    }
    order
}

fn mean(v: &DVector<f64>) -> f64 {
    v.sum() / v.len() as f64
}

fn std_dev(v: &DVector<f64>) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn standardize(v: &DVector<f64>) -> DVector<f64> {
    let m = mean(v);
    let s = std_dev(v).max(f64::MIN_POSITIVE);
    v.map(|x| (x - m) / s)
}

/// Residual of `xi` after simple regression on `xj`.
fn residual_on(xi: &DVector<f64>, xj: &DVector<f64>) -> DVector<f64> {
    let (mi, mj) = (mean(xi), mean(xj));
    let cov: f64 = xi.iter().zip(xj.iter()).map(|(a, b)| (a - mi) * (b - mj)).sum();
    let var: f64 = xj.iter().map(|b| (b - mj).powi(2)).sum();
    let beta = if var > 0.0 { cov / var } else { 0.0 };
    DVector::from_iterator(xi.len(), xi.iter().zip(xj.iter()).map(|(a, b)| a - beta * b))
}

/// Maximum-entropy approximation of differential entropy for a standardized variable.
fn entropy(u: &DVector<f64>) -> f64 {
    const K1: f64 = 79.047;
    const K2: f64 = 7.4129;
    const GAMMA: f64 = 0.37457;
    let n = u.len() as f64;
    let log_cosh = u.iter().map(|x| log_cosh(*x)).sum::<f64>() / n;
    let gauss = u.iter().map(|x| x * (-x * x / 2.0).exp()).sum::<f64>() / n;
    (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0 - K1 * (log_cosh - GAMMA).powi(2) - K2 * gauss.powi(2)
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Likelihood-ratio difference of mutual information; negative when `xj`
/// looks like a cause of `xi` rather than the other way around.
fn diff_mutual_info(xi: &DVector<f64>, xj: &DVector<f64>) -> f64 {
    let ri_j = residual_on(xi, xj);
    let rj_i = residual_on(xj, xi);
    (entropy(xj) + entropy(&standardize(&ri_j))) - (entropy(xi) + entropy(&standardize(&rj_i)))
}

fn design(data: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(data.nrows(), cols.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            data[(r, cols[c - 1])]
        }
    })
}

/// Slope coefficients (intercept dropped) of `y` on the given columns.
fn ols(data: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>) -> Result<Vec<f64>> {
    let x = design(data, cols);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let beta = xtx
        .cholesky()
        .ok_or(Error::SingularDesign)?
        .solve(&xty);
    Ok(beta.iter().skip(1).copied().collect())
}

fn residuals(data: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>, slopes: &[f64]) -> DVector<f64> {
    let fitted = DVector::from_fn(data.nrows(), |r, _| {
        cols.iter().zip(slopes).map(|(&c, b)| b * data[(r, c)]).sum::<f64>()
    });
    let raw = y - fitted;
    let m = mean(&raw);
    raw.map(|v| v - m)
}

fn jarque_bera_p(resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let m = mean(resid);
    let m2 = resid.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let m3 = resid.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = resid.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    ChiSquared::new(2.0).map(|c| c.sf(jb)).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, Uniform};
    use rand_xoshiro::SplitMix64;

    #[test]
    fn recovers_direction_and_coefficient() {
        let mut rng = SplitMix64::seed_from_u64(5);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let n = 2000;
        let mut m = DMatrix::zeros(n, 2);
        for r in 0..n {
            let x: f64 = u.sample(&mut rng);
            let e: f64 = u.sample(&mut rng);
            // Y first so the ordering is not just index order
            m[(r, 0)] = 2.0 * x + e;
            m[(r, 1)] = x;
        }
        let fit = direct_lingam(&m, &["Y", "X"]).unwrap();
        assert_eq!(fit.causal_order, vec![1, 0]);
        assert!(fit.graph.has_directed(1, 0));
        assert!((fit.coefficients[0][1] - 2.0).abs() < 0.05);
        assert!(!fit.low_identifiability);
        assert!(fit.graph.is_acyclic());
    }

    #[test]
    fn single_column_is_edgeless() {
        let m = DMatrix::from_fn(200, 1, |r, _| (r as f64 * 0.37).sin());
        let fit = direct_lingam(&m, &["A"]).unwrap();
        assert!(fit.graph.edges().is_empty());
        assert_eq!(fit.causal_order, vec![0]);
    }

    #[test]
    fn gaussian_data_flags_low_identifiability() {
        let mut rng = SplitMix64::seed_from_u64(8);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let n = 2000;
        let mut m = DMatrix::zeros(n, 3);
        for r in 0..n {
            let a: f64 = nd.sample(&mut rng);
            let b = 0.8 * a + nd.sample(&mut rng);
            let c = -0.5 * b + nd.sample(&mut rng);
            m[(r, 0)] = a;
            m[(r, 1)] = b;
            m[(r, 2)] = c;
        }
        let fit = direct_lingam(&m, &["A", "B", "C"]).unwrap();
        assert!(fit.low_identifiability);
        assert!(fit.graph.is_acyclic());
        assert!(fit.graph.is_fully_directed());
    }

    #[test]
    fn rejects_discrete_and_small_inputs() {
        let m = DMatrix::from_fn(200, 2, |r, c| if c == 0 { (r % 2) as f64 } else { r as f64 * 0.1 });
        assert!(matches!(
            direct_lingam(&m, &["T", "X"]),
            Err(Error::NonContinuousData(_))
        ));
        let m = DMatrix::from_fn(50, 2, |r, c| (r * (c + 1)) as f64 * 0.013);
        assert!(matches!(
            direct_lingam(&m, &["A", "B"]),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
