//! Conditional-independence tests.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

/// Columns with at most this many distinct integer values count as discrete.
pub const DISCRETE_MAX_LEVELS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CITestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    pub conditioning_set: Vec<usize>,
}

impl CITestResult {
    fn new(statistic: f64, p_value: f64, alpha: f64, s: &[usize]) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        CITestResult {
            statistic,
            p_value,
            independent: p_value > alpha,
            conditioning_set: s.to_vec(),
        }
    }
}

pub trait CiTest: Sync {
    fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CITestResult>;
}

/// Fisher-z test on the partial correlation of columns `i`, `j` given `s`.
pub fn fisher_z_test(
    data: &DMatrix<f64>,
    i: usize,
    j: usize,
    s: &[usize],
    alpha: f64,
) -> Result<CITestResult> {
    let mut cols = vec![i, j];
    cols.extend_from_slice(s);
    check_columns(data.ncols(), &cols)?;
    let corr = correlation(data, &cols);
    let idx: Vec<usize> = (0..cols.len()).collect();
    fisher_z_from_corr(&corr, data.nrows(), 0, 1, &idx[2..], alpha)
        .map(|mut r| {
            r.conditioning_set = s.to_vec();
            r
        })
}

fn check_columns(d: usize, cols: &[usize]) -> Result<()> {
    for (k, c) in cols.iter().enumerate() {
        if *c >= d {
            return Err(Error::InvalidInput(format!("column {c} out of range")));
        }
        if cols[..k].contains(c) {
            return Err(Error::VertexOverlap);
        }
    }
    Ok(())
}

/// Pearson correlation matrix of the selected columns.
pub fn correlation(data: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = data.nrows() as f64;
    let k = cols.len();
    let means: Vec<f64> = cols.iter().map(|&c| data.column(c).sum() / n).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (ca, cb) = (data.column(cols[a]), data.column(cols[b]));
            let s: f64 = ca
                .iter()
                .zip(cb.iter())
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    let mut corr = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            corr[(a, b)] = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
        }
    }
    corr
}

fn fisher_z_from_corr(
    corr: &DMatrix<f64>,
    n: usize,
    i: usize,
    j: usize,
    s: &[usize],
    alpha: f64,
) -> Result<CITestResult> {
    if n <= s.len() + 3 {
        return Err(Error::InsufficientSamples {
            n,
            needed: s.len() + 3,
        });
    }
    let r = partial_correlation(corr, i, j, s)?;
    let r = r.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
    let statistic = ((n - s.len() - 3) as f64).sqrt() * z.abs();
    let p_value = erfc(statistic / std::f64::consts::SQRT_2);
    Ok(CITestResult::new(statistic, p_value, alpha, s))
}

/// Partial correlation via the inverse of the correlation submatrix over `{i, j} ∪ s`.
fn partial_correlation(corr: &DMatrix<f64>, i: usize, j: usize, s: &[usize]) -> Result<f64> {
    let mut idx = vec![i, j];
    idx.extend_from_slice(s);
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| corr[(idx[a], idx[b])]);
    if sub.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    if s.is_empty() {
        return Ok(sub[(0, 1)]);
    }
    let eig = sub.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x.abs())));
    if lo <= 1e-10 * hi.max(1.0) {
        return Err(Error::SingularCovariance);
    }
    let p = sub.try_inverse().ok_or(Error::SingularCovariance)?;
    Ok(-p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt())
}

/// Fisher-z over a precomputed correlation matrix of all columns.
pub struct FisherZ {
    corr: DMatrix<f64>,
    n: usize,
}

impl FisherZ {
    pub fn new(data: &DMatrix<f64>) -> Self {
        let cols: Vec<usize> = (0..data.ncols()).collect();
        FisherZ {
            corr: correlation(data, &cols),
            n: data.nrows(),
        }
    }
}

impl CiTest for FisherZ {
    fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CITestResult> {
        fisher_z_from_corr(&self.corr, self.n, i, j, s, alpha)
    }
}

/// Pearson chi-squared test of `i ⊥ j` pooled over the strata of `s`.
pub struct ChiSquare {
    codes: Vec<Vec<u32>>,
}

impl ChiSquare {
    /// Columns are recoded to level indices; non-discrete columns are rejected.
    pub fn new(data: &DMatrix<f64>) -> Result<Self> {
        let codes = (0..data.ncols())
            .map(|c| {
                discrete_codes(data, c).ok_or_else(|| {
                    Error::InvalidInput(format!("column {c} is not discrete"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(ChiSquare { codes })
    }

    fn test_codes(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> CITestResult {
        let n = self.codes[i].len();
        let mut strata: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
        for row in 0..n {
            let key: Vec<u32> = s.iter().map(|&c| self.codes[c][row]).collect();
            strata.entry(key).or_default().push(row);
        }
        let mut stat = 0.0;
        let mut df = 0usize;
        for rows in strata.values() {
            let mut table: BTreeMap<(u32, u32), f64> = BTreeMap::new();
            let mut ri: BTreeMap<u32, f64> = BTreeMap::new();
            let mut cj: BTreeMap<u32, f64> = BTreeMap::new();
            for &r in rows {
                let (a, b) = (self.codes[i][r], self.codes[j][r]);
                *table.entry((a, b)).or_default() += 1.0;
                *ri.entry(a).or_default() += 1.0;
                *cj.entry(b).or_default() += 1.0;
            }
            if ri.len() < 2 || cj.len() < 2 {
                continue;
            }
            let total = rows.len() as f64;
            for (a, na) in &ri {
                for (b, nb) in &cj {
                    let expected = na * nb / total;
                    let observed = table.get(&(*a, *b)).copied().unwrap_or(0.0);
                    stat += (observed - expected).powi(2) / expected;
                }
            }
            df += (ri.len() - 1) * (cj.len() - 1);
        }
        let p = if df == 0 {
            1.0
        } else {
            ChiSquared::new(df as f64).map(|d| d.sf(stat)).unwrap_or(1.0)
        };
        CITestResult::new(stat, p, alpha, s)
    }
}

impl CiTest for ChiSquare {
    fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CITestResult> {
        Ok(self.test_codes(i, j, s, alpha))
    }
}

/// Level indices for a column with at most [`DISCRETE_MAX_LEVELS`] distinct integers.
pub fn discrete_codes(data: &DMatrix<f64>, c: usize) -> Option<Vec<u32>> {
    let mut levels: Vec<i64> = Vec::new();
    for &x in data.column(c).iter() {
        if x.fract() != 0.0 || !x.is_finite() {
            return None;
        }
        let v = x as i64;
        if !levels.contains(&v) {
            levels.push(v);
            if levels.len() > DISCRETE_MAX_LEVELS {
                return None;
            }
        }
    }
    levels.sort_unstable();
    Some(
        data.column(c)
            .iter()
            .map(|&x| levels.binary_search(&(x as i64)).expect("level present") as u32)
            .collect(),
    )
}

/// Chi-squared when every involved column is discrete, Fisher-z otherwise.
pub struct AutoTest {
    fisher: FisherZ,
    chi: Option<ChiSquare>,
    discrete: Vec<bool>,
    codes: Vec<Option<Vec<u32>>>,
}

impl AutoTest {
    pub fn new(data: &DMatrix<f64>) -> Self {
        let codes: Vec<Option<Vec<u32>>> = (0..data.ncols()).map(|c| discrete_codes(data, c)).collect();
        let discrete: Vec<bool> = codes.iter().map(Option::is_some).collect();
        AutoTest {
            fisher: FisherZ::new(data),
            chi: None,
            discrete,
            codes,
        }
        .with_chi()
    }

    fn with_chi(mut self) -> Self {
        if self.discrete.iter().any(|d| *d) {
            // non-discrete columns get a placeholder; they are never routed here
            let n = self.fisher.n;
            let codes = self
                .codes
                .iter()
                .map(|c| c.clone().unwrap_or_else(|| vec![0; n]))
                .collect();
            self.chi = Some(ChiSquare { codes });
        }
        self
    }

    pub fn is_discrete(&self, c: usize) -> bool {
        self.discrete[c]
    }
}

impl CiTest for AutoTest {
    fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CITestResult> {
        let all_discrete = [i, j].iter().chain(s).all(|&c| self.discrete[c]);
        match (&self.chi, all_discrete) {
            (Some(chi), true) => chi.test(i, j, s, alpha),
            _ => self.fisher.test(i, j, s, alpha),
        }
    }
}

/// Perfect CI oracle: d-separation in a known DAG.
pub struct DSeparationOracle<'a> {
    pub dag: &'a CausalGraph,
}

impl CiTest for DSeparationOracle<'_> {
    fn test(&self, i: usize, j: usize, s: &[usize], _alpha: f64) -> Result<CITestResult> {
        let sep = self.dag.d_separated(&[i], &[j], s)?;
        Ok(CITestResult {
            statistic: if sep { 0.0 } else { f64::INFINITY },
            p_value: if sep { 1.0 } else { 0.0 },
            independent: sep,
            conditioning_set: s.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rand_xoshiro::SplitMix64;

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut m = DMatrix::zeros(n, 2);
        for r in 0..n {
            let a: f64 = nd.sample(&mut rng);
            let b: f64 = nd.sample(&mut rng);
            m[(r, 0)] = a;
            m[(r, 1)] = rho * a + (1.0 - rho * rho).sqrt() * b;
        }
        m
    }

    #[test]
    fn uncorrelated_columns_give_zero_statistic() {
        // exactly orthogonal centred columns
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        let r = fisher_z_test(&data, 0, 1, &[], 0.999).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.independent);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_correlation_rejected() {
        let data = gaussian_pair(1000, 0.9, 3);
        let r = fisher_z_test(&data, 0, 1, &[], 0.05).unwrap();
        assert!(r.p_value < 1e-6);
        assert!(!r.independent);
    }

    #[test]
    fn conditional_independence_given_common_cause() {
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut accepted = 0;
        for seed in 0..100 {
            let mut rng = SplitMix64::seed_from_u64(1000 + seed);
            let n = 500;
            let mut m = DMatrix::zeros(n, 3);
            for r in 0..n {
                let z: f64 = nd.sample(&mut rng);
                m[(r, 2)] = z;
                m[(r, 0)] = 0.8 * z + nd.sample(&mut rng);
                m[(r, 1)] = -0.6 * z + nd.sample(&mut rng);
            }
            if fisher_z_test(&m, 0, 1, &[2], 0.05).unwrap().independent {
                accepted += 1;
            }
        }
        assert!(accepted >= 90, "accepted {accepted}");
    }

    #[test]
    fn error_paths() {
        let data = gaussian_pair(4, 0.3, 1);
        let three = DMatrix::from_fn(4, 3, |r, c| data[(r, c.min(1))]);
        assert!(matches!(
            fisher_z_test(&three, 0, 1, &[2], 0.05),
            Err(Error::InsufficientSamples { .. })
        ));
        // conditioning on a copy of column 0
        let data = gaussian_pair(50, 0.3, 2);
        let dup = DMatrix::from_fn(50, 3, |r, c| if c == 2 { data[(r, 0)] } else { data[(r, c)] });
        assert!(matches!(
            fisher_z_test(&dup, 0, 1, &[2], 0.05),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn chi_square_detects_dependence() {
        let mut rows = Vec::new();
        for k in 0..400 {
            let a = (k % 2) as f64;
            let b = if k % 5 == 0 { 1.0 - a } else { a };
            rows.extend_from_slice(&[a, b, (k % 3) as f64]);
        }
        let data = DMatrix::from_row_slice(400, 3, &rows);
        let t = ChiSquare::new(&data).unwrap();
        assert!(!t.test(0, 1, &[], 0.05).unwrap().independent);
        assert!(t.test(0, 2, &[], 0.05).unwrap().independent);
        let auto = AutoTest::new(&data);
        assert!(auto.is_discrete(0));
        assert_eq!(
            auto.test(0, 1, &[2], 0.05).unwrap(),
            t.test(0, 1, &[2], 0.05).unwrap()
        );
    }
}
