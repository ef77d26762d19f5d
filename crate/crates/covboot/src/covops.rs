//! Empirical covariance operators and CUSUM paths.
//!
//! All estimators center at sample means and return kernels on the grid:
//!
//! * covariance        `(1/n) sum_i (X_i - Xbar) (x) (X_i - Xbar)`
//! * autocovariance    `(1/(n-k)) sum_i (X_i - Xbar) (x) (X_{i+k} - Xbar)`
//! * cross-covariance  `(1/n) sum_i (X_i - Xbar) (x) (Y_i - Ybar)`
//!
//! The CUSUM path compares prefix covariances to the full-sample one,
//! D_j = (j/sqrt(n)) (Vhat_j - Vhat_n), which is the bridge of the partial
//! sum process: the population operator cancels from the difference. The
//! path is built in one sweep from running first and second tensor sums,
//! O(n m^2) total instead of O(n^2 m^2) for recomputing every prefix.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fspace::{FunctionalObservation, FunctionalSeries, HSOperator};

/// An empirical covariance operator together with its sample size and mean.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    op: HSOperator,
    n: usize,
    mean: FunctionalObservation,
}

impl CovarianceEstimate {
    pub fn operator(&self) -> &HSOperator {
        &self.op
    }

    pub fn into_operator(self) -> HSOperator {
        self.op
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &FunctionalObservation {
        &self.mean
    }
}

/// Center all rows of a series at its full-sample mean; returns (mean, rows).
fn centered_rows(series: &FunctionalSeries) -> (FunctionalObservation, Vec<Vec<f64>>) {
    let mean = series.mean();
    let mv = mean.values().to_vec();
    let rows = series
        .rows()
        .map(|r| r.iter().zip(&mv).map(|(x, m)| x - m).collect())
        .collect();
    (mean, rows)
}

/// kernel[i][j] = (1/denom) sum_t a_t[i] b_{t}[j] over paired row lists.
fn averaged_outer(a: &[Vec<f64>], b: &[Vec<f64>], m1: usize, m2: usize, denom: f64) -> Vec<f64> {
    let mut kernel = vec![0.0; m1 * m2];
    for (za, zb) in a.iter().zip(b) {
        for (i, &ai) in za.iter().enumerate() {
            let row = &mut kernel[i * m2..(i + 1) * m2];
            for (kij, &bj) in row.iter_mut().zip(zb) {
                *kij += ai * bj;
            }
        }
    }
    let inv = 1.0 / denom;
    for v in &mut kernel {
        *v *= inv;
    }
    kernel
}

/// Empirical covariance operator of a series, n >= 1.
pub fn empirical_covariance(series: &FunctionalSeries) -> Result<CovarianceEstimate> {
    let op = empirical_autocovariance(series, 0)?;
    Ok(CovarianceEstimate { op, n: series.len(), mean: series.mean() })
}

/// Empirical autocovariance at lag k, centered at the full-sample mean.
/// Requires 0 <= k < n; lag 0 reproduces the covariance exactly.
pub fn empirical_autocovariance(series: &FunctionalSeries, k: usize) -> Result<HSOperator> {
    let n = series.len();
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "autocovariance lag {} needs at least {} observations, series has {}",
            k,
            k + 1,
            n
        )));
    }
    let m = series.grid().m();
    let (_, z) = centered_rows(series);
    let kernel = averaged_outer(&z[..n - k], &z[k..], m, m, (n - k) as f64);
    HSOperator::new(series.grid(), series.grid(), kernel)
}

/// Empirical cross-covariance of two series of equal length. Grids may
/// differ; the row argument of the kernel belongs to x.
pub fn empirical_cross_covariance(
    x: &FunctionalSeries,
    y: &FunctionalSeries,
) -> Result<HSOperator> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "cross-covariance needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (_, zx) = centered_rows(x);
    let (_, zy) = centered_rows(y);
    let kernel = averaged_outer(&zx, &zy, x.grid().m(), y.grid().m(), x.len() as f64);
    HSOperator::new(x.grid(), y.grid(), kernel)
}

/// Squared HS norm of the empirical cross-covariance, the plug-in estimate
/// of the dependence measure S = ||V_XY||^2.
pub fn s_statistic(x: &FunctionalSeries, y: &FunctionalSeries) -> Result<f64> {
    let op = empirical_cross_covariance(x, y)?;
    let norm = op.hs_norm();
    Ok(norm * norm)
}

/// The sequence D_0, ..., D_{n-1} of bridge operators of a CUSUM sweep.
#[derive(Debug, Clone)]
pub struct OperatorPath {
    terms: Vec<HSOperator>,
}

impl OperatorPath {
    /// Wrap explicit terms; the first must be the zero operator and all
    /// terms must share one shape.
    pub fn new(terms: Vec<HSOperator>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("operator path needs at least one term".into()))?;
        if first.kernel().iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("operator path must start at zero".into()));
        }
        for t in &terms[1..] {
            if t.row_grid() != first.row_grid() || t.col_grid() != first.col_grid() {
                return Err(Error::GridMismatch("operator path terms on mixed grids".into()));
            }
        }
        Ok(OperatorPath { terms })
    }

    /// Number of terms n (bridge values at j = 0..n-1).
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, j: usize) -> &HSOperator {
        &self.terms[j]
    }

    pub fn terms(&self) -> &[HSOperator] {
        &self.terms
    }

    /// HS norm of every term.
    pub fn hs_norms(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.hs_norm()).collect()
    }

    /// CSV dump with header `j,hs_norm`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("j,hs_norm\n");
        for (j, norm) in self.hs_norms().iter().enumerate() {
            let _ = writeln!(out, "{},{}", j, norm);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Shared state for the running-sum CUSUM sweep.
struct CusumSweep {
    m: usize,
    n: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    vhat_n: Vec<f64>,
    scratch: Vec<f64>,
}

impl CusumSweep {
    fn start(series: &FunctionalSeries) -> Result<Self> {
        let n = series.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "cusum needs at least 2 observations, series has {}",
                n
            )));
        }
        let m = series.grid().m();
        // Full-sample second moment and mean give Vhat_n.
        let mut s2 = vec![0.0; m * m];
        for row in series.rows() {
            accumulate_outer(&mut s2, row);
        }
        let mean = series.mean();
        let mv = mean.values();
        let inv_n = 1.0 / n as f64;
        let mut vhat_n = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                vhat_n[i * m + j] = s2[i * m + j] * inv_n - mv[i] * mv[j];
            }
        }
        Ok(CusumSweep { m, n, s1: vec![0.0; m], s2: vec![0.0; m * m], vhat_n, scratch: vec![0.0; m * m] })
    }

    /// Absorb row j-1 and leave D_j = (j/sqrt(n)) (Vhat_j - Vhat_n) in
    /// `scratch`.
    fn step(&mut self, j: usize, row: &[f64]) {
        for (a, &v) in self.s1.iter_mut().zip(row) {
            *a += v;
        }
        accumulate_outer(&mut self.s2, row);
        let m = self.m;
        let inv_j = 1.0 / j as f64;
        let scale = j as f64 / (self.n as f64).sqrt();
        for i in 0..m {
            let mi = self.s1[i] * inv_j;
            for l in 0..m {
                let vhat_j = self.s2[i * m + l] * inv_j - mi * (self.s1[l] * inv_j);
                self.scratch[i * m + l] = scale * (vhat_j - self.vhat_n[i * m + l]);
            }
        }
    }
}

fn accumulate_outer(acc: &mut [f64], row: &[f64]) {
    let m = row.len();
    for (i, &ri) in row.iter().enumerate() {
        let out = &mut acc[i * m..(i + 1) * m];
        for (o, &rj) in out.iter_mut().zip(row) {
            *o += ri * rj;
        }
    }
}

/// CUSUM path of a series: D_j = (j/sqrt(n)) (Vhat_j - Vhat_n) for
/// j = 0..n-1, with Vhat_j the covariance of the first j rows centered at
/// their own prefix mean. Requires n >= 2.
pub fn cusum_path(series: &FunctionalSeries) -> Result<OperatorPath> {
    let mut sweep = CusumSweep::start(series)?;
    let g = series.grid();
    let mut terms = Vec::with_capacity(sweep.n);
    terms.push(HSOperator::zeros(g, g));
    for (idx, row) in series.rows().enumerate().take(sweep.n - 1) {
        sweep.step(idx + 1, row);
        terms.push(HSOperator::new(g, g, sweep.scratch.clone())?);
    }
    OperatorPath::new(terms)
}

/// HS norms of the CUSUM path terms without materializing the operators;
/// same sweep as `cusum_path` in O(m^2) memory.
pub fn cusum_bridge_norms(series: &FunctionalSeries) -> Result<Vec<f64>> {
    let mut sweep = CusumSweep::start(series)?;
    let m2 = sweep.m * sweep.m;
    let mut norms = Vec::with_capacity(sweep.n);
    norms.push(0.0);
    for (idx, row) in series.rows().enumerate().take(sweep.n - 1) {
        sweep.step(idx + 1, row);
        let s: f64 = sweep.scratch.iter().map(|d| d * d).sum();
        norms.push((s / m2 as f64).sqrt());
    }
    Ok(norms)
}

/// Sup statistic CS = max_j ||D_j||_HS.
pub fn cs_statistic(path: &OperatorPath) -> f64 {
    path.hs_norms().into_iter().fold(0.0, f64::max)
}

/// Integral statistic CI = (1/n) sum_j ||D_j||_HS^2.
pub fn ci_statistic(path: &OperatorPath) -> f64 {
    let norms = path.hs_norms();
    norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64
}

/// Smallest index maximizing ||D_j||_HS, the changepoint estimate.
pub fn estimate_changepoint(path: &OperatorPath) -> usize {
    argmax(&path.hs_norms())
}

pub(crate) fn argmax(norms: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &v) in norms.iter().enumerate() {
        if v > best_v {
            best = j;
            best_v = v;
        }
    }
    best
}

pub(crate) fn cs_from_norms(norms: &[f64]) -> f64 {
    norms.iter().fold(0.0, |a, &b| a.max(b))
}

pub(crate) fn ci_from_norms(norms: &[f64]) -> f64 {
    norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspace::{tensor, Grid};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn series(m: usize, rows: &[&[f64]]) -> FunctionalSeries {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        FunctionalSeries::from_rows(Grid::new(m).unwrap(), &rows).unwrap()
    }

    fn random_series(n: usize, m: usize, seed: u64) -> FunctionalSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        FunctionalSeries::new(Grid::new(m).unwrap(), data).unwrap()
    }

    #[test]
    fn test_covariance_two_point_fixture() {
        // X1 = (1,0), X2 = (0,1): deviations +-(1/2, -1/2).
        let s = series(2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let est = empirical_covariance(&s).unwrap();
        assert_eq!(est.operator().kernel(), &[0.25, -0.25, -0.25, 0.25]);
        assert_eq!(est.operator().hs_norm(), 0.25);
        assert_eq!(est.n(), 2);
        assert_eq!(est.mean().values(), &[0.5, 0.5]);
    }

    #[test]
    fn test_covariance_degenerate_cases() {
        let one = series(3, &[&[1.0, 2.0, 3.0]]);
        assert!(empirical_covariance(&one).unwrap().operator().kernel().iter().all(|&v| v == 0.0));
        let c = series(2, &[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]]);
        assert!(empirical_covariance(&c).unwrap().operator().kernel().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn test_covariance_symmetry_is_exact() {
        let s = random_series(17, 5, 42);
        let op = empirical_covariance(&s).unwrap().into_operator();
        let m = 5;
        for i in 0..m {
            for j in 0..m {
                assert_eq!(op.entry(i, j), op.entry(j, i));
            }
        }
    }

    #[test]
    fn test_covariance_positive_semidefinite() {
        let s = random_series(12, 4, 7);
        let op = empirical_covariance(&s).unwrap().into_operator();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let h = FunctionalObservation::new(
                Grid::new(4).unwrap(),
                (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            assert!(op.bilinear(&h, &h).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn test_autocovariance_lag_zero_is_covariance() {
        let s = random_series(9, 3, 3);
        let a = empirical_autocovariance(&s, 0).unwrap();
        let c = empirical_covariance(&s).unwrap();
        assert_eq!(a.kernel(), c.operator().kernel());
    }

    #[test]
    fn test_autocovariance_scalar_fixture() {
        // Values 1,2,3 at lag 1: (1-2)(2-2) + (2-2)(3-2) = 0.
        let s = series(1, &[&[1.0], &[2.0], &[3.0]]);
        let a = empirical_autocovariance(&s, 1).unwrap();
        assert_eq!(a.kernel(), &[0.0]);
    }

    #[test]
    fn test_autocovariance_max_lag_is_rank_one() {
        let s = random_series(6, 3, 11);
        let a = empirical_autocovariance(&s, 5).unwrap();
        let mean = s.mean();
        let z0 = FunctionalObservation::new(
            s.grid(),
            s.row(0).iter().zip(mean.values()).map(|(x, m)| x - m).collect(),
        )
        .unwrap();
        let z5 = FunctionalObservation::new(
            s.grid(),
            s.row(5).iter().zip(mean.values()).map(|(x, m)| x - m).collect(),
        )
        .unwrap();
        let expect = tensor(&z0, &z5);
        for (a, b) in a.kernel().iter().zip(expect.kernel()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(empirical_autocovariance(&s, 6).is_err());
    }

    #[test]
    fn test_cross_covariance_sign_fixture() {
        // Hand enumeration of (1/2)[X1(s)Y1(t) + X2(s)Y2(t)].
        let x = series(2, &[&[1.0, 1.0], &[-1.0, -1.0]]);
        let y = series(2, &[&[1.0, -1.0], &[-1.0, 1.0]]);
        let op = empirical_cross_covariance(&x, &y).unwrap();
        assert_eq!(op.kernel(), &[1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn test_cross_covariance_with_itself_is_covariance() {
        let s = random_series(8, 4, 5);
        let cross = empirical_cross_covariance(&s, &s).unwrap();
        let cov = empirical_covariance(&s).unwrap();
        assert_eq!(cross.kernel(), cov.operator().kernel());
    }

    #[test]
    fn test_cross_covariance_mixed_grids_and_errors() {
        let x = random_series(6, 3, 1);
        let y = random_series(6, 5, 2);
        let op = empirical_cross_covariance(&x, &y).unwrap();
        assert_eq!(op.row_grid().m(), 3);
        assert_eq!(op.col_grid().m(), 5);
        let short = random_series(5, 5, 2);
        assert!(empirical_cross_covariance(&x, &short).is_err());
    }

    #[test]
    fn test_s_statistic_basics() {
        let x = random_series(7, 3, 9);
        let one = series(2, &[&[1.0, 2.0]]);
        assert_eq!(s_statistic(&one, &one).unwrap(), 0.0);
        // Scale equivariance: S(c x, y) = c^2 S(x, y).
        let y = random_series(7, 3, 10);
        let s1 = s_statistic(&x, &y).unwrap();
        let s9 = s_statistic(&x.scaled(3.0), &y).unwrap();
        assert_abs_diff_eq!(s9, 9.0 * s1, epsilon = 1e-12 * (1.0 + 9.0 * s1));
    }

    #[test]
    fn test_cusum_scalar_fixture() {
        // Values 0,0,2,2: D = (0, -1/2, -1, -1/6), CS = 1, CI = 23/72.
        let s = series(1, &[&[0.0], &[0.0], &[2.0], &[2.0]]);
        let path = cusum_path(&s).unwrap();
        assert_eq!(path.len(), 4);
        assert_eq!(path.term(0).kernel(), &[0.0]);
        assert_eq!(path.term(1).kernel(), &[-0.5]);
        assert_eq!(path.term(2).kernel(), &[-1.0]);
        assert_abs_diff_eq!(path.term(3).kernel()[0], -1.0 / 6.0, epsilon = 1e-12);
        assert_eq!(cs_statistic(&path), 1.0);
        assert_abs_diff_eq!(ci_statistic(&path), 23.0 / 72.0, epsilon = 1e-12);
        assert_eq!(estimate_changepoint(&path), 2);
    }

    #[test]
    fn test_cusum_needs_two_observations() {
        let one = series(1, &[&[1.0]]);
        assert!(cusum_path(&one).is_err());
        assert!(cusum_bridge_norms(&one).is_err());
    }

    #[test]
    fn test_bridge_norms_match_path() {
        let s = random_series(23, 4, 13);
        let path = cusum_path(&s).unwrap();
        let lean = cusum_bridge_norms(&s).unwrap();
        assert_eq!(path.hs_norms(), lean);
    }

    #[test]
    fn test_cusum_translation_invariance() {
        let s = random_series(15, 3, 21);
        let shifted = {
            let rows: Vec<Vec<f64>> =
                s.rows().map(|r| r.iter().enumerate().map(|(j, v)| v + 5.0 + j as f64).collect()).collect();
            FunctionalSeries::from_rows(s.grid(), &rows).unwrap()
        };
        let a = cusum_bridge_norms(&s).unwrap();
        let b = cusum_bridge_norms(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn test_cusum_scaling_by_two_is_exact() {
        // Products and sums of exact powers of two stay exact, so the whole
        // path scales by exactly 4.
        let s = random_series(10, 3, 33);
        let p1 = cusum_path(&s).unwrap();
        let p2 = cusum_path(&s.scaled(2.0)).unwrap();
        for (a, b) in p1.terms().iter().zip(p2.terms()) {
            for (u, v) in a.kernel().iter().zip(b.kernel()) {
                assert_eq!(4.0 * u, *v);
            }
        }
    }

    #[test]
    fn test_cusum_incremental_matches_naive() {
        let s = random_series(20, 3, 55);
        let n = s.len();
        let path = cusum_path(&s).unwrap();
        let vn = empirical_covariance(&s).unwrap().into_operator();
        for j in 1..n {
            let prefix = s.gather(&(0..j).collect::<Vec<_>>()).unwrap();
            let vj = empirical_covariance(&prefix).unwrap().into_operator();
            let expect = vj.sub(&vn).unwrap().scaled(j as f64 / (n as f64).sqrt());
            for (a, b) in path.term(j).kernel().iter().zip(expect.kernel()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn test_changepoint_picks_first_maximum() {
        let g = Grid::new(1).unwrap();
        let mk = |v: f64| HSOperator::new(g, g, vec![v]).unwrap();
        let path =
            OperatorPath::new(vec![mk(0.0), mk(1.0), mk(3.0), mk(3.0), mk(2.0)]).unwrap();
        assert_eq!(estimate_changepoint(&path), 2);
        let zeros = OperatorPath::new(vec![mk(0.0), mk(0.0), mk(0.0)]).unwrap();
        assert_eq!(estimate_changepoint(&zeros), 0);
        let spike = OperatorPath::new(vec![
            mk(0.0),
            mk(0.0),
            mk(0.0),
            mk(0.0),
            mk(0.0),
            mk(7.0),
            mk(0.0),
        ])
        .unwrap();
        assert_eq!(estimate_changepoint(&spike), 5);
    }

    #[test]
    fn test_path_validation_and_csv() {
        let g = Grid::new(1).unwrap();
        let bad = OperatorPath::new(vec![HSOperator::new(g, g, vec![1.0]).unwrap()]);
        assert!(bad.is_err());
        let s = series(1, &[&[0.0], &[0.0], &[2.0], &[2.0]]);
        let path = cusum_path(&s).unwrap();
        let csv = path.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("j,hs_norm"));
        assert_eq!(lines.next(), Some("0,0"));
        assert_eq!(lines.next(), Some("1,0.5"));
        assert_eq!(csv.lines().count(), 5);
    }
}
