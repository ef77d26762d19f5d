//! Bootstrap hypothesis tests on covariance operators.
//!
//! Three tests share one recipe: compute a scaled Hilbert-Schmidt norm
//! statistic from the sample, approximate its null distribution with block
//! bootstrap replicates, and report the Monte Carlo p-value
//! (1 + #{T* >= T}) / (B + 1) together with upper critical values.
//!
//! * `cross_covariance_test`: H0 of no cross-covariance between paired
//!   series, T = n ||Vhat_XY||^2.
//! * `one_sample_test`: H0 that the covariance equals a given operator,
//!   T = n ||Vhat - V0||^2.
//! * `changepoint_test`: H0 of a constant covariance, CUSUM statistics
//!   CS (max norm) or CI (integrated squared norm), plus a changepoint
//!   estimate.
//!
//! Replicates are evaluated through the Gram form of the statistics, which
//! collapses every resample to arithmetic on the n x n matrix of centered
//! inner products. The operator-space routines in `bootstrap` compute the
//! same numbers and stay around as the readable reference.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    adaptive_block_length, adaptive_block_length_joint, BandwidthConfig, BlockMethod, BlockPlan,
    CrossCentering, ReplicateSet,
};
use crate::covops::{
    argmax, ci_from_norms, cs_from_norms, cusum_bridge_norms, empirical_covariance,
};
use crate::error::{Error, Result};
use crate::fspace::{FunctionalSeries, HSOperator};
use crate::gram::{
    ceil_stable, cross_norm_sq, cross_replicate, cusum_replicate, one_sample_replicate, Gram,
};

/// How the block length is chosen. Serialized as the integer itself or
/// the string "adaptive", so config lists can mix both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLength {
    Fixed(usize),
    Adaptive,
}

impl Serialize for BlockLength {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BlockLength::Fixed(p) => serializer.serialize_u64(*p as u64),
            BlockLength::Adaptive => serializer.serialize_str("adaptive"),
        }
    }
}

impl<'de> Deserialize<'de> for BlockLength {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = BlockLength;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a positive integer block length or \"adaptive\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<BlockLength, E> {
                if v == 0 {
                    return Err(E::custom("block length must be at least 1"));
                }
                Ok(BlockLength::Fixed(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<BlockLength, E> {
                if v <= 0 {
                    return Err(E::custom("block length must be at least 1"));
                }
                Ok(BlockLength::Fixed(v as usize))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<BlockLength, E> {
                if v == "adaptive" {
                    Ok(BlockLength::Adaptive)
                } else {
                    Err(E::custom(format!("expected \"adaptive\", got {:?}", v)))
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// Which CUSUM functional the changepoint test uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CusumStat {
    /// Maximum bridge norm.
    #[default]
    Cs,
    /// Average squared bridge norm.
    Ci,
}

/// Significance levels reported when none are configured.
pub fn default_levels() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}

/// Shared test configuration. `centering` only affects the cross test;
/// `bandwidth` only matters when the block length is adaptive.
#[derive(Debug, Clone)]
pub struct TestConfig {
    /// Number of bootstrap replicates B.
    pub replicates: usize,
    pub block: BlockLength,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub centering: CrossCentering,
    pub method: BlockMethod,
    pub bandwidth: BandwidthConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            replicates: 1000,
            block: BlockLength::Adaptive,
            levels: default_levels(),
            seed: 0,
            centering: CrossCentering::Estimate,
            method: BlockMethod::Nonoverlapping,
            bandwidth: BandwidthConfig::default(),
        }
    }
}

fn validate_config(cfg: &TestConfig) -> Result<()> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    if cfg.levels.is_empty() {
        return Err(Error::InvalidArgument("need at least one significance level".into()));
    }
    for &l in &cfg.levels {
        if !l.is_finite() || l <= 0.0 || l >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "significance levels must lie in (0, 1), got {}",
                l
            )));
        }
    }
    if let BlockLength::Fixed(p) = cfg.block {
        if p == 0 {
            return Err(Error::InvalidArgument("block length must be at least 1".into()));
        }
    }
    Ok(())
}

/// Outcome of a bootstrap test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub levels: Vec<f64>,
    /// Upper critical value per level; infinite when B is too small to
    /// resolve the level.
    pub critical_values: Vec<f64>,
    /// Decision per level, p_value <= level.
    pub rejected: Vec<bool>,
    /// Block length actually used.
    pub block_length: usize,
    pub seed: u64,
    /// Replicate values in ascending order, with the plan that drew them.
    pub replicates: ReplicateSet,
}

impl TestReport {
    /// Decision at one of the configured levels.
    pub fn rejected_at(&self, level: f64) -> Option<bool> {
        self.levels.iter().position(|&l| l == level).map(|i| self.rejected[i])
    }

    pub fn critical_value_at(&self, level: f64) -> Option<f64> {
        self.levels.iter().position(|&l| l == level).map(|i| self.critical_values[i])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut crit = serde_json::Map::new();
        let mut rej = serde_json::Map::new();
        for (i, &l) in self.levels.iter().enumerate() {
            let key = format!("{}", l);
            let v = self.critical_values[i];
            crit.insert(
                key.clone(),
                if v.is_finite() { serde_json::json!(v) } else { serde_json::Value::Null },
            );
            rej.insert(key, serde_json::json!(self.rejected[i]));
        }
        serde_json::json!({
            "statistic": self.statistic,
            "p_value": self.p_value,
            "critical_values": crit,
            "rejected": rej,
            "block_length": self.block_length,
            "seed": self.seed,
            "B": self.replicates.len(),
        })
    }
}

/// Changepoint test outcome: the test report plus the estimated change
/// location and the observed bridge norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangepointReport {
    pub test: TestReport,
    /// Estimated number of pre-change rows: the first index attaining the
    /// maximal bridge norm. The first changed row is k_hat + 1 (1-based).
    pub k_hat: usize,
    pub bridge_norms: Vec<f64>,
}

impl ChangepointReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.test.to_json();
        let obj = v.as_object_mut().expect("report json is an object");
        obj.insert("k_hat".into(), serde_json::json!(self.k_hat));
        obj.insert("bridge_norms".into(), serde_json::json!(self.bridge_norms));
        v
    }
}

/// The q-th smallest replicate with q = ceil((1 - level)(B + 1)), the
/// usual upper bootstrap critical value; infinite when q exceeds B.
/// `sorted` must be ascending.
pub fn critical_value(sorted: &[f64], level: f64) -> f64 {
    let b = sorted.len();
    let q = ceil_stable((1.0 - level) * (b + 1) as f64);
    if q == 0 || q > b {
        f64::INFINITY
    } else {
        sorted[q - 1]
    }
}

fn summarize(statistic: f64, mut values: Vec<f64>, cfg: &TestConfig, plan: BlockPlan) -> TestReport {
    let b = values.len();
    let count = values.iter().filter(|&&v| v >= statistic).count();
    let p_value = (1 + count) as f64 / (b + 1) as f64;
    values.sort_by(f64::total_cmp);
    let critical_values: Vec<f64> =
        cfg.levels.iter().map(|&l| critical_value(&values, l)).collect();
    let rejected: Vec<bool> = cfg.levels.iter().map(|&l| p_value <= l).collect();
    TestReport {
        statistic,
        p_value,
        levels: cfg.levels.clone(),
        critical_values,
        rejected,
        block_length: plan.p,
        seed: cfg.seed,
        replicates: ReplicateSet { plan, values },
    }
}

fn check_sample_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap tests need at least 2 observations, got {}",
            n
        )));
    }
    Ok(())
}

/// Test H0: Cov(X_i, Y_i) = 0 for a paired sample, T = n ||Vhat_XY||^2.
///
/// Replicates resample (X, Y) rows jointly. With `CrossCentering::Estimate`
/// they measure the distance to the observed cross-covariance (valid under
/// dependence), with `Zero` the distance to the null operator.
pub fn cross_covariance_test(
    x: &FunctionalSeries,
    y: &FunctionalSeries,
    cfg: &TestConfig,
) -> Result<TestReport> {
    validate_config(cfg)?;
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired series must have equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    check_sample_size(n)?;
    let p = match cfg.block {
        BlockLength::Fixed(p) => p,
        BlockLength::Adaptive => adaptive_block_length_joint(x, y, &cfg.bandwidth)?,
    };
    let plan = BlockPlan::new(n, p, cfg.method, cfg.seed)?;

    let gx = Gram::of_series(x);
    let gy = Gram::of_series(y);
    let cross_sq = cross_norm_sq(&gx, &gy);
    let statistic = n as f64 * cross_sq;
    let center = cfg.centering == CrossCentering::Estimate;
    let values: Vec<f64> = (0..cfg.replicates as u64)
        .map(|r| cross_replicate(&gx, &gy, &plan.replicate_indices(r), cross_sq, center))
        .collect();
    Ok(summarize(statistic, values, cfg, plan))
}

/// Test H0: Cov(X_i) = V0, T = n ||Vhat - V0||^2. Replicates are centered
/// at the estimate Vhat regardless of V0.
pub fn one_sample_test(
    x: &FunctionalSeries,
    v0: &HSOperator,
    cfg: &TestConfig,
) -> Result<TestReport> {
    validate_config(cfg)?;
    let n = x.len();
    check_sample_size(n)?;
    let vhat = empirical_covariance(x)?.into_operator();
    let diff = vhat.sub(v0)?;
    let statistic = n as f64 * diff.hs_norm().powi(2);

    let p = match cfg.block {
        BlockLength::Fixed(p) => p,
        BlockLength::Adaptive => adaptive_block_length(x, &cfg.bandwidth)?,
    };
    let plan = BlockPlan::new(n, p, cfg.method, cfg.seed)?;
    let g = Gram::of_series(x);
    let vhat_sq = g.vhat_norm_sq();
    let values: Vec<f64> = (0..cfg.replicates as u64)
        .map(|r| one_sample_replicate(&g, &plan.replicate_indices(r), vhat_sq))
        .collect();
    Ok(summarize(statistic, values, cfg, plan))
}

/// Test H0: the covariance operator is constant over the sample, against a
/// change at an unknown time, using the chosen CUSUM functional.
pub fn changepoint_test(
    x: &FunctionalSeries,
    stat: CusumStat,
    cfg: &TestConfig,
) -> Result<ChangepointReport> {
    validate_config(cfg)?;
    let n = x.len();
    check_sample_size(n)?;
    let norms = cusum_bridge_norms(x)?;
    let statistic = match stat {
        CusumStat::Cs => cs_from_norms(&norms),
        CusumStat::Ci => ci_from_norms(&norms),
    };
    let k_hat = argmax(&norms);

    let p = match cfg.block {
        BlockLength::Fixed(p) => p,
        BlockLength::Adaptive => adaptive_block_length(x, &cfg.bandwidth)?,
    };
    let plan = BlockPlan::new(n, p, cfg.method, cfg.seed)?;
    let g = Gram::of_series(x);
    let values: Vec<f64> = (0..cfg.replicates as u64)
        .map(|r| {
            let (cs, ci) = cusum_replicate(&g, &plan.replicate_indices(r));
            match stat {
                CusumStat::Cs => cs,
                CusumStat::Ci => ci,
            }
        })
        .collect();
    let test = summarize(statistic, values, cfg, plan);
    Ok(ChangepointReport { test, k_hat, bridge_norms: norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::{boot_cov_replicates, boot_cross_cov_replicates};
    use crate::fspace::Grid;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_series(n: usize, m: usize, seed: u64) -> FunctionalSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        FunctionalSeries::new(Grid::new(m).unwrap(), data).unwrap()
    }

    fn fixed_cfg(p: usize, b: usize, seed: u64) -> TestConfig {
        TestConfig {
            replicates: b,
            block: BlockLength::Fixed(p),
            seed,
            ..TestConfig::default()
        }
    }

    #[test]
    fn test_cross_report_matches_reference_replicates() {
        let x = random_series(12, 2, 1);
        let y = random_series(12, 2, 2);
        let cfg = fixed_cfg(3, 40, 7);
        let report = cross_covariance_test(&x, &y, &cfg).unwrap();

        let plan = BlockPlan::new(12, 3, BlockMethod::Nonoverlapping, 7).unwrap();
        let reference =
            boot_cross_cov_replicates(&x, &y, &plan, 40, CrossCentering::Estimate).unwrap();
        let count =
            reference.values.iter().filter(|&&v| v >= report.statistic).count();
        assert_eq!(report.p_value, (1 + count) as f64 / 41.0);

        let mut sorted = reference.values.clone();
        sorted.sort_by(f64::total_cmp);
        // The report retains the replicate set: same plan, sorted values
        // matching the operator-space reference to engine precision.
        assert_eq!(report.replicates.plan, plan);
        assert_eq!(report.replicates.len(), 40);
        for (a, b) in report.replicates.values.iter().zip(&sorted) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        for (i, &l) in report.levels.iter().enumerate() {
            let want = critical_value(&sorted, l);
            if want.is_finite() {
                assert_abs_diff_eq!(report.critical_values[i], want, epsilon = 1e-9);
            } else {
                assert!(report.critical_values[i].is_infinite());
            }
        }
    }

    #[test]
    fn test_one_sample_report_matches_reference_replicates() {
        let x = random_series(12, 2, 3);
        let cfg = fixed_cfg(4, 30, 11);
        let v0 = HSOperator::zeros(x.grid(), x.grid());
        let report = one_sample_test(&x, &v0, &cfg).unwrap();

        let plan = BlockPlan::new(12, 4, BlockMethod::Nonoverlapping, 11).unwrap();
        let reference = boot_cov_replicates(&x, &plan, 30).unwrap();
        let mut sorted = reference.values.clone();
        sorted.sort_by(f64::total_cmp);
        for (i, &l) in report.levels.iter().enumerate() {
            let want = critical_value(&sorted, l);
            if want.is_finite() {
                assert_abs_diff_eq!(report.critical_values[i], want, epsilon = 1e-9);
            } else {
                assert!(report.critical_values[i].is_infinite());
            }
        }
    }

    #[test]
    fn test_one_sample_at_own_estimate_never_rejects() {
        let x = random_series(20, 3, 5);
        let vhat = empirical_covariance(&x).unwrap().into_operator();
        let report = one_sample_test(&x, &vhat, &fixed_cfg(4, 50, 1)).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.p_value, 1.0);
        assert!(report.rejected.iter().all(|&r| !r));
    }

    #[test]
    fn test_one_sample_detects_wrong_null() {
        // Null operator far from the sample covariance.
        let x = random_series(60, 3, 8);
        let vhat = empirical_covariance(&x).unwrap().into_operator();
        let v0 = vhat.scaled(4.0);
        let report = one_sample_test(&x, &v0, &fixed_cfg(1, 199, 2)).unwrap();
        assert!(report.p_value <= 0.05, "p = {}", report.p_value);
        assert_eq!(report.rejected_at(0.05), Some(true));
    }

    #[test]
    fn test_single_block_degenerates() {
        // p = n gives k = 1: every resample is the sample itself, so all
        // replicates vanish and the p-value hits its floor.
        let x = random_series(10, 2, 9);
        let v0 = HSOperator::zeros(x.grid(), x.grid());
        let report = one_sample_test(&x, &v0, &fixed_cfg(10, 20, 3)).unwrap();
        assert_abs_diff_eq!(report.p_value, 1.0 / 21.0, epsilon = 1e-15);

        // A zero statistic ties with every zero replicate instead.
        let vhat = empirical_covariance(&x).unwrap().into_operator();
        let tied = one_sample_test(&x, &vhat, &fixed_cfg(10, 20, 3)).unwrap();
        assert_eq!(tied.p_value, 1.0);
    }

    #[test]
    fn test_changepoint_fixture_statistics() {
        let s = FunctionalSeries::new(Grid::new(1).unwrap(), vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        let cs = changepoint_test(&s, CusumStat::Cs, &fixed_cfg(2, 10, 1)).unwrap();
        assert_eq!(cs.test.statistic, 1.0);
        assert_eq!(cs.k_hat, 2);
        assert_eq!(cs.bridge_norms.len(), 4);

        let ci = changepoint_test(&s, CusumStat::Ci, &fixed_cfg(2, 10, 1)).unwrap();
        assert_abs_diff_eq!(ci.test.statistic, 23.0 / 72.0, epsilon = 1e-12);
    }

    #[test]
    fn test_critical_value_convention() {
        let sorted: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert_eq!(critical_value(&sorted, 0.01), 199.0);
        assert_eq!(critical_value(&sorted, 0.05), 191.0);
        assert_eq!(critical_value(&sorted, 0.10), 181.0);
        assert!(critical_value(&sorted, 0.001).is_infinite());

        let few = vec![1.0, 2.0, 3.0];
        assert!(critical_value(&few, 0.05).is_infinite());
    }

    #[test]
    fn test_reject_consistency() {
        let x = random_series(30, 2, 13);
        let y = random_series(30, 2, 14);
        let report = cross_covariance_test(&x, &y, &fixed_cfg(3, 50, 21)).unwrap();
        for (i, &l) in report.levels.iter().enumerate() {
            assert_eq!(report.rejected[i], report.p_value <= l);
            let crit = report.critical_values[i];
            if report.statistic != crit {
                assert_eq!(report.rejected[i], report.statistic > crit);
            }
        }
        // Critical values decrease as the level grows.
        for w in report.critical_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn test_adaptive_block_length_is_reported() {
        let x = random_series(40, 2, 17);
        let y = random_series(40, 2, 18);
        let cfg = TestConfig { replicates: 10, ..TestConfig::default() };
        let report = cross_covariance_test(&x, &y, &cfg).unwrap();
        let expect = adaptive_block_length_joint(&x, &y, &cfg.bandwidth).unwrap();
        assert_eq!(report.block_length, expect);

        let one = one_sample_test(
            &x,
            &HSOperator::zeros(x.grid(), x.grid()),
            &cfg,
        )
        .unwrap();
        assert_eq!(one.block_length, adaptive_block_length(&x, &cfg.bandwidth).unwrap());
    }

    #[test]
    fn test_determinism() {
        let x = random_series(25, 2, 19);
        let y = random_series(25, 2, 20);
        let cfg = fixed_cfg(5, 60, 23);
        let a = cross_covariance_test(&x, &y, &cfg).unwrap();
        let b = cross_covariance_test(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn test_report_json_shape() {
        let x = random_series(10, 2, 25);
        let report = changepoint_test(&x, CusumStat::Cs, &fixed_cfg(2, 15, 4)).unwrap();
        let json = report.to_json();
        for key in ["statistic", "p_value", "critical_values", "rejected", "block_length", "seed", "B", "k_hat", "bridge_norms"] {
            assert!(json.get(key).is_some(), "missing key {}", key);
        }
        assert!(json["critical_values"].get("0.05").is_some());
        assert_eq!(json["B"], 15);
        assert_eq!(json["bridge_norms"].as_array().unwrap().len(), 10);
    }

    #[test]
    fn test_config_validation() {
        let x = random_series(10, 2, 31);
        let y = random_series(10, 2, 32);
        let bad_b = TestConfig { replicates: 0, ..fixed_cfg(2, 1, 0) };
        assert!(cross_covariance_test(&x, &y, &bad_b).is_err());

        let bad_level = TestConfig { levels: vec![1.5], ..fixed_cfg(2, 10, 0) };
        assert!(cross_covariance_test(&x, &y, &bad_level).is_err());

        let no_levels = TestConfig { levels: vec![], ..fixed_cfg(2, 10, 0) };
        assert!(cross_covariance_test(&x, &y, &no_levels).is_err());

        let short = random_series(9, 2, 33);
        assert!(cross_covariance_test(&x, &short, &fixed_cfg(2, 10, 0)).is_err());

        let tiny = random_series(1, 2, 34);
        assert!(changepoint_test(&tiny, CusumStat::Cs, &fixed_cfg(1, 10, 0)).is_err());

        // Fixed block longer than the series.
        assert!(one_sample_test(
            &x,
            &HSOperator::zeros(x.grid(), x.grid()),
            &fixed_cfg(11, 10, 0)
        )
        .is_err());
    }
}
