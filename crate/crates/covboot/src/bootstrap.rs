//! Block bootstrap for dependent functional data.
//!
//! The working scheme is the nonoverlapping block bootstrap: split the
//! series into k = floor(n/p) blocks of length p (trailing remainder rows
//! are discarded), then draw k blocks uniformly with replacement and
//! concatenate them. A moving block variant (all n - p + 1 overlapping
//! blocks, ceil(n/p) draws, truncated to n rows) is kept as a baseline.
//!
//! Replicate r draws its block indices from an RNG stream derived from
//! (plan.seed, r), so replicate sets are reproducible and independent of
//! evaluation order or thread count.

use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covops::{empirical_covariance, empirical_cross_covariance, OperatorPath};
use crate::error::{Error, Result};
use crate::fspace::{tensor, FunctionalObservation, FunctionalSeries, HSOperator};
use crate::gram::{plugin_block_length, Gram};

/// Which blocks the resampler draws from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockMethod {
    #[default]
    Nonoverlapping,
    Moving,
}

/// Centering of the cross-covariance replicate statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossCentering {
    /// T* measures the distance to the observed estimate Vhat_XY.
    #[default]
    Estimate,
    /// T* measures the distance to the zero operator.
    Zero,
}

/// A reproducible resampling plan for one series length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub n: usize,
    pub p: usize,
    /// Number of nonoverlapping blocks, floor(n/p).
    pub k: usize,
    pub method: BlockMethod,
    pub seed: u64,
}

impl BlockPlan {
    /// Plan for a series of length n with block length 1 <= p <= n.
    pub fn new(n: usize, p: usize, method: BlockMethod, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 || p > n {
            return Err(Error::InvalidArgument(format!(
                "block length must satisfy 1 <= p <= n, got p={} n={}",
                p, n
            )));
        }
        Ok(BlockPlan { n, p, k: n / p, method, seed })
    }

    /// Rows produced by one resample: k*p for nonoverlapping blocks, n for
    /// the truncated moving block scheme.
    pub fn resample_len(&self) -> usize {
        match self.method {
            BlockMethod::Nonoverlapping => self.k * self.p,
            BlockMethod::Moving => self.n,
        }
    }

    /// Draw row indices for one resample from the given RNG.
    pub fn draw_indices(&self, rng: &mut impl Rng) -> Vec<usize> {
        match self.method {
            BlockMethod::Nonoverlapping => {
                let mut rows = Vec::with_capacity(self.k * self.p);
                for _ in 0..self.k {
                    let b = rng.gen_range(0..self.k);
                    rows.extend(b * self.p..(b + 1) * self.p);
                }
                rows
            }
            BlockMethod::Moving => {
                let starts = self.n - self.p + 1;
                let draws = (self.n + self.p - 1) / self.p;
                let mut rows = Vec::with_capacity(draws * self.p);
                for _ in 0..draws {
                    let s = rng.gen_range(0..starts);
                    rows.extend(s..s + self.p);
                }
                rows.truncate(self.n);
                rows
            }
        }
    }

    /// Row indices of replicate r, drawn from the stream derived from
    /// (seed, r).
    pub fn replicate_indices(&self, replicate: u64) -> Vec<usize> {
        let mut rng = replicate_rng(self.seed, replicate);
        self.draw_indices(&mut rng)
    }
}

/// RNG stream for one replicate: ChaCha keyed by the seed, with the
/// replicate counter as the stream number (stream 0 stays unused).
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_add(1));
    rng
}

/// Split a series into its k = floor(n/p) nonoverlapping blocks of length
/// p; remainder rows beyond k*p are discarded.
pub fn make_blocks(series: &FunctionalSeries, p: usize) -> Result<Vec<FunctionalSeries>> {
    let n = series.len();
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!(
            "block length must satisfy 1 <= p <= n, got p={} n={}",
            p, n
        )));
    }
    let k = n / p;
    (0..k)
        .map(|j| series.gather(&(j * p..(j + 1) * p).collect::<Vec<_>>()))
        .collect()
}

/// Concatenate k uniform draws (with replacement) from the given blocks.
/// All blocks must share one grid and length.
pub fn resample(blocks: &[FunctionalSeries], rng: &mut impl Rng) -> Result<FunctionalSeries> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("resample needs at least one block".into()))?;
    for b in blocks {
        if b.grid() != first.grid() || b.len() != first.len() {
            return Err(Error::GridMismatch("resample blocks differ in shape".into()));
        }
    }
    let k = blocks.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k * first.len());
    for _ in 0..k {
        let b = rng.gen_range(0..k);
        rows.extend(blocks[b].rows().map(|r| r.to_vec()));
    }
    FunctionalSeries::from_rows(first.grid(), &rows)
}

/// Moving block resample: draw ceil(n/p) of the n - p + 1 overlapping
/// blocks and truncate the concatenation to n rows.
pub fn moving_block_resample(
    series: &FunctionalSeries,
    p: usize,
    rng: &mut impl Rng,
) -> Result<FunctionalSeries> {
    let plan = BlockPlan::new(series.len(), p, BlockMethod::Moving, 0)?;
    series.gather(&plan.draw_indices(rng))
}

/// A set of bootstrap replicate statistics and the plan that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    pub plan: BlockPlan,
    pub values: Vec<f64>,
}

impl ReplicateSet {
    /// Number of replicates B.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV column of the replicate values.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("value\n");
        for v in &self.values {
            let _ = writeln!(out, "{}", v);
        }
        out
    }

    /// JSON sidecar describing how the replicates were drawn.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.plan.n,
            "p": self.plan.p,
            "k": self.plan.k,
            "method": match self.plan.method {
                BlockMethod::Nonoverlapping => "nonoverlapping",
                BlockMethod::Moving => "moving",
            },
            "seed": self.plan.seed,
            "B": self.values.len(),
        })
    }

    pub fn write(&self, csv_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(csv_path, self.to_csv_string())?;
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&self.sidecar_json())? + "\n")?;
        Ok(())
    }
}

fn check_plan(series: &FunctionalSeries, plan: &BlockPlan) -> Result<()> {
    if series.len() != plan.n {
        return Err(Error::InvalidArgument(format!(
            "plan is for n={} but series has {} rows",
            plan.n,
            series.len()
        )));
    }
    Ok(())
}

/// Reference one-sample replicates: T*_r = L ||V*_L - Vhat_n||_HS^2 with
/// V*_L the covariance of replicate r's resample and L its length.
/// Computed in operator space; the hypothesis tests use the algebraically
/// identical Gram route.
pub fn boot_cov_replicates(
    series: &FunctionalSeries,
    plan: &BlockPlan,
    b: usize,
) -> Result<ReplicateSet> {
    check_plan(series, plan)?;
    let vhat = empirical_covariance(series)?.into_operator();
    let l = plan.resample_len() as f64;
    let values = (0..b as u64)
        .map(|r| {
            let resample = series.gather(&plan.replicate_indices(r))?;
            let vstar = empirical_covariance(&resample)?.into_operator();
            Ok(l * vstar.sub(&vhat)?.hs_norm().powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ReplicateSet { plan: *plan, values })
}

/// Reference cross-covariance replicates: rows of x and y are resampled as
/// pairs, T*_r = L ||V*_XY - center||_HS^2 with the center chosen by
/// `centering`.
pub fn boot_cross_cov_replicates(
    x: &FunctionalSeries,
    y: &FunctionalSeries,
    plan: &BlockPlan,
    b: usize,
    centering: CrossCentering,
) -> Result<ReplicateSet> {
    check_plan(x, plan)?;
    check_plan(y, plan)?;
    let vxy = empirical_cross_covariance(x, y)?;
    let l = plan.resample_len() as f64;
    let values = (0..b as u64)
        .map(|r| {
            let idx = plan.replicate_indices(r);
            let vstar = empirical_cross_covariance(&x.gather(&idx)?, &y.gather(&idx)?)?;
            let dist = match centering {
                CrossCentering::Estimate => vstar.sub(&vxy)?.hs_norm(),
                CrossCentering::Zero => vstar.hs_norm(),
            };
            Ok(l * dist * dist)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ReplicateSet { plan: *plan, values })
}

/// Reference bootstrap CUSUM bridge for one resample drawn from `rng`:
/// W*_j = (1/sqrt(L)) sum_{i<=j} ((X*_i - Xbar*) (x) (X*_i - Xbar*) - Vhat_n),
/// returned as the bridge W*_j - (j/L) W*_L for j = 0..L-1.
pub fn boot_cusum_path(
    series: &FunctionalSeries,
    plan: &BlockPlan,
    rng: &mut impl Rng,
) -> Result<OperatorPath> {
    check_plan(series, plan)?;
    let vhat = empirical_covariance(series)?.into_operator();
    let resample = series.gather(&plan.draw_indices(rng))?;
    let l = resample.len();
    let mstar = resample.mean();
    let grid = series.grid();

    let mut partial = Vec::with_capacity(l + 1);
    let mut acc = HSOperator::zeros(grid, grid);
    partial.push(acc.clone());
    for i in 0..l {
        let z = FunctionalObservation::new(
            grid,
            resample.row(i).iter().zip(mstar.values()).map(|(x, m)| x - m).collect(),
        )?;
        acc = acc.add(&tensor(&z, &z).sub(&vhat)?)?;
        partial.push(acc.clone());
    }
    let scale = 1.0 / (l as f64).sqrt();
    let terms = (0..l)
        .map(|j| {
            let t = j as f64 / l as f64;
            Ok(partial[j].sub(&partial[l].scaled(t))?.scaled(scale))
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorPath::new(terms)
}

/// Tuning for the plug-in block length rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    /// Multiplier on the plug-in rate; 1.0 reproduces the plain rule.
    pub constant: f64,
    /// Initial bandwidth override; default ceil(n^(1/5)).
    pub h0: Option<usize>,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        BandwidthConfig { constant: 1.0, h0: None }
    }
}

/// Data adaptive block length via the lag-window plug-in on the tensor
/// series of centered observations. Returns a value in [1, max(1, n/2)].
pub fn adaptive_block_length(series: &FunctionalSeries, cfg: &BandwidthConfig) -> Result<usize> {
    validate_bandwidth(cfg)?;
    Ok(plugin_block_length(&Gram::of_series(series), cfg.h0, cfg.constant))
}

/// Adaptive block length for a paired sample, computed in the direct sum
/// space (the pair Gram is the sum of the component Grams).
pub fn adaptive_block_length_joint(
    x: &FunctionalSeries,
    y: &FunctionalSeries,
    cfg: &BandwidthConfig,
) -> Result<usize> {
    validate_bandwidth(cfg)?;
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired series must have equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let g = Gram::direct_sum(&Gram::of_series(x), &Gram::of_series(y));
    Ok(plugin_block_length(&g, cfg.h0, cfg.constant))
}

fn validate_bandwidth(cfg: &BandwidthConfig) -> Result<()> {
    if !cfg.constant.is_finite() || cfg.constant <= 0.0 {
        return Err(Error::InvalidArgument("bandwidth constant must be positive".into()));
    }
    if cfg.h0 == Some(0) {
        return Err(Error::InvalidArgument("initial bandwidth must be at least 1".into()));
    }
    Ok(())
}
