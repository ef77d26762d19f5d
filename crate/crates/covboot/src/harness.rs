//! Monte Carlo experiment runner.
//!
//! An experiment sweeps a model parameter (the pair correlation alpha, or
//! changepoint sizes (d1, d2)), runs the matching bootstrap test on fresh
//! synthetic data for every Monte Carlo run and block length choice, and
//! tabulates rejection frequencies per nominal level.
//!
//! Seeds are derived from the master seed by a counter scheme: run r of
//! sweep point s uses ChaCha stream s * mcRuns + r + 1, from which a data
//! seed and a test seed are drawn. Streams never collide, every run is
//! reproducible in isolation, and results do not depend on how runs are
//! scheduled across threads. Within one run, all block length choices see
//! the same data and the same bootstrap seed, so block lengths are
//! compared on common samples.

use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{BandwidthConfig, BlockMethod, CrossCentering};
use crate::datagen::{
    changepoint_series, correlated_pair, ChangeSpec, CrossPairSpec, ModelKind, ModelSpec,
    DEFAULT_BURNIN,
};
use crate::error::{Error, Result};
use crate::htest::{
    changepoint_test, cross_covariance_test, default_levels, BlockLength, CusumStat, TestConfig,
};

/// Which test an experiment exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Cross,
    Changepoint,
}

/// One changepoint alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePair {
    pub d1: f64,
    pub d2: f64,
}

/// The swept parameter: alphas for the cross test, (d1, d2) pairs for the
/// changepoint test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Alphas(Vec<f64>),
    Changes(Vec<ChangePair>),
}

impl Sweep {
    fn len(&self) -> usize {
        match self {
            Sweep::Alphas(a) => a.len(),
            Sweep::Changes(c) => c.len(),
        }
    }
}

fn default_mc_runs() -> usize {
    500
}

fn default_replicates() -> usize {
    200
}

fn default_burnin() -> usize {
    DEFAULT_BURNIN
}

/// Experiment description, usually read from a JSON file. Defaults are
/// desk scale: 500 Monte Carlo runs with 200 bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(rename = "experiment")]
    pub kind: ExperimentKind,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "mcRuns", default = "default_mc_runs")]
    pub mc_runs: usize,
    /// Bootstrap replicates per test.
    #[serde(rename = "B", default = "default_replicates")]
    pub replicates: usize,
    pub model: ModelKind,
    #[serde(default = "default_burnin")]
    pub burnin: usize,
    pub sweep: Sweep,
    /// Fixed block lengths and/or "adaptive".
    #[serde(rename = "blockLengths")]
    pub block_lengths: Vec<BlockLength>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// CUSUM functional for changepoint experiments.
    #[serde(default)]
    pub statistic: CusumStat,
    /// First changed row (1-based); defaults to n/2 + 1, the middle.
    #[serde(rename = "kStar", default)]
    pub k_star: Option<usize>,
    #[serde(rename = "masterSeed")]
    pub master_seed: u64,
    #[serde(default)]
    pub centering: CrossCentering,
    #[serde(default)]
    pub method: BlockMethod,
    #[serde(default)]
    pub bandwidth: BandwidthConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("invalid experiment config: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::InvalidArgument(format!(
                "cannot read config {}: {}",
                path.as_ref().display(),
                e
            ))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 || self.replicates == 0 {
            return Err(Error::InvalidArgument("mcRuns and B must be at least 1".into()));
        }
        if self.sweep.len() == 0 {
            return Err(Error::InvalidArgument("sweep must be nonempty".into()));
        }
        if self.block_lengths.is_empty() {
            return Err(Error::InvalidArgument("blockLengths must be nonempty".into()));
        }
        match (&self.kind, &self.sweep) {
            (ExperimentKind::Cross, Sweep::Alphas(_)) => {}
            (ExperimentKind::Changepoint, Sweep::Changes(_)) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "sweep kind does not match the experiment kind".into(),
                ))
            }
        }
        Ok(())
    }

    fn model_spec(&self, data_seed: u64) -> ModelSpec {
        ModelSpec { kind: self.model, m: self.m, burnin: self.burnin, seed: data_seed }
    }

    fn test_config(&self, block: BlockLength, test_seed: u64) -> TestConfig {
        TestConfig {
            replicates: self.replicates,
            block,
            levels: self.levels.clone(),
            seed: test_seed,
            centering: self.centering,
            method: self.method,
            bandwidth: self.bandwidth,
        }
    }
}

/// One tabulated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep: String,
    pub block: String,
    pub level: f64,
    pub reject_freq: f64,
    pub mc_runs: usize,
    /// Binomial standard error sqrt(f(1-f)/mcRuns).
    pub se: f64,
}

/// Rejection frequencies for every (sweep, block, level) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn lookup(&self, sweep: &str, block: &str, level: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.sweep == sweep && r.block == block && r.level == level)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("sweep,block,level,reject_freq,mc_runs,se\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.sweep, r.block, r.level, r.reject_freq, r.mc_runs, r.se
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Derived (data, test) seeds for one Monte Carlo run. The stream counter
/// sweep_idx * mc_runs + run + 1 is unique per run and never 0.
pub(crate) fn derive_seeds(master: u64, sweep_idx: usize, run: usize, mc_runs: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((sweep_idx * mc_runs + run) as u64 + 1);
    (rng.next_u64(), rng.next_u64())
}

fn block_label(block: BlockLength) -> String {
    match block {
        BlockLength::Fixed(p) => p.to_string(),
        BlockLength::Adaptive => "adaptive".to_string(),
    }
}

/// Run the per-run closure for every MC run of one sweep point and count
/// rejections per (block, level).
fn mc_counts<F>(cfg: &ExperimentConfig, sweep_idx: usize, eval: F) -> Result<Vec<Vec<usize>>>
where
    F: Fn(u64, u64) -> Result<Vec<Vec<bool>>> + Sync,
{
    let per_run: Vec<Vec<Vec<bool>>> = (0..cfg.mc_runs)
        .into_par_iter()
        .map(|run| {
            let (data_seed, test_seed) = derive_seeds(cfg.master_seed, sweep_idx, run, cfg.mc_runs);
            eval(data_seed, test_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![vec![0usize; cfg.levels.len()]; cfg.block_lengths.len()];
    for run in &per_run {
        for (bi, per_level) in run.iter().enumerate() {
            for (li, &rej) in per_level.iter().enumerate() {
                counts[bi][li] += rej as usize;
            }
        }
    }
    Ok(counts)
}

fn push_rows(rows: &mut Vec<ResultRow>, cfg: &ExperimentConfig, label: &str, counts: &[Vec<usize>]) {
    for (bi, block) in cfg.block_lengths.iter().enumerate() {
        for (li, &level) in cfg.levels.iter().enumerate() {
            let f = counts[bi][li] as f64 / cfg.mc_runs as f64;
            rows.push(ResultRow {
                sweep: label.to_string(),
                block: block_label(*block),
                level,
                reject_freq: f,
                mc_runs: cfg.mc_runs,
                se: (f * (1.0 - f) / cfg.mc_runs as f64).sqrt(),
            });
        }
    }
}

/// Rejection frequencies of the cross-covariance test over the alpha sweep.
pub fn run_cross_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let alphas = match &cfg.sweep {
        Sweep::Alphas(a) => a.clone(),
        _ => return Err(Error::InvalidArgument("cross experiment needs an alpha sweep".into())),
    };
    let mut rows = Vec::new();
    for (si, &alpha) in alphas.iter().enumerate() {
        let counts = mc_counts(cfg, si, |data_seed, test_seed| {
            let spec = CrossPairSpec::new(alpha, cfg.n, cfg.model_spec(data_seed))?;
            let (x, y) = correlated_pair(&spec)?;
            cfg.block_lengths
                .iter()
                .map(|&block| {
                    let report = cross_covariance_test(&x, &y, &cfg.test_config(block, test_seed))?;
                    Ok(report.rejected)
                })
                .collect()
        })?;
        let label = format!("alpha={}", alpha);
        push_rows(&mut rows, cfg, &label, &counts);
        eprintln!("harness: {} done ({} runs)", label, cfg.mc_runs);
    }
    Ok(ResultTable { rows })
}

/// Rejection frequencies of the changepoint test over the (d1, d2) sweep.
pub fn run_changepoint_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let changes = match &cfg.sweep {
        Sweep::Changes(c) => c.clone(),
        _ => {
            return Err(Error::InvalidArgument(
                "changepoint experiment needs a (d1, d2) sweep".into(),
            ))
        }
    };
    let k_star = cfg.k_star.unwrap_or(cfg.n / 2 + 1);
    let mut rows = Vec::new();
    for (si, change) in changes.iter().enumerate() {
        let counts = mc_counts(cfg, si, |data_seed, test_seed| {
            let spec =
                ChangeSpec::new(change.d1, change.d2, k_star, cfg.n, cfg.model_spec(data_seed))?;
            let x = changepoint_series(&spec)?;
            cfg.block_lengths
                .iter()
                .map(|&block| {
                    let report =
                        changepoint_test(&x, cfg.statistic, &cfg.test_config(block, test_seed))?;
                    Ok(report.test.rejected)
                })
                .collect()
        })?;
        let label = format!("d1={};d2={}", change.d1, change.d2);
        push_rows(&mut rows, cfg, &label, &counts);
        eprintln!("harness: {} done ({} runs)", label, cfg.mc_runs);
    }
    Ok(ResultTable { rows })
}

/// Dispatch on the experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    match cfg.kind {
        ExperimentKind::Cross => run_cross_experiment(cfg),
        ExperimentKind::Changepoint => run_changepoint_experiment(cfg),
    }
}

/// The cross experiment reduced to its 5% column, the form plotted as a
/// power curve.
pub fn power_curve(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if !cfg.levels.contains(&0.05) {
        return Err(Error::InvalidArgument("power curve needs the 0.05 level".into()));
    }
    let full = run_cross_experiment(cfg)?;
    Ok(ResultTable { rows: full.rows.into_iter().filter(|r| r.level == 0.05).collect() })
}
