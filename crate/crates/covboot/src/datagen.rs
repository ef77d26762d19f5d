//! Synthetic functional time series.
//!
//! Two base models on the midpoint grid: i.i.d. standard Brownian motion,
//! and a functional AR(1) with the min(s,t) integral kernel driven by
//! Brownian innovations. That kernel has Hilbert-Schmidt norm sqrt(1/6),
//! about 0.41, so the recursion is stationary; it is started from the zero
//! function and given a burn-in.
//!
//! On top of the base models: correlated pairs X = a*e + (1-a)*e_X,
//! Y = a*e + (1-a)*e_Y sharing the component e, and changepoint series
//! where rows from a given index on are scaled by
//! 1 + d1 + d2*(1 + sin(2*pi*s)).
//!
//! All generators are deterministic in the spec seed. Independent
//! components use distinct ChaCha streams of the same seed, so the common
//! component of a pair does not depend on how many other components are
//! drawn.

use std::f64::consts::PI;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fspace::{FunctionalSeries, FunctionalObservation, Grid, HSOperator};

/// Burn-in length used when a spec does not override it.
pub const DEFAULT_BURNIN: usize = 50;

fn default_burnin() -> usize {
    DEFAULT_BURNIN
}

/// Base model for one functional time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Independent standard Brownian motions.
    Iid,
    /// Functional AR(1) with the min(s,t) kernel and Brownian innovations.
    Far1,
}

/// A base model bound to a grid and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Grid resolution.
    pub m: usize,
    /// Discarded start-up steps of the AR recursion; ignored for iid.
    #[serde(default = "default_burnin")]
    pub burnin: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, m: usize, seed: u64) -> Self {
        ModelSpec { kind, m, burnin: DEFAULT_BURNIN, seed }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.m)
    }
}

/// A pair of series of length n with common-component weight alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossPairSpec {
    /// Weight of the shared component, in [0, 1]; 0 gives independence.
    pub alpha: f64,
    pub n: usize,
    pub model: ModelSpec,
}

impl CrossPairSpec {
    pub fn new(alpha: f64, n: usize, model: ModelSpec) -> Result<Self> {
        let spec = CrossPairSpec { alpha, n, model };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("series length must be positive".into()));
        }
        Ok(())
    }
}

/// A series of length n whose covariance changes at row k_star (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    /// Uniform scale component of the change.
    pub d1: f64,
    /// Amplitude of the sinusoidal component.
    pub d2: f64,
    /// First changed row, 1-based; rows k_star..=n are scaled.
    pub k_star: usize,
    pub n: usize,
    pub model: ModelSpec,
}

impl ChangeSpec {
    pub fn new(d1: f64, d2: f64, k_star: usize, n: usize, model: ModelSpec) -> Result<Self> {
        let spec = ChangeSpec { d1, d2, k_star, n, model };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !self.d1.is_finite() || self.d1 < 0.0 || !self.d2.is_finite() || self.d2 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "change sizes must be nonnegative, got d1={} d2={}",
                self.d1, self.d2
            )));
        }
        if self.k_star < 2 || self.k_star > self.n {
            return Err(Error::InvalidArgument(format!(
                "changepoint must satisfy 2 <= k_star <= n, got k_star={} n={}",
                self.k_star, self.n
            )));
        }
        Ok(())
    }
}

fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One standard Brownian path sampled at the grid midpoints: the first
/// node picks up variance 1/(2m), each later step adds variance 1/m.
pub fn brownian_path(grid: Grid, rng: &mut impl Rng) -> FunctionalObservation {
    let m = grid.m();
    let first_sd = (0.5 / m as f64).sqrt();
    let step_sd = (1.0 / m as f64).sqrt();
    let mut w = 0.0;
    let values = (0..m)
        .map(|j| {
            let z: f64 = rng.sample(StandardNormal);
            w += if j == 0 { first_sd } else { step_sd } * z;
            w
        })
        .collect();
    FunctionalObservation::new(grid, values).expect("brownian path is finite")
}

/// n independent Brownian paths.
pub fn brownian_series(n: usize, grid: Grid, rng: &mut impl Rng) -> Result<FunctionalSeries> {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| brownian_path(grid, rng).values().to_vec()).collect();
    FunctionalSeries::from_rows(grid, &rows)
}

/// Functional AR(1): e_i = Phi e_{i-1} + W_i with (Phi f)(s) given by the
/// grid quadrature of min(s, t) f(t), started at zero and run `burnin`
/// steps before the first emitted row.
pub fn far1_series(
    n: usize,
    grid: Grid,
    burnin: usize,
    rng: &mut impl Rng,
) -> Result<FunctionalSeries> {
    let m = grid.m();
    let nodes = grid.nodes();
    let mut prev = vec![0.0f64; m];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for step in 0..burnin + n {
        let noise = brownian_path(grid, rng);
        let mut cur = vec![0.0f64; m];
        for l in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += nodes[l].min(nodes[j]) * prev[j];
            }
            cur[l] = acc / m as f64 + noise.values()[l];
        }
        if step >= burnin {
            rows.push(cur.clone());
        }
        prev = cur;
    }
    FunctionalSeries::from_rows(grid, &rows)
}

/// A single series from the base model, drawn from component stream 1.
pub fn model_series(n: usize, spec: &ModelSpec) -> Result<FunctionalSeries> {
    if n == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let grid = spec.grid()?;
    let mut rng = component_rng(spec.seed, 1);
    match spec.kind {
        ModelKind::Iid => brownian_series(n, grid, &mut rng),
        ModelKind::Far1 => far1_series(n, grid, spec.burnin, &mut rng),
    }
}

/// The three independent components (shared, X-specific, Y-specific) a
/// correlated pair is mixed from, on streams 1, 2, 3 of the model seed.
pub fn correlated_components(
    spec: &CrossPairSpec,
) -> Result<(FunctionalSeries, FunctionalSeries, FunctionalSeries)> {
    spec.validate()?;
    let grid = spec.model.grid()?;
    let draw = |stream: u64| -> Result<FunctionalSeries> {
        let mut rng = component_rng(spec.model.seed, stream);
        match spec.model.kind {
            ModelKind::Iid => brownian_series(spec.n, grid, &mut rng),
            ModelKind::Far1 => far1_series(spec.n, grid, spec.model.burnin, &mut rng),
        }
    };
    Ok((draw(1)?, draw(2)?, draw(3)?))
}

fn mix(common: &FunctionalSeries, own: &FunctionalSeries, alpha: f64) -> Result<FunctionalSeries> {
    let rows: Vec<Vec<f64>> = common
        .rows()
        .zip(own.rows())
        .map(|(c, o)| c.iter().zip(o).map(|(cv, ov)| alpha * cv + (1.0 - alpha) * ov).collect())
        .collect();
    FunctionalSeries::from_rows(common.grid(), &rows)
}

/// The pair X = alpha e + (1-alpha) e_X, Y = alpha e + (1-alpha) e_Y.
pub fn correlated_pair(spec: &CrossPairSpec) -> Result<(FunctionalSeries, FunctionalSeries)> {
    let (common, own_x, own_y) = correlated_components(spec)?;
    Ok((mix(&common, &own_x, spec.alpha)?, mix(&common, &own_y, spec.alpha)?))
}

/// Base model series with rows k_star..=n (1-based) scaled pointwise by
/// 1 + d1 + d2*(1 + sin(2*pi*s)).
pub fn changepoint_series(spec: &ChangeSpec) -> Result<FunctionalSeries> {
    spec.validate()?;
    let base = model_series(spec.n, &spec.model)?;
    let grid = base.grid();
    let profile: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|s| 1.0 + spec.d1 + spec.d2 * (1.0 + (2.0 * PI * s).sin()))
        .collect();
    let rows: Vec<Vec<f64>> = base
        .rows()
        .enumerate()
        .map(|(i, row)| {
            if i + 1 >= spec.k_star {
                row.iter().zip(&profile).map(|(v, f)| v * f).collect()
            } else {
                row.to_vec()
            }
        })
        .collect();
    FunctionalSeries::from_rows(grid, &rows)
}

/// Covariance operator of standard Brownian motion, kernel min(s, t).
pub fn brownian_covariance(grid: Grid) -> HSOperator {
    HSOperator::from_fn(grid, grid, |s, t| s.min(t))
}
