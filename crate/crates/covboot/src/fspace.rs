//! Discretized function spaces.
//!
//! A curve in L2[0,1] is stored by its values on the uniform midpoint grid
//! s_j = (j - 1/2)/m, j = 1..m, and every integral becomes the quadrature
//! sum with weight 1/m. Inner products, Hilbert-Schmidt kernels and the
//! direct sum H (+) G are all defined through that rule:
//!
//! * `<x, y> = (1/m) sum_j x(s_j) y(s_j)`
//! * `<A, B>_HS = (1/(m1 m2)) sum_ij A(s_i, t_j) B(s_i, t_j)`
//! * `<(x1, y1), (x2, y2)> = <x1, x2>_H + <y1, y2>_G`
//!
//! Sums are divided at the end, so the quadrature of the constant 1 is
//! exactly 1.0 for every m.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform midpoint grid on [0,1] with m nodes and weight 1/m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    m: usize,
}

impl Grid {
    /// A grid with m >= 1 nodes.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one node".into()));
        }
        Ok(Grid { m })
    }

    /// Number of nodes.
    pub fn m(&self) -> usize {
        self.m
    }

    /// The j-th node (j - 1/2)/m, 0-based j.
    pub fn node(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.m as f64
    }

    /// All nodes in order.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }

    /// Quadrature weight 1/m.
    pub fn weight(&self) -> f64 {
        1.0 / self.m as f64
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Quadrature inner product of two equally long value slices: sum / m.
fn dot_over_m(a: &[f64], b: &[f64], m: usize) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    s / m as f64
}

/// A single curve observed on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalObservation {
    grid: Grid,
    values: Vec<f64>,
}

impl FunctionalObservation {
    /// Wrap grid values; the length must match the grid.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.m() {
            return Err(Error::GridMismatch(format!(
                "observation has {} values for a grid of {} nodes",
                values.len(),
                grid.m()
            )));
        }
        check_finite(&values, "observation values")?;
        Ok(FunctionalObservation { grid, values })
    }

    /// Evaluate a function at every grid node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.m()).map(|j| f(grid.node(j))).collect();
        FunctionalObservation { grid, values }
    }

    /// The constant zero curve.
    pub fn zero(grid: Grid) -> Self {
        FunctionalObservation { grid, values: vec![0.0; grid.m()] }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// L2 inner product <x, y> = (1/m) sum x_j y_j. Grids must agree.
    pub fn inner(&self, other: &FunctionalObservation) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "inner product between grids m={} and m={}",
                self.grid.m(),
                other.grid.m()
            )));
        }
        Ok(dot_over_m(&self.values, &other.values, self.grid.m()))
    }

    /// L2 norm, sqrt of the inner product with itself.
    pub fn norm(&self) -> f64 {
        dot_over_m(&self.values, &self.values, self.grid.m()).sqrt()
    }

    /// Pointwise scaling c * x.
    pub fn scaled(&self, c: f64) -> Self {
        FunctionalObservation {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Pointwise sum x + y. Grids must agree.
    pub fn plus(&self, other: &FunctionalObservation) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("sum of observations on different grids".into()));
        }
        Ok(FunctionalObservation {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Rank-one operator x (x) y with kernel (s_i, t_j) -> x(s_i) y(t_j).
pub fn tensor(x: &FunctionalObservation, y: &FunctionalObservation) -> HSOperator {
    let m1 = x.grid.m();
    let m2 = y.grid.m();
    let mut kernel = Vec::with_capacity(m1 * m2);
    for &xi in &x.values {
        for &yj in &y.values {
            kernel.push(xi * yj);
        }
    }
    HSOperator { row_grid: x.grid, col_grid: y.grid, kernel }
}

/// A time series of curves on a common grid, stored row-major (n x m).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    grid: Grid,
    n: usize,
    data: Vec<f64>,
}

impl FunctionalSeries {
    /// Wrap a flat row-major buffer of n x m values, n >= 1.
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let m = grid.m();
        if data.is_empty() || data.len() % m != 0 {
            return Err(Error::GridMismatch(format!(
                "series buffer of {} values is not a positive multiple of m={}",
                data.len(),
                m
            )));
        }
        check_finite(&data, "series values")?;
        Ok(FunctionalSeries { grid, n: data.len() / m, data })
    }

    /// Build from explicit rows.
    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        let m = grid.m();
        let mut data = Vec::with_capacity(rows.len() * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::GridMismatch(format!(
                    "row has {} values for a grid of {} nodes",
                    row.len(),
                    m
                )));
            }
            data.extend_from_slice(row);
        }
        FunctionalSeries::new(grid, data)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The i-th row as a slice of grid values.
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.m();
        &self.data[i * m..(i + 1) * m]
    }

    /// Iterator over rows.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.m())
    }

    /// The i-th observation as an owned curve.
    pub fn observation(&self, i: usize) -> FunctionalObservation {
        FunctionalObservation { grid: self.grid, values: self.row(i).to_vec() }
    }

    /// Sample mean curve over all rows.
    pub fn mean(&self) -> FunctionalObservation {
        let m = self.grid.m();
        let mut acc = vec![0.0; m];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        for a in &mut acc {
            *a *= inv;
        }
        FunctionalObservation { grid: self.grid, values: acc }
    }

    /// New series with every value scaled by c.
    pub fn scaled(&self, c: f64) -> Self {
        FunctionalSeries {
            grid: self.grid,
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// New series made of the given rows of this one (indices may repeat).
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        let m = self.grid.m();
        let mut data = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "row index {} out of range for series of length {}",
                    i, self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        FunctionalSeries::new(self.grid, data)
    }

    /// Serialize as CSV: a `# grid=midpoint m=<m>` header line, then one
    /// comma-separated row per observation. Values round-trip exactly.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# grid=midpoint m={}", self.grid.m());
        for row in self.rows() {
            push_csv_row(&mut out, row);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parse the CSV form. The header line is optional; when present, its m
    /// must match the row width.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut declared_m = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if lineno == 0 {
                    declared_m = Some(parse_series_header(rest)?);
                    continue;
                }
                return Err(Error::Parse(format!("unexpected comment on line {}", lineno + 1)));
            }
            rows.push(parse_csv_row(line, lineno + 1)?);
        }
        if rows.is_empty() {
            return Err(Error::Parse("series file has no data rows".into()));
        }
        let m = rows[0].len();
        if let Some(dm) = declared_m {
            if dm != m {
                return Err(Error::Parse(format!(
                    "header declares m={} but rows have {} columns",
                    dm, m
                )));
            }
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Parse(format!(
                "row {} has {} columns, expected {}",
                i + 1,
                r.len(),
                m
            )));
        }
        FunctionalSeries::from_rows(Grid::new(m)?, &rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        FunctionalSeries::from_csv_str(&text)
    }
}

/// A Hilbert-Schmidt operator between grid spaces, stored as its kernel
/// matrix (row grid indexes the first kernel argument).
#[derive(Debug, Clone, PartialEq)]
pub struct HSOperator {
    row_grid: Grid,
    col_grid: Grid,
    kernel: Vec<f64>,
}

impl HSOperator {
    /// Wrap a row-major m1 x m2 kernel.
    pub fn new(row_grid: Grid, col_grid: Grid, kernel: Vec<f64>) -> Result<Self> {
        if kernel.len() != row_grid.m() * col_grid.m() {
            return Err(Error::GridMismatch(format!(
                "kernel has {} entries for {} x {} grids",
                kernel.len(),
                row_grid.m(),
                col_grid.m()
            )));
        }
        check_finite(&kernel, "kernel values")?;
        Ok(HSOperator { row_grid, col_grid, kernel })
    }

    /// The zero operator.
    pub fn zeros(row_grid: Grid, col_grid: Grid) -> Self {
        HSOperator { row_grid, col_grid, kernel: vec![0.0; row_grid.m() * col_grid.m()] }
    }

    /// Evaluate a kernel function at every node pair.
    pub fn from_fn(row_grid: Grid, col_grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut kernel = Vec::with_capacity(row_grid.m() * col_grid.m());
        for i in 0..row_grid.m() {
            for j in 0..col_grid.m() {
                kernel.push(f(row_grid.node(i), col_grid.node(j)));
            }
        }
        HSOperator { row_grid, col_grid, kernel }
    }

    pub fn row_grid(&self) -> Grid {
        self.row_grid
    }

    pub fn col_grid(&self) -> Grid {
        self.col_grid
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.col_grid.m() + j]
    }

    fn same_shape(&self, other: &HSOperator, what: &str) -> Result<()> {
        if self.row_grid != other.row_grid || self.col_grid != other.col_grid {
            return Err(Error::GridMismatch(format!(
                "{} between {}x{} and {}x{} operators",
                what,
                self.row_grid.m(),
                self.col_grid.m(),
                other.row_grid.m(),
                other.col_grid.m()
            )));
        }
        Ok(())
    }

    /// Hilbert-Schmidt inner product, the double quadrature of the kernel
    /// product. Both operators must share the same grids.
    pub fn hs_inner(&self, other: &HSOperator) -> Result<f64> {
        self.same_shape(other, "hs inner product")?;
        let s: f64 = self.kernel.iter().zip(&other.kernel).map(|(a, b)| a * b).sum();
        Ok(s / (self.row_grid.m() * self.col_grid.m()) as f64)
    }

    /// Hilbert-Schmidt norm.
    pub fn hs_norm(&self) -> f64 {
        let s: f64 = self.kernel.iter().map(|a| a * a).sum();
        (s / (self.row_grid.m() * self.col_grid.m()) as f64).sqrt()
    }

    /// The bilinear form (1/(m1 m2)) sum_ij k(s_i, t_j) f(s_i) g(t_j), i.e.
    /// <A f, g> when f pairs with the row argument.
    pub fn bilinear(&self, f: &FunctionalObservation, g: &FunctionalObservation) -> Result<f64> {
        if f.grid != self.row_grid || g.grid != self.col_grid {
            return Err(Error::GridMismatch("bilinear form arguments on wrong grids".into()));
        }
        let m2 = self.col_grid.m();
        let mut total = 0.0;
        for (i, fi) in f.values.iter().enumerate() {
            let row = &self.kernel[i * m2..(i + 1) * m2];
            let s: f64 = row.iter().zip(&g.values).map(|(k, gj)| k * gj).sum();
            total += fi * s;
        }
        Ok(total / (self.row_grid.m() * m2) as f64)
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &HSOperator) -> Result<Self> {
        self.same_shape(other, "difference")?;
        Ok(HSOperator {
            row_grid: self.row_grid,
            col_grid: self.col_grid,
            kernel: self.kernel.iter().zip(&other.kernel).map(|(a, b)| a - b).collect(),
        })
    }

    /// Elementwise sum.
    pub fn add(&self, other: &HSOperator) -> Result<Self> {
        self.same_shape(other, "sum")?;
        Ok(HSOperator {
            row_grid: self.row_grid,
            col_grid: self.col_grid,
            kernel: self.kernel.iter().zip(&other.kernel).map(|(a, b)| a + b).collect(),
        })
    }

    /// Elementwise scaling.
    pub fn scaled(&self, c: f64) -> Self {
        HSOperator {
            row_grid: self.row_grid,
            col_grid: self.col_grid,
            kernel: self.kernel.iter().map(|a| c * a).collect(),
        }
    }

    /// Adjoint: kernel (s, t) -> k(t, s).
    pub fn transpose(&self) -> Self {
        let (m1, m2) = (self.row_grid.m(), self.col_grid.m());
        let mut kernel = vec![0.0; m1 * m2];
        for i in 0..m1 {
            for j in 0..m2 {
                kernel[j * m1 + i] = self.kernel[i * m2 + j];
            }
        }
        HSOperator { row_grid: self.col_grid, col_grid: self.row_grid, kernel }
    }

    /// Serialize as CSV with a `# rows=<m1> cols=<m2>` header line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rows={} cols={}", self.row_grid.m(), self.col_grid.m());
        for row in self.kernel.chunks_exact(self.col_grid.m()) {
            push_csv_row(&mut out, row);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parse the CSV form; the header line is required.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty operator file".into()))?
            .trim();
        let rest = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("operator file must start with '# rows=.. cols=..'".into()))?;
        let (m1, m2) = parse_operator_header(rest)?;
        let mut kernel = Vec::with_capacity(m1 * m2);
        let mut count = 0usize;
        for (lineno, raw) in lines.enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let row = parse_csv_row(line, lineno + 2)?;
            if row.len() != m2 {
                return Err(Error::Parse(format!(
                    "kernel row {} has {} columns, expected {}",
                    count + 1,
                    row.len(),
                    m2
                )));
            }
            kernel.extend_from_slice(&row);
            count += 1;
        }
        if count != m1 {
            return Err(Error::Parse(format!(
                "operator file has {} kernel rows, header declares {}",
                count, m1
            )));
        }
        HSOperator::new(Grid::new(m1)?, Grid::new(m2)?, kernel)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        HSOperator::from_csv_str(&text)
    }
}

/// An element (x, y) of the direct sum H (+) G.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSumObservation {
    left: FunctionalObservation,
    right: FunctionalObservation,
}

impl DirectSumObservation {
    pub fn new(left: FunctionalObservation, right: FunctionalObservation) -> Self {
        DirectSumObservation { left, right }
    }

    pub fn left(&self) -> &FunctionalObservation {
        &self.left
    }

    pub fn right(&self) -> &FunctionalObservation {
        &self.right
    }

    /// Direct sum inner product, the sum of the componentwise ones.
    pub fn inner(&self, other: &DirectSumObservation) -> Result<f64> {
        Ok(self.left.inner(&other.left)? + self.right.inner(&other.right)?)
    }

    pub fn norm(&self) -> f64 {
        let s = dot_over_m(&self.left.values, &self.left.values, self.left.grid.m())
            + dot_over_m(&self.right.values, &self.right.values, self.right.grid.m());
        s.sqrt()
    }
}

fn push_csv_row(out: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", v);
    }
    out.push('\n');
}

fn parse_csv_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {:?} on line {}", tok.trim(), lineno)))
        })
        .collect()
}

fn parse_series_header(rest: &str) -> Result<usize> {
    let rest = rest.trim();
    let m_part = rest
        .strip_prefix("grid=midpoint")
        .map(str::trim)
        .and_then(|s| s.strip_prefix("m="))
        .ok_or_else(|| Error::Parse(format!("bad series header {:?}", rest)))?;
    m_part
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("bad m in series header {:?}", rest)))
}

fn parse_operator_header(rest: &str) -> Result<(usize, usize)> {
    let rest = rest.trim();
    let mut rows = None;
    let mut cols = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse::<usize>().ok();
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => Ok((r, c)),
        _ => Err(Error::Parse(format!("bad operator header {:?}", rest))),
    }
}
