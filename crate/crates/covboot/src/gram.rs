//! Gram-matrix reductions for bootstrap replicates and the bandwidth plug-in.
//!
//! Every replicate statistic in this crate is an HS norm of sums of rank-one
//! tensors of (centered) series rows. Since <a (x) b, u (x) v>_HS =
//! <a, u><b, v> holds exactly under the grid quadrature, those norms are
//! polynomials in the n x n matrix of centered row inner products. Working
//! through that matrix turns O(L m^2) of kernel arithmetic per replicate
//! into O(L^2 + L n) of scalar arithmetic, which is what makes the Monte
//! Carlo harness affordable. The operator-space implementations in
//! `bootstrap` remain the reference; tests pin both routes together.

use crate::fspace::FunctionalSeries;

/// Centered row inner products of one series:
/// c[a][b] = <X_a - Xbar, X_b - Xbar>.
pub(crate) struct Gram {
    pub n: usize,
    pub c: Vec<f64>,
}

impl Gram {
    pub fn of_series(series: &FunctionalSeries) -> Gram {
        let n = series.len();
        let m = series.grid().m();
        let mv = series.mean().values().to_vec();
        let mut z = Vec::with_capacity(n * m);
        for row in series.rows() {
            for (x, mu) in row.iter().zip(&mv) {
                z.push(x - mu);
            }
        }
        let mut c = vec![0.0; n * n];
        for a in 0..n {
            let za = &z[a * m..(a + 1) * m];
            for b in a..n {
                let zb = &z[b * m..(b + 1) * m];
                let s = za.iter().zip(zb).map(|(x, y)| x * y).sum::<f64>() / m as f64;
                c[a * n + b] = s;
                c[b * n + a] = s;
            }
        }
        Gram { n, c }
    }

    /// Gram of the paired series in the direct sum: inner products add.
    pub fn direct_sum(gx: &Gram, gy: &Gram) -> Gram {
        assert_eq!(gx.n, gy.n);
        Gram {
            n: gx.n,
            c: gx.c.iter().zip(&gy.c).map(|(a, b)| a + b).collect(),
        }
    }

    #[cfg(test)]
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.c[a * self.n + b]
    }

    /// <Vhat, Vhat>_HS = (1/n^2) sum c^2.
    pub fn vhat_norm_sq(&self) -> f64 {
        let s: f64 = self.c.iter().map(|v| v * v).sum();
        s / (self.n * self.n) as f64
    }
}

/// <Vhat_XY, Vhat_XY>_HS = (1/n^2) sum cx cy.
pub(crate) fn cross_norm_sq(gx: &Gram, gy: &Gram) -> f64 {
    let s: f64 = gx.c.iter().zip(&gy.c).map(|(a, b)| a * b).sum();
    s / (gx.n * gx.n) as f64
}

/// Bootstrap-centered Gram values for a resample: u_i and ubar such that
/// <X*_i - Xbar*, X*_j - Xbar*> = c[sel_i][sel_j] - u_i - u_j + ubar.
fn resample_centering(g: &Gram, sel: &[usize]) -> (Vec<f64>, f64) {
    let l = sel.len() as f64;
    let u: Vec<f64> = sel
        .iter()
        .map(|&si| {
            let row = &g.c[si * g.n..(si + 1) * g.n];
            sel.iter().map(|&sl| row[sl]).sum::<f64>() / l
        })
        .collect();
    let ubar = u.iter().sum::<f64>() / l;
    (u, ubar)
}

/// One-sample replicate T* = L ||V*_L - Vhat_n||_HS^2 for the resample with
/// row indices `sel`; `vhat_sq` is the precomputed <Vhat, Vhat>.
pub(crate) fn one_sample_replicate(g: &Gram, sel: &[usize], vhat_sq: f64) -> f64 {
    let l = sel.len();
    let n = g.n;
    let (u, ubar) = resample_centering(g, sel);

    let mut vv = 0.0;
    for (i, &si) in sel.iter().enumerate() {
        let row = &g.c[si * n..(si + 1) * n];
        for (j, &sj) in sel.iter().enumerate() {
            let gs = row[sj] - u[i] - u[j] + ubar;
            vv += gs * gs;
        }
    }
    vv /= (l * l) as f64;

    // w[a] = <Xbar* - Xbar, X_a - Xbar> over original rows a.
    let mut w = vec![0.0; n];
    for &sl in sel {
        let row = &g.c[sl * n..(sl + 1) * n];
        for (wa, &v) in w.iter_mut().zip(row) {
            *wa += v;
        }
    }
    let inv_l = 1.0 / l as f64;
    for wa in &mut w {
        *wa *= inv_l;
    }
    let mut vh = 0.0;
    for &si in sel {
        let row = &g.c[si * n..(si + 1) * n];
        for (a, &wa) in w.iter().enumerate() {
            let d = row[a] - wa;
            vh += d * d;
        }
    }
    vh /= (l * n) as f64;

    (l as f64) * (vv - 2.0 * vh + vhat_sq).max(0.0)
}

/// Cross replicate T* = L ||V*_XY - center||_HS^2; center is Vhat_XY when
/// `center_at_estimate`, otherwise zero. `cross_sq` is <Vhat_XY, Vhat_XY>.
pub(crate) fn cross_replicate(
    gx: &Gram,
    gy: &Gram,
    sel: &[usize],
    cross_sq: f64,
    center_at_estimate: bool,
) -> f64 {
    let l = sel.len();
    let n = gx.n;
    let (ux, uxbar) = resample_centering(gx, sel);
    let (uy, uybar) = resample_centering(gy, sel);

    let mut vv = 0.0;
    for (i, &si) in sel.iter().enumerate() {
        let rx = &gx.c[si * n..(si + 1) * n];
        let ry = &gy.c[si * n..(si + 1) * n];
        for (j, &sj) in sel.iter().enumerate() {
            let gsx = rx[sj] - ux[i] - ux[j] + uxbar;
            let gsy = ry[sj] - uy[i] - uy[j] + uybar;
            vv += gsx * gsy;
        }
    }
    vv /= (l * l) as f64;
    if !center_at_estimate {
        return (l as f64) * vv.max(0.0);
    }

    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    for &sl in sel {
        let rx = &gx.c[sl * n..(sl + 1) * n];
        let ry = &gy.c[sl * n..(sl + 1) * n];
        for a in 0..n {
            wx[a] += rx[a];
            wy[a] += ry[a];
        }
    }
    let inv_l = 1.0 / l as f64;
    for a in 0..n {
        wx[a] *= inv_l;
        wy[a] *= inv_l;
    }
    let mut vh = 0.0;
    for &si in sel {
        let rx = &gx.c[si * n..(si + 1) * n];
        let ry = &gy.c[si * n..(si + 1) * n];
        for a in 0..n {
            vh += (rx[a] - wx[a]) * (ry[a] - wy[a]);
        }
    }
    vh /= (l * n) as f64;

    (l as f64) * (vv - 2.0 * vh + cross_sq).max(0.0)
}

/// CUSUM replicate statistics (CS*, CI*) for one resample: the bridge of
/// the partial sums of (X*_i - Xbar*) (x) (X*_i - Xbar*). Centering by
/// Vhat_n cancels from the bridge, so it never enters.
pub(crate) fn cusum_replicate(g: &Gram, sel: &[usize]) -> (f64, f64) {
    let l = sel.len();
    let n = g.n;
    let (u, ubar) = resample_centering(g, sel);

    // q[i][j] = <Y*_i, Y*_j> = (centered resample gram)^2
    let mut q = vec![0.0; l * l];
    for (i, &si) in sel.iter().enumerate() {
        let row = &g.c[si * n..(si + 1) * n];
        for (j, &sj) in sel.iter().enumerate() {
            let gs = row[sj] - u[i] - u[j] + ubar;
            q[i * l + j] = gs * gs;
        }
    }
    let rowsum: Vec<f64> = q.chunks_exact(l).map(|r| r.iter().sum()).collect();
    let total: f64 = rowsum.iter().sum();

    // ||B*_j||^2 = (P_j - 2 t C_j + t^2 total)/L with t = j/L, where
    // P_j = <S_j, S_j> and C_j = <S_j, S_L> accumulate incrementally.
    let mut pj = 0.0;
    let mut cj = 0.0;
    let mut cs_sq: f64 = 0.0;
    let mut ci_sum = 0.0;
    for j in 1..l {
        let r = j - 1;
        let rowq = &q[r * l..(r + 1) * l];
        let pre: f64 = rowq[..r].iter().sum();
        pj += 2.0 * pre + rowq[r];
        cj += rowsum[r];
        let t = j as f64 / l as f64;
        let b2 = ((pj - 2.0 * t * cj + t * t * total) / l as f64).max(0.0);
        cs_sq = cs_sq.max(b2);
        ci_sum += b2;
    }
    (cs_sq.sqrt(), ci_sum / l as f64)
}

/// Bartlett weight (1 - |u|)+.
fn bartlett(u: f64) -> f64 {
    (1.0 - u.abs()).max(0.0)
}

/// Ceiling that forgives values an epsilon above an integer, so exact
/// roots like 32^(1/5) = 2 do not round up.
pub(crate) fn ceil_stable(x: f64) -> usize {
    let r = x.round();
    let v = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    v as usize
}

/// Lag-window quantities of the tensor series for the plug-in rule:
/// (||Chat^(0)||_HS^2, ||Chat^(1)||_HS^2, trace(Chat^(0))), where
/// Chat^(a) = sum_{|r| <= h0} |r|^a w(r/h0) gammahat_r with Bartlett w and
/// gammahat_r the autocovariance of Yhat_i = (X_i - Xbar) (x) (X_i - Xbar).
pub(crate) fn plugin_parts(g: &Gram, h0: usize) -> (f64, f64, f64) {
    let n = g.n;

    // Centered Gram of the tensor series: M[i][j] = c[i][j]^2 minus
    // row/grand means, since <Yhat_i, Yhat_j> = c[i][j]^2.
    let mut rowmean = vec![0.0; n];
    for i in 0..n {
        let row = &g.c[i * n..(i + 1) * n];
        rowmean[i] = row.iter().map(|v| v * v).sum::<f64>() / n as f64;
    }
    let grand = rowmean.iter().sum::<f64>() / n as f64;
    let mut mm = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let cij = g.c[i * n + j];
            mm[i * n + j] = cij * cij - rowmean[i] - rowmean[j] + grand;
        }
    }

    let h0 = h0 as i64;

    // <gammahat_r, gammahat_r'> = (1/n^2) sum over valid (i, j) of
    // M[i][j] M[i+r][j+r'], with gammahat_{-r} the adjoint of gammahat_r.
    let gamma_inner = |r: i64, rp: i64| -> f64 {
        let i_lo = (-r).max(0).min(n as i64) as usize;
        let i_hi = (n as i64 - r.max(0)).max(0) as usize;
        let j_lo = (-rp).max(0).min(n as i64) as usize;
        let j_hi = (n as i64 - rp.max(0)).max(0) as usize;
        let mut s = 0.0;
        for i in i_lo..i_hi {
            let ir = (i as i64 + r) as usize;
            for j in j_lo..j_hi {
                s += mm[i * n + j] * mm[ir * n + (j as i64 + rp) as usize];
            }
        }
        s / (n * n) as f64
    };

    let lags: Vec<i64> = (-h0..=h0).collect();
    let w: Vec<f64> = lags.iter().map(|&r| bartlett(r as f64 / h0 as f64)).collect();

    let mut c0_sq = 0.0;
    let mut c1_sq = 0.0;
    for (ai, &r) in lags.iter().enumerate() {
        if w[ai] == 0.0 {
            continue;
        }
        for (bi, &rp) in lags.iter().enumerate() {
            if w[bi] == 0.0 {
                continue;
            }
            let inner = gamma_inner(r, rp);
            c0_sq += w[ai] * w[bi] * inner;
            c1_sq += (r.abs() * rp.abs()) as f64 * w[ai] * w[bi] * inner;
        }
    }

    // trace(gammahat_r) = (1/n) sum_i M[i][i+|r|].
    let mut trace0 = 0.0;
    for (ai, &r) in lags.iter().enumerate() {
        if w[ai] == 0.0 {
            continue;
        }
        let k = r.unsigned_abs() as usize;
        if k >= n {
            continue;
        }
        let tr: f64 = (0..n - k).map(|i| mm[i * n + (i + k)]).sum();
        trace0 += w[ai] * tr / n as f64;
    }

    (c0_sq, c1_sq, trace0)
}

/// Plug-in block length from the centered Gram of a series (or a pair sum):
/// p = ceil(const * n^(1/3) * (||Chat^(1)||^2 / Vhat)^(1/3)) with
/// Vhat = (2/3)(||Chat^(0)||^2 + trace(Chat^(0))^2), clamped to [1, n/2].
/// Degenerate series fall back to p = 1.
pub(crate) fn plugin_block_length(g: &Gram, h0_override: Option<usize>, constant: f64) -> usize {
    let n = g.n;
    let cap = (n / 2).max(1);
    if n < 2 {
        return 1;
    }
    let h0 = h0_override.unwrap_or_else(|| ceil_stable((n as f64).powf(0.2)).max(1));
    let (c0_sq, c1_sq, trace0) = plugin_parts(g, h0);
    let vhat = (2.0 / 3.0) * (c0_sq + trace0 * trace0);
    let ratio = c1_sq / vhat;
    if !ratio.is_finite() || ratio <= 0.0 {
        return 1;
    }
    let p = ceil_stable(constant * (n as f64).powf(1.0 / 3.0) * ratio.powf(1.0 / 3.0));
    p.clamp(1, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covops::{empirical_covariance, empirical_cross_covariance};
    use crate::fspace::{tensor, FunctionalObservation, FunctionalSeries, Grid, HSOperator};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_series(n: usize, m: usize, seed: u64) -> FunctionalSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        FunctionalSeries::new(Grid::new(m).unwrap(), data).unwrap()
    }

    fn random_sel(l: usize, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..l).map(|_| rng.gen_range(0..n)).collect()
    }

    fn centered_obs(s: &FunctionalSeries, i: usize) -> FunctionalObservation {
        let mv = s.mean();
        FunctionalObservation::new(
            s.grid(),
            s.row(i).iter().zip(mv.values()).map(|(x, m)| x - m).collect(),
        )
        .unwrap()
    }

    #[test]
    fn test_gram_matches_inner_products() {
        let s = random_series(7, 3, 100);
        let g = Gram::of_series(&s);
        for a in 0..7 {
            for b in 0..7 {
                let za = centered_obs(&s, a);
                let zb = centered_obs(&s, b);
                assert_abs_diff_eq!(g.at(a, b), za.inner(&zb).unwrap(), epsilon = 1e-13);
            }
        }
        let cov = empirical_covariance(&s).unwrap();
        let hs = cov.operator().hs_norm();
        assert_abs_diff_eq!(g.vhat_norm_sq(), hs * hs, epsilon = 1e-12);
    }

    #[test]
    fn test_cross_norm_matches_operator() {
        let x = random_series(9, 3, 101);
        let y = random_series(9, 4, 102);
        let gx = Gram::of_series(&x);
        let gy = Gram::of_series(&y);
        let hs = empirical_cross_covariance(&x, &y).unwrap().hs_norm();
        assert_abs_diff_eq!(cross_norm_sq(&gx, &gy), hs * hs, epsilon = 1e-12);
    }

    #[test]
    fn test_one_sample_replicate_matches_operators() {
        let s = random_series(10, 3, 7);
        let g = Gram::of_series(&s);
        let vhat = empirical_covariance(&s).unwrap().into_operator();
        let vhat_sq = g.vhat_norm_sq();
        for seed in 0..5 {
            let sel = random_sel(8, 10, 200 + seed);
            let fast = one_sample_replicate(&g, &sel, vhat_sq);
            let resample = s.gather(&sel).unwrap();
            let vstar = empirical_covariance(&resample).unwrap().into_operator();
            let slow = 8.0 * vstar.sub(&vhat).unwrap().hs_norm().powi(2);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-10 * (1.0 + slow));
        }
    }

    #[test]
    fn test_cross_replicate_matches_operators() {
        let x = random_series(9, 3, 8);
        let y = random_series(9, 2, 9);
        let gx = Gram::of_series(&x);
        let gy = Gram::of_series(&y);
        let vxy = empirical_cross_covariance(&x, &y).unwrap();
        let cross_sq = cross_norm_sq(&gx, &gy);
        for seed in 0..5 {
            let sel = random_sel(6, 9, 300 + seed);
            let rx = x.gather(&sel).unwrap();
            let ry = y.gather(&sel).unwrap();
            let vstar = empirical_cross_covariance(&rx, &ry).unwrap();

            let fast = cross_replicate(&gx, &gy, &sel, cross_sq, true);
            let slow = 6.0 * vstar.sub(&vxy).unwrap().hs_norm().powi(2);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-10 * (1.0 + slow));

            let fast0 = cross_replicate(&gx, &gy, &sel, cross_sq, false);
            let slow0 = 6.0 * vstar.hs_norm().powi(2);
            assert_abs_diff_eq!(fast0, slow0, epsilon = 1e-10 * (1.0 + slow0));
        }
    }

    #[test]
    fn test_cusum_replicate_matches_operators() {
        let s = random_series(8, 2, 12);
        let g = Gram::of_series(&s);
        for seed in 0..5 {
            let sel = random_sel(6, 8, 400 + seed);
            let (cs_fast, ci_fast) = cusum_replicate(&g, &sel);

            // Slow route: materialize the bridge of the centered tensor sums.
            let resample = s.gather(&sel).unwrap();
            let mstar = resample.mean();
            let l = sel.len();
            let grid = s.grid();
            let terms: Vec<HSOperator> = (0..l)
                .map(|i| {
                    let z = FunctionalObservation::new(
                        grid,
                        resample.row(i).iter().zip(mstar.values()).map(|(x, m)| x - m).collect(),
                    )
                    .unwrap();
                    tensor(&z, &z)
                })
                .collect();
            let mut sums = Vec::with_capacity(l + 1);
            let mut acc = HSOperator::zeros(grid, grid);
            sums.push(acc.clone());
            for t in &terms {
                acc = acc.add(t).unwrap();
                sums.push(acc.clone());
            }
            let scale = 1.0 / (l as f64).sqrt();
            let mut norms = Vec::new();
            for j in 0..l {
                let t = j as f64 / l as f64;
                let bridge = sums[j].sub(&sums[l].scaled(t)).unwrap().scaled(scale);
                norms.push(bridge.hs_norm());
            }
            let cs_slow = norms.iter().fold(0.0f64, |a, &b| a.max(b));
            let ci_slow = norms.iter().map(|v| v * v).sum::<f64>() / l as f64;
            assert_abs_diff_eq!(cs_fast, cs_slow, epsilon = 1e-10 * (1.0 + cs_slow));
            assert_abs_diff_eq!(ci_fast, ci_slow, epsilon = 1e-10 * (1.0 + ci_slow));
        }
    }

    #[test]
    fn test_ceil_stable() {
        assert_eq!(ceil_stable(2.0000000000000004), 2);
        assert_eq!(ceil_stable(1.9999999999999998), 2);
        assert_eq!(ceil_stable(2.1), 3);
        assert_eq!(ceil_stable(3.0), 3);
    }

    // Literal big-space computation of the plug-in quantities: flatten the
    // tensor series to vectors of length m^2 with weight 1/m^2 and build
    // every lag-window operator as an m^2 x m^2 kernel.
    fn plugin_naive(s: &FunctionalSeries, h0: usize) -> (f64, f64, f64) {
        let n = s.len();
        let m = s.grid().m();
        let d = m * m;
        let mv = s.mean();
        let ys: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let z: Vec<f64> =
                    s.row(i).iter().zip(mv.values()).map(|(x, mu)| x - mu).collect();
                let mut t = Vec::with_capacity(d);
                for &a in &z {
                    for &b in &z {
                        t.push(a * b);
                    }
                }
                t
            })
            .collect();
        let ybar: Vec<f64> = (0..d)
            .map(|c| ys.iter().map(|y| y[c]).sum::<f64>() / n as f64)
            .collect();
        let us: Vec<Vec<f64>> =
            ys.iter().map(|y| y.iter().zip(&ybar).map(|(a, b)| a - b).collect()).collect();

        // gammahat_r as a big kernel, r signed.
        let gamma = |r: i64| -> Vec<f64> {
            let mut k = vec![0.0; d * d];
            for i in 0..n as i64 {
                let j = i + r;
                if j < 0 || j >= n as i64 {
                    continue;
                }
                let (ui, uj) = (&us[i as usize], &us[j as usize]);
                for a in 0..d {
                    for b in 0..d {
                        k[a * d + b] += ui[a] * uj[b];
                    }
                }
            }
            for v in &mut k {
                *v /= n as f64;
            }
            k
        };
        let mut c0 = vec![0.0; d * d];
        let mut c1 = vec![0.0; d * d];
        for r in -(h0 as i64)..=(h0 as i64) {
            let w = bartlett(r as f64 / h0 as f64);
            if w == 0.0 {
                continue;
            }
            let gk = gamma(r);
            for (idx, v) in gk.iter().enumerate() {
                c0[idx] += w * v;
                c1[idx] += r.abs() as f64 * w * v;
            }
        }
        let hs_sq = |k: &[f64]| k.iter().map(|v| v * v).sum::<f64>() / (d * d) as f64;
        // Trace under the grid quadrature of the big space.
        let trace = |k: &[f64]| (0..d).map(|a| k[a * d + a]).sum::<f64>() / d as f64;
        (hs_sq(&c0), hs_sq(&c1), trace(&c0))
    }

    #[test]
    fn test_plugin_matches_big_space_materialization() {
        for (n, m, seed) in [(6usize, 2usize, 1u64), (9, 2, 2), (8, 3, 3)] {
            let s = random_series(n, m, 500 + seed);
            let g = Gram::of_series(&s);
            let h0 = 2;
            let (c0_fast, c1_fast, tr_fast) = plugin_parts(&g, h0);
            let (c0_naive, c1_naive, tr_naive) = plugin_naive(&s, h0);
            assert_abs_diff_eq!(c0_fast, c0_naive, epsilon = 1e-10 * (1.0 + c0_naive.abs()));
            assert_abs_diff_eq!(c1_fast, c1_naive, epsilon = 1e-10 * (1.0 + c1_naive.abs()));
            assert_abs_diff_eq!(tr_fast, tr_naive, epsilon = 1e-10 * (1.0 + tr_naive.abs()));

            let p_fast = plugin_block_length(&g, Some(h0), 1.0);
            let vhat = (2.0 / 3.0) * (c0_naive + tr_naive * tr_naive);
            let ratio: f64 = c1_naive / vhat;
            let p_naive = if ratio.is_finite() && ratio > 0.0 {
                ceil_stable((n as f64).powf(1.0 / 3.0) * ratio.powf(1.0 / 3.0)).clamp(1, n / 2)
            } else {
                1
            };
            assert_eq!(p_fast, p_naive, "n={} m={} seed={}", n, m, seed);
        }
    }

    #[test]
    fn test_plugin_degenerate_and_bounds() {
        let constant_rows: Vec<f64> = std::iter::repeat([1.0, 2.0]).take(3).flatten().collect();
        let s = FunctionalSeries::new(Grid::new(2).unwrap(), constant_rows).unwrap();
        let g = Gram::of_series(&s);
        assert_eq!(plugin_block_length(&g, None, 1.0), 1);

        for seed in 0..10 {
            let s = random_series(20, 3, 600 + seed);
            let g = Gram::of_series(&s);
            let p = plugin_block_length(&g, None, 1.0);
            assert!((1..=10).contains(&p));
        }
    }

    #[test]
    fn test_plugin_scale_free() {
        let s = random_series(30, 4, 77);
        let g1 = Gram::of_series(&s);
        let g2 = Gram::of_series(&s.scaled(3.0));
        assert_eq!(
            plugin_block_length(&g1, None, 1.0),
            plugin_block_length(&g2, None, 1.0)
        );
    }
}
