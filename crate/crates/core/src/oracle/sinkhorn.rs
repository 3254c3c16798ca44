//! Entropic optimal transport between two histograms, solved in the log domain.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct DiscreteCoupling {
    pub grid_p: Vec<f64>,
    pub grid_q: Vec<f64>,
    /// Joint probabilities, rows indexed by `grid_p`.
    pub plan: Array2<f64>,
    pub eps: f64,
    /// L1 row-marginal error after the final iteration.
    pub marginal_error: f64,
    pub iterations: usize,
    /// Row-marginal error after each iteration.
    pub error_history: Vec<f64>,
}

impl DiscreteCoupling {
    /// Covariance of the two coordinates under the plan.
    pub fn cross_covariance(&self) -> f64 {
        let (mut mp, mut mq, mut mpq) = (0.0, 0.0, 0.0);
        for (i, row) in self.plan.rows().into_iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                mp += w * self.grid_p[i];
                mq += w * self.grid_q[j];
                mpq += w * self.grid_p[i] * self.grid_q[j];
            }
        }
        mpq - mp * mq
    }

    pub fn row_marginal(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(1))
    }

    pub fn col_marginal(&self) -> Array1<f64> {
        self.plan.sum_axis(ndarray::Axis(0))
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_hist(h: &[f64], name: &str) -> Result<()> {
    if h.is_empty() || h.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(format!("{name} must be nonempty and nonnegative")));
    }
    let s: f64 = h.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Log-domain Sinkhorn on `K = exp(-cost / eps)`. Stops when the L1 row-marginal
/// error falls below `tol` or after `max_iters` sweeps.
pub fn sinkhorn_coupling(
    hist_p: &[f64],
    hist_q: &[f64],
    cost: ArrayView2<f64>,
    eps: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DiscreteCoupling> {
    check_hist(hist_p, "hist_p")?;
    check_hist(hist_q, "hist_q")?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let (n, m) = (hist_p.len(), hist_q.len());
    if cost.dim() != (n, m) {
        return Err(Error::invalid(format!("cost is {:?}, expected ({n}, {m})", cost.dim())));
    }
    let log_p: Vec<f64> = hist_p.iter().map(|w| w.ln()).collect();
    let log_q: Vec<f64> = hist_q.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut history = Vec::new();
    let mut err = f64::INFINITY;
    let mut iterations = 0;

    // row i of the plan in log space: f_i + g_j - C_ij / eps + log p_i + log q_j
    let row_mass = |f: &[f64], g: &[f64]| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                if hist_p[i] == 0.0 {
                    return 0.0;
                }
                let lse = log_sum_exp((0..m).map(|j| g[j] - cost[[i, j]] / eps + log_q[j]));
                (f[i] + lse + log_p[i]).exp()
            })
            .collect()
    };

    for _ in 0..max_iters {
        iterations += 1;
        let new_f: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                if hist_p[i] == 0.0 {
                    return 0.0;
                }
                -log_sum_exp((0..m).map(|j| g[j] - cost[[i, j]] / eps + log_q[j]))
            })
            .collect();
        f = new_f;
        let new_g: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|j| {
                if hist_q[j] == 0.0 {
                    return 0.0;
                }
                -log_sum_exp((0..n).map(|i| f[i] - cost[[i, j]] / eps + log_p[i]))
            })
            .collect();
        g = new_g;
        if f.iter().chain(&g).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "Sinkhorn potentials overflowed at eps = {eps}; try a larger eps"
            )));
        }
        let rows = row_mass(&f, &g);
        err = rows.iter().zip(hist_p).map(|(r, p)| (r - p).abs()).sum();
        history.push(err);
        if err < tol {
            break;
        }
    }

    let mut plan = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        if hist_p[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            if hist_q[j] == 0.0 {
                continue;
            }
            plan[[i, j]] = (f[i] + g[j] - cost[[i, j]] / eps + log_p[i] + log_q[j]).exp();
        }
    }
    Ok(DiscreteCoupling {
        grid_p: Vec::new(),
        grid_q: Vec::new(),
        plan,
        eps,
        marginal_error: err,
        iterations,
        error_history: history,
    })
}

/// Evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Normalized `N(mean, 1)` weights on a grid.
pub fn gaussian_histogram(grid: &[f64], mean: f64) -> Vec<f64> {
    let w: Vec<f64> = grid.iter().map(|x| (-(x - mean).powi(2) / 2.0).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Couples discretized `N(a, 1)` and `N(-a, 1)` on `points` grid points over
/// `[-6, 6]` under cost `½ (x - y)²` at regularization `eps`.
///
/// With this cost `eps` is the variance of the Brownian reference over the
/// whole interval, so the coupling's cross-covariance is comparable with
/// [`super::entropic_cross_covariance`].
pub fn shifted_gaussian_coupling(a: f64, eps: f64, points: usize) -> Result<DiscreteCoupling> {
    let grid = uniform_grid(-6.0, 6.0, points);
    let p = gaussian_histogram(&grid, a);
    let q = gaussian_histogram(&grid, -a);
    let cost = Array2::from_shape_fn((points, points), |(i, j)| 0.5 * (grid[i] - grid[j]).powi(2));
    let mut c = sinkhorn_coupling(&p, &q, cost.view(), eps, 5000, 1e-12)?;
    c.grid_p = grid.clone();
    c.grid_q = grid;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_eps_gives_product() {
        let grid = uniform_grid(-3.0, 3.0, 41);
        let p = gaussian_histogram(&grid, 0.5);
        let q = gaussian_histogram(&grid, -0.5);
        let cost = Array2::from_shape_fn((41, 41), |(i, j)| 0.5 * (grid[i] - grid[j]).powi(2));
        let maxc = cost.iter().cloned().fold(0.0, f64::max);
        let c = sinkhorn_coupling(&p, &q, cost.view(), 100.0 * maxc, 1000, 1e-12).unwrap();
        let mut dev: f64 = 0.0;
        for i in 0..41 {
            for j in 0..41 {
                dev = dev.max((c.plan[[i, j]] - p[i] * q[j]).abs());
            }
        }
        assert!(dev < 1e-3);
    }

    #[test]
    fn single_atom() {
        let cost = Array2::from_elem((1, 1), 3.0);
        for eps in [1e-3, 1.0, 1e3] {
            let c = sinkhorn_coupling(&[1.0], &[1.0], cost.view(), eps, 10, 1e-12).unwrap();
            assert!((c.plan[[0, 0]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_is_a_coupling() {
        let c = shifted_gaussian_coupling(1.0, 2.0, 101).unwrap();
        assert!((c.plan.sum() - 1.0).abs() < 1e-9);
        assert!(c.plan.iter().all(|&v| v >= 0.0));
        let p = gaussian_histogram(&c.grid_p, 1.0);
        let q = gaussian_histogram(&c.grid_q, -1.0);
        let rows = c.row_marginal();
        let cols = c.col_marginal();
        let r: f64 = rows.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        let s: f64 = cols.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        assert!(r < 1e-9 && s < 1e-9, "{r} {s}");
    }

    #[test]
    fn errors_decrease_monotonically() {
        let c = shifted_gaussian_coupling(1.0, 0.5, 101).unwrap();
        assert!(c.error_history.len() > 2);
        for w in c.error_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{:?}", w);
        }
    }

    #[test]
    fn zero_weights_are_skipped() {
        let cost = Array2::from_shape_fn((3, 2), |(i, j)| (i + j) as f64);
        let c = sinkhorn_coupling(&[0.5, 0.0, 0.5], &[0.25, 0.75], cost.view(), 0.1, 500, 1e-12).unwrap();
        assert_eq!(c.plan.row(1).sum(), 0.0);
        assert!((c.plan.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let cost = Array2::zeros((2, 2));
        assert!(sinkhorn_coupling(&[0.5, 0.6], &[0.5, 0.5], cost.view(), 1.0, 10, 1e-9).is_err());
        assert!(sinkhorn_coupling(&[0.5, 0.5], &[0.5, 0.5], cost.view(), 0.0, 10, 1e-9).is_err());
        assert!(sinkhorn_coupling(&[1.0], &[0.5, 0.5], cost.view(), 1.0, 10, 1e-9).is_err());
    }
}
