//! Gaussian moments, KL divergence, and the closed-form bridge between
//! `N(a, I)` and `N(-a, I)` under a Brownian reference.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array3, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::chain::{self, Direction, StepMean, Trajectories};
use crate::datasets::Sampler;
use crate::rng;
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid("covariance shape does not match mean"));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    /// `N(mean, var · I)`.
    pub fn isotropic(mean: &[f64], var: f64) -> Self {
        let d = mean.len();
        Self {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::identity(d, d) * var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// True when the covariance is not positive definite.
    pub fn is_degenerate(&self) -> bool {
        self.cov.clone().cholesky().is_none()
    }

    /// Adds `eps · I` to the covariance.
    pub fn regularized(&self, eps: f64) -> Self {
        let d = self.dim();
        Self {
            mean: self.mean.clone(),
            cov: &self.cov + DMatrix::identity(d, d) * eps,
        }
    }
}

/// `KL(p ‖ q)` between Gaussians. Infinite when `p` is degenerate and `q` is not.
pub fn gaussian_kl(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::invalid("KL between Gaussians of different dimension"));
    }
    let lq = q
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("KL reference covariance".into()))?;
    let Some(lp) = p.cov.clone().cholesky() else {
        return Ok(f64::INFINITY);
    };
    let trace = lq.solve(&p.cov).trace();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&lq.solve(&diff));
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let kl = 0.5 * (trace + maha - d as f64 + logdet(&lq.l()) - logdet(&lp.l()));
    Ok(kl.max(0.0))
}

/// `½ [KL(p ‖ q) + KL(q ‖ p)]`.
pub fn symmetric_kl(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    Ok(0.5 * (gaussian_kl(p, q)? + gaussian_kl(q, p)?))
}

/// Sample mean and unbiased sample covariance of the rows of `samples`.
pub fn fit_gaussian(samples: ArrayView2<f32>) -> Result<GaussianMoments> {
    let (n, d) = samples.dim();
    if n <= d {
        return Err(Error::invalid(format!("{n} samples cannot fit a {d}-dimensional Gaussian")));
    }
    let mut mean = DVector::<f64>::zeros(d);
    for row in samples.rows() {
        for j in 0..d {
            mean[j] += row[j] as f64;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0f64; d];
    for row in samples.rows() {
        for j in 0..d {
            centered[j] = row[j] as f64 - mean[j];
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianMoments { mean, cov })
}

/// Per-coordinate cross-covariance of the entropic coupling between `N(a, 1)` and
/// `N(-a, 1)` when the reference transition has variance `eps_total`:
/// `c = sqrt(1 + eps²/4) - eps/2`.
pub fn entropic_cross_covariance(eps_total: f64) -> f64 {
    (1.0 + eps_total * eps_total / 4.0).sqrt() - eps_total / 2.0
}

/// Closed-form bridge between `N(a, I)` at `t = 0` and `N(-a, I)` at `t = 1`
/// under Brownian motion with total variance `eps_total` over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBridge {
    pub a: Vec<f64>,
    pub eps_total: f64,
}

impl GaussianBridge {
    pub fn new(a: Vec<f64>, eps_total: f64) -> Result<Self> {
        if !(eps_total.is_finite() && eps_total > 0.0) {
            return Err(Error::invalid("eps_total must be positive"));
        }
        if a.is_empty() {
            return Err(Error::invalid("shift must be nonempty"));
        }
        Ok(Self { a, eps_total })
    }

    /// Bridge for a chain whose reference variance over the schedule is `2 γ̄_N`.
    pub fn for_schedule(a: Vec<f64>, schedule: &GammaSchedule) -> Result<Self> {
        Self::new(a, 2.0 * schedule.gamma_bar(schedule.n_steps())?)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn cross_covariance(&self) -> f64 {
        entropic_cross_covariance(self.eps_total)
    }

    pub fn marginal(&self, t: f64) -> Result<GaussianMoments> {
        analytic_sb_marginal(&self.a, t, self.eps_total)
    }

    /// Exact bridge paths observed at `t = γ̄_k / γ̄_N`, `k = 0..=N`.
    pub fn sample_paths(&self, schedule: &GammaSchedule, n_paths: usize, seed: u64) -> Result<Trajectories> {
        let n = schedule.n_steps();
        let d = self.dim();
        let total = schedule.gamma_bar(n)?;
        let times: Vec<f64> = schedule.gamma_bars().iter().map(|b| b / total).collect();
        let c = self.cross_covariance();
        let mut states = Array3::<f32>::zeros((n_paths, n + 1, d));
        for p in 0..n_paths {
            let mut r = rng::stream(seed, p as u64);
            for j in 0..d {
                let z1: f64 = StandardNormal.sample(&mut r);
                let z2: f64 = StandardNormal.sample(&mut r);
                let x0 = self.a[j] + z1;
                let x1 = -self.a[j] + c * z1 + (1.0 - c * c).sqrt() * z2;
                let mut x = x0;
                states[[p, 0, j]] = x as f32;
                for k in 1..=n {
                    if k == n {
                        x = x1;
                    } else {
                        let (s, t) = (times[k - 1], times[k]);
                        let w = (t - s) / (1.0 - s);
                        let var = self.eps_total * (t - s) * (1.0 - t) / (1.0 - s);
                        let z: f64 = StandardNormal.sample(&mut r);
                        x = x + w * (x1 - x) + var.sqrt() * z;
                    }
                    states[[p, k, j]] = x as f32;
                }
            }
        }
        Ok(Trajectories::from_states(Direction::Forward, seed, states))
    }

    /// KL of the fitted marginal against the exact one at each evaluation
    /// index, as `(k, t, kl)`.
    pub fn kl_profile(
        &self,
        trajs: &Trajectories,
        schedule: &GammaSchedule,
        n_eval_times: usize,
    ) -> Result<Vec<(usize, f64, f64)>> {
        if trajs.n_steps() != schedule.n_steps() {
            return Err(Error::invalid("trajectory length does not match schedule"));
        }
        let total = schedule.gamma_bar(schedule.n_steps())?;
        eval_indices(schedule, n_eval_times)?
            .into_iter()
            .map(|k| {
                let t = schedule.gamma_bar(k)? / total;
                let fitted = fit_gaussian(trajs.states_at(k))?;
                Ok((k, t, gaussian_kl(&fitted, &self.marginal(t)?)?))
            })
            .collect()
    }

    /// Mean over evaluation times of `KL(fitted_k ‖ analytic(t_k))`, `t_k = γ̄_k / γ̄_N`.
    pub fn averaged_kl(&self, trajs: &Trajectories, schedule: &GammaSchedule, n_eval_times: usize) -> Result<f64> {
        let p = self.kl_profile(trajs, schedule, n_eval_times)?;
        Ok(p.iter().map(|x| x.2).sum::<f64>() / p.len() as f64)
    }
}

/// Marginal at time `t` of the bridge from `N(a, I)` to `N(-a, I)`:
/// mean `(1 - 2t) a`, covariance
/// `[(1-t)² + t² + 2 t (1-t) c + eps · t (1-t)] I`.
pub fn analytic_sb_marginal(a: &[f64], t: f64, eps_total: f64) -> Result<GaussianMoments> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    if !(eps_total > 0.0) {
        return Err(Error::invalid("eps_total must be positive"));
    }
    let c = entropic_cross_covariance(eps_total);
    let s = 1.0 - t;
    let var = s * s + t * t + 2.0 * t * s * c + eps_total * t * s;
    let mean: Vec<f64> = a.iter().map(|ai| (1.0 - 2.0 * t) * ai).collect();
    Ok(GaussianMoments::isotropic(&mean, var))
}

/// Chain indices whose `t = γ̄_k / γ̄_N` lie closest to `i / (n + 1)`, `i = 1..=n`.
pub fn eval_indices(schedule: &GammaSchedule, n_eval_times: usize) -> Result<Vec<usize>> {
    if n_eval_times < 2 {
        return Err(Error::invalid("need at least two evaluation times"));
    }
    let total = schedule.gamma_bar(schedule.n_steps())?;
    Ok((1..=n_eval_times)
        .map(|i| {
            let t = i as f64 / (n_eval_times + 1) as f64;
            schedule
                .gamma_bars()
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a / total - t).abs().total_cmp(&(*b / total - t).abs())
                })
                .map(|(k, _)| k)
                .unwrap()
        })
        .collect())
}

/// Simulates the backward chain from prior draws and reports the averaged KL of
/// its marginals against the closed-form bridge.
#[allow(clippy::too_many_arguments)]
pub fn averaged_kl_metric(
    backward: &dyn StepMean,
    schedule: &GammaSchedule,
    prior: &Sampler,
    a: &[f64],
    eps_total: f64,
    n_eval_times: usize,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    if n_paths < 1000 {
        return Err(Error::invalid("averaged KL needs at least 1000 paths"));
    }
    let bridge = GaussianBridge::new(a.to_vec(), eps_total)?;
    let start = prior.draw(n_paths, &mut rng::stream(seed, u64::MAX))?;
    let trajs = chain::sample_backward(backward, schedule, start.view(), seed)?;
    bridge.averaged_kl(&trajs, schedule, n_eval_times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn kl_of_equal_is_zero() {
        let p = GaussianMoments::isotropic(&[0.3, -1.0], 1.7);
        assert!(gaussian_kl(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn kl_shifted_unit() {
        let p = GaussianMoments::isotropic(&[1.0, 1.0], 1.0);
        let q = GaussianMoments::isotropic(&[-1.0, -1.0], 1.0);
        assert!((gaussian_kl(&p, &q).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn kl_scalar_variance() {
        let p = GaussianMoments::isotropic(&[0.0], 2.0);
        let q = GaussianMoments::isotropic(&[0.0], 1.0);
        let expected = 0.5 * (2.0 - 1.0 + (0.5f64).ln());
        assert!((gaussian_kl(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.15342640972002736).abs() < 1e-12);
    }

    #[test]
    fn kl_singular_reference() {
        let p = GaussianMoments::isotropic(&[0.0], 1.0);
        let q = GaussianMoments::isotropic(&[0.0], 0.0);
        assert!(matches!(gaussian_kl(&p, &q), Err(Error::SingularMatrix(_))));
        assert_eq!(gaussian_kl(&q, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        use rand::Rng;
        let mut r = rng::stream(17, 0);
        for _ in 0..200 {
            let d = r.random_range(1..4);
            let mk = |r: &mut rng::StreamRng| {
                let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
                let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
                let mean = DVector::from_fn(d, |_, _| r.random_range(-2.0..2.0));
                GaussianMoments::new(mean, cov).unwrap()
            };
            let (p, q) = (mk(&mut r), mk(&mut r));
            assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
            assert!(gaussian_kl(&p, &p).unwrap() < 1e-9);
        }
    }

    #[test]
    fn marginal_endpoints_and_midpoint() {
        let a = [1.0, 1.0];
        let m0 = analytic_sb_marginal(&a, 0.0, 2.0).unwrap();
        assert_eq!(m0, GaussianMoments::isotropic(&a, 1.0));
        let m1 = analytic_sb_marginal(&a, 1.0, 2.0).unwrap();
        assert_eq!(m1, GaussianMoments::isotropic(&[-1.0, -1.0], 1.0));
        let mid = analytic_sb_marginal(&a, 0.5, 2.0).unwrap();
        assert_eq!(mid.mean.as_slice(), &[0.0, 0.0]);
        assert!((mid.cov[(0, 0)] - 1.2071).abs() < 1e-4);
        assert!((entropic_cross_covariance(2.0) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!(analytic_sb_marginal(&a, 1.5, 2.0).is_err());
    }

    #[test]
    fn marginal_symmetry() {
        let a = [0.7, -0.2, 1.3];
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let p = analytic_sb_marginal(&a, t, 2.0).unwrap();
            let q = analytic_sb_marginal(&a, 1.0 - t, 2.0).unwrap();
            assert!((&p.cov - &q.cov).abs().max() < 1e-12);
            assert!((&p.mean + &q.mean).abs().max() < 1e-12);
        }
    }

    #[test]
    fn fit_identical_samples() {
        let x = Array2::from_elem((10, 2), 1.5f32);
        let g = fit_gaussian(x.view()).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.5, 1.5]);
        assert_eq!(g.cov.abs().max(), 0.0);
        assert!(g.is_degenerate());
        assert!(fit_gaussian(Array2::<f32>::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn fit_standard_normal() {
        let s = Sampler::shifted_gaussian(vec![0.0], 2, 3).unwrap();
        let x = s.stream(0).draw(100_000).unwrap();
        let g = fit_gaussian(x.view()).unwrap();
        assert!(g.mean.abs().max() < 0.02);
        assert!((&g.cov - DMatrix::identity(2, 2)).abs().max() < 0.05);
    }

    #[test]
    fn fit_is_affine_equivariant() {
        let s = Sampler::shifted_gaussian(vec![0.5, -1.0], 2, 4).unwrap();
        let x = s.stream(0).draw(500).unwrap();
        let x64 = x.mapv(|v| v as f64);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 0.25]);
        let b = DVector::from_column_slice(&[3.0, -2.0]);
        let mut y = Array2::<f32>::zeros((500, 2));
        for i in 0..500 {
            let v = &a * DVector::from_column_slice(&[x64[[i, 0]], x64[[i, 1]]]) + &b;
            y[[i, 0]] = v[0] as f32;
            y[[i, 1]] = v[1] as f32;
        }
        let gx = fit_gaussian(x.view()).unwrap();
        let gy = fit_gaussian(y.view()).unwrap();
        let mean = &a * &gx.mean + &b;
        let cov = &a * &gx.cov * a.transpose();
        assert!((mean - gy.mean).abs().max() < 1e-5);
        assert!((cov - gy.cov).abs().max() < 1e-4);
    }

    #[test]
    fn exact_bridge_paths_reach_floor() {
        let sched = GammaSchedule::symmetric(20, 0.1, 1.0, true).unwrap();
        let bridge = GaussianBridge::for_schedule(vec![1.0, 1.0], &sched).unwrap();
        let t = bridge.sample_paths(&sched, 10_000, 8).unwrap();
        let kl = bridge.averaged_kl(&t, &sched, 10).unwrap();
        assert!(kl < 0.02, "kl {kl}");
    }

    #[test]
    fn eval_indices_track_uniform_times() {
        let sched = GammaSchedule::constant(20, 1.0, true).unwrap();
        let idx = eval_indices(&sched, 4).unwrap();
        assert_eq!(idx, vec![4, 8, 12, 16]);
        assert!(eval_indices(&sched, 1).is_err());
    }
}
