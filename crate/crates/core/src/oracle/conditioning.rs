//! Exact conditioning of the zero-drift Brownian chain by brute-force linear algebra.

use nalgebra::{DMatrix, DVector};

use crate::objectives::PosteriorParams;
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

/// Variance of `x_0` in the joint law. The conditionals used for training do
/// not depend on it because `x_0` or a later state is always pinned.
pub const INITIAL_VARIANCE: f64 = 1.0;

/// Per-coordinate covariance of `(x_0, ..., x_N)` for `x_0 ~ N(0, s0)` and
/// increments of variance `2 γ_k`: `Cov(x_i, x_j) = s0 + 2 γ̄_{min(i, j)}`.
pub fn chain_covariance(schedule: &GammaSchedule, s0: f64) -> DMatrix<f64> {
    let bars = schedule.gamma_bars();
    let n = bars.len();
    DMatrix::from_fn(n, n, |i, j| s0 + 2.0 * bars[i.min(j)])
}

/// Conditional law of `x_query` given the pinned states, computed from the
/// joint Gaussian via its Schur complement. Coordinates are independent and
/// share one variance.
pub fn chain_conditioning_bruteforce(
    schedule: &GammaSchedule,
    query: usize,
    pins: &[(usize, Vec<f64>)],
) -> Result<PosteriorParams> {
    let n = schedule.n_steps();
    if query > n {
        return Err(Error::invalid(format!("query index {query} outside 0..={n}")));
    }
    if pins.is_empty() {
        return Err(Error::invalid("need at least one pinned state"));
    }
    let d = pins[0].1.len();
    for (idx, x) in pins {
        if *idx > n {
            return Err(Error::invalid(format!("pinned index {idx} outside 0..={n}")));
        }
        if x.len() != d {
            return Err(Error::invalid("pinned states differ in dimension"));
        }
    }
    if let Some((_, x)) = pins.iter().find(|(i, _)| *i == query) {
        return Ok(PosteriorParams {
            mean: x.clone(),
            variance: 0.0,
        });
    }
    for (a, (i, _)) in pins.iter().enumerate() {
        if pins[..a].iter().any(|(j, _)| j == i) {
            return Err(Error::SingularMatrix(format!("state {i} pinned twice")));
        }
    }
    let cov = chain_covariance(schedule, INITIAL_VARIANCE);
    let m = pins.len();
    let s_pp = DMatrix::from_fn(m, m, |a, b| cov[(pins[a].0, pins[b].0)]);
    let s_qp = DVector::from_fn(m, |a, _| cov[(query, pins[a].0)]);
    let chol = s_pp
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("pinned-state covariance block".into()))?;
    let w = chol.solve(&s_qp);
    let variance = cov[(query, query)] - s_qp.dot(&w);
    let mean = (0..d)
        .map(|c| (0..m).map(|a| w[a] * pins[a].1[c]).sum())
        .collect();
    Ok(PosteriorParams {
        mean,
        variance: variance.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Direction;
    use crate::objectives::posterior_params;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn brownian_midpoint() {
        let s = GammaSchedule::constant(4, 0.25, false).unwrap();
        let p = chain_conditioning_bruteforce(&s, 1, &[(0, vec![0.4]), (2, vec![2.0])]).unwrap();
        assert!((p.mean[0] - 1.2).abs() < 1e-12);
        assert!((p.variance - 0.25).abs() < 1e-12);
    }

    #[test]
    fn self_conditioning() {
        let s = GammaSchedule::constant(4, 0.25, false).unwrap();
        let p = chain_conditioning_bruteforce(&s, 0, &[(0, vec![0.7]), (3, vec![1.0])]).unwrap();
        assert_eq!(p.variance, 0.0);
        assert_eq!(p.mean, vec![0.7]);
    }

    #[test]
    fn duplicate_pins_are_singular() {
        let s = GammaSchedule::constant(4, 0.25, false).unwrap();
        let r = chain_conditioning_bruteforce(&s, 1, &[(2, vec![0.0]), (2, vec![0.0])]);
        assert!(matches!(r, Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn matches_posterior_params() {
        let s = GammaSchedule::symmetric(6, 0.05, 0.3, true).unwrap();
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let k = r.random_range(0..6);
            let pin: Vec<f64> = (0..2).map(|_| r.random_range(-3.0..3.0)).collect();
            let cur: Vec<f64> = (0..2).map(|_| r.random_range(-3.0..3.0)).collect();

            let brute = chain_conditioning_bruteforce(&s, k, &[(0, pin.clone()), (k + 1, cur.clone())]).unwrap();
            let exact = posterior_params(Direction::Backward, k, &pin, &cur, &s).unwrap();
            assert!((brute.variance - exact.variance).abs() < 1e-9);
            for (a, b) in brute.mean.iter().zip(&exact.mean) {
                assert!((a - b).abs() < 1e-9);
            }

            let brute = chain_conditioning_bruteforce(&s, k + 1, &[(k, cur.clone()), (6, pin.clone())]).unwrap();
            let exact = posterior_params(Direction::Forward, k, &pin, &cur, &s).unwrap();
            assert!((brute.variance - exact.variance).abs() < 1e-9);
            for (a, b) in brute.mean.iter().zip(&exact.mean) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
