//! The Brownian chain conditioned on its current state and its terminus has a
//! closed-form next-state law. Here it is checked against conditioning the
//! full joint Gaussian directly.

use rand::Rng;
use sblab::chain::Direction;
use sblab::objectives::posterior_params;
use sblab::oracle::chain_conditioning_bruteforce;
use sblab::{rng, GammaSchedule, Result};

fn main() -> Result<()> {
    let schedule = GammaSchedule::symmetric(6, 0.1, 1.0, true)?;
    let n = schedule.n_steps();
    let mut r = rng::stream(0, 0);
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..100 {
        let k = r.random_range(0..n);
        let pin = vec![r.random_range(-3.0..3.0)];
        let cur = vec![r.random_range(-3.0..3.0)];
        let (dir, brute) = if i % 2 == 0 {
            (Direction::Backward, chain_conditioning_bruteforce(&schedule, k, &[(0, pin.clone()), (k + 1, cur.clone())])?)
        } else {
            (Direction::Forward, chain_conditioning_bruteforce(&schedule, k + 1, &[(k, cur.clone()), (n, pin.clone())])?)
        };
        let exact = posterior_params(dir, k, &pin, &cur, &schedule)?;
        worst.0 = worst.0.max((brute.mean[0] - exact.mean[0]).abs());
        worst.1 = worst.1.max((brute.variance.sqrt() - exact.variance.sqrt()).abs());
        if i < 4 {
            println!(
                "{dir:8} k={k}: mean {:+.6} vs {:+.6}, var {:.6} vs {:.6}",
                exact.mean[0], brute.mean[0], exact.variance, brute.variance
            );
        }
    }
    println!("max |d mean| = {:.2e}, max |d std| = {:.2e}", worst.0, worst.1);
    Ok(())
}
