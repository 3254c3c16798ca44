//! Closed-form Schrödinger bridge between N(a, I) and N(-a, I): exact
//! marginals, exact paths, and how far the plain Brownian chain is from them.

use sblab::chain::{self, ReferenceMean};
use sblab::datasets::Sampler;
use sblab::oracle::{self, GaussianBridge};
use sblab::{GammaSchedule, Result};

fn main() -> Result<()> {
    let d = 2;
    let schedule = GammaSchedule::symmetric(20, 0.1, 1.0, true)?;
    let bridge = GaussianBridge::for_schedule(vec![1.0; d], &schedule)?;
    println!("eps_total = {}, c = {:.6}", bridge.eps_total, bridge.cross_covariance());

    println!("   t    mean     var");
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let m = bridge.marginal(t)?;
        println!("{t:.2} {:7.3} {:7.3}", m.mean[0], m.cov[(0, 0)]);
    }

    // Exact paths only miss through finite-sample error.
    let exact = bridge.sample_paths(&schedule, 10_000, 7)?;
    println!("averaged KL of exact paths:    {:.5}", bridge.averaged_kl(&exact, &schedule, 10)?);

    let prior = Sampler::shifted_gaussian(vec![-1.0], d, 2)?;
    let start = prior.draw(10_000, &mut sblab::rng::stream(3, 0))?;
    let brownian = chain::sample_backward(&ReferenceMean, &schedule, start.view(), 3)?;
    println!("averaged KL of Brownian chain: {:.5}", bridge.averaged_kl(&brownian, &schedule, 10)?);

    let fit = oracle::fit_gaussian(brownian.states_at(0))?;
    println!("Brownian chain ends at mean {:.3}, var {:.3}", fit.mean[0], fit.cov[(0, 0)]);
    Ok(())
}
