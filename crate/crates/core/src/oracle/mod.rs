//! Ground truth for the Gaussian problem: closed-form bridge marginals, Gaussian
//! KL, moment fitting, a log-domain Sinkhorn solver, and exact conditioning of
//! the Brownian chain.

mod conditioning;
mod gaussian;
mod sinkhorn;

pub use conditioning::{chain_conditioning_bruteforce, chain_covariance, INITIAL_VARIANCE};
pub use gaussian::{
    analytic_sb_marginal, averaged_kl_metric, entropic_cross_covariance, eval_indices, fit_gaussian,
    gaussian_kl, symmetric_kl, GaussianBridge, GaussianMoments,
};
pub use sinkhorn::{
    gaussian_histogram, shifted_gaussian_coupling, sinkhorn_coupling, uniform_grid, DiscreteCoupling,
};
