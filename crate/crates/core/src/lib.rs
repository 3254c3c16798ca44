//! Schrödinger bridge training between two sampled distributions by iterative
//! proportional fitting.
//!
//! The bridge is learned as a pair of Gaussian Markov chains, a forward chain
//! from data to prior and a backward chain from prior to data. They are trained
//! alternately, each on paths sampled from the other. Four regression
//! objectives are available (see [`ObjectiveKind`]), and both chains can be
//! initialized from pre-trained flow-matching models ([`sgm_init`]).
//!
//! On Gaussian boundary distributions the [`oracle`] module supplies the exact
//! bridge marginals, a log-domain Sinkhorn solver, and brute-force Gaussian
//! conditioning to check training output against.

pub mod bridge;
pub mod chain;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod nn;
pub mod objectives;
pub mod oracle;
pub mod plot;
pub mod rng;
pub mod schedule;
pub mod sgm_init;
pub mod trainer;

mod error;

pub use chain::{Direction, StepMean, Trajectories};
pub use error::{Error, Result};
pub use objectives::ObjectiveKind;
pub use schedule::GammaSchedule;
