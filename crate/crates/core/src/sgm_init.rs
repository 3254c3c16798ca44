//! Flow-matching models pre-trained on straight-line interpolants, and their
//! use as initial step means of the two chains.
//!
//! A model toward the data is trained on `x_k = (1 - γ̄_k) x_data + γ̄_k x_prior`
//! to predict `x_data - x_prior`. Along such a line `x_{k-1} = x_k + γ_k (x_data - x_prior)`,
//! so `x + γ_k m(k, x)` steps the backward chain exactly. The model toward the
//! prior is trained on the same lines read in reverse time and is evaluated at
//! `N - k` when driving the forward chain.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeNet, Head, NetArch};
use crate::chain::Direction;
use crate::datasets::Sampler;
use crate::nn::{adam_step, AdamState, Mlp};
use crate::objectives::ObjectiveKind;
use crate::rng;
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

/// Endpoint a pre-trained model flows toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toward {
    Data,
    Prior,
}

impl Toward {
    pub fn name(self) -> &'static str {
        match self {
            Toward::Data => "data",
            Toward::Prior => "prior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedSgm {
    pub net: Mlp,
    pub toward: Toward,
    pub schedule_hash: u64,
    /// Interpolant family; always `"linear"`.
    pub interpolant: &'static str,
}

/// Optimizer budget for pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainBudget {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f32,
}

impl Default for PretrainBudget {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 128,
            lr: 1e-3,
        }
    }
}

/// Interpolation weight on the far endpoint at model time `k`.
fn far_weight(toward: Toward, k: usize, schedule: &GammaSchedule) -> Result<f64> {
    match toward {
        Toward::Data => schedule.gamma_bar(k),
        Toward::Prior => Ok(1.0 - schedule.gamma_bar(schedule.n_steps() - k)?),
    }
}

/// Interpolant points at uniform model times with their regression targets.
fn interpolant_batch<R: Rng + ?Sized>(
    toward: Toward,
    schedule: &GammaSchedule,
    xs: Array2<f32>,
    xd: Array2<f32>,
    r: &mut R,
) -> Result<(Vec<usize>, Array2<f32>, Array2<f32>)> {
    let n = schedule.n_steps();
    let (b, d) = xs.dim();
    let ks: Vec<usize> = (0..b).map(|_| r.random_range(1..=n)).collect();
    let mut x = Array2::<f32>::zeros((b, d));
    for (i, &k) in ks.iter().enumerate() {
        let w = far_weight(toward, k, schedule)?;
        for j in 0..d {
            x[[i, j]] = ((1.0 - w) * xs[[i, j]] as f64 + w * xd[[i, j]] as f64) as f32;
        }
    }
    let target = &xs - &xd;
    Ok((ks, x, target))
}

/// Mean squared regression error of `sgm` on `n` fresh interpolant draws.
pub fn pretrain_loss(
    sgm: &PretrainedSgm,
    data: &Sampler,
    prior: &Sampler,
    schedule: &GammaSchedule,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if sgm.schedule_hash != schedule.hash() {
        return Err(Error::invalid("pre-trained model was fit against a different schedule"));
    }
    let (src, dst) = match sgm.toward {
        Toward::Data => (data, prior),
        Toward::Prior => (prior, data),
    };
    let xs = src.draw(n, &mut rng::stream(seed, 1))?;
    let xd = dst.draw(n, &mut rng::stream(seed, 2))?;
    let (ks, x, target) = interpolant_batch(sgm.toward, schedule, xs, xd, &mut rng::stream(seed, 3))?;
    let pred = sgm.net.forward(&ks, schedule.n_steps(), x.view())?;
    Ok((&pred - &target).mapv(|v| (v as f64).powi(2)).sum() / (n * x.ncols()) as f64)
}

/// Regresses `m(k, x_k)` onto `x_src - x_dst` over fresh interpolant draws,
/// where `src` is the endpoint named by `toward`. A zero step budget returns
/// the initialization.
pub fn pretrain_flow_sgm(
    data: &Sampler,
    prior: &Sampler,
    toward: Toward,
    schedule: &GammaSchedule,
    arch: &NetArch,
    budget: &PretrainBudget,
    seed: u64,
) -> Result<PretrainedSgm> {
    if !schedule.is_normalized() {
        return Err(Error::invalid("pre-training needs a normalized schedule"));
    }
    if data.d != prior.d {
        return Err(Error::invalid("data and prior dimensions differ"));
    }
    if budget.batch_size == 0 || !(budget.lr > 0.0) {
        return Err(Error::invalid("pre-training needs batch_size >= 1 and lr > 0"));
    }
    let (src, dst) = match toward {
        Toward::Data => (data, prior),
        Toward::Prior => (prior, data),
    };
    let n = schedule.n_steps();
    let d = data.d;
    let mut init_rng = rng::stream(seed, 0);
    let mut net = arch.build(d, &mut init_rng)?;
    let mut adam = AdamState::for_net(&net);
    let mut src_stream = src.stream(rng::derive_seed(seed, 1));
    let mut dst_stream = dst.stream(rng::derive_seed(seed, 2));
    let mut r = rng::stream(seed, 3);
    let b = budget.batch_size;
    for step in 0..budget.steps {
        let xs = src_stream.draw(b)?;
        let xd = dst_stream.draw(b)?;
        let (ks, x, target) = interpolant_batch(toward, schedule, xs, xd, &mut r)?;
        let (loss, grads) = net.mse_grad(&ks, n, x.view(), target.view())?;
        if !loss.is_finite() {
            return Err(Error::Diverged { half_epoch: 0, step });
        }
        adam_step(net.params_mut(), &grads, &mut adam, budget.lr)?;
    }
    Ok(PretrainedSgm {
        net,
        toward,
        schedule_hash: schedule.hash(),
        interpolant: "linear",
    })
}

fn check_sgm(sgm: &PretrainedSgm, toward: Toward, schedule: &GammaSchedule) -> Result<()> {
    if sgm.toward != toward {
        return Err(Error::invalid(format!(
            "expected a model toward the {}, got one toward the {}",
            toward.name(),
            sgm.toward.name()
        )));
    }
    if sgm.schedule_hash != schedule.hash() {
        return Err(Error::invalid(
            "pre-trained model was fit against a different schedule",
        ));
    }
    Ok(())
}

/// Backward step mean `(k, x) -> x + γ_k m(k, x)` under `objective`.
pub fn wrap_backward_init(
    sgm: &PretrainedSgm,
    schedule: &GammaSchedule,
    objective: ObjectiveKind,
) -> Result<BridgeNet> {
    check_sgm(sgm, Toward::Data, schedule)?;
    BridgeNet::new(sgm.net.clone(), Direction::Backward, objective, Head::Residual, false, schedule)
}

/// Forward step mean `(k, x) -> x + γ_{k+1} m(N - k, x)` under `objective`.
pub fn wrap_forward_init(
    sgm: &PretrainedSgm,
    schedule: &GammaSchedule,
    objective: ObjectiveKind,
) -> Result<BridgeNet> {
    check_sgm(sgm, Toward::Prior, schedule)?;
    BridgeNet::new(sgm.net.clone(), Direction::Forward, objective, Head::Residual, true, schedule)
}

/// The backward wrapper as the original objective consumes it: the forward
/// trainee's targets evaluate it at `(k + 1, x_k)`, a state that never occurs
/// at that index.
pub fn misaligned_init_control(sgm: &PretrainedSgm, schedule: &GammaSchedule) -> Result<BridgeNet> {
    wrap_backward_init(sgm, schedule, ObjectiveKind::Dsb)
}
