//! Trainable step-mean networks for the two chains.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Direction, StepMean};
use crate::nn::{Activation, Gradients, Mlp};
use crate::objectives::{self, ObjectiveKind};
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

/// Shape of a freshly initialized network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetArch {
    pub hidden: usize,
    /// Number of dense layers, including the output layer.
    pub depth: usize,
    pub embed_dim: usize,
    #[serde(with = "activation_name")]
    pub activation: Activation,
}

impl Default for NetArch {
    fn default() -> Self {
        Self {
            hidden: 128,
            depth: 10,
            embed_dim: 16,
            activation: Activation::Silu,
        }
    }
}

impl NetArch {
    pub fn small() -> Self {
        Self {
            hidden: 64,
            depth: 3,
            embed_dim: 8,
            activation: Activation::Silu,
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<Mlp> {
        Mlp::toy(d, self.hidden, self.depth, self.embed_dim, self.activation, rng)
    }
}

mod activation_name {
    use super::Activation;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Activation, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match a {
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Activation, D::Error> {
        match String::deserialize(d)?.as_str() {
            "silu" => Ok(Activation::Silu),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(serde::de::Error::custom(format!("unknown activation {other:?}"))),
        }
    }
}

/// How the network output becomes the objective's raw prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// The network output is the raw prediction.
    Direct,
    /// `raw = α x + s · output`, with `(α, s)` chosen so that the step mean is
    /// `x + γ · output` whatever the objective. Used to wrap flow-matching nets.
    Residual,
}

impl Head {
    pub fn id(self) -> u8 {
        match self {
            Head::Direct => 0,
            Head::Residual => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Head::Direct),
            1 => Some(Head::Residual),
            _ => None,
        }
    }
}

/// A network that predicts one direction's transitions under one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeNet {
    pub mlp: Mlp,
    pub direction: Direction,
    pub objective: ObjectiveKind,
    pub head: Head,
    /// Evaluate the network at `N - k` instead of `k`.
    pub time_reversed: bool,
    schedule: GammaSchedule,
}

impl BridgeNet {
    pub fn new(
        mlp: Mlp,
        direction: Direction,
        objective: ObjectiveKind,
        head: Head,
        time_reversed: bool,
        schedule: &GammaSchedule,
    ) -> Result<Self> {
        if objective.requires_normalized_schedule() && !schedule.is_normalized() {
            return Err(Error::invalid(format!(
                "{} needs a normalized schedule",
                objective.name()
            )));
        }
        Ok(Self {
            mlp,
            direction,
            objective,
            head,
            time_reversed,
            schedule: schedule.clone(),
        })
    }

    /// Randomly initialized network with a direct head.
    pub fn random<R: Rng + ?Sized>(
        d: usize,
        arch: &NetArch,
        direction: Direction,
        objective: ObjectiveKind,
        schedule: &GammaSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(arch.build(d, rng)?, direction, objective, Head::Direct, false, schedule)
    }

    pub fn schedule(&self) -> &GammaSchedule {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.mlp.data_dim()
    }

    /// Same weights under another objective. With a residual head the step mean
    /// is unchanged.
    pub fn with_objective(&self, objective: ObjectiveKind) -> Result<Self> {
        Self::new(
            self.mlp.clone(),
            self.direction,
            objective,
            self.head,
            self.time_reversed,
            &self.schedule,
        )
    }

    /// Transition index for an input state index.
    pub fn transition(&self, step: usize) -> Result<usize> {
        let n = self.schedule.n_steps();
        match self.direction {
            Direction::Forward if step < n => Ok(step),
            Direction::Backward if (1..=n).contains(&step) => Ok(step - 1),
            _ => Err(Error::ExcludedIndex {
                index: step,
                reason: match self.direction {
                    Direction::Forward => "no forward transition leaves the last state",
                    Direction::Backward => "no backward transition leaves the first state",
                },
            }),
        }
    }

    fn net_steps(&self, steps: &[usize]) -> Vec<usize> {
        let n = self.schedule.n_steps();
        if self.time_reversed {
            steps.iter().map(|&k| n - k).collect()
        } else {
            steps.to_vec()
        }
    }

    /// `(α, s)` of the residual head for the transition leaving `step`.
    fn residual_coeffs(&self, step: usize) -> Result<(f64, f64)> {
        let k = self.transition(step)?;
        let g = self.schedule.gamma(k + 1)?;
        Ok(match self.objective {
            ObjectiveKind::Dsb | ObjectiveKind::Ipmm => (1.0, g),
            ObjectiveKind::Iptm => (1.0, objectives::terminus_span(self.direction, k, &self.schedule)?),
            ObjectiveKind::Ipfm => (0.0, 1.0),
        })
    }

    /// Objective-space prediction for each row: a mean, a terminus, or a flow.
    pub fn raw(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let n = self.schedule.n_steps();
        let mut out = self.mlp.forward(&self.net_steps(steps), n, x)?;
        if self.head == Head::Residual {
            for (i, &step) in steps.iter().enumerate() {
                let (a, s) = self.residual_coeffs(step)?;
                for j in 0..x.ncols() {
                    out[[i, j]] = (a * x[[i, j]] as f64 + s * out[[i, j]] as f64) as f32;
                }
            }
        }
        Ok(out)
    }

    /// Mean squared error of the raw prediction against `targets`, with its
    /// gradient in the network weights.
    pub fn loss_grad(
        &self,
        steps: &[usize],
        x: ArrayView2<f32>,
        targets: ArrayView2<f32>,
    ) -> Result<(f64, Gradients)> {
        let n = self.schedule.n_steps();
        for &s in steps {
            self.transition(s)?;
        }
        let net_steps = self.net_steps(steps);
        match self.head {
            Head::Direct => self.mlp.mse_grad(&net_steps, n, x, targets),
            Head::Residual => {
                // (α x + s m - t)² = s² (m - (t - α x) / s)²
                let mut inner = targets.to_owned();
                let mut weights = Vec::with_capacity(steps.len());
                for (i, &step) in steps.iter().enumerate() {
                    let (a, s) = self.residual_coeffs(step)?;
                    for j in 0..x.ncols() {
                        inner[[i, j]] = ((targets[[i, j]] as f64 - a * x[[i, j]] as f64) / s) as f32;
                    }
                    weights.push((s * s) as f32);
                }
                self.mlp
                    .weighted_mse_grad(&net_steps, n, x, inner.view(), Some(&weights))
            }
        }
    }
}

impl StepMean for BridgeNet {
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let ks = steps
            .iter()
            .map(|&s| self.transition(s))
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.raw(steps, x)?;
        objectives::raw_to_mean_batch(self.objective, self.direction, &ks, x, &mut out, &self.schedule)?;
        Ok(out)
    }
}
