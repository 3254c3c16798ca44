//! Regression targets for the four training objectives and the transforms that
//! turn reparameterized network outputs back into step means.
//!
//! Index convention: `k` is the transition index of the pair `(x_k, x_{k+1})`,
//! `k` in `0..N`. A backward network reads `x_{k+1}`; a forward network reads
//! `x_k`. Scalar coefficients are computed in `f64`, vectors are stored as `f32`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chain::{Direction, StepMean};
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// Original mean-matching loss with partner-network offsets.
    #[serde(alias = "dsb_original", alias = "dsboriginal")]
    Dsb,
    /// Predict the next state on the trajectory.
    Ipmm,
    /// Predict the trajectory terminus.
    Iptm,
    /// Predict the scaled vector from the current state to the terminus.
    Ipfm,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [
        ObjectiveKind::Dsb,
        ObjectiveKind::Ipmm,
        ObjectiveKind::Iptm,
        ObjectiveKind::Ipfm,
    ];

    pub fn requires_normalized_schedule(self) -> bool {
        matches!(self, ObjectiveKind::Iptm | ObjectiveKind::Ipfm)
    }

    /// Network evaluations needed to construct one regression target.
    pub fn evaluations_per_target(self) -> u64 {
        match self {
            ObjectiveKind::Dsb => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Dsb => "dsb",
            ObjectiveKind::Ipmm => "ipmm",
            ObjectiveKind::Iptm => "iptm",
            ObjectiveKind::Ipfm => "ipfm",
        }
    }

    pub fn id(self) -> u8 {
        match self {
            ObjectiveKind::Dsb => 0,
            ObjectiveKind::Ipmm => 1,
            ObjectiveKind::Iptm => 2,
            ObjectiveKind::Ipfm => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dsb" | "dsb_original" | "dsboriginal" => Ok(ObjectiveKind::Dsb),
            "ipmm" => Ok(ObjectiveKind::Ipmm),
            "iptm" => Ok(ObjectiveKind::Iptm),
            "ipfm" => Ok(ObjectiveKind::Ipfm),
            other => Err(Error::Config(format!("unknown objective {other:?}"))),
        }
    }
}

/// Evaluations per target for `kind`.
pub fn nfe_counter(kind: ObjectiveKind) -> u64 {
    kind.evaluations_per_target()
}

/// Isotropic Gaussian conditional of one chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub mean: Vec<f64>,
    pub variance: f64,
}

fn check_transition(k: usize, schedule: &GammaSchedule) -> Result<()> {
    if k >= schedule.n_steps() {
        return Err(Error::invalid(format!(
            "transition index {k} outside 0..{}",
            schedule.n_steps()
        )));
    }
    Ok(())
}

fn check_normalized(schedule: &GammaSchedule) -> Result<()> {
    if !schedule.is_normalized() {
        return Err(Error::invalid(
            "terminus and flow objectives need a normalized schedule (gamma_bar_N = 1)",
        ));
    }
    Ok(())
}

fn check_trajectory(traj: ArrayView2<f32>, schedule: &GammaSchedule) -> Result<()> {
    if traj.nrows() != schedule.n_steps() + 1 {
        return Err(Error::invalid(format!(
            "trajectory has {} states, schedule expects {}",
            traj.nrows(),
            schedule.n_steps() + 1
        )));
    }
    Ok(())
}

/// Denominator of the terminus/flow targets: `γ̄_{k+1}` backward, `1 - γ̄_k` forward.
pub fn terminus_span(direction: Direction, k: usize, schedule: &GammaSchedule) -> Result<f64> {
    check_transition(k, schedule)?;
    let span = match direction {
        Direction::Backward => schedule.gamma_bar(k + 1)?,
        Direction::Forward => schedule.remaining(k)?,
    };
    if span <= 0.0 {
        return Err(Error::ExcludedIndex {
            index: k,
            reason: "zero terminus span",
        });
    }
    Ok(span)
}

/// `(input, target)` of the mean-matching objective.
pub fn ipmm_target(
    direction: Direction,
    k: usize,
    traj: ArrayView2<f32>,
    schedule: &GammaSchedule,
) -> Result<(Vec<f32>, Vec<f32>)> {
    check_transition(k, schedule)?;
    check_trajectory(traj, schedule)?;
    let (xk, xk1) = (traj.row(k).to_vec(), traj.row(k + 1).to_vec());
    Ok(match direction {
        Direction::Backward => (xk1, xk),
        Direction::Forward => (xk, xk1),
    })
}

/// `(input, target)` of the terminus-matching objective.
pub fn iptm_target(
    direction: Direction,
    k: usize,
    traj: ArrayView2<f32>,
    schedule: &GammaSchedule,
) -> Result<(Vec<f32>, Vec<f32>)> {
    check_transition(k, schedule)?;
    check_trajectory(traj, schedule)?;
    let n = schedule.n_steps();
    Ok(match direction {
        Direction::Backward => (traj.row(k + 1).to_vec(), traj.row(0).to_vec()),
        Direction::Forward => (traj.row(k).to_vec(), traj.row(n).to_vec()),
    })
}

/// `(input, target)` of the flow-matching objective.
pub fn ipfm_target(
    direction: Direction,
    k: usize,
    traj: ArrayView2<f32>,
    schedule: &GammaSchedule,
) -> Result<(Vec<f32>, Vec<f32>)> {
    check_normalized(schedule)?;
    let (input, terminus) = iptm_target(direction, k, traj, schedule)?;
    let span = terminus_span(direction, k, schedule)?;
    let target = terminus
        .iter()
        .zip(&input)
        .map(|(&t, &x)| ((t as f64 - x as f64) / span) as f32)
        .collect();
    Ok((input, target))
}

/// Regression pair for any of the trajectory-only objectives.
pub fn reparameterized_target(
    kind: ObjectiveKind,
    direction: Direction,
    k: usize,
    traj: ArrayView2<f32>,
    schedule: &GammaSchedule,
) -> Result<(Vec<f32>, Vec<f32>)> {
    match kind {
        ObjectiveKind::Ipmm => ipmm_target(direction, k, traj, schedule),
        ObjectiveKind::Iptm => {
            check_normalized(schedule)?;
            iptm_target(direction, k, traj, schedule)
        }
        ObjectiveKind::Ipfm => ipfm_target(direction, k, traj, schedule),
        ObjectiveKind::Dsb => Err(Error::invalid(
            "the original objective needs a partner network; use dsb_original_targets",
        )),
    }
}

/// Original targets for a batch of transitions `(x_k, x_{k+1})`.
///
/// Backward network: `x_{k+1} + F(k, x_k) - F(k, x_{k+1})`, where `partner` is the
/// forward step mean. Forward network: `x_k + B(k+1, x_{k+1}) - B(k+1, x_k)`, where
/// `partner` is the backward step mean indexed by state. Costs two partner
/// evaluations per row.
pub fn dsb_original_targets(
    direction: Direction,
    ks: &[usize],
    xk: ArrayView2<f32>,
    xk1: ArrayView2<f32>,
    partner: &dyn StepMean,
) -> Result<Array2<f32>> {
    if xk.dim() != xk1.dim() || ks.len() != xk.nrows() {
        return Err(Error::invalid("transition batch shapes disagree"));
    }
    match direction {
        Direction::Backward => {
            let at_k = partner.step_mean(ks, xk)?;
            let at_k1 = partner.step_mean(ks, xk1)?;
            Ok(&at_k + &(&xk1 - &at_k1))
        }
        Direction::Forward => {
            let steps: Vec<usize> = ks.iter().map(|k| k + 1).collect();
            let at_k1 = partner.step_mean(&steps, xk1)?;
            let at_k = partner.step_mean(&steps, xk)?;
            Ok(&at_k1 + &(&xk - &at_k))
        }
    }
}

/// Single-transition form of [`dsb_original_targets`].
pub fn dsb_original_target(
    direction: Direction,
    k: usize,
    xk: &[f32],
    xk1: &[f32],
    partner: &dyn StepMean,
) -> Result<Vec<f32>> {
    let a = ArrayView2::from_shape((1, xk.len()), xk).map_err(|e| Error::invalid(e.to_string()))?;
    let b = ArrayView2::from_shape((1, xk1.len()), xk1).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(dsb_original_targets(direction, &[k], a, b, partner)?.into_raw_vec_and_offset().0)
}

/// Coefficient `r` in `mean = x + r (terminus - x)`.
pub fn terminus_ratio(direction: Direction, k: usize, schedule: &GammaSchedule) -> Result<f64> {
    Ok(schedule.gamma(k + 1)? / terminus_span(direction, k, schedule)?)
}

/// Step mean implied by a predicted terminus.
pub fn terminus_to_mean(
    direction: Direction,
    k: usize,
    x: &[f32],
    net_output: &[f32],
    schedule: &GammaSchedule,
) -> Result<Vec<f32>> {
    check_normalized(schedule)?;
    let r = terminus_ratio(direction, k, schedule)?;
    Ok(x.iter()
        .zip(net_output)
        .map(|(&xi, &ti)| (xi as f64 + r * (ti as f64 - xi as f64)) as f32)
        .collect())
}

/// Step mean implied by a predicted flow: `x + γ_{k+1} · output` in both directions.
pub fn flow_to_mean(
    _direction: Direction,
    k: usize,
    x: &[f32],
    net_output: &[f32],
    schedule: &GammaSchedule,
) -> Result<Vec<f32>> {
    check_transition(k, schedule)?;
    let g = schedule.gamma(k + 1)?;
    Ok(x.iter()
        .zip(net_output)
        .map(|(&xi, &vi)| (xi as f64 + g * vi as f64) as f32)
        .collect())
}

/// Applies the output transform of `kind` in place over a batch. `ks` are
/// transition indices; rows of `raw` become step means.
pub fn raw_to_mean_batch(
    kind: ObjectiveKind,
    direction: Direction,
    ks: &[usize],
    x: ArrayView2<f32>,
    raw: &mut Array2<f32>,
    schedule: &GammaSchedule,
) -> Result<()> {
    match kind {
        ObjectiveKind::Dsb | ObjectiveKind::Ipmm => Ok(()),
        ObjectiveKind::Iptm => {
            for (i, &k) in ks.iter().enumerate() {
                let r = terminus_ratio(direction, k, schedule)?;
                for j in 0..x.ncols() {
                    let xi = x[[i, j]] as f64;
                    raw[[i, j]] = (xi + r * (raw[[i, j]] as f64 - xi)) as f32;
                }
            }
            Ok(())
        }
        ObjectiveKind::Ipfm => {
            for (i, &k) in ks.iter().enumerate() {
                let g = schedule.gamma(k + 1)?;
                for j in 0..x.ncols() {
                    raw[[i, j]] = (x[[i, j]] as f64 + g * raw[[i, j]] as f64) as f32;
                }
            }
            Ok(())
        }
    }
}

/// Variance of the pinned Brownian conditional for transition `k`:
/// backward `2 γ_{k+1} γ̄_k / γ̄_{k+1}`, forward `2 γ_{k+1} (1 - γ̄_{k+1}) / (1 - γ̄_k)`.
pub fn posterior_variance(direction: Direction, k: usize, schedule: &GammaSchedule) -> Result<f64> {
    let g = schedule.gamma(k + 1)?;
    let span = terminus_span(direction, k, schedule)?;
    Ok(match direction {
        Direction::Backward => 2.0 * g * schedule.gamma_bar(k)? / span,
        Direction::Forward => 2.0 * g * schedule.remaining(k + 1)? / span,
    })
}

/// Conditional of the next state given the current one and the pinned terminus
/// under the zero-drift Brownian reference.
///
/// Backward: distribution of `x_k` given `current = x_{k+1}` and `pinned = x_0`.
/// Forward: distribution of `x_{k+1}` given `current = x_k` and `pinned = x_N`.
pub fn posterior_params(
    direction: Direction,
    k: usize,
    pinned: &[f64],
    current: &[f64],
    schedule: &GammaSchedule,
) -> Result<PosteriorParams> {
    check_normalized(schedule)?;
    if pinned.len() != current.len() {
        return Err(Error::invalid("pinned and current states differ in dimension"));
    }
    let r = terminus_ratio(direction, k, schedule)?;
    let mean = current
        .iter()
        .zip(pinned)
        .map(|(&x, &p)| (1.0 - r) * x + r * p)
        .collect();
    Ok(PosteriorParams {
        mean,
        variance: posterior_variance(direction, k, schedule)?,
    })
}
