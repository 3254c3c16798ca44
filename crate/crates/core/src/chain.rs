//! Forward and backward Gaussian Markov chains.
//!
//! A forward chain runs `x_{k+1} = F(k, x_k) + sqrt(2 γ_{k+1}) z` from `x_0`; a
//! backward chain runs `x_{k-1} = B(k, x_k) + sqrt(2 γ_k) z` from `x_N`. Both store
//! every state, indexed `0..=N` regardless of direction.
//!
//! Paths are processed in fixed-size chunks in parallel. Each path draws its
//! noise from its own stream (root seed, path index), so output is independent
//! of the worker count.

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objectives::{self, ObjectiveKind};
use crate::rng;
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

/// Paths per parallel work unit.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Data (`x_0`) toward prior (`x_N`).
    Forward,
    /// Prior (`x_N`) toward data (`x_0`).
    Backward,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean of the next chain state.
///
/// `steps[i]` is the chain index of row `i`: a forward map returns the mean of
/// `x_{k+1}` given `x_k`, a backward map the mean of `x_{k-1}` given `x_k`.
pub trait StepMean: Send + Sync {
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>>;
}

impl<T: StepMean + ?Sized> StepMean for &T {
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        (**self).step_mean(steps, x)
    }
}

impl<T: StepMean + ?Sized> StepMean for Box<T> {
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        (**self).step_mean(steps, x)
    }
}

/// Zero-drift reference: `(k, x) -> x`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReferenceMean;

impl StepMean for ReferenceMean {
    fn step_mean(&self, _steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        Ok(x.to_owned())
    }
}

/// Reference drift by name. Only `"brownian"` exists.
pub fn reference_mean(kind: &str) -> Result<ReferenceMean> {
    match kind {
        "brownian" => Ok(ReferenceMean),
        other => Err(Error::invalid(format!("unknown reference process {other:?}"))),
    }
}

/// Closure-backed step mean.
pub struct FnMean<F>(pub F);

impl<F> StepMean for FnMean<F>
where
    F: Fn(&[usize], ArrayView2<f32>) -> Result<Array2<f32>> + Send + Sync,
{
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        (self.0)(steps, x)
    }
}

/// Counts the rows passed through the wrapped map.
pub struct CountingMean<M> {
    inner: M,
    evaluations: AtomicU64,
}

impl<M: StepMean> CountingMean<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

impl<M: StepMean> StepMean for CountingMean<M> {
    fn step_mean(&self, steps: &[usize], x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.evaluations.fetch_add(x.nrows() as u64, Ordering::Relaxed);
        self.inner.step_mean(steps, x)
    }
}

/// Per-step noise of a sampled chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Variance `2 γ` of the reference process.
    #[default]
    Reference,
    /// Variance of the pinned Brownian conditional (shrinks to zero at the terminus).
    Posterior,
}

/// A batch of sampled paths, `(paths, N + 1, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub direction: Direction,
    pub seed: u64,
    states: Array3<f32>,
    /// Paths dropped because a state became non-finite.
    pub diverged: usize,
}

impl Trajectories {
    pub fn from_states(direction: Direction, seed: u64, states: Array3<f32>) -> Self {
        Self {
            direction,
            seed,
            states,
            diverged: 0,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.states.len_of(Axis(0))
    }

    /// Number of transitions `N`.
    pub fn n_steps(&self) -> usize {
        self.states.len_of(Axis(1)) - 1
    }

    pub fn dim(&self) -> usize {
        self.states.len_of(Axis(2))
    }

    pub fn is_empty(&self) -> bool {
        self.n_paths() == 0
    }

    /// States `x_0..=x_N` of one path.
    pub fn path(&self, i: usize) -> ArrayView2<'_, f32> {
        self.states.index_axis(Axis(0), i)
    }

    /// All paths at chain index `k`.
    pub fn states_at(&self, k: usize) -> ArrayView2<'_, f32> {
        self.states.index_axis(Axis(1), k)
    }

    pub fn states(&self) -> &Array3<f32> {
        &self.states
    }

    /// Writes `path_id,k,x_0,...,x_{d-1}` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("path_id,k");
        for j in 0..self.dim() {
            header.push_str(&format!(",x_{j}"));
        }
        writeln!(w, "{header}")?;
        for p in 0..self.n_paths() {
            for k in 0..=self.n_steps() {
                write!(w, "{p},{k}")?;
                for j in 0..self.dim() {
                    write!(w, ",{}", self.states[[p, k, j]])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Parses what [`Trajectories::write_csv`] wrote. Every path must list the
    /// same steps `0..=N` in order.
    pub fn read_csv(text: &str, direction: Direction, seed: u64) -> Result<Self> {
        let bad = |msg: String| Error::format("trajectory CSV", msg);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "path_id" || cols[1] != "k" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("x_{j}") {
                return Err(bad(format!("unexpected column {c:?}")));
            }
        }
        let d = cols.len() - 2;
        let mut rows: Vec<(usize, usize, Vec<f32>)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != d + 2 {
                return Err(bad(format!("row {} has {} fields, expected {}", i + 2, f.len(), d + 2)));
            }
            let p = f[0].parse::<usize>().map_err(|e| bad(format!("row {}: {e}", i + 2)))?;
            let k = f[1].parse::<usize>().map_err(|e| bad(format!("row {}: {e}", i + 2)))?;
            let x = f[2..]
                .iter()
                .map(|v| v.parse::<f32>().map_err(|e| bad(format!("row {}: {e}", i + 2))))
                .collect::<Result<Vec<_>>>()?;
            rows.push((p, k, x));
        }
        if rows.is_empty() {
            return Ok(Self::from_states(direction, seed, Array3::zeros((0, 1, d))));
        }
        let n = rows.iter().map(|r| r.1).max().unwrap();
        if !rows.len().is_multiple_of(n + 1) {
            return Err(bad("paths have different lengths".into()));
        }
        let n_paths = rows.len() / (n + 1);
        let mut states = Array3::<f32>::zeros((n_paths, n + 1, d));
        for (i, (p, k, x)) in rows.into_iter().enumerate() {
            if p != i / (n + 1) || k != i % (n + 1) {
                return Err(bad(format!("row {} is out of order", i + 2)));
            }
            for (j, v) in x.into_iter().enumerate() {
                states[[p, k, j]] = v;
            }
        }
        Ok(Self::from_states(direction, seed, states))
    }
}

fn step_noise_std(
    direction: Direction,
    from: usize,
    schedule: &GammaSchedule,
    noise: NoiseMode,
) -> Result<f64> {
    // transition index of the step leaving chain index `from`
    let k = match direction {
        Direction::Forward => from,
        Direction::Backward => from - 1,
    };
    let var = match noise {
        NoiseMode::Reference => 2.0 * schedule.gamma(k + 1)?,
        NoiseMode::Posterior => objectives::posterior_variance(direction, k, schedule)?,
    };
    Ok(var.max(0.0).sqrt())
}

fn run_chunk(
    mean: &dyn StepMean,
    schedule: &GammaSchedule,
    start: ArrayView2<f32>,
    first_path: usize,
    seed: u64,
    direction: Direction,
    noise: NoiseMode,
) -> Result<(Array3<f32>, Vec<bool>)> {
    let n = schedule.n_steps();
    let (rows, d) = start.dim();
    let mut states = Array3::<f32>::zeros((rows, n + 1, d));
    let mut rngs: Vec<_> = (0..rows)
        .map(|i| rng::stream(seed, (first_path + i) as u64))
        .collect();
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..n).collect(),
        Direction::Backward => (1..=n).rev().collect(),
    };
    let origin = match direction {
        Direction::Forward => 0,
        Direction::Backward => n,
    };
    states.slice_mut(s![.., origin, ..]).assign(&start);
    let mut current = start.to_owned();
    let mut finite = vec![true; rows];
    for &from in &order {
        let to = match direction {
            Direction::Forward => from + 1,
            Direction::Backward => from - 1,
        };
        let steps = vec![from; rows];
        let mut next = mean.step_mean(&steps, current.view())?;
        if next.dim() != (rows, d) {
            return Err(Error::invalid("step mean returned the wrong shape"));
        }
        let std = step_noise_std(direction, from, schedule, noise)? as f32;
        for (i, rng) in rngs.iter_mut().enumerate() {
            for j in 0..d {
                let z: f32 = StandardNormal.sample(rng);
                next[[i, j]] += std * z;
            }
            if finite[i] && next.row(i).iter().any(|v| !v.is_finite()) {
                finite[i] = false;
            }
        }
        states.slice_mut(s![.., to, ..]).assign(&next);
        current = next;
    }
    Ok((states, finite))
}

fn sample_chain(
    mean: &dyn StepMean,
    schedule: &GammaSchedule,
    start: ArrayView2<f32>,
    seed: u64,
    direction: Direction,
    noise: NoiseMode,
) -> Result<Trajectories> {
    let (rows, d) = start.dim();
    if rows == 0 {
        return Err(Error::invalid("no starting points"));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting points must be finite"));
    }
    let chunks: Vec<usize> = (0..rows).step_by(CHUNK).collect();
    let parts: Vec<Result<(Array3<f32>, Vec<bool>)>> = chunks
        .par_iter()
        .map(|&lo| {
            let hi = (lo + CHUNK).min(rows);
            run_chunk(
                mean,
                schedule,
                start.slice(s![lo..hi, ..]),
                lo,
                seed,
                direction,
                noise,
            )
        })
        .collect();
    let n = schedule.n_steps();
    let mut kept = Vec::with_capacity(rows * (n + 1) * d);
    let mut n_kept = 0;
    let mut diverged = 0;
    for part in parts {
        let (states, finite) = part?;
        for (i, ok) in finite.iter().enumerate() {
            if *ok {
                kept.extend(states.index_axis(Axis(0), i).iter());
                n_kept += 1;
            } else {
                diverged += 1;
            }
        }
    }
    let states = Array3::from_shape_vec((n_kept, n + 1, d), kept).expect("consistent sizes");
    Ok(Trajectories {
        direction,
        seed,
        states,
        diverged,
    })
}

/// Forward paths from `x0`. Diverged paths are dropped and counted.
pub fn sample_forward(
    mean: &dyn StepMean,
    schedule: &GammaSchedule,
    x0: ArrayView2<f32>,
    seed: u64,
) -> Result<Trajectories> {
    sample_chain(mean, schedule, x0, seed, Direction::Forward, NoiseMode::Reference)
}

/// Backward paths from `xn`. Diverged paths are dropped and counted.
pub fn sample_backward(
    mean: &dyn StepMean,
    schedule: &GammaSchedule,
    xn: ArrayView2<f32>,
    seed: u64,
) -> Result<Trajectories> {
    sample_chain(mean, schedule, xn, seed, Direction::Backward, NoiseMode::Reference)
}

/// Either direction, with a chosen noise mode.
pub fn sample_with(
    mean: &dyn StepMean,
    schedule: &GammaSchedule,
    start: ArrayView2<f32>,
    seed: u64,
    direction: Direction,
    noise: NoiseMode,
) -> Result<Trajectories> {
    sample_chain(mean, schedule, start, seed, direction, noise)
}

/// Regression tuples drawn from a trajectory cache.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    /// Transition index `k` of each tuple.
    pub transitions: Vec<usize>,
    /// Chain index of the input state: `k + 1` backward, `k` forward.
    pub steps: Vec<usize>,
    pub inputs: Array2<f32>,
    pub targets: Array2<f32>,
    /// Network evaluations spent on these targets.
    pub nfe: u64,
    /// Path each tuple came from.
    pub path_ids: Vec<usize>,
}

/// Draws `batch_size` tuples `(k, input, target)` for training a network that
/// runs in `trained` direction. Paths and `k` are drawn uniformly. The original
/// objective needs `partner`, the opposite-direction step mean.
pub fn subsample_pairs<R: Rng + ?Sized>(
    trajs: &Trajectories,
    objective: ObjectiveKind,
    trained: Direction,
    schedule: &GammaSchedule,
    batch_size: usize,
    partner: Option<&dyn StepMean>,
    rng: &mut R,
) -> Result<TrainingBatch> {
    if trajs.is_empty() {
        return Err(Error::invalid("empty trajectory batch"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if trajs.direction != trained.opposite() {
        return Err(Error::invalid(format!(
            "a {trained} network trains on {} trajectories, got {}",
            trained.opposite(),
            trajs.direction
        )));
    }
    let n = schedule.n_steps();
    if trajs.n_steps() != n {
        return Err(Error::invalid("trajectory length does not match schedule"));
    }
    let d = trajs.dim();
    let mut transitions = Vec::with_capacity(batch_size);
    let mut path_ids = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        path_ids.push(rng.random_range(0..trajs.n_paths()));
        transitions.push(rng.random_range(0..n));
    }
    let steps: Vec<usize> = transitions
        .iter()
        .map(|&k| match trained {
            Direction::Backward => k + 1,
            Direction::Forward => k,
        })
        .collect();
    let mut inputs = Array2::<f32>::zeros((batch_size, d));
    let mut targets = Array2::<f32>::zeros((batch_size, d));
    let nfe;
    match objective {
        ObjectiveKind::Dsb => {
            let partner = partner.ok_or_else(|| {
                Error::invalid("the original objective needs the partner network")
            })?;
            let mut xk = Array2::<f32>::zeros((batch_size, d));
            let mut xk1 = Array2::<f32>::zeros((batch_size, d));
            for (i, (&p, &k)) in path_ids.iter().zip(&transitions).enumerate() {
                let path = trajs.path(p);
                xk.row_mut(i).assign(&path.row(k));
                xk1.row_mut(i).assign(&path.row(k + 1));
            }
            let counted = CountingMean::new(partner);
            targets = objectives::dsb_original_targets(trained, &transitions, xk.view(), xk1.view(), &counted)?;
            inputs = match trained {
                Direction::Backward => xk1,
                Direction::Forward => xk,
            };
            nfe = counted.evaluations();
        }
        kind => {
            for (i, (&p, &k)) in path_ids.iter().zip(&transitions).enumerate() {
                let (input, target) =
                    objectives::reparameterized_target(kind, trained, k, trajs.path(p), schedule)?;
                inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&input));
                targets.row_mut(i).assign(&ndarray::ArrayView1::from(&target));
            }
            // one sampling evaluation produced each transition that a target reads
            nfe = batch_size as u64;
        }
    }
    Ok(TrainingBatch {
        transitions,
        steps,
        inputs,
        targets,
        nfe,
        path_ids,
    })
}
