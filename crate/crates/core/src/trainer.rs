//! Alternating half-epoch training: the forward net on backward paths, then
//! the backward net on forward paths.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeNet, NetArch};
use crate::chain::{self, subsample_pairs, Direction, ReferenceMean, StepMean, Trajectories};
use crate::datasets::Sampler;
use crate::nn::{adam_step, AdamState, Ema};
use crate::objectives::ObjectiveKind;
use crate::oracle::{self, GaussianBridge, GaussianMoments};
use crate::rng;
use crate::schedule::GammaSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Random,
    /// Pre-trained backward net only.
    BackwardOnly,
    /// Pre-trained backward and forward nets.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Paths per endpoint for the marginal gaps.
    pub gap_paths: usize,
    /// Paths for the averaged KL.
    pub kl_paths: usize,
    pub kl_eval_times: usize,
    /// Evaluation draws reuse this seed every half-epoch.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gap_paths: 10_000,
            kl_paths: 10_000,
            kl_eval_times: 10,
            seed: 0x5eed,
        }
    }
}

/// Stop a half-epoch early when the mean loss over a window of steps improves
/// by less than `min_rel_improvement` over the previous window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStop {
    pub window: usize,
    pub min_rel_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 500,
            min_rel_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Outer iterations; each runs one forward and one backward half-epoch.
    pub epochs: usize,
    pub steps_per_half_epoch: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Paths held in the trajectory cache.
    pub cache_size: usize,
    /// Optimizer steps between cache regenerations.
    pub cache_refresh_interval: usize,
    pub objective: ObjectiveKind,
    pub init: InitMode,
    pub seed: u64,
    pub arch: NetArch,
    pub eval: EvalConfig,
    pub early_stop: Option<EarlyStop>,
    /// Decay of an exponential moving average used in place of the raw weights
    /// at the end of each half-epoch.
    pub ema_decay: Option<f32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            steps_per_half_epoch: 5000,
            batch_size: 128,
            lr: 1e-4,
            cache_size: 10_000,
            cache_refresh_interval: 1000,
            objective: ObjectiveKind::Ipfm,
            init: InitMode::Random,
            seed: 0,
            arch: NetArch::default(),
            eval: EvalConfig::default(),
            early_stop: None,
            ema_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("steps_per_half_epoch", self.steps_per_half_epoch),
            ("batch_size", self.batch_size),
            ("cache_size", self.cache_size),
            ("cache_refresh_interval", self.cache_refresh_interval),
            ("arch.hidden", self.arch.hidden),
            ("arch.depth", self.arch.depth),
            ("eval.kl_eval_times", self.eval.kl_eval_times),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.eval.gap_paths < 100 {
            return Err(Error::Config("eval.gap_paths must be at least 100".into()));
        }
        if self.eval.kl_paths < 1000 {
            return Err(Error::Config("eval.kl_paths must be at least 1000".into()));
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
            }
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 {
                return Err(Error::Config("early_stop.window must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Diagnostics of one half-epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfEpochMetrics {
    /// 1-based; odd half-epochs train the forward net.
    pub half_epoch: usize,
    pub trained: Direction,
    pub loss: f64,
    /// Symmetric KL between the forward chain's terminal states and the prior.
    pub gap_fwd: f64,
    /// Symmetric KL between the backward chain's terminal states and the data.
    pub gap_bwd: f64,
    /// Averaged KL of the trained net's marginals against the closed-form
    /// bridge, when both endpoints are matching shifted Gaussians.
    pub avg_kl: Option<f64>,
    /// Network evaluations spent computing regression targets.
    pub nfe: u64,
    pub seconds: f64,
    pub steps: usize,
}

impl HalfEpochMetrics {
    /// Marginal gap of the net trained in this half-epoch.
    pub fn trained_gap(&self) -> f64 {
        match self.trained {
            Direction::Forward => self.gap_fwd,
            Direction::Backward => self.gap_bwd,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<HalfEpochMetrics>,
}

pub const METRICS_HEADER: &str = "half_epoch,loss,gap_fwd,gap_bwd,avg_kl,nfe,seconds";

impl RunMetrics {
    /// Writes a `# config_hash=...` comment line, the header, and one row per half-epoch.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: &str) -> Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.records {
            let kl = r.avg_kl.map_or(String::new(), |v| v.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{:.3}",
                r.half_epoch, r.loss, r.gap_fwd, r.gap_bwd, kl, r.nfe, r.seconds
            )?;
        }
        Ok(())
    }

    /// Parses what [`RunMetrics::write_csv`] wrote. Returns the config hash too.
    pub fn read_csv(text: &str) -> Result<(Self, Option<String>)> {
        let mut hash = None;
        let mut records = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# config_hash=") {
                hash = Some(rest.trim().to_string());
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line.trim() != METRICS_HEADER {
                    return Err(Error::format("metrics.csv", format!("unexpected header {line:?}")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::format("metrics.csv", format!("row has {} fields", f.len())));
            }
            let bad = |e: &dyn std::fmt::Display| Error::format("metrics.csv", e.to_string());
            let half_epoch: usize = f[0].parse().map_err(|e| bad(&e))?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e));
            records.push(HalfEpochMetrics {
                half_epoch,
                trained: trained_direction(half_epoch),
                loss: num(f[1])?,
                gap_fwd: num(f[2])?,
                gap_bwd: num(f[3])?,
                avg_kl: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                nfe: f[5].parse().map_err(|e| bad(&e))?,
                seconds: num(f[6])?,
                steps: 0,
            });
        }
        Ok((Self { records }, hash))
    }

    pub fn avg_kl_series(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.avg_kl).collect()
    }

    pub fn final_avg_kl(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.avg_kl)
    }
}

/// Direction trained in 1-based half-epoch `h`.
pub fn trained_direction(h: usize) -> Direction {
    if h % 2 == 1 {
        Direction::Forward
    } else {
        Direction::Backward
    }
}

/// Symmetric KL between Gaussian fits of a chain's terminal states and of
/// reference draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalGap {
    pub gap: f64,
    /// A fitted covariance was singular and `1e-6 I` was added.
    pub regularized: bool,
}

/// Runs `net` from `start` draws to the far end and compares its terminal
/// states with draws from `reference`.
pub fn marginal_gap(
    net: &dyn StepMean,
    direction: Direction,
    schedule: &GammaSchedule,
    start: &Sampler,
    reference: &Sampler,
    n_paths: usize,
    seed: u64,
) -> Result<MarginalGap> {
    if n_paths < 100 {
        return Err(Error::invalid("marginal gap needs at least 100 paths"));
    }
    let x = start.draw(n_paths, &mut rng::stream(seed, 1))?;
    let y = reference.draw(n_paths, &mut rng::stream(seed, 2))?;
    let trajs = chain::sample_with(net, schedule, x.view(), seed, direction, chain::NoiseMode::Reference)?;
    let end = match direction {
        Direction::Forward => schedule.n_steps(),
        Direction::Backward => 0,
    };
    terminal_gap(trajs.states_at(end).to_owned(), &y)
}

fn terminal_gap(terminal: Array2<f32>, reference: &Array2<f32>) -> Result<MarginalGap> {
    let fit = |x: &Array2<f32>| -> Result<(GaussianMoments, bool)> {
        let g = oracle::fit_gaussian(x.view())?;
        if g.is_degenerate() {
            Ok((g.regularized(1e-6), true))
        } else {
            Ok((g, false))
        }
    };
    let (p, rp) = fit(&terminal)?;
    let (q, rq) = fit(reference)?;
    Ok(MarginalGap {
        gap: oracle::symmetric_kl(&p, &q)?,
        regularized: rp || rq,
    })
}

/// Optional starting points for the two nets.
#[derive(Debug, Clone, Default)]
pub struct InitNets {
    pub backward: Option<BridgeNet>,
    pub forward: Option<BridgeNet>,
}

/// Both nets, the number of completed half-epochs, and the metrics so far.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub forward: BridgeNet,
    pub backward: BridgeNet,
    /// While true the backward chain is the reference process, whatever the
    /// backward net's weights.
    pub backward_is_reference: bool,
    pub completed: usize,
    pub metrics: RunMetrics,
}

impl TrainState {
    /// The backward step mean used for sampling.
    pub fn backward_mean(&self) -> &dyn StepMean {
        if self.backward_is_reference {
            &ReferenceMean
        } else {
            &self.backward
        }
    }
}

/// Final nets and per-half-epoch diagnostics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub forward: BridgeNet,
    pub backward: BridgeNet,
    pub metrics: RunMetrics,
}

pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub data: &'a Sampler,
    pub prior: &'a Sampler,
    pub schedule: &'a GammaSchedule,
    oracle: Option<GaussianBridge>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a Sampler, prior: &'a Sampler, schedule: &'a GammaSchedule) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        prior.validate()?;
        if data.d != prior.d {
            return Err(Error::invalid("data and prior dimensions differ"));
        }
        if config.objective.requires_normalized_schedule() && !schedule.is_normalized() {
            return Err(Error::invalid(format!(
                "{} needs a normalized schedule",
                config.objective.name()
            )));
        }
        let oracle = match (data.gaussian_shift(), prior.gaussian_shift()) {
            (Some(a), Some(b)) if a.iter().zip(&b).all(|(x, y)| *x == -*y) => {
                Some(GaussianBridge::for_schedule(a, schedule)?)
            }
            _ => None,
        };
        Ok(Self {
            config,
            data,
            prior,
            schedule,
            oracle,
        })
    }

    /// Closed-form bridge, when the endpoints are `N(a, I)` and `N(-a, I)`.
    pub fn oracle(&self) -> Option<&GaussianBridge> {
        self.oracle.as_ref()
    }

    pub fn total_half_epochs(&self) -> usize {
        2 * self.config.epochs
    }

    fn check_init(&self, net: &BridgeNet, direction: Direction) -> Result<()> {
        if net.direction != direction {
            return Err(Error::invalid(format!("{direction} init net runs {}", net.direction)));
        }
        if net.schedule().hash() != self.schedule.hash() {
            return Err(Error::invalid("init net was built for a different schedule"));
        }
        if net.dim() != self.data.d {
            return Err(Error::invalid("init net dimension does not match the data"));
        }
        Ok(())
    }

    /// Starting state. Missing init nets are drawn at random from the run seed.
    pub fn init_state(&self, init: InitNets) -> Result<TrainState> {
        let cfg = &self.config;
        let need_b = matches!(cfg.init, InitMode::BackwardOnly | InitMode::Dual);
        let need_f = cfg.init == InitMode::Dual;
        if need_b && init.backward.is_none() {
            return Err(Error::invalid("init mode needs a pre-trained backward net"));
        }
        if need_f && init.forward.is_none() {
            return Err(Error::invalid("init mode needs a pre-trained forward net"));
        }
        let d = self.data.d;
        let mut r = rng::stream(rng::derive_seed(cfg.seed, 0), 0);
        let random_f = BridgeNet::random(d, &cfg.arch, Direction::Forward, cfg.objective, self.schedule, &mut r)?;
        let random_b = BridgeNet::random(d, &cfg.arch, Direction::Backward, cfg.objective, self.schedule, &mut r)?;
        let forward = match (need_f, init.forward) {
            (true, Some(net)) => {
                self.check_init(&net, Direction::Forward)?;
                net.with_objective(cfg.objective)?
            }
            _ => random_f,
        };
        let (backward, backward_is_reference) = match (need_b, init.backward) {
            (true, Some(net)) => {
                self.check_init(&net, Direction::Backward)?;
                (net.with_objective(cfg.objective)?, false)
            }
            _ => (random_b, true),
        };
        Ok(TrainState {
            forward,
            backward,
            backward_is_reference,
            completed: 0,
            metrics: RunMetrics::default(),
        })
    }

    /// Draws the trajectory cache for half-epoch `h`, refresh `r`.
    fn cache(&self, state: &TrainState, trained: Direction, h_seed: u64, r: u64) -> Result<Trajectories> {
        let m = self.config.cache_size;
        let mut draw_rng = rng::stream(h_seed, 2 * r);
        let seed = rng::derive_seed(h_seed, 2 * r + 1);
        match trained {
            Direction::Forward => {
                let start = self.prior.draw(m, &mut draw_rng)?;
                chain::sample_backward(state.backward_mean(), self.schedule, start.view(), seed)
            }
            Direction::Backward => {
                let start = self.data.draw(m, &mut draw_rng)?;
                chain::sample_forward(&state.forward, self.schedule, start.view(), seed)
            }
        }
    }

    /// Trains the next net in place and returns its metrics. On error the state
    /// is left as it was.
    pub fn run_half_epoch(&self, state: &mut TrainState) -> Result<HalfEpochMetrics> {
        let started = Instant::now();
        let cfg = &self.config;
        let h = state.completed + 1;
        let trained = trained_direction(h);
        let h_seed = rng::derive_seed(cfg.seed, h as u64);
        let mut batch_rng = rng::stream(h_seed, u64::MAX);

        let mut net = match trained {
            Direction::Forward => state.forward.clone(),
            Direction::Backward => state.backward.clone(),
        };
        let partner: &dyn StepMean = match trained {
            Direction::Forward => state.backward_mean(),
            Direction::Backward => &state.forward,
        };
        let needs_partner = cfg.objective == ObjectiveKind::Dsb;

        let mut adam = AdamState::for_net(&net.mlp);
        let mut ema = cfg.ema_decay.map(|d| Ema::new(d, net.mlp.params()));
        let mut cache = None;
        let mut loss_sum = 0.0;
        let mut nfe = 0u64;
        let mut steps = 0;
        let mut window = (0.0f64, None::<f64>);
        for step in 0..cfg.steps_per_half_epoch {
            if step % cfg.cache_refresh_interval == 0 {
                let r = (step / cfg.cache_refresh_interval) as u64;
                let t = self.cache(state, trained, h_seed, r)?;
                if t.is_empty() {
                    return Err(Error::Diverged { half_epoch: h, step });
                }
                cache = Some(t);
            }
            let trajs = cache.as_ref().expect("cache filled at step 0");
            let batch = subsample_pairs(
                trajs,
                cfg.objective,
                trained,
                self.schedule,
                cfg.batch_size,
                needs_partner.then_some(partner),
                &mut batch_rng,
            )?;
            nfe += batch.nfe;
            let (loss, grads) = net.loss_grad(&batch.steps, batch.inputs.view(), batch.targets.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { half_epoch: h, step });
            }
            adam_step(net.mlp.params_mut(), &grads, &mut adam, cfg.lr)
                .map_err(|_| Error::Diverged { half_epoch: h, step })?;
            if let Some(e) = ema.as_mut() {
                e.update(net.mlp.params());
            }
            loss_sum += loss;
            steps += 1;

            if let Some(es) = cfg.early_stop {
                window.0 += loss;
                if steps % es.window == 0 {
                    let mean = window.0 / es.window as f64;
                    let plateau = window
                        .1
                        .is_some_and(|prev| (prev - mean) < es.min_rel_improvement * prev.abs());
                    window = (0.0, Some(mean));
                    if plateau {
                        break;
                    }
                }
            }
        }
        if let Some(e) = ema {
            net.mlp.params_mut().copy_from_slice(e.weights());
        }

        let mut next = state.clone();
        match trained {
            Direction::Forward => next.forward = net,
            Direction::Backward => {
                next.backward = net;
                next.backward_is_reference = false;
            }
        }
        let (gap_fwd, gap_bwd) = self.gaps(&next)?;
        let avg_kl = self.averaged_kl(&next, trained)?;
        next.completed = h;
        let metrics = HalfEpochMetrics {
            half_epoch: h,
            trained,
            loss: loss_sum / steps.max(1) as f64,
            gap_fwd,
            gap_bwd,
            avg_kl,
            nfe,
            seconds: started.elapsed().as_secs_f64(),
            steps,
        };
        next.metrics.records.push(metrics.clone());
        *state = next;
        Ok(metrics)
    }

    /// Forward and backward marginal gaps of the current nets.
    pub fn gaps(&self, state: &TrainState) -> Result<(f64, f64)> {
        let e = &self.config.eval;
        let f = marginal_gap(
            &state.forward,
            Direction::Forward,
            self.schedule,
            self.data,
            self.prior,
            e.gap_paths,
            e.seed,
        )?;
        let b = marginal_gap(
            state.backward_mean(),
            Direction::Backward,
            self.schedule,
            self.prior,
            self.data,
            e.gap_paths,
            e.seed,
        )?;
        Ok((f.gap, b.gap))
    }

    /// Averaged KL of `direction`'s chain against the closed-form bridge.
    pub fn averaged_kl(&self, state: &TrainState, direction: Direction) -> Result<Option<f64>> {
        let Some(bridge) = &self.oracle else {
            return Ok(None);
        };
        let e = &self.config.eval;
        let mut r = rng::stream(e.seed, 3);
        let trajs = match direction {
            Direction::Forward => {
                let x = self.data.draw(e.kl_paths, &mut r)?;
                chain::sample_forward(&state.forward, self.schedule, x.view(), e.seed)?
            }
            Direction::Backward => {
                let x = self.prior.draw(e.kl_paths, &mut r)?;
                chain::sample_backward(state.backward_mean(), self.schedule, x.view(), e.seed)?
            }
        };
        if trajs.n_paths() <= self.data.d {
            return Ok(Some(f64::INFINITY));
        }
        Ok(Some(bridge.averaged_kl(&trajs, self.schedule, e.kl_eval_times)?))
    }

    /// Runs the remaining half-epochs, calling `on_half_epoch` after each one.
    pub fn run<F>(&self, state: &mut TrainState, mut on_half_epoch: F) -> Result<()>
    where
        F: FnMut(&TrainState, &HalfEpochMetrics) -> Result<()>,
    {
        while state.completed < self.total_half_epochs() {
            let m = self.run_half_epoch(state)?;
            on_half_epoch(state, &m)?;
        }
        Ok(())
    }
}

/// Trains both nets from `init` for `config.epochs` outer iterations.
pub fn train_ipf(
    config: &TrainConfig,
    data: &Sampler,
    prior: &Sampler,
    schedule: &GammaSchedule,
    init: InitNets,
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(config.clone(), data, prior, schedule)?;
    let mut state = trainer.init_state(init)?;
    trainer.run(&mut state, |_, _| Ok(()))?;
    Ok(TrainOutcome {
        forward: state.forward,
        backward: state.backward,
        metrics: state.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussians(d: usize) -> (Sampler, Sampler) {
        (
            Sampler::shifted_gaussian(vec![1.0; d], d, 1).unwrap(),
            Sampler::shifted_gaussian(vec![-1.0; d], d, 2).unwrap(),
        )
    }

    fn tiny(objective: ObjectiveKind) -> TrainConfig {
        TrainConfig {
            epochs: 1,
            steps_per_half_epoch: 20,
            batch_size: 16,
            lr: 1e-3,
            cache_size: 64,
            cache_refresh_interval: 10,
            objective,
            arch: NetArch {
                hidden: 16,
                depth: 2,
                embed_dim: 4,
                ..NetArch::small()
            },
            eval: EvalConfig {
                gap_paths: 200,
                kl_paths: 1000,
                kl_eval_times: 4,
                seed: 1,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_return_init() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::symmetric(6, 0.1, 1.0, true).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny(ObjectiveKind::Ipfm)
        };
        let trainer = Trainer::new(cfg.clone(), &data, &prior, &s).unwrap();
        let init = trainer.init_state(InitNets::default()).unwrap();
        let out = train_ipf(&cfg, &data, &prior, &s, InitNets::default()).unwrap();
        assert_eq!(out.forward, init.forward);
        assert_eq!(out.backward, init.backward);
        assert!(out.metrics.records.is_empty());
    }

    #[test]
    fn nfe_is_steps_times_batch_times_evaluations() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::symmetric(6, 0.1, 1.0, true).unwrap();
        for obj in ObjectiveKind::ALL {
            let cfg = tiny(obj);
            let out = train_ipf(&cfg, &data, &prior, &s, InitNets::default()).unwrap();
            for r in &out.metrics.records {
                assert_eq!(r.nfe, 20 * 16 * obj.evaluations_per_target(), "{obj:?}");
            }
        }
    }

    #[test]
    fn alternation_freezes_partner() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::symmetric(6, 0.1, 1.0, true).unwrap();
        let trainer = Trainer::new(tiny(ObjectiveKind::Ipmm), &data, &prior, &s).unwrap();
        let mut st = trainer.init_state(InitNets::default()).unwrap();
        let b0 = st.backward.clone();
        let f0 = st.forward.clone();
        trainer.run_half_epoch(&mut st).unwrap();
        assert_eq!(st.backward, b0);
        assert_ne!(st.forward, f0);
        assert!(!st.backward_is_reference || st.completed == 1);
        let f1 = st.forward.clone();
        trainer.run_half_epoch(&mut st).unwrap();
        assert_eq!(st.forward, f1);
        assert_ne!(st.backward, b0);
        assert!(!st.backward_is_reference);
    }

    #[test]
    fn deterministic_and_resumable() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::symmetric(6, 0.1, 1.0, true).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..tiny(ObjectiveKind::Ipfm)
        };
        let a = train_ipf(&cfg, &data, &prior, &s, InitNets::default()).unwrap();
        let b = train_ipf(&cfg, &data, &prior, &s, InitNets::default()).unwrap();
        assert_eq!(a.forward, b.forward);
        assert_eq!(a.backward, b.backward);

        let trainer = Trainer::new(cfg.clone(), &data, &prior, &s).unwrap();
        let mut st = trainer.init_state(InitNets::default()).unwrap();
        trainer.run_half_epoch(&mut st).unwrap();
        trainer.run_half_epoch(&mut st).unwrap();
        let mut resumed = TrainState {
            metrics: RunMetrics::default(),
            ..st.clone()
        };
        trainer.run(&mut resumed, |_, _| Ok(())).unwrap();
        assert_eq!(resumed.forward, a.forward);
        assert_eq!(resumed.backward, a.backward);
        for (x, y) in resumed.metrics.records.iter().zip(&a.metrics.records[2..]) {
            assert_eq!((x.loss, x.gap_fwd, x.gap_bwd, x.avg_kl, x.nfe), (y.loss, y.gap_fwd, y.gap_bwd, y.avg_kl, y.nfe));
        }
    }

    #[test]
    fn self_gap_is_small() {
        let (data, _) = gaussians(2);
        let s = GammaSchedule::constant(4, 1e-12, false).unwrap();
        let g = marginal_gap(&ReferenceMean, Direction::Forward, &s, &data, &data, 10_000, 5).unwrap();
        assert!(g.gap < 0.05, "{g:?}");
    }

    #[test]
    fn brownian_gap_matches_closed_form() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::constant(10, 0.1, true).unwrap();
        let g = marginal_gap(&ReferenceMean, Direction::Forward, &s, &data, &prior, 10_000, 6).unwrap();
        let p = GaussianMoments::isotropic(&[1.0, 1.0], 3.0);
        let q = GaussianMoments::isotropic(&[-1.0, -1.0], 1.0);
        let exact = oracle::symmetric_kl(&p, &q).unwrap();
        assert!((g.gap - exact).abs() < 0.1 * exact, "{} vs {exact}", g.gap);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let m = RunMetrics {
            records: vec![
                HalfEpochMetrics {
                    half_epoch: 1,
                    trained: Direction::Forward,
                    loss: 0.5,
                    gap_fwd: 0.25,
                    gap_bwd: 1.5,
                    avg_kl: Some(0.125),
                    nfe: 100,
                    seconds: 1.0,
                    steps: 0,
                },
                HalfEpochMetrics {
                    half_epoch: 2,
                    trained: Direction::Backward,
                    loss: 0.75,
                    gap_fwd: 0.25,
                    gap_bwd: 0.5,
                    avg_kl: None,
                    nfe: 100,
                    seconds: 2.0,
                    steps: 0,
                },
            ],
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf, "abc").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config_hash=abc\nhalf_epoch,loss,gap_fwd,gap_bwd,avg_kl,nfe,seconds\n"));
        let (back, hash) = RunMetrics::read_csv(&text).unwrap();
        assert_eq!(hash.as_deref(), Some("abc"));
        assert_eq!(back, m);
    }

    #[test]
    fn init_modes_require_nets() {
        let (data, prior) = gaussians(2);
        let s = GammaSchedule::symmetric(6, 0.1, 1.0, true).unwrap();
        let cfg = TrainConfig {
            init: InitMode::Dual,
            ..tiny(ObjectiveKind::Ipfm)
        };
        let trainer = Trainer::new(cfg, &data, &prior, &s).unwrap();
        assert!(trainer.init_state(InitNets::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(ObjectiveKind::Ipfm);
        c.lr = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny(ObjectiveKind::Ipfm);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
