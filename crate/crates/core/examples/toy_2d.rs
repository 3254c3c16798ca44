//! Two moons against a standard Gaussian. Trains a bridge, then writes
//! trajectory fans before and after training and the metric curve as SVG.
//!
//! cargo run --release --example toy_2d -- [output dir]

use std::path::PathBuf;

use sblab::bridge::NetArch;
use sblab::chain::{self, ReferenceMean};
use sblab::datasets::{Sampler, SamplerKind};
use sblab::plot;
use sblab::trainer::{train_ipf, EvalConfig, InitNets, TrainConfig};
use sblab::{rng, GammaSchedule, ObjectiveKind, Result};

fn main() -> Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy_2d_out".into()));
    std::fs::create_dir_all(&dir)?;

    let data = Sampler::new(SamplerKind::TwoMoons { noise: 0.05 }, 2, 1)?;
    let prior = Sampler::shifted_gaussian(vec![0.0], 2, 2)?;
    let schedule = GammaSchedule::symmetric(20, 0.02, 0.5, true)?;
    let config = TrainConfig {
        epochs: 3,
        steps_per_half_epoch: 4000,
        lr: 1e-3,
        cache_size: 2048,
        cache_refresh_interval: 250,
        objective: ObjectiveKind::Ipfm,
        arch: NetArch {
            hidden: 128,
            depth: 4,
            embed_dim: 16,
            ..NetArch::small()
        },
        ema_decay: Some(0.995),
        eval: EvalConfig {
            gap_paths: 4000,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    };

    let start = prior.draw(2000, &mut rng::stream(9, 0))?;
    let before = chain::sample_backward(&ReferenceMean, &schedule, start.view(), 9)?;
    std::fs::write(dir.join("before.svg"), plot::trajectory_svg(&before, "reference chain", 0))?;

    let out = train_ipf(&config, &data, &prior, &schedule, InitNets::default())?;
    let after = chain::sample_backward(&out.backward, &schedule, start.view(), 9)?;
    std::fs::write(dir.join("after.svg"), plot::trajectory_svg(&after, "trained backward chain", 0))?;
    std::fs::write(dir.join("metrics.svg"), plot::metrics_svg(&out.metrics, "two moons"))?;

    for r in &out.metrics.records {
        println!("half-epoch {}: gap_fwd {:.4}, gap_bwd {:.4}", r.half_epoch, r.gap_fwd, r.gap_bwd);
    }
    println!("wrote {}", dir.display());
    Ok(())
}
