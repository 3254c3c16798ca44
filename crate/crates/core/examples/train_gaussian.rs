//! Trains a bridge from scratch between N(1, I) and N(-1, I) in two
//! dimensions and reports the diagnostics of every half-epoch.
//!
//! cargo run --release --example train_gaussian -- [objective] [epochs]

use sblab::bridge::NetArch;
use sblab::datasets::Sampler;
use sblab::trainer::{train_ipf, EvalConfig, InitNets, TrainConfig};
use sblab::{GammaSchedule, ObjectiveKind, Result};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let objective = match args.next().as_deref() {
        Some("dsb") => ObjectiveKind::Dsb,
        Some("ipmm") => ObjectiveKind::Ipmm,
        Some("iptm") => ObjectiveKind::Iptm,
        _ => ObjectiveKind::Ipfm,
    };
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    let data = Sampler::shifted_gaussian(vec![1.0], 2, 1)?;
    let prior = Sampler::shifted_gaussian(vec![-1.0], 2, 2)?;
    let schedule = GammaSchedule::symmetric(20, 0.1, 1.0, true)?;
    let config = TrainConfig {
        epochs,
        steps_per_half_epoch: 1000,
        lr: 1e-3,
        cache_size: 1024,
        cache_refresh_interval: 250,
        objective,
        arch: NetArch::small(),
        ema_decay: Some(0.995),
        eval: EvalConfig {
            seed: 99,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train_ipf(&config, &data, &prior, &schedule, InitNets::default())?;
    println!("objective {}", objective.name());
    println!("half  net     loss   gap_fwd   gap_bwd    avg_kl      nfe");
    for r in &out.metrics.records {
        println!(
            "{:4}  {:>8} {:8.4} {:9.5} {:9.5} {:9.5} {:8}",
            r.half_epoch,
            r.trained.name(),
            r.loss,
            r.gap_fwd,
            r.gap_bwd,
            r.avg_kl.unwrap_or(f64::NAN),
            r.nfe
        );
    }
    Ok(())
}
