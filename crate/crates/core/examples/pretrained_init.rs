//! Fits flow-matching models toward both endpoints, then starts bridge
//! training from them. The same weights under the original mean-matching loss
//! are evaluated off the chain and start worse.

use sblab::bridge::NetArch;
use sblab::datasets::Sampler;
use sblab::sgm_init::{self, PretrainBudget, Toward};
use sblab::trainer::{train_ipf, EvalConfig, InitMode, InitNets, TrainConfig};
use sblab::{GammaSchedule, ObjectiveKind, Result};

fn main() -> Result<()> {
    let data = Sampler::shifted_gaussian(vec![1.0], 2, 1)?;
    let prior = Sampler::shifted_gaussian(vec![-1.0], 2, 2)?;
    let schedule = GammaSchedule::symmetric(20, 0.1, 1.0, true)?;
    let arch = NetArch::small();
    let budget = PretrainBudget {
        steps: 3000,
        ..PretrainBudget::default()
    };

    let to_data = sgm_init::pretrain_flow_sgm(&data, &prior, Toward::Data, &schedule, &arch, &budget, 100)?;
    let to_prior = sgm_init::pretrain_flow_sgm(&data, &prior, Toward::Prior, &schedule, &arch, &budget, 200)?;
    for m in [&to_data, &to_prior] {
        let loss = sgm_init::pretrain_loss(m, &data, &prior, &schedule, 4096, 1)?;
        println!("toward {:5}: held-out loss {loss:.4}", m.toward.name());
    }

    let base = TrainConfig {
        epochs: 2,
        steps_per_half_epoch: 1000,
        lr: 1e-3,
        cache_size: 1024,
        cache_refresh_interval: 250,
        arch,
        ema_decay: Some(0.995),
        eval: EvalConfig {
            seed: 99,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    };
    for (name, objective, init) in [
        ("ipfm, scratch", ObjectiveKind::Ipfm, InitMode::Random),
        ("ipfm, dual init", ObjectiveKind::Ipfm, InitMode::Dual),
        ("dsb, scratch", ObjectiveKind::Dsb, InitMode::Random),
        ("dsb, dual init", ObjectiveKind::Dsb, InitMode::Dual),
    ] {
        let nets = match init {
            InitMode::Random => InitNets::default(),
            _ => InitNets {
                backward: Some(sgm_init::wrap_backward_init(&to_data, &schedule, objective)?),
                forward: Some(sgm_init::wrap_forward_init(&to_prior, &schedule, objective)?),
            },
        };
        let config = TrainConfig {
            objective,
            init,
            ..base.clone()
        };
        let out = train_ipf(&config, &data, &prior, &schedule, nets)?;
        let kl: Vec<String> = out
            .metrics
            .records
            .iter()
            .map(|r| format!("{:.4}", r.avg_kl.unwrap_or(f64::NAN)))
            .collect();
        println!("{name:16} averaged KL per half-epoch: {}", kl.join("  "));
    }
    Ok(())
}
