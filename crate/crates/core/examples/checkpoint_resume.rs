//! Interrupts a training run after one half-epoch, saves both nets, and
//! resumes from the files. The resumed run ends with the same weights.

use sblab::bridge::NetArch;
use sblab::checkpoint::Checkpoint;
use sblab::datasets::Sampler;
use sblab::trainer::{EvalConfig, InitNets, TrainConfig, Trainer};
use sblab::{GammaSchedule, Result};

fn main() -> Result<()> {
    let data = Sampler::shifted_gaussian(vec![1.0], 2, 1)?;
    let prior = Sampler::shifted_gaussian(vec![-1.0], 2, 2)?;
    let schedule = GammaSchedule::symmetric(10, 0.1, 1.0, true)?;
    let config = TrainConfig {
        epochs: 1,
        steps_per_half_epoch: 200,
        lr: 1e-3,
        cache_size: 256,
        cache_refresh_interval: 100,
        arch: NetArch::small(),
        eval: EvalConfig {
            gap_paths: 1000,
            kl_paths: 1000,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    };
    let trainer = Trainer::new(config, &data, &prior, &schedule)?;

    let mut full = trainer.init_state(InitNets::default())?;
    trainer.run(&mut full, |_, _| Ok(()))?;

    let mut part = trainer.init_state(InitNets::default())?;
    trainer.run_half_epoch(&mut part)?;
    let dir = std::env::temp_dir().join("sblab_checkpoint_resume");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("half_1_F.sbck");
    Checkpoint::bridge(&part.forward, 0).save(&path)?;
    println!("saved {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let mut resumed = trainer.init_state(InitNets::default())?;
    resumed.forward = Checkpoint::load(&path)?.into_bridge()?;
    resumed.completed = 1;
    resumed.metrics = part.metrics.clone();
    trainer.run(&mut resumed, |_, m| {
        println!("resumed half-epoch {}: loss {:.4}", m.half_epoch, m.loss);
        Ok(())
    })?;

    println!("forward nets equal:  {}", resumed.forward == full.forward);
    println!("backward nets equal: {}", resumed.backward == full.backward);
    Ok(())
}
