//! The four regression objectives on one cached batch of reference paths:
//! what each asks the network to predict, what it costs, and how the
//! trajectory-only targets map back to the same step mean.

use ndarray::Array2;
use sblab::chain::{self, subsample_pairs, CountingMean, Direction, ReferenceMean};
use sblab::objectives::{self, ObjectiveKind};
use sblab::{rng, GammaSchedule, Result};

fn main() -> Result<()> {
    let schedule = GammaSchedule::symmetric(10, 0.1, 1.0, true)?;
    let start = Array2::from_shape_fn((256, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f32 * 0.2 - 1.0);
    let forward = chain::sample_forward(&ReferenceMean, &schedule, start.view(), 5)?;

    println!("objective  evaluations/target  measured nfe (batch 64)");
    for kind in ObjectiveKind::ALL {
        let partner = CountingMean::new(ReferenceMean);
        let batch = subsample_pairs(
            &forward,
            kind,
            Direction::Backward,
            &schedule,
            64,
            Some(&partner),
            &mut rng::stream(1, 0),
        )?;
        println!("{:9}  {:18}  {}", kind.name(), kind.evaluations_per_target(), batch.nfe);
    }

    // Along one path, the flow and terminus targets imply the conditional mean
    // of the next state given the terminus.
    let path = forward.path(0);
    println!("\n k   flow->mean  terminus->mean  posterior mean");
    for k in 0..schedule.n_steps() {
        let (x, flow) = objectives::ipfm_target(Direction::Backward, k, path, &schedule)?;
        let (_, term) = objectives::iptm_target(Direction::Backward, k, path, &schedule)?;
        let a = objectives::flow_to_mean(Direction::Backward, k, &x, &flow, &schedule)?;
        let b = objectives::terminus_to_mean(Direction::Backward, k, &x, &term, &schedule)?;
        let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let t64: Vec<f64> = term.iter().map(|&v| v as f64).collect();
        let p = objectives::posterior_params(Direction::Backward, k, &t64, &x64, &schedule)?;
        println!("{k:2}  {:11.5}  {:14.5}  {:14.5}", a[0], b[0], p.mean[0]);
    }
    Ok(())
}
