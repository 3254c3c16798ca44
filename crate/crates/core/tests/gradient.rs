mod common;

use ndarray::Array2;
use proptest::prelude::*;
use sblab::nn::{Activation, Mlp};
use sblab::rng;

fn net(act: Activation, seed: u64) -> Mlp {
    Mlp::toy(2, 16, 3, 4, act, &mut rng::stream(seed, 0)).unwrap()
}

#[test]
fn f64_oracle_matches_forward() {
    let m = net(Activation::Silu, 1);
    let x = Array2::from_shape_fn((5, 2), |(i, j)| i as f32 * 0.4 - j as f32);
    let steps = [0, 2, 5, 7, 10];
    let y = m.forward(&steps, 10, x.view()).unwrap();
    let p: Vec<f64> = m.params().iter().map(|&v| v as f64).collect();
    for (i, &k) in steps.iter().enumerate() {
        let xi: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
        let o = common::forward_f64(&m, &p, k, 10, &xi);
        for j in 0..2 {
            assert!((o[j] - y[[i, j]] as f64).abs() < 1e-5, "{} vs {}", o[j], y[[i, j]]);
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    for act in [Activation::Silu, Activation::Tanh] {
        let worst = common::gradient_check(&net(act, 2), 300, 1e-3, 3);
        assert!(worst < 1e-4, "{act:?}: {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gradients_hold_for_random_nets(seed in 0u64..1_000) {
        let worst = common::gradient_check(&net(Activation::Silu, seed), 20, 1e-3, seed + 1);
        prop_assert!(worst < 1e-4, "{}", worst);
    }
}
