use proptest::prelude::*;
use sblab::bridge::{BridgeNet, NetArch};
use sblab::checkpoint::{Checkpoint, Role};
use sblab::chain::Direction;
use sblab::datasets::Sampler;
use sblab::nn::Activation;
use sblab::sgm_init::{self, PretrainBudget, Toward};
use sblab::{rng, GammaSchedule, ObjectiveKind};

fn bytes(c: &Checkpoint) -> Vec<u8> {
    let mut b = Vec::new();
    c.write(&mut b).unwrap();
    b
}

#[test]
fn pretrained_models_round_trip_through_files() {
    let data = Sampler::shifted_gaussian(vec![1.0], 2, 1).unwrap();
    let prior = Sampler::shifted_gaussian(vec![-1.0], 2, 2).unwrap();
    let s = GammaSchedule::symmetric(8, 0.1, 1.0, true).unwrap();
    let budget = PretrainBudget {
        steps: 20,
        batch_size: 16,
        lr: 1e-3,
    };
    let dir = tempfile::tempdir().unwrap();
    for toward in [Toward::Data, Toward::Prior] {
        let sgm = sgm_init::pretrain_flow_sgm(&data, &prior, toward, &s, &NetArch::small(), &budget, 5).unwrap();
        let path = dir.path().join(format!("{}.sbck", toward.name()));
        let ck = Checkpoint::pretrained(&sgm, &s, 5).unwrap();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(std::fs::read(&path).unwrap(), bytes(&ck));
        let (sgm2, s2) = back.into_pretrained().unwrap();
        assert_eq!(sgm2, sgm);
        assert_eq!(s2.gamma_bars(), s.gamma_bars());
    }
}

#[test]
fn wrapped_init_nets_keep_their_heads() {
    let s = GammaSchedule::symmetric(8, 0.1, 1.0, true).unwrap();
    let data = Sampler::shifted_gaussian(vec![1.0], 1, 1).unwrap();
    let budget = PretrainBudget {
        steps: 0,
        ..Default::default()
    };
    let sgm = sgm_init::pretrain_flow_sgm(&data, &data, Toward::Prior, &s, &NetArch::small(), &budget, 1).unwrap();
    let net = sgm_init::wrap_forward_init(&sgm, &s, ObjectiveKind::Iptm).unwrap();
    let back = Checkpoint::from_bytes(&bytes(&Checkpoint::bridge(&net, 3))).unwrap();
    assert!(matches!(back.role, Role::Bridge { time_reversed: true, .. }));
    assert_eq!(back.into_bridge().unwrap(), net);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bridge_round_trip_is_bit_exact(
        d in 1usize..4,
        hidden in 1usize..24,
        depth in 1usize..5,
        half_embed in 0usize..5,
        act in 0u8..3,
        n in 2usize..12,
        backward in any::<bool>(),
        obj in 0usize..4,
        seed in any::<u64>(),
    ) {
        let arch = NetArch {
            hidden,
            depth,
            embed_dim: 2 * half_embed,
            activation: Activation::from_id(act).unwrap(),
        };
        let s = GammaSchedule::symmetric(n, 0.1, 1.0, true).unwrap();
        let dir = if backward { Direction::Backward } else { Direction::Forward };
        let net = BridgeNet::random(d, &arch, dir, ObjectiveKind::ALL[obj], &s, &mut rng::stream(seed, 0)).unwrap();
        let ck = Checkpoint::bridge(&net, seed);
        let b = bytes(&ck);
        let back = Checkpoint::from_bytes(&b).unwrap();
        prop_assert_eq!(bytes(&back), b);
        let net2 = back.into_bridge().unwrap();
        let same_bits = net2.mlp.params().iter().zip(net.mlp.params()).all(|(x, y)| x.to_bits() == y.to_bits());
        prop_assert!(same_bits);
        prop_assert_eq!(net2, net);
    }

    #[test]
    fn truncations_never_parse(cut in 0usize..200, seed in any::<u64>()) {
        let s = GammaSchedule::constant(3, 0.2, true).unwrap();
        let net = BridgeNet::random(2, &NetArch { hidden: 3, depth: 2, embed_dim: 2, ..NetArch::small() },
            Direction::Forward, ObjectiveKind::Ipmm, &s, &mut rng::stream(seed, 0)).unwrap();
        let b = bytes(&Checkpoint::bridge(&net, 0));
        let cut = cut.min(b.len() - 1);
        prop_assert!(Checkpoint::from_bytes(&b[..cut]).is_err());
    }
}
