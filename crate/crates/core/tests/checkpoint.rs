use proptest::prelude::*;
use stso_core::experiment::{load_checkpoint, save_checkpoint};
use stso_core::optimizer::Region;
use stso_core::policy::{f64s_to_le_bytes, le_bytes_to_f64s};
use stso_core::{
    build_system, ActuatorDesign, Architecture, CostSpec, GradientMode, Policy, Purpose, StreamKey, SystemConfig,
    SystemKind, TrainConfig, Trainer, TrainerState,
};

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let mut sc = SystemConfig::default_for(SystemKind::Heat1d);
    sc.points = 16;
    sc.horizon = 0.2;
    let sys = build_system(&sc).unwrap();
    let cost = CostSpec { regions: vec![Region { lower: vec![0.2], upper: vec![0.4], target: 1.0, weight: 0.01, component: 0 }] }
        .compile(sys.grid(), 1)
        .unwrap();
    let mut cfg = TrainConfig::new(6, 5, 17);
    cfg.mode = GradientMode::OnPolicy;
    let arch = Architecture::mlp(16, &[5], 2);
    let policy = Policy::xavier(arch, true, &mut StreamKey::new(17, Purpose::PolicyInit).rng()).unwrap();
    let design = ActuatorDesign::new(sys.grid(), vec![[0.31, 0.0], [0.6, 0.0]], vec![0.1, 0.1]).unwrap();
    let start = TrainerState::new(policy, design, 1, &cfg);

    let mut straight = Trainer::new(sys.as_ref(), &cost, cfg.clone(), start.clone()).unwrap();
    let mut all = Vec::new();
    straight.run(|r, _| Ok(all.push(serde_json::to_string(r).unwrap()))).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(sys.as_ref(), &cost, cfg.clone(), start).unwrap();
    let mut resumed = Vec::new();
    for _ in 0..3 {
        resumed.push(serde_json::to_string(&first.iterate().unwrap()).unwrap());
    }
    let mid = first.into_state();
    save_checkpoint(dir.path(), &mid, 17).unwrap();
    let (loaded, seed) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(seed, 17);
    assert_eq!(loaded.iteration, 3);
    assert_eq!(bits(loaded.policy.params()), bits(mid.policy.params()));
    assert_eq!(loaded.design, mid.design);
    for (a, b) in [(&loaded.adam_policy, &mid.adam_policy), (&loaded.adam_placement, &mid.adam_placement), (&loaded.adam_width, &mid.adam_width)] {
        assert_eq!(a.step, b.step);
        assert_eq!(bits(&a.m), bits(&b.m));
        assert_eq!(bits(&a.v), bits(&b.v));
    }

    let mut second = Trainer::new(sys.as_ref(), &cost, cfg, loaded).unwrap();
    second.run(|r, _| Ok(resumed.push(serde_json::to_string(r).unwrap()))).unwrap();
    assert_eq!(resumed, all);
    assert_eq!(bits(second.state().policy.params()), bits(straight.state().policy.params()));
}

#[test]
fn missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_checkpoint(dir.path()).unwrap_err().to_string();
    assert!(err.contains("state.json"), "{err}");
}

proptest! {
    #[test]
    fn le_stream_round_trip_is_bit_exact(raw in proptest::collection::vec(any::<u64>(), 0..64)) {
        let values: Vec<f64> = raw.iter().map(|b| f64::from_bits(*b)).collect();
        let back = le_bytes_to_f64s(&f64s_to_le_bytes(&values)).unwrap();
        prop_assert_eq!(bits(&back), raw);
    }

    #[test]
    fn truncated_streams_rejected(n in 1usize..64, cut in 1usize..8) {
        let bytes = f64s_to_le_bytes(&vec![1.5; n]);
        prop_assert!(le_bytes_to_f64s(&bytes[..bytes.len() - cut]).is_err());
    }
}
