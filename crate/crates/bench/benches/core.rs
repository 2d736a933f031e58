use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stso_core::optimizer::Region;
use stso_core::{
    build_system, ActuatorDesign, Architecture, CostSpec, Field, GradientMode, NoiseIncrement, Policy, Purpose,
    StateVector, StreamKey, SystemConfig, SystemKind, TrainConfig, Trainer, TrainerState,
};

fn steppers(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for kind in [SystemKind::Heat1d, SystemKind::Burgers1d, SystemKind::EulerBernoulli1d, SystemKind::Heat2d, SystemKind::SoftLimb2d] {
        let sys = build_system(&SystemConfig::default_for(kind)).unwrap();
        let grid = *sys.grid();
        let state = StateVector::zeros(&grid, sys.channel_names().len());
        let actuation = Field::from_fn(&grid, |x| 0.1 * x[0]);
        let noise = NoiseIncrement::zeros(&grid, sys.noise_channels());
        group.bench_function(format!("{kind:?}"), |b| b.iter(|| sys.step(black_box(&state), &actuation, &noise).unwrap()));
    }
    group.finish();
}

fn cnn_forward(c: &mut Criterion) {
    let arch = Architecture::Cnn { channels: 1, height: 25, width: 25, filters: [8, 16], kernel: 5, outputs: 5 };
    let policy = Policy::xavier(arch, false, &mut StreamKey::new(1, Purpose::PolicyInit).rng()).unwrap();
    let input: Vec<f64> = (0..625).map(|n| (n as f64 * 0.37).sin()).collect();
    c.bench_function("cnn_forward_25x25", |b| b.iter(|| policy.forward(black_box(&input)).unwrap()));
    c.bench_function("cnn_sparse_pass_25x25", |b| b.iter(|| policy.sparse_forward_pass()));
}

fn trainer_iteration(c: &mut Criterion) {
    let mut sc = SystemConfig::default_for(SystemKind::Heat1d);
    sc.points = 32;
    let sys = build_system(&sc).unwrap();
    let region = |lo: f64, hi: f64| Region { lower: vec![lo], upper: vec![hi], target: 1.0, weight: 0.01, component: 0 };
    let cost = CostSpec { regions: vec![region(0.2, 0.3), region(0.7, 0.8)] }.compile(sys.grid(), 1).unwrap();
    let mut cfg = TrainConfig::new(u64::MAX, 50, 3);
    cfg.mode = GradientMode::OnPolicy;
    let policy =
        Policy::xavier(Architecture::mlp(32, &[32, 32], 3), true, &mut StreamKey::new(3, Purpose::PolicyInit).rng()).unwrap();
    let design = ActuatorDesign::new(sys.grid(), vec![[0.3, 0.0], [0.5, 0.0], [0.7, 0.0]], vec![0.1; 3]).unwrap();
    let mut trainer = Trainer::new(sys.as_ref(), &cost, cfg.clone(), TrainerState::new(policy, design, 1, &cfg)).unwrap();
    let mut group = c.benchmark_group("trainer");
    group.sample_size(10);
    group.bench_function("heat1d_j32_r50_iteration", |b| b.iter(|| trainer.iterate().unwrap()));
    group.finish();
}

criterion_group!(benches, steppers, cnn_forward, trainer_iteration);
criterion_main!(benches);
