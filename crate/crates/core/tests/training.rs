use stso_core::optimizer::{compute_n, compute_p, evaluate, CompiledCost, Region};
use stso_core::systems::RolloutOptions;
use stso_core::{
    build_system, influence, rollout, ActuatorDesign, Architecture, CostSpec, Dynamics, GradientMode, IterationRecord,
    Policy, Purpose, StreamKey, SystemConfig, SystemKind, TrainConfig, Trainer, TrainerState, Trajectory,
};

fn heat(points: usize, horizon: f64) -> Box<dyn Dynamics> {
    let mut cfg = SystemConfig::default_for(SystemKind::Heat1d);
    cfg.points = points;
    cfg.horizon = horizon;
    build_system(&cfg).unwrap()
}

fn reach_cost(sys: &dyn Dynamics) -> CompiledCost {
    let region = |lo: f64, hi: f64| Region { lower: vec![lo], upper: vec![hi], target: 1.0, weight: 0.01, component: 0 };
    CostSpec { regions: vec![region(0.2, 0.3), region(0.7, 0.8)] }.compile(sys.grid(), 1).unwrap()
}

fn initial(sys: &dyn Dynamics, cfg: &TrainConfig, seed: u64) -> TrainerState {
    let arch = Architecture::mlp(sys.grid().node_count(), &[8, 8], 3);
    let policy = Policy::xavier(arch, true, &mut StreamKey::new(seed, Purpose::PolicyInit).rng()).unwrap();
    let design =
        ActuatorDesign::random(sys.grid(), 3, &[[0.4, 0.6]], 0.1, &mut StreamKey::new(seed, Purpose::ActuatorInit).rng())
            .unwrap();
    TrainerState::new(policy, design, 1, cfg)
}

fn train(sys: &dyn Dynamics, cost: &CompiledCost, cfg: TrainConfig) -> (Vec<IterationRecord>, TrainerState) {
    let state = initial(sys, &cfg, cfg.seed);
    let mut trainer = Trainer::new(sys, cost, cfg, state).unwrap();
    let mut records = Vec::new();
    trainer
        .run(|r, _| {
            records.push(r.clone());
            Ok(())
        })
        .unwrap();
    (records, trainer.into_state())
}

#[test]
fn zero_policy_first_iteration() {
    let sys = heat(32, 1.0);
    let cost = reach_cost(sys.as_ref());
    let mut cfg = TrainConfig::new(1, 2, 4);
    cfg.mode = GradientMode::OnPolicy;
    let (records, _) = train(sys.as_ref(), &cost, cfg.clone());
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].loss, 0.0);
    // The zero policy makes every rollout uncontrolled: compare against an
    // independent uncontrolled ensemble.
    let state = initial(sys.as_ref(), &cfg, 4);
    let zero = Policy::zeros(state.policy.architecture().clone()).unwrap();
    let ev = evaluate(sys.as_ref(), &cost, &zero, &state.design, 99, 200, true).unwrap();
    let mean = ev.mean_cost();
    let sd = (ev.costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!((records[0].mean_cost - mean).abs() < 4.0 * sd, "{} vs {mean} ± {sd}", records[0].mean_cost);
}

#[test]
fn same_seed_same_records_for_any_thread_count() {
    let sys = heat(16, 0.2);
    let cost = reach_cost(sys.as_ref());
    let mut cfg = TrainConfig::new(6, 8, 21);
    cfg.mode = GradientMode::OnPolicy;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(sys.as_ref(), &cost, cfg.clone()))
    };
    let (a, sa) = run(1);
    let (b, sb) = run(4);
    let text = |r: &[IterationRecord]| r.iter().map(|x| serde_json::to_string(x).unwrap()).collect::<Vec<_>>();
    assert_eq!(text(&a), text(&b));
    assert_eq!(sa.policy.params(), sb.policy.params());
    assert!(a.windows(2).any(|w| w[0].loss != w[1].loss));
}

#[test]
fn zero_design_rates_freeze_actuators() {
    let sys = heat(16, 0.2);
    let cost = reach_cost(sys.as_ref());
    let mut cfg = TrainConfig::new(5, 6, 3);
    cfg.mode = GradientMode::OnPolicy;
    cfg.rates.placement = 0.0;
    cfg.rates.width = 0.0;
    let before = initial(sys.as_ref(), &cfg, 3);
    let (records, after) = train(sys.as_ref(), &cost, cfg);
    assert_eq!(after.design, before.design);
    for r in &records {
        assert_eq!(r.widths, before.design.widths);
    }
    assert_ne!(after.policy.params(), before.policy.params());
}

/// `E[exp(√ρ N − ρ P / 2)] = 1` under the uncontrolled measure.
#[test]
fn exponential_martingale_has_unit_mean() {
    let sys = heat(32, 1.0);
    let grid = *sys.grid();
    let rho = sys.config().rho;
    let design = ActuatorDesign::new(&grid, vec![[0.5, 0.0]], vec![0.1]).unwrap();
    let infl = influence(&design, &grid);
    let zero = Policy::zeros(Architecture::mlp(32, &[2], 1)).unwrap();
    let c = 0.2;
    let m = 4000;
    let samples: Vec<f64> = (0..m)
        .map(|r| {
            let traj = rollout(sys.as_ref(), &zero, &infl, &RolloutOptions::training(8, 1, r)).unwrap();
            let fixed = Trajectory { controls: vec![vec![c]; traj.steps()], ..traj };
            let n = compute_n(sys.as_ref(), &fixed, &infl).unwrap();
            let p = compute_p(sys.as_ref(), &fixed, &infl).unwrap();
            (rho.sqrt() * n - 0.5 * rho * p).exp()
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / m as f64;
    let se = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0) / m as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
}
