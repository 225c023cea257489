// Scratch: criterion-11 scenario tuning (ordering demonstration).
use syncsim::kernel::{Hyperparams, LRSchedule, ModelSpec};
use syncsim::metrics::ConvergenceDetector;
use syncsim::policies::{LrScaling, MomentumVariant, Protocol, SwitchPlan};
use syncsim::sim::{run, DataConfig, RunSpec, RunStatus, SwitchOverheadModel, WorkerProfile};

fn spec(plan: SwitchPlan, seed: u64) -> RunSpec {
    let b = 128u64;
    RunSpec {
        model: ModelSpec::mlp(16, 4, 32),
        data: DataConfig { seed: 1, n_train: 2048, n_test: 512 },
        hyperparams: Hyperparams {
            batch_size: b,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            total_workload: b * 4096,
            lr_schedule: LRSchedule { base_lr: 0.1, boundaries: vec![2048, 3072], factors: vec![0.1, 0.01] },
        },
        plan,
        workers: (0..8).map(|worker_id| WorkerProfile { worker_id, base_step_time_s: 1.0, jitter_sigma: 0.15, base_net_latency_s: 0.005 }).collect(),
        injections: vec![],
        overhead: SwitchOverheadModel { checkpoint_plus_restart_s: 36.0, cluster_init_s: 90.0 },
        lr_scaling: LrScaling::SqrtDown,
        momentum_variant: MomentumVariant::Same,
        eval_every_asp_steps: 100,
        max_transient_duration_s: 100.0,
        seed,
    }
}

fn main() {
    let det = ConvergenceDetector::default();
    for (name, plan) in [
        ("bsp", SwitchPlan::single(Protocol::Bsp)),
        ("asp", SwitchPlan::single(Protocol::Asp)),
        ("sw25", SwitchPlan::bsp_then_asp(0.25)),
    ] {
        let mut accs = vec![];
        let mut times = vec![];
        for seed in 0..5u64 {
            let t = run(&spec(plan.clone(), seed)).unwrap();
            assert_eq!(t.status, RunStatus::Completed, "{name} seed {seed}");
            let acc = det.detect(&t.evals).map(|c| c.accuracy).unwrap_or(t.final_accuracy);
            let conv = det.detect(&t.evals).is_some();
            accs.push(acc);
            times.push(t.total_time_s);
            println!("  {name} seed={seed} acc={acc:.4} conv={conv} time={:.1}", t.total_time_s);
        }
        let ma = accs.iter().sum::<f64>() / 5.0;
        let mt = times.iter().sum::<f64>() / 5.0;
        println!("{name}: mean_acc={ma:.4} mean_time={mt:.1}");
    }
}
