//! Scratch: identity-representation policy training.

use metal_core::data::{self, ProblemSpec};
use metal_core::rng::{self, rng_from_seed, RngCore};
use metal_core::trainer::{self, Arch, EmbedArch, ModelParams, OptimizerKind, TrainConfig};

fn synth_dataset(classes: usize, per_class: usize, k: usize, spread: f64, seed: u64) -> data::BaseDataset {
    let mut rng = rng_from_seed(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..k).map(|_| rng::uniform_range(&mut rng, -1.0, 1.0)).collect())
        .collect();
    fn normal(rng: &mut impl RngCore) -> f64 {
        let u1 = rng::uniform_f64(rng).max(f64::MIN_POSITIVE);
        let u2 = rng::uniform_f64(rng);
        (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
    }
    let mut rows = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let x: Vec<f64> = mean.iter().map(|m| m + spread * normal(&mut rng)).collect();
            rows.push((x, format!("c{c:03}")));
        }
    }
    data::BaseDataset::from_rows(k, rows).unwrap()
}

#[test]
#[ignore]
fn identity_policy_run() {
    let ds = synth_dataset(26, 200, 16, 0.45, 7);
    let part = data::partition_classes(&ds, (10, 7, 9), 1).unwrap();
    let spec = ProblemSpec { classes_per_problem: 2, pool_size: 25, eval_size: 40, balanced: false };
    let suite = data::make_problem_suite(&ds, &part, spec, (2000, 300, 0), 3).unwrap();
    for (name, opt, lr, clip, eps, mc) in [
        ("sgd.4c1-20k", OptimizerKind::Sgd, 0.4, 1.0, 20_000usize, 8usize),
        ("sgd.2c1-20k-mc16", OptimizerKind::Sgd, 0.2, 1.0, 20_000, 16),
        ("sgd.6c2-20k", OptimizerKind::Sgd, 0.6, 2.0, 20_000, 8),
    ] {
        let arch = Arch { input_dim: 16, embed: EmbedArch::Identity, rnn_hidden: 32 };
        let model = ModelParams::init(arch, 5).unwrap();
        let cfg = TrainConfig {
            budget: 2,
            mc_samples: mc,
            episodes: eps,
            eval_interval: 2_000,
            learning_rate: lr,
            optimizer: opt,
            clip_norm: clip,
            seed: 5,
            temperature: 1.0,
            ..TrainConfig::default()
        };
        let out = trainer::train(&ds, &suite.train, &suite.val, model, &cfg).unwrap();
        let vals: Vec<String> = out
            .log
            .iter()
            .filter(|r| r.split == "val")
            .map(|r| format!("{}:{:.4}", r.episode, r.accuracy_mean))
            .collect();
        println!("{name}: {} best {:.4}", vals.join(" "), out.best_val_accuracy);
    }
}
