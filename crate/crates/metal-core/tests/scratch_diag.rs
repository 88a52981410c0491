//! Scratch diagnosis of policy-gradient learning dynamics. Not a real test.

use metal_core::data::{self, ProblemSpec};
use metal_core::graph::{Graph, NodeId};
use metal_core::predictor::{self, Similarity};
use metal_core::rng::{self, rng_from_seed, RngCore};
use metal_core::selector::{self, Strategy};
use metal_core::tensor::GradStore;
use metal_core::trainer::{self, Arch, EmbedArch, EvalConfig, ModelParams};

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

struct Fwd {
    g: Graph,
    binding: metal_core::graph::ParamBinding,
    pool: Vec<NodeId>,
    evals: Vec<NodeId>,
    out: selector::PolicyOutput,
    dist: Vec<f64>,
}

fn forward(ds: &data::BaseDataset, problem: &data::Problem, model: &ModelParams, order: &[usize]) -> Fwd {
    let mut g = Graph::new();
    let binding = g.bind(&model.store).unwrap();
    let mlp = model.embedder.as_ref().map(|m| m.bind(&model.store, &binding).unwrap());
    let embed = |g: &mut Graph, row: usize| -> NodeId {
        let leaf = g.leaf_vector(ds.row(row)).unwrap();
        match &mlp {
            None => leaf,
            Some(ids) => metal_core::nn::mlp_embed(g, ids, leaf).unwrap(),
        }
    };
    let pool: Vec<NodeId> = problem.pool_rows.iter().map(|&r| embed(&mut g, r)).collect();
    let evals: Vec<NodeId> = problem.eval_rows.iter().map(|&r| embed(&mut g, r)).collect();
    let seq: Vec<NodeId> = order.iter().map(|&p| pool[p]).collect();
    let out = selector::policy_scores(&mut g, &model.policy, &model.store, &binding, &seq).unwrap();
    let dist = g.value(out.dist).to_vec();
    Fwd { g, binding, pool, evals, out, dist }
}

fn pred_loss(fwd: &mut Fwd, problem: &data::Problem, chosen_pool: &[usize], temp: f64) -> NodeId {
    let labels = problem.oracle.query(chosen_pool).unwrap();
    let supports: Vec<(NodeId, usize)> = chosen_pool.iter().zip(&labels).map(|(&i, &l)| (fwd.pool[i], l)).collect();
    let mut ces = Vec::new();
    for (&x, &y) in fwd.evals.iter().zip(&problem.eval_labels) {
        let p = predictor::predict_nodes(&mut fwd.g, x, &supports, problem.n_classes(), Similarity::Euclidean, temp).unwrap();
        ces.push(fwd.g.cross_entropy(p, y).unwrap());
    }
    let st = fwd.g.stack(&ces).unwrap();
    fwd.g.sum(st).unwrap()
}

#[test]
#[ignore]
fn diagnose() {
    let ds = synth_dataset(26, 200, 16, 0.45, 7);
    let part = data::partition_classes(&ds, (10, 7, 9), 1).unwrap();
    let spec = ProblemSpec { classes_per_problem: 2, pool_size: 25, eval_size: 40, balanced: false };
    let suite = data::make_problem_suite(&ds, &part, spec, (500, 100, 0), 3).unwrap();
    let arch = Arch { input_dim: 16, embed: EmbedArch::Mlp { hidden: vec![32], out: 16 }, rnn_hidden: 32 };

    // ── Variance decomposition of the prediction loss ────────────────
    let model = ModelParams::init(arch.clone(), 5).unwrap();
    let mut rng = rng_from_seed(99);
    let mut within = 0.0;
    let mut betweens = Vec::new();
    let n_probe = 40;
    for problem in suite.train.iter().take(n_probe) {
        let order: Vec<usize> = (0..25).collect();
        let mut fwd = forward(&ds, problem, &model, &order);
        let mark = fwd.g.mark();
        let mut losses = Vec::new();
        for _ in 0..32 {
            let (chosen, _) = selector::sample_without_replacement(&fwd.dist, 2, &mut rng).unwrap();
            let ln = pred_loss(&mut fwd, problem, &chosen, 4.0);
            losses.push(fwd.g.scalar_value(ln));
            fwd.g.truncate(mark);
        }
        let m = losses.iter().sum::<f64>() / losses.len() as f64;
        let v = losses.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / losses.len() as f64;
        within += v / n_probe as f64;
        betweens.push(m);
    }
    let bm = betweens.iter().sum::<f64>() / betweens.len() as f64;
    let bv = betweens.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / betweens.len() as f64;
    println!("loss mean {bm:.1}; within-problem var {within:.1} (sd {:.1}); between-problem var {bv:.1} (sd {:.1})", within.sqrt(), bv.sqrt());

    // ── Component norms at init ──────────────────────────────────────
    let mut score_norm = 0.0;
    let mut path_norm = 0.0;
    for problem in suite.train.iter().take(10) {
        let order: Vec<usize> = (0..25).collect();
        let mut fwd = forward(&ds, problem, &model, &order);
        let mark = fwd.g.mark();
        let mut mean_r = 0.0;
        for _ in 0..8 {
            let (chosen, _) = selector::sample_without_replacement(&fwd.dist, 2, &mut rng).unwrap();
            let ln = pred_loss(&mut fwd, problem, &chosen, 4.0);
            mean_r += fwd.g.scalar_value(ln) / 8.0;
            fwd.g.truncate(mark);
        }
        for _ in 0..8 {
            let (chosen, _) = selector::sample_without_replacement(&fwd.dist, 2, &mut rng).unwrap();
            let ln = pred_loss(&mut fwd, problem, &chosen, 4.0);
            let r = fwd.g.scalar_value(ln);
            // score component
            let lp = selector::selection_log_prob(&mut fwd.g, &fwd.out, &chosen).unwrap();
            let sc = fwd.g.scale_const(lp, r - mean_r).unwrap();
            fwd.g.backward(sc).unwrap();
            let mut gs = GradStore::zeros_like(&model.store);
            fwd.g.accumulate_param_grads(&fwd.binding, &mut gs, 1.0);
            score_norm += gs.global_norm() / 80.0;
            // pathwise component
            fwd.g.backward(ln).unwrap();
            let mut gp = GradStore::zeros_like(&model.store);
            fwd.g.accumulate_param_grads(&fwd.binding, &mut gp, 1.0);
            path_norm += gp.global_norm() / 80.0;
            fwd.g.truncate(mark);
        }
    }
    println!("mean per-history norms: score {score_norm:.2}, pathwise {path_norm:.2}");

    // ── Separated training loops ─────────────────────────────────────
    for (name, score_on, path_on, lr) in [
        ("pathT4-lr05", 0.0f64, 1.0f64, 0.05),
        ("pathT4-lr01", 0.0, 1.0, 0.01),
        ("pathT4-lr1", 0.0, 1.0, 0.1),
    ] {
        let mut model = ModelParams::init(arch.clone(), 5).unwrap();
        let mut rng = rng_from_seed(7);
        let eval_cfg = EvalConfig { similarity: Similarity::Euclidean, temperature: 4.0, draws: 1, seed: 44 };
        let episodes = 3000;
        let mc = 8;
        let mut coverage_hist = 0.0;
        let mut cover_count = 0.0;
        let mut loss_acc = 0.0;
        let mut loss_n = 0.0;
        for ep in 0..episodes {
            let pidx = rng::gen_index(&mut rng, suite.train.len());
            let problem = &suite.train[pidx];
            let mut order: Vec<usize> = (0..25).collect();
            rng::shuffle(&mut rng, &mut order);
            let mut fwd = forward(&ds, problem, &model, &order);
            let mark = fwd.g.mark();
            // per-problem mean as baseline (batch mean)
            let mut rs = Vec::new();
            let mut seqs = Vec::new();
            for _ in 0..mc {
                let (drawn, _) = selector::sample_without_replacement(&fwd.dist, 2, &mut rng).unwrap();
                let chosen_pool: Vec<usize> = drawn.iter().map(|&j| order[j]).collect();
                let ln = pred_loss(&mut fwd, problem, &chosen_pool, 4.0);
                rs.push(fwd.g.scalar_value(ln));
                let labels = problem.oracle.query(&chosen_pool).unwrap();
                if labels[0] != labels[1] { cover_count += 1.0; }
                coverage_hist += 1.0;
                seqs.push((drawn, chosen_pool));
                fwd.g.truncate(mark);
            }
            let b = rs.iter().sum::<f64>() / mc as f64;
            let mut grads = GradStore::zeros_like(&model.store);
            for (m, (drawn, chosen_pool)) in seqs.iter().enumerate() {
                let ln = pred_loss(&mut fwd, problem, chosen_pool, 4.0);
                let lp = selector::selection_log_prob(&mut fwd.g, &fwd.out, drawn).unwrap();
                let adv = (rs[m] - b) / 40.0;
                let sc = fwd.g.scale_const(lp, score_on * adv).unwrap();
                let pl = fwd.g.scale_const(ln, path_on / 40.0).unwrap();
                let sur = fwd.g.add(sc, pl).unwrap();
                fwd.g.backward(sur).unwrap();
                fwd.g.accumulate_param_grads(&fwd.binding, &mut grads, 1.0 / mc as f64);
                fwd.g.truncate(mark);
            }
            trainer::sgd_step(&mut model.store, &grads, lr, 5.0).unwrap();
            loss_acc += b / 40.0;
            loss_n += 1.0;
            if (ep + 1) % 1000 == 0 {
                let val = trainer::evaluate(&ds, &suite.val, Strategy::Policy, 2, Some(&model), &eval_cfg).unwrap();
                let vrand = trainer::evaluate(&ds, &suite.val, Strategy::Random, 2, Some(&model), &eval_cfg).unwrap();
                println!("{name} ep {}: val acc {:.4}, rand+f {:.4}, coverage {:.3}, mean loss/pt {:.4}", ep + 1, val.mean, vrand.mean, cover_count / coverage_hist, loss_acc / loss_n);
                coverage_hist = 0.0;
                cover_count = 0.0;
                loss_acc = 0.0;
                loss_n = 0.0;
            }
        }
    }
}
