//! Episode loss, score-function gradient estimation, and the training loop.
//!
//! An episode: sample a problem, run the policy over the embedded pool,
//! draw a selection mask, let the oracle label it, predict the evaluation
//! set from the labeled subset, and score the prediction with summed
//! cross-entropy plus the labeling cost. The gradient of the expected loss
//! splits into a score-function (likelihood-ratio) term through the
//! sampling distribution and a pathwise term through the predictor and the
//! shared embedder; [`policy_gradient_estimate`] averages both over
//! Monte-Carlo histories, with an EMA baseline for variance reduction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::data::{BaseDataset, Problem};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ParamBinding};
use crate::math;
use crate::nn::{MlpIds, MlpParams};
use crate::predictor::{self, LabeledSubset, PredictionDistribution, Similarity};
use crate::rng::{self, Stream};
use crate::selector::{self, PolicyOutput, PolicyParams, SelectionMask, Strategy};
use crate::tensor::{GradStore, ParamStore};

// ── Configuration and parameters ─────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Labels acquired per problem (k).
    pub budget: usize,
    /// Weight of the labeling-cost term. Under the fixed-budget multinomial
    /// regime it shifts the loss by a constant and never the gradient.
    pub label_cost_weight: f64,
    /// Monte-Carlo histories per episode.
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub episodes: usize,
    /// Validate (and maybe checkpoint) every this many episodes.
    pub eval_interval: usize,
    pub similarity: Similarity,
    pub temperature: f64,
    pub seed: u64,
    /// Global-norm gradient clip.
    pub clip_norm: f64,
    pub optimizer: OptimizerKind,
    /// EMA baseline on the episode prediction loss (decay 0.99).
    pub use_baseline: bool,
    /// Mask draws per problem during evaluation.
    pub eval_draws: usize,
    /// Reshuffle the pool order per episode so the recurrent scorer cannot
    /// latch onto positions; evaluation always uses the natural order.
    pub shuffle_pool: bool,
    /// Ablation: literal multinomial sampling with replacement.
    pub with_replacement: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            budget: 2,
            label_cost_weight: 0.0,
            mc_samples: 8,
            learning_rate: 0.05,
            episodes: 2000,
            eval_interval: 250,
            similarity: Similarity::Euclidean,
            temperature: 1.0,
            seed: 1,
            clip_norm: 5.0,
            optimizer: OptimizerKind::Sgd,
            use_baseline: true,
            eval_draws: 1,
            shuffle_pool: true,
            with_replacement: false,
        }
    }
}

const BASELINE_DECAY: f64 = 0.99;

/// Shared representation: raw features straight through, or an MLP into a
/// latent space consumed by both the selector and the predictor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedArch {
    Identity,
    Mlp { hidden: Vec<usize>, out: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    /// Raw feature dimension of the dataset.
    pub input_dim: usize,
    pub embed: EmbedArch,
    /// Hidden size of each direction of the recurrent scorer.
    pub rnn_hidden: usize,
}

impl Arch {
    pub fn latent_dim(&self) -> usize {
        match &self.embed {
            EmbedArch::Identity => self.input_dim,
            EmbedArch::Mlp { out, .. } => *out,
        }
    }
}

/// Every trainable parameter — embedder and policy — in one flat store.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arch: Arch,
    pub store: ParamStore,
    pub embedder: Option<MlpParams>,
    pub policy: PolicyParams,
}

impl ModelParams {
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        let mut rng = rng::rng_from_seed(rng::child_seed(seed, Stream::ParamInit, 0));
        let mut store = ParamStore::new();
        let embedder = match &arch.embed {
            EmbedArch::Identity => None,
            EmbedArch::Mlp { hidden, out } => {
                let mut dims = vec![arch.input_dim];
                dims.extend_from_slice(hidden);
                dims.push(*out);
                Some(MlpParams::init(&mut store, "embed", &dims, &mut rng)?)
            }
        };
        let policy = PolicyParams::init(&mut store, arch.latent_dim(), arch.rnn_hidden, &mut rng)?;
        Ok(ModelParams {
            arch,
            store,
            embedder,
            policy,
        })
    }

    /// Rebuild the typed handles over an existing store (checkpoint load).
    pub fn from_store(arch: Arch, store: ParamStore) -> Result<Self> {
        let embedder = match &arch.embed {
            EmbedArch::Identity => None,
            EmbedArch::Mlp { hidden, out } => {
                let mut dims = vec![arch.input_dim];
                dims.extend_from_slice(hidden);
                dims.push(*out);
                for l in 0..dims.len() - 1 {
                    let name = alloc::format!("embed.L{l}.w");
                    let t = store
                        .get(&name)
                        .ok_or_else(|| Error::MissingParam(name.clone()))?;
                    if t.rows() != dims[l + 1] || t.cols() != dims[l] {
                        return Err(Error::ShapeMismatch {
                            context: "ModelParams::from_store: embed layer",
                            expected: dims[l + 1] * dims[l],
                            got: t.len(),
                        });
                    }
                }
                Some(MlpParams {
                    prefix: String::from("embed"),
                    dims,
                })
            }
        };
        let policy = PolicyParams::attach(&store, arch.latent_dim(), arch.rnn_hidden)?;
        Ok(ModelParams {
            arch,
            store,
            embedder,
            policy,
        })
    }
}

// ── Episode graph construction ───────────────────────────────────────

struct EpisodeNodes {
    binding: ParamBinding,
    /// One embedding per pool position, natural order.
    pool_embed: Vec<NodeId>,
    eval_embed: Vec<NodeId>,
}

fn embed_node(g: &mut Graph, mlp: Option<&MlpIds>, raw: NodeId) -> Result<NodeId> {
    match mlp {
        None => Ok(raw),
        Some(ids) => crate::nn::mlp_embed(g, ids, raw),
    }
}

fn build_episode(
    g: &mut Graph,
    ds: &BaseDataset,
    problem: &Problem,
    model: &ModelParams,
) -> Result<EpisodeNodes> {
    let binding = g.bind(&model.store)?;
    let mlp = match &model.embedder {
        None => None,
        Some(p) => Some(p.bind(&model.store, &binding)?),
    };
    let mut pool_embed = Vec::with_capacity(problem.pool_size());
    for &row in &problem.pool_rows {
        let leaf = g.leaf_vector(ds.row(row))?;
        pool_embed.push(embed_node(g, mlp.as_ref(), leaf)?);
    }
    let mut eval_embed = Vec::with_capacity(problem.eval_size());
    for &row in &problem.eval_rows {
        let leaf = g.leaf_vector(ds.row(row))?;
        eval_embed.push(embed_node(g, mlp.as_ref(), leaf)?);
    }
    Ok(EpisodeNodes {
        binding,
        pool_embed,
        eval_embed,
    })
}

/// Summed cross-entropy of the similarity-vote predictions over the
/// evaluation set. Also reports per-example loss values and the accuracy.
fn prediction_loss_nodes(
    g: &mut Graph,
    eval_embed: &[NodeId],
    eval_labels: &[usize],
    supports: &[(NodeId, usize)],
    n_classes: usize,
    similarity: Similarity,
    temperature: f64,
) -> Result<(NodeId, Vec<f64>, f64)> {
    let mut ce_nodes = Vec::with_capacity(eval_embed.len());
    let mut per_example = Vec::with_capacity(eval_embed.len());
    let mut hits = 0usize;
    for (&x, &y) in eval_embed.iter().zip(eval_labels) {
        let pred = predictor::predict_nodes(g, x, supports, n_classes, similarity, temperature)?;
        if predictor::argmax_class(g.value(pred)) == y {
            hits += 1;
        }
        let ce = g.cross_entropy(pred, y)?;
        per_example.push(g.scalar_value(ce));
        ce_nodes.push(ce);
    }
    let stacked = g.stack(&ce_nodes)?;
    let total = g.sum(stacked)?;
    let accuracy = hits as f64 / eval_embed.len() as f64;
    Ok((total, per_example, accuracy))
}

fn supports_for(
    problem: &Problem,
    nodes: &EpisodeNodes,
    chosen_pool: &[usize],
) -> Result<Vec<(NodeId, usize)>> {
    let labels = problem.oracle.query(chosen_pool)?;
    Ok(chosen_pool
        .iter()
        .zip(labels)
        .map(|(&p, l)| (nodes.pool_embed[p], l))
        .collect())
}

// ── Episode loss ─────────────────────────────────────────────────────

/// Loss of one realized mask: summed prediction cross-entropy over the
/// evaluation set plus `label_cost_weight * |D_alpha|`. Returns the total
/// and the per-evaluation-example losses.
pub fn episode_loss(
    ds: &BaseDataset,
    problem: &Problem,
    model: &ModelParams,
    mask: &SelectionMask,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let (loss, per_example, _) = episode_loss_grad(ds, problem, model, mask, cfg, None)?;
    Ok((loss, per_example))
}

/// Same as [`episode_loss`], optionally accumulating the pathwise gradient
/// of the total loss into `grads`. Also reports the evaluation accuracy.
pub fn episode_loss_grad(
    ds: &BaseDataset,
    problem: &Problem,
    model: &ModelParams,
    mask: &SelectionMask,
    cfg: &TrainConfig,
    grads: Option<&mut GradStore>,
) -> Result<(f64, Vec<f64>, f64)> {
    if mask.chosen.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut g = Graph::new();
    let nodes = build_episode(&mut g, ds, problem, model)?;
    let supports = supports_for(problem, &nodes, &mask.chosen)?;
    let (pred_loss, per_example, accuracy) = prediction_loss_nodes(
        &mut g,
        &nodes.eval_embed,
        &problem.eval_labels,
        &supports,
        problem.n_classes(),
        cfg.similarity,
        cfg.temperature,
    )?;
    let cost = cfg.label_cost_weight * mask.ones() as f64;
    let cost_node = g.scalar_const(cost)?;
    let total = g.add(pred_loss, cost_node)?;
    let value = g.scalar_value(total);
    if let Some(out) = grads {
        g.backward(total)?;
        g.accumulate_param_grads(&nodes.binding, out, 1.0);
    }
    Ok((value, per_example, accuracy))
}

// ── Policy-gradient estimator ────────────────────────────────────────

/// Instrumentation of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeStats {
    pub problem_id: u64,
    /// Per-history prediction loss (before the cost term).
    pub pred_losses: Vec<f64>,
    /// Per-history reward: negative prediction loss.
    pub rewards: Vec<f64>,
    /// Mean evaluation accuracy over histories.
    pub mean_accuracy: f64,
    /// `label_cost_weight * |D_alpha|`, averaged over histories.
    pub labeling_cost: f64,
    /// Global norm of the averaged gradient.
    pub grad_norm: f64,
    /// Baseline used this episode.
    pub baseline: f64,
}

/// Monte-Carlo estimate of the gradient of the expected episode loss:
/// per history, `∇log P(mask) · (pred_loss − baseline)` plus the pathwise
/// gradient of the prediction loss itself, averaged over
/// `cfg.mc_samples` histories. The expensive embedding/RNN prefix is built
/// once and shared; each history appends its own sampling and prediction
/// subgraph and is rolled back afterwards.
pub fn policy_gradient_estimate(
    ds: &BaseDataset,
    problem: &Problem,
    model: &ModelParams,
    cfg: &TrainConfig,
    baseline: f64,
    rng: &mut impl RngCore,
) -> Result<(GradStore, EpisodeStats)> {
    if cfg.mc_samples == 0 {
        return Err(Error::EmptyCollection("policy_gradient_estimate: mc_samples"));
    }
    let n = problem.pool_size();
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle_pool {
        rng::shuffle(rng, &mut order);
    }

    let mut g = Graph::new();
    let nodes = build_episode(&mut g, ds, problem, model)?;
    let sequence: Vec<NodeId> = order.iter().map(|&p| nodes.pool_embed[p]).collect();
    let policy_out = selector::policy_scores(
        &mut g,
        &model.policy,
        &model.store,
        &nodes.binding,
        &sequence,
    )?;
    let dist_values = g.value(policy_out.dist).to_vec();
    let mark = g.mark();

    let mut grads = GradStore::zeros_like(&model.store);
    let scale = 1.0 / cfg.mc_samples as f64;
    let mut pred_losses = Vec::with_capacity(cfg.mc_samples);
    let mut accuracy_sum = 0.0;
    let mut cost_sum = 0.0;

    for _ in 0..cfg.mc_samples {
        let (drawn, chosen_pool) = draw_history(&dist_values, &order, cfg, rng)?;
        let supports = supports_for(problem, &nodes, &chosen_pool)?;
        let (pred_loss, _, accuracy) = prediction_loss_nodes(
            &mut g,
            &nodes.eval_embed,
            &problem.eval_labels,
            &supports,
            problem.n_classes(),
            cfg.similarity,
            cfg.temperature,
        )?;
        let loss_value = g.scalar_value(pred_loss);

        let log_prob = history_log_prob(&mut g, &policy_out, &drawn, cfg)?;
        let advantage = loss_value - baseline;
        let score_term = g.scale_const(log_prob, advantage)?;
        let surrogate = g.add(score_term, pred_loss)?;
        g.backward(surrogate)?;
        g.accumulate_param_grads(&nodes.binding, &mut grads, scale);
        g.truncate(mark);

        pred_losses.push(loss_value);
        accuracy_sum += accuracy;
        cost_sum += cfg.label_cost_weight * chosen_pool.len() as f64;
    }

    let rewards = pred_losses.iter().map(|l| -l).collect();
    let stats = EpisodeStats {
        problem_id: problem.id,
        pred_losses,
        rewards,
        mean_accuracy: accuracy_sum / cfg.mc_samples as f64,
        labeling_cost: cost_sum / cfg.mc_samples as f64,
        grad_norm: grads.global_norm(),
        baseline,
    };
    Ok((grads, stats))
}

/// Draw one history. Returns the drawn sequence positions (for the
/// log-probability) and the corresponding pool positions (for the oracle);
/// with replacement the pool positions are deduplicated.
fn draw_history(
    dist_values: &[f64],
    order: &[usize],
    cfg: &TrainConfig,
    rng: &mut impl RngCore,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let drawn = if cfg.with_replacement {
        if cfg.budget == 0 || cfg.budget > dist_values.len() {
            return Err(Error::InvalidBudget {
                budget: cfg.budget,
                pool_size: dist_values.len(),
            });
        }
        (0..cfg.budget)
            .map(|_| rng::sample_weighted(rng, dist_values))
            .collect()
    } else {
        selector::sample_without_replacement(dist_values, cfg.budget, rng)?.0
    };
    let mut chosen_pool: Vec<usize> = drawn.iter().map(|&j| order[j]).collect();
    if cfg.with_replacement {
        chosen_pool.sort_unstable();
        chosen_pool.dedup();
    }
    Ok((drawn, chosen_pool))
}

fn history_log_prob(
    g: &mut Graph,
    policy_out: &PolicyOutput,
    drawn: &[usize],
    cfg: &TrainConfig,
) -> Result<NodeId> {
    if cfg.with_replacement {
        // Independent draws: sum of per-draw log-probabilities.
        let log_probs = g.log_softmax(policy_out.scores, 1.0)?;
        let terms: Vec<NodeId> = drawn
            .iter()
            .map(|&i| g.gather(log_probs, i))
            .collect::<Result<_>>()?;
        let stacked = g.stack(&terms)?;
        g.sum(stacked)
    } else {
        selector::selection_log_prob(g, policy_out, drawn)
    }
}

// ── Optimizers ───────────────────────────────────────────────────────

/// Plain gradient-descent step with global-norm clipping.
pub fn sgd_step(store: &mut ParamStore, grads: &GradStore, lr: f64, clip_norm: f64) -> Result<()> {
    let norm = grads.global_norm();
    let scale = if clip_norm > 0.0 && norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    };
    for slot in 0..store.len() {
        let t = store.entry_mut(slot);
        if t.len() != grads.slot(slot).len() {
            return Err(Error::ShapeMismatch {
                context: "sgd_step",
                expected: t.len(),
                got: grads.slot(slot).len(),
            });
        }
        for (p, gv) in t.values_mut().iter_mut().zip(grads.slot(slot)) {
            *p -= lr * scale * gv;
        }
    }
    Ok(())
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(store: &ParamStore) -> Self {
        AdamState {
            m: store.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            v: store.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &GradStore,
        lr: f64,
        clip_norm: f64,
    ) -> Result<()> {
        let norm = grads.global_norm();
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let bc1 = 1.0 - libm::pow(ADAM_BETA1, self.t as f64);
        let bc2 = 1.0 - libm::pow(ADAM_BETA2, self.t as f64);
        for slot in 0..store.len() {
            let tensor = store.entry_mut(slot);
            let (ms, vs) = (&mut self.m[slot], &mut self.v[slot]);
            for ((p, gv), (m, v)) in tensor
                .values_mut()
                .iter_mut()
                .zip(grads.slot(slot))
                .zip(ms.iter_mut().zip(vs.iter_mut()))
            {
                let gc = gv * scale;
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gc;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gc * gc;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (math::sqrt(vhat) + ADAM_EPS);
            }
        }
        Ok(())
    }
}

// ── Evaluation ───────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub similarity: Similarity,
    pub temperature: f64,
    /// Mask draws per problem for stochastic strategies.
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub mean: f64,
    /// Population standard deviation over problems.
    pub std: f64,
    /// Mean accuracy per problem, in problem order.
    pub per_problem: Vec<f64>,
}

/// Seed of the mask drawn for (problem, draw) under an evaluation seed;
/// shared so callers can re-derive the exact masks an evaluation used.
pub fn eval_mask_seed(eval_seed: u64, problem_id: u64, draw: usize) -> u64 {
    rng::child_seed(
        eval_seed,
        Stream::EvalMask,
        problem_id.wrapping_mul(65_536).wrapping_add(draw as u64),
    )
}

/// Embed a set of dataset rows with the model's representation (identity
/// when no embedder is configured or no model is given).
pub fn embed_rows(
    model: Option<&ModelParams>,
    ds: &BaseDataset,
    rows: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mlp = match model {
        Some(m) => match &m.embedder {
            Some(mlp) => Some((m, mlp)),
            None => None,
        },
        None => None,
    };
    match mlp {
        None => Ok(rows.iter().map(|&r| ds.row(r).to_vec()).collect()),
        Some((m, mlp)) => {
            let mut g = Graph::new();
            let binding = g.bind(&m.store)?;
            let ids = mlp.bind(&m.store, &binding)?;
            rows.iter()
                .map(|&r| {
                    let leaf = g.leaf_vector(ds.row(r))?;
                    let e = crate::nn::mlp_embed(&mut g, &ids, leaf)?;
                    Ok(g.value(e).to_vec())
                })
                .collect()
        }
    }
}

/// Run a strategy at a fixed budget over a problem collection: select,
/// query the oracle, predict every evaluation example, and average the
/// accuracy over `cfg.draws` mask draws per problem.
pub fn evaluate(
    ds: &BaseDataset,
    problems: &[Problem],
    strategy: Strategy,
    budget: usize,
    model: Option<&ModelParams>,
    cfg: &EvalConfig,
) -> Result<EvalSummary> {
    if problems.is_empty() {
        return Err(Error::EmptyCollection("evaluate: problems"));
    }
    if cfg.draws == 0 {
        return Err(Error::EmptyCollection("evaluate: draws"));
    }
    let policy = match (strategy, model) {
        (Strategy::Policy, Some(m)) => Some((&m.policy, &m.store)),
        (Strategy::Policy, None) => {
            return Err(Error::MissingParam(String::from(
                "evaluate: policy strategy needs model parameters",
            )))
        }
        _ => None,
    };

    let mut per_problem = Vec::with_capacity(problems.len());
    for problem in problems {
        let pool_embedded = embed_rows(model, ds, &problem.pool_rows)?;
        let eval_embedded = embed_rows(model, ds, &problem.eval_rows)?;
        let mut acc_sum = 0.0;
        for draw in 0..cfg.draws {
            let mask_seed = eval_mask_seed(cfg.seed, problem.id, draw);
            let mask = selector::select(strategy, &pool_embedded, budget, policy, mask_seed)?;
            let labels = problem.oracle.query(&mask.chosen)?;
            let support = LabeledSubset {
                vectors: mask
                    .chosen
                    .iter()
                    .map(|&i| pool_embedded[i].clone())
                    .collect(),
                labels,
                n_classes: problem.n_classes(),
                source_indices: mask.chosen.clone(),
            };
            let preds: Vec<PredictionDistribution> = eval_embedded
                .iter()
                .map(|x| predictor::predict(x, &support, cfg.similarity, cfg.temperature))
                .collect::<Result<_>>()?;
            acc_sum += predictor::accuracy(&preds, &problem.eval_labels)?;
        }
        per_problem.push(acc_sum / cfg.draws as f64);
    }

    let mean = per_problem.iter().sum::<f64>() / per_problem.len() as f64;
    let var = per_problem
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / per_problem.len() as f64;
    Ok(EvalSummary {
        mean,
        std: math::sqrt(var),
        per_problem,
    })
}

// ── Training loop ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrainLogRow {
    pub episode: usize,
    /// "train" or "val".
    pub split: &'static str,
    pub budget: usize,
    pub strategy: &'static str,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub loss_mean: f64,
    pub grad_norm: f64,
    pub baseline: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    /// Checkpoint with the best validation accuracy.
    pub best: ModelParams,
    pub best_val_accuracy: f64,
    pub log: Vec<TrainLogRow>,
    /// Episode at which a non-finite update forced an abort, if any.
    pub aborted_at: Option<usize>,
}

/// Repeatedly sample a training problem uniformly, estimate the gradient
/// over Monte-Carlo histories, step the optimizer, and every
/// `eval_interval` episodes score the policy on the validation problems,
/// keeping the best checkpoint. Bit-reproducible given the config.
pub fn train(
    ds: &BaseDataset,
    train_problems: &[Problem],
    val_problems: &[Problem],
    initial: ModelParams,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    if train_problems.is_empty() || val_problems.is_empty() {
        return Err(Error::EmptyCollection("train: problem collections"));
    }
    let eval_cfg = EvalConfig {
        similarity: cfg.similarity,
        temperature: cfg.temperature,
        draws: cfg.eval_draws,
        // One fixed mask-seed stream across validations keeps checkpoint
        // comparisons paired.
        seed: rng::child_seed(cfg.seed, Stream::EvalMask, cfg.budget as u64),
    };

    let mut model = initial;
    let mut rng = rng::rng_from_seed(rng::child_seed(cfg.seed, Stream::Train, cfg.budget as u64));
    let mut adam = AdamState::new(&model.store);
    let mut log = Vec::new();
    let mut baseline_ema: Option<f64> = None;

    let initial_val = evaluate(
        ds,
        val_problems,
        Strategy::Policy,
        cfg.budget,
        Some(&model),
        &eval_cfg,
    )?;
    log.push(TrainLogRow {
        episode: 0,
        split: "val",
        budget: cfg.budget,
        strategy: "policy",
        accuracy_mean: initial_val.mean,
        accuracy_std: initial_val.std,
        loss_mean: 0.0,
        grad_norm: 0.0,
        baseline: 0.0,
    });
    let mut best = model.clone();
    let mut best_val = initial_val.mean;
    let mut aborted_at = None;

    let mut window_losses: Vec<f64> = Vec::new();
    let mut window_accs: Vec<f64> = Vec::new();
    let mut window_norms: Vec<f64> = Vec::new();

    for episode in 1..=cfg.episodes {
        let pick = rng::gen_index(&mut rng, train_problems.len());
        let problem = &train_problems[pick];
        let b = if cfg.use_baseline {
            baseline_ema.unwrap_or(0.0)
        } else {
            0.0
        };

        let step = policy_gradient_estimate(ds, problem, &model, cfg, b, &mut rng);
        let (mut grads, stats) = match step {
            Ok(ok) => ok,
            Err(Error::NonFinite(_)) => {
                aborted_at = Some(episode);
                break;
            }
            Err(e) => return Err(e),
        };
        // The episode loss sums over the evaluation set, so gradient
        // magnitudes carry a factor of M; normalizing here keeps the
        // learning rate and the clip threshold in per-evaluation-point
        // units (a mean loss differs from the summed loss only by this
        // constant).
        grads.scale(1.0 / problem.eval_size() as f64);

        match cfg.optimizer {
            OptimizerKind::Sgd => {
                sgd_step(&mut model.store, &grads, cfg.learning_rate, cfg.clip_norm)?
            }
            OptimizerKind::Adam => {
                adam.step(&mut model.store, &grads, cfg.learning_rate, cfg.clip_norm)?
            }
        }
        if !model.store.all_finite() {
            aborted_at = Some(episode);
            break;
        }

        let mean_loss = stats.pred_losses.iter().sum::<f64>() / stats.pred_losses.len() as f64;
        baseline_ema = Some(match baseline_ema {
            None => mean_loss,
            Some(e) => BASELINE_DECAY * e + (1.0 - BASELINE_DECAY) * mean_loss,
        });
        window_losses.push(mean_loss + stats.labeling_cost);
        window_accs.push(stats.mean_accuracy);
        window_norms.push(stats.grad_norm);

        if episode % cfg.eval_interval == 0 || episode == cfg.episodes {
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            log.push(TrainLogRow {
                episode,
                split: "train",
                budget: cfg.budget,
                strategy: "policy",
                accuracy_mean: mean(&window_accs),
                accuracy_std: 0.0,
                loss_mean: mean(&window_losses),
                grad_norm: mean(&window_norms),
                baseline: baseline_ema.unwrap_or(0.0),
            });
            window_losses.clear();
            window_accs.clear();
            window_norms.clear();

            let val = evaluate(
                ds,
                val_problems,
                Strategy::Policy,
                cfg.budget,
                Some(&model),
                &eval_cfg,
            )?;
            log.push(TrainLogRow {
                episode,
                split: "val",
                budget: cfg.budget,
                strategy: "policy",
                accuracy_mean: val.mean,
                accuracy_std: val.std,
                loss_mean: 0.0,
                grad_norm: 0.0,
                baseline: baseline_ema.unwrap_or(0.0),
            });
            if val.mean > best_val {
                best_val = val.mean;
                best = model.clone();
            }
        }
    }

    Ok(TrainOutput {
        best,
        best_val_accuracy: best_val,
        log,
        aborted_at,
    })
}
