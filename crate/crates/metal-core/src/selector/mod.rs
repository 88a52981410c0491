//! Acquisition strategies: which pool examples get sent to the oracle.
//!
//! Three strategies share the [`SelectionMask`] interface: uniform random
//! draws, k-medoids cluster centroids, and the learned stochastic policy —
//! a bidirectional recurrent scorer over the embedded pool whose softmax
//! output is sampled `k` times without replacement. Only the policy carries
//! a meaningful log-probability; the baselines report 0.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ParamBinding};
use crate::math;
use crate::nn::{self, LstmCellParams};
use crate::rng;
use crate::tensor::ParamStore;

pub mod kmedoids;

/// The realized selection: a binary vector over the pool plus the draw
/// order and the log-probability of having sampled it.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    /// One flag per pool position.
    pub selected: Vec<bool>,
    /// Chosen pool positions in draw order.
    pub chosen: Vec<usize>,
    /// Log-probability of the realized draw; exactly 0 for non-stochastic
    /// selectors.
    pub log_prob: f64,
    /// Budget the mask was drawn with.
    pub budget: usize,
}

impl SelectionMask {
    pub fn from_chosen(chosen: Vec<usize>, pool_size: usize, log_prob: f64, budget: usize) -> Self {
        let mut selected = vec![false; pool_size];
        for &i in &chosen {
            selected[i] = true;
        }
        SelectionMask {
            selected,
            chosen,
            log_prob,
            budget,
        }
    }

    pub fn ones(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }
}

fn check_budget(budget: usize, pool_size: usize) -> Result<()> {
    if budget == 0 || budget > pool_size {
        return Err(Error::InvalidBudget { budget, pool_size });
    }
    Ok(())
}

/// Uniform selection of `budget` distinct pool positions.
pub fn select_random(pool_size: usize, budget: usize, seed: u64) -> Result<SelectionMask> {
    check_budget(budget, pool_size)?;
    let mut rng = rng::rng_from_seed(seed);
    let chosen = rng::sample_indices(&mut rng, pool_size, budget);
    Ok(SelectionMask::from_chosen(chosen, pool_size, 0.0, budget))
}

/// Label the medoids of a k-medoids clustering of the embedded pool.
pub fn kmedoids_select(pool_embedded: &[Vec<f64>], budget: usize, seed: u64) -> Result<SelectionMask> {
    check_budget(budget, pool_embedded.len())?;
    let outcome = kmedoids::cluster(pool_embedded, budget, seed)?;
    Ok(SelectionMask::from_chosen(
        outcome.medoids,
        pool_embedded.len(),
        0.0,
        budget,
    ))
}

// ── Learned policy ───────────────────────────────────────────────────

/// Architecture of the recurrent scorer: a forward and a backward LSTM over
/// the embedded pool plus a linear head mapping each position's
/// concatenated hidden state to one score.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

pub const HEAD_W: &str = "policy.head.w";
pub const HEAD_B: &str = "policy.head.b";

impl PolicyParams {
    pub fn init(
        store: &mut ParamStore,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        let fwd = LstmCellParams::init(store, "policy.fwd", input_dim, hidden_dim, rng)?;
        let bwd = LstmCellParams::init(store, "policy.bwd", input_dim, hidden_dim, rng)?;
        store.add(HEAD_W, nn::init_matrix(1, 2 * hidden_dim, rng))?;
        store.add(HEAD_B, nn::init_bias(1, 2 * hidden_dim, rng))?;
        Ok(PolicyParams {
            fwd,
            bwd,
            input_dim,
            hidden_dim,
        })
    }

    pub fn attach(store: &ParamStore, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let fwd = LstmCellParams::attach(store, "policy.fwd", input_dim, hidden_dim)?;
        let bwd = LstmCellParams::attach(store, "policy.bwd", input_dim, hidden_dim)?;
        if store.get(HEAD_W).is_none() || store.get(HEAD_B).is_none() {
            return Err(Error::MissingParam(HEAD_W.into()));
        }
        Ok(PolicyParams {
            fwd,
            bwd,
            input_dim,
            hidden_dim,
        })
    }
}

/// Tape nodes of one policy forward pass over a pool.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    /// Per-position raw scores (length N).
    pub scores: NodeId,
    /// Softmax of the scores at unit temperature (length N).
    pub dist: NodeId,
}

/// Score every pool position with regard to the whole pool: bidirectional
/// scan, linear head per position, softmax normalization.
pub fn policy_scores(
    g: &mut Graph,
    params: &PolicyParams,
    store: &ParamStore,
    binding: &ParamBinding,
    pool_embedded: &[NodeId],
) -> Result<PolicyOutput> {
    if pool_embedded.is_empty() {
        return Err(Error::EmptySequence("policy_scores"));
    }
    let fwd = params.fwd.bind(store, binding)?;
    let bwd = params.bwd.bind(store, binding)?;
    let head_w = binding.lookup(store, HEAD_W)?;
    let head_b = binding.lookup(store, HEAD_B)?;

    let hidden = nn::bidirectional_scan(g, &fwd, &bwd, pool_embedded)?;
    let scores: Vec<NodeId> = hidden
        .into_iter()
        .map(|h| g.linear(head_w, h, head_b))
        .collect::<Result<_>>()?;
    let scores = g.stack(&scores)?;
    let dist = g.softmax(scores, 1.0)?;
    Ok(PolicyOutput { scores, dist })
}

/// Sequential renormalized sampling on plain probability values: `budget`
/// draws without replacement, each from the distribution restricted to the
/// remaining positions. Returns the chosen positions in draw order and the
/// total log-probability of the realized sequence.
pub fn sample_without_replacement(
    dist: &[f64],
    budget: usize,
    rng: &mut impl RngCore,
) -> Result<(Vec<usize>, f64)> {
    check_budget(budget, dist.len())?;
    let mut weights = dist.to_vec();
    let mut chosen = Vec::with_capacity(budget);
    let mut log_prob = 0.0;
    let mut remaining: f64 = weights.iter().sum();
    for _ in 0..budget {
        let pick = rng::sample_weighted(rng, &weights);
        log_prob += math::ln(math::fmax(weights[pick] / remaining, f64::MIN_POSITIVE));
        remaining -= weights[pick];
        weights[pick] = 0.0;
        chosen.push(pick);
    }
    Ok((chosen, log_prob))
}

/// The spec-level draw: `budget` samples from a selection distribution,
/// without replacement, as a [`SelectionMask`].
pub fn sample_alpha(dist: &[f64], budget: usize, seed: u64) -> Result<SelectionMask> {
    let mut rng = rng::rng_from_seed(seed);
    let (chosen, log_prob) = sample_without_replacement(dist, budget, &mut rng)?;
    Ok(SelectionMask::from_chosen(
        chosen,
        dist.len(),
        log_prob,
        budget,
    ))
}

/// Literal multinomial alternative kept for ablation: `budget` draws WITH
/// replacement, so duplicates can shrink the labeled subset below budget.
pub fn sample_with_replacement(dist: &[f64], budget: usize, seed: u64) -> Result<SelectionMask> {
    check_budget(budget, dist.len())?;
    let mut rng = rng::rng_from_seed(seed);
    let total: f64 = dist.iter().sum();
    let mut chosen: Vec<usize> = Vec::with_capacity(budget);
    let mut log_prob = 0.0;
    for _ in 0..budget {
        let pick = rng::sample_weighted(&mut rng, dist);
        log_prob += math::ln(math::fmax(dist[pick] / total, f64::MIN_POSITIVE));
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }
    let budget_used = chosen.len();
    Ok(SelectionMask::from_chosen(
        chosen,
        dist.len(),
        log_prob,
        budget_used,
    ))
}

/// Differentiable log-probability of a realized without-replacement draw,
/// built from the policy's raw scores:
/// `Σ_t [log_softmax(scores)[i_t] − ln(1 − Σ_{s<t} p_{i_s})]`.
pub fn selection_log_prob(
    g: &mut Graph,
    policy: &PolicyOutput,
    chosen: &[usize],
) -> Result<NodeId> {
    if chosen.is_empty() {
        return Err(Error::EmptySequence("selection_log_prob"));
    }
    let log_probs = g.log_softmax(policy.scores, 1.0)?;
    let mut terms: Vec<NodeId> = Vec::with_capacity(2 * chosen.len());
    for &i in chosen {
        terms.push(g.gather(log_probs, i)?);
    }
    // Renormalization denominators: ln(1 − mass already drawn).
    let one = g.scalar_const(1.0)?;
    let mut drawn_mass: Option<NodeId> = None;
    for &i in &chosen[..chosen.len() - 1] {
        let p = g.gather(policy.dist, i)?;
        drawn_mass = Some(match drawn_mass {
            None => p,
            Some(m) => g.add(m, p)?,
        });
        let remaining = g.sub(one, drawn_mass.expect("set above"))?;
        let ln_remaining = g.ln_clamped(remaining)?;
        let neg = g.scale_const(ln_remaining, -1.0)?;
        terms.push(neg);
    }
    let stacked = g.stack(&terms)?;
    g.sum(stacked)
}

/// Uniform strategy interface for the trainer and the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    KMedoids,
    Policy,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::KMedoids => "kmedoids",
            Strategy::Policy => "policy",
        }
    }
}

/// Dispatch a value-level selection. `policy` must be given for
/// [`Strategy::Policy`]; the pool is consumed in its natural order
/// (evaluation-time determinism).
pub fn select(
    strategy: Strategy,
    pool_embedded: &[Vec<f64>],
    budget: usize,
    policy: Option<(&PolicyParams, &ParamStore)>,
    seed: u64,
) -> Result<SelectionMask> {
    match strategy {
        Strategy::Random => select_random(pool_embedded.len(), budget, seed),
        Strategy::KMedoids => kmedoids_select(pool_embedded, budget, seed),
        Strategy::Policy => {
            let (params, store) = policy.ok_or(Error::MissingParam(
                alloc::string::String::from("policy parameters"),
            ))?;
            let mut g = Graph::new();
            let binding = g.bind(store)?;
            let pool: Vec<NodeId> = pool_embedded
                .iter()
                .map(|v| g.leaf_vector(v))
                .collect::<Result<_>>()?;
            let out = policy_scores(&mut g, params, store, &binding, &pool)?;
            let dist = g.value(out.dist).to_vec();
            sample_alpha(&dist, budget, seed)
        }
    }
}
