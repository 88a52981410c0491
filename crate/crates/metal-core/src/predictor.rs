//! Non-parametric prediction: a similarity-softmax vote of the labeled
//! subset's one-hot labels in embedding space. With a high enough
//! temperature the vote degenerates to 1-nearest-neighbor.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Cosine,
    /// Negated L2 distance, so larger always means closer.
    Euclidean,
}

/// The oracle-labeled examples available to the predictor.
#[derive(Debug, Clone)]
pub struct LabeledSubset {
    /// Embedded support vectors.
    pub vectors: Vec<Vec<f64>>,
    /// Problem-local class index per support (one-hot source).
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Pool positions the supports came from.
    pub source_indices: Vec<usize>,
}

impl LabeledSubset {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut v = alloc::vec![0.0; self.n_classes];
        v[self.labels[i]] = 1.0;
        v
    }
}

/// Probability vector over a problem's classes.
#[derive(Debug, Clone)]
pub struct PredictionDistribution(pub Vec<f64>);

impl PredictionDistribution {
    pub fn argmax(&self) -> usize {
        argmax_class(&self.0)
    }
}

/// Plain cosine similarity in `[-1, 1]`; a zero-norm operand yields 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "cosine_similarity",
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (math::norm2(a), math::norm2(b));
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    Ok(math::dot(a, b) / (na * nb))
}

/// Negated euclidean distance; equal points score 0, the maximum.
pub fn euclidean_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "euclidean_similarity",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(-math::euclidean_distance(a, b))
}

fn similarity_node(g: &mut Graph, sim: Similarity, a: NodeId, b: NodeId) -> Result<NodeId> {
    match sim {
        Similarity::Cosine => g.cosine_sim(a, b),
        Similarity::Euclidean => g.neg_euclidean(a, b),
    }
}

/// Tape-level prediction: similarities with each support, softmax with
/// temperature, then the weighted one-hot vote. Differentiable through the
/// query and every support embedding.
pub fn predict_nodes(
    g: &mut Graph,
    x: NodeId,
    supports: &[(NodeId, usize)],
    n_classes: usize,
    sim: Similarity,
    temperature: f64,
) -> Result<NodeId> {
    if supports.is_empty() {
        return Err(Error::EmptySupport);
    }
    if temperature <= 0.0 {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let sims: Vec<NodeId> = supports
        .iter()
        .map(|&(s, _)| similarity_node(g, sim, x, s))
        .collect::<Result<_>>()?;
    let sims_vec = g.stack(&sims)?;
    let weights = g.softmax(sims_vec, temperature)?;
    let labels: Vec<usize> = supports.iter().map(|&(_, l)| l).collect();
    g.one_hot_mix(weights, &labels, n_classes)
}

/// Value-level prediction over a [`LabeledSubset`].
pub fn predict(
    x_embedded: &[f64],
    support: &LabeledSubset,
    sim: Similarity,
    temperature: f64,
) -> Result<PredictionDistribution> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut g = Graph::new();
    let x = g.leaf_vector(x_embedded)?;
    let supports: Vec<(NodeId, usize)> = support
        .vectors
        .iter()
        .zip(&support.labels)
        .map(|(v, &l)| Ok((g.leaf_vector(v)?, l)))
        .collect::<Result<_>>()?;
    let pred = predict_nodes(&mut g, x, &supports, support.n_classes, sim, temperature)?;
    Ok(PredictionDistribution(g.value(pred).to_vec()))
}

/// Argmax with deterministic ties: the lowest class index wins.
pub fn argmax_class(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in dist.iter().enumerate().skip(1) {
        if v > dist[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions whose argmax matches the truth.
pub fn accuracy(predictions: &[PredictionDistribution], truths: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyCollection("accuracy"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            context: "accuracy",
            expected: predictions.len(),
            got: truths.len(),
        });
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, &t)| p.argmax() == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}
