//! Reverse-mode differentiation over a tape of vector operations.
//!
//! A [`Graph`] is an append-only tape: every operation pushes one node whose
//! value is computed immediately, so creation order is already a topological
//! order and [`Graph::backward`] is a single reverse sweep. Nodes store
//! full-precision `f64` values and gradients.
//!
//! Two properties the rest of the crate leans on:
//!
//! - every forward op checks its output for non-finite values and fails
//!   loudly instead of propagating NaNs into the training loop;
//! - [`Graph::truncate`] rolls the tape back to a mark, which lets one
//!   episode share its (expensive) embedding/RNN prefix across many
//!   Monte-Carlo histories.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{GradStore, ParamStore, Tensor};

/// Probabilities are clamped to this floor before a log.
pub const PROB_CLAMP: f64 = 1e-12;
/// Norms below this are treated as zero in similarity ops.
const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = W·x + b
    Linear { w: NodeId, x: NodeId, b: NodeId },
    /// y = W·x
    MatVec { w: NodeId, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Concat(NodeId, NodeId),
    /// Sharpening convention: y_i = exp(t·x_i) / Σ_j exp(t·x_j).
    Softmax { x: NodeId, temperature: f64 },
    /// y_i = t·x_i − logΣ_j exp(t·x_j)
    LogSoftmax { x: NodeId, temperature: f64 },
    /// Scalar y = x[index].
    Gather { x: NodeId, index: usize },
    /// Scalars stacked into a vector.
    Stack(Vec<NodeId>),
    /// Scalar sum of all components.
    Sum(NodeId),
    ScaleConst { x: NodeId, c: f64 },
    /// Elementwise ln(max(x, PROB_CLAMP)); zero gradient where clamped.
    LnClamped(NodeId),
    /// Scalar cos(a, b); defined as 0 (with zero gradient) when either norm
    /// vanishes.
    CosineSim(NodeId, NodeId),
    /// Scalar −‖a − b‖₂ with subgradient 0 at coincident points.
    NegEuclid(NodeId, NodeId),
    /// y_c = Σ_i weights_i·[labels_i = c], a vote of one-hot label vectors.
    OneHotMix { weights: NodeId, labels: Vec<usize> },
    /// Scalar −ln(p[target]) with p clamped to [PROB_CLAMP, 1−PROB_CLAMP].
    CrossEntropy { probs: NodeId, target: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    tensor: Tensor,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Node ids of a [`ParamStore`]'s tensors, aligned with store order.
#[derive(Debug, Clone)]
pub struct ParamBinding {
    ids: Vec<NodeId>,
}

impl ParamBinding {
    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn lookup(&self, store: &ParamStore, name: &str) -> Result<NodeId> {
        store
            .index_of(name)
            .map(|i| self.ids[i])
            .ok_or_else(|| Error::MissingParam(name.into()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tape position for a later [`truncate`](Self::truncate).
    pub fn mark(&self) -> usize {
        self.nodes.len()
    }

    /// Roll the tape back to a previous [`mark`](Self::mark).
    pub fn truncate(&mut self, mark: usize) {
        debug_assert!(mark <= self.nodes.len());
        self.nodes.truncate(mark);
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        self.nodes[id.idx()].tensor.values()
    }

    /// Value of a single-component node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.idx()].tensor.len(), 1);
        self.nodes[id.idx()].tensor.values()[0]
    }

    /// Gradient accumulated by the latest [`backward`](Self::backward).
    pub fn grad(&self, id: NodeId) -> &[f64] {
        self.nodes[id.idx()]
            .tensor
            .grad()
            .expect("grad read before backward")
    }

    fn push(&mut self, op: Op, tensor: Tensor, context: &'static str) -> Result<NodeId> {
        if !tensor.values().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(context));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, tensor });
        Ok(id)
    }

    // ── Leaves ───────────────────────────────────────────────────────

    pub fn leaf(&mut self, tensor: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, tensor, "leaf")
    }

    pub fn leaf_vector(&mut self, values: &[f64]) -> Result<NodeId> {
        self.leaf(Tensor::vector(values.to_vec()))
    }

    pub fn scalar_const(&mut self, v: f64) -> Result<NodeId> {
        self.leaf(Tensor::scalar(v))
    }

    pub fn zeros(&mut self, len: usize) -> Result<NodeId> {
        self.leaf(Tensor::vector(vec![0.0; len]))
    }

    /// Insert every tensor of `store` as a leaf, in store order.
    pub fn bind(&mut self, store: &ParamStore) -> Result<ParamBinding> {
        let mut ids = Vec::with_capacity(store.len());
        for (_, t) in store.iter() {
            ids.push(self.leaf(t.clone())?);
        }
        Ok(ParamBinding { ids })
    }

    /// Accumulate the bound parameters' gradients into `out`, scaled.
    pub fn accumulate_param_grads(
        &self,
        binding: &ParamBinding,
        out: &mut GradStore,
        scale: f64,
    ) {
        for (slot, id) in binding.ids.iter().enumerate() {
            if let Some(g) = self.nodes[id.idx()].tensor.grad() {
                let dst = out.slot_mut(slot);
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += scale * s;
                }
            }
        }
    }

    // ── Shape helpers ────────────────────────────────────────────────

    fn expect_len(&self, id: NodeId, len: usize, context: &'static str) -> Result<()> {
        let got = self.nodes[id.idx()].tensor.len();
        if got != len {
            return Err(Error::ShapeMismatch {
                context,
                expected: len,
                got,
            });
        }
        Ok(())
    }

    fn node_len(&self, id: NodeId) -> usize {
        self.nodes[id.idx()].tensor.len()
    }

    // ── Operations ───────────────────────────────────────────────────

    /// y = W·x + b. `w` must be a matrix node of shape (out, in).
    pub fn linear(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matvec_values(w, x, "linear")?;
        self.expect_len(b, y.len(), "linear: bias")?;
        let bv = self.value(b);
        let values: Vec<f64> = y.iter().zip(bv).map(|(a, c)| a + c).collect();
        self.push(Op::Linear { w, x, b }, Tensor::vector(values), "linear")
    }

    /// y = W·x without a bias.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let y = self.matvec_values(w, x, "matvec")?;
        self.push(Op::MatVec { w, x }, Tensor::vector(y), "matvec")
    }

    fn matvec_values(&self, w: NodeId, x: NodeId, context: &'static str) -> Result<Vec<f64>> {
        let wt = &self.nodes[w.idx()].tensor;
        if wt.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                context,
                expected: 2,
                got: wt.shape().len(),
            });
        }
        let (rows, cols) = (wt.rows(), wt.cols());
        self.expect_len(x, cols, context)?;
        let wv = wt.values();
        let xv = self.value(x);
        let mut y = vec![0.0; rows];
        for i in 0..rows {
            y[i] = math::dot(&wv[i * cols..(i + 1) * cols], xv);
        }
        Ok(y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_len(b, self.node_len(a), "add")?;
        let values: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add(a, b), Tensor::vector(values), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_len(b, self.node_len(a), "sub")?;
        let values: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        self.push(Op::Sub(a, b), Tensor::vector(values), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_len(b, self.node_len(a), "mul")?;
        let values: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(Op::Mul(a, b), Tensor::vector(values), "mul")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let values: Vec<f64> = self.value(a).iter().map(|&x| math::tanh(x)).collect();
        self.push(Op::Tanh(a), Tensor::vector(values), "tanh")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let values: Vec<f64> = self.value(a).iter().map(|&x| math::sigmoid(x)).collect();
        self.push(Op::Sigmoid(a), Tensor::vector(values), "sigmoid")
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mut values = self.value(a).to_vec();
        values.extend_from_slice(self.value(b));
        self.push(Op::Concat(a, b), Tensor::vector(values), "concat")
    }

    /// Temperature-sharpened softmax with max-subtraction.
    pub fn softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId> {
        if temperature <= 0.0 {
            return Err(Error::NonPositiveTemperature(temperature));
        }
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::EmptySequence("softmax"));
        }
        let m = xv
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| math::fmax(acc, temperature * v));
        let exps: Vec<f64> = xv.iter().map(|&v| math::exp(temperature * v - m)).collect();
        let total: f64 = exps.iter().sum();
        let values: Vec<f64> = exps.iter().map(|e| e / total).collect();
        self.push(
            Op::Softmax { x, temperature },
            Tensor::vector(values),
            "softmax",
        )
    }

    /// log of the temperature-sharpened softmax, computed stably.
    pub fn log_softmax(&mut self, x: NodeId, temperature: f64) -> Result<NodeId> {
        if temperature <= 0.0 {
            return Err(Error::NonPositiveTemperature(temperature));
        }
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::EmptySequence("log_softmax"));
        }
        let m = xv
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| math::fmax(acc, temperature * v));
        let lse = m + math::ln(
            xv.iter()
                .map(|&v| math::exp(temperature * v - m))
                .sum::<f64>(),
        );
        let values: Vec<f64> = xv.iter().map(|&v| temperature * v - lse).collect();
        self.push(
            Op::LogSoftmax { x, temperature },
            Tensor::vector(values),
            "log_softmax",
        )
    }

    pub fn gather(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if index >= xv.len() {
            return Err(Error::IndexOutOfBounds {
                index,
                len: xv.len(),
            });
        }
        let v = xv[index];
        self.push(Op::Gather { x, index }, Tensor::scalar(v), "gather")
    }

    /// Stack scalar nodes into one vector node.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptySequence("stack"));
        }
        let mut values = Vec::with_capacity(parts.len());
        for &p in parts {
            self.expect_len(p, 1, "stack")?;
            values.push(self.scalar_value(p));
        }
        self.push(Op::Stack(parts.to_vec()), Tensor::vector(values), "stack")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(x).iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(total), "sum")
    }

    pub fn scale_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let values: Vec<f64> = self.value(x).iter().map(|v| v * c).collect();
        self.push(Op::ScaleConst { x, c }, Tensor::vector(values), "scale_const")
    }

    pub fn ln_clamped(&mut self, x: NodeId) -> Result<NodeId> {
        let values: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| math::ln(math::fmax(v, PROB_CLAMP)))
            .collect();
        self.push(Op::LnClamped(x), Tensor::vector(values), "ln_clamped")
    }

    pub fn cosine_sim(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_len(b, self.node_len(a), "cosine_sim")?;
        let (av, bv) = (self.value(a), self.value(b));
        let (na, nb) = (math::norm2(av), math::norm2(bv));
        let v = if na < ZERO_NORM || nb < ZERO_NORM {
            0.0
        } else {
            math::dot(av, bv) / (na * nb)
        };
        self.push(Op::CosineSim(a, b), Tensor::scalar(v), "cosine_sim")
    }

    pub fn neg_euclidean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_len(b, self.node_len(a), "neg_euclidean")?;
        let d = math::euclidean_distance(self.value(a), self.value(b));
        self.push(Op::NegEuclid(a, b), Tensor::scalar(-d), "neg_euclidean")
    }

    /// Probability-weighted vote of one-hot label vectors.
    pub fn one_hot_mix(
        &mut self,
        weights: NodeId,
        labels: &[usize],
        n_classes: usize,
    ) -> Result<NodeId> {
        self.expect_len(weights, labels.len(), "one_hot_mix")?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::IndexOutOfBounds {
                index: bad,
                len: n_classes,
            });
        }
        let wv = self.value(weights);
        let mut values = vec![0.0; n_classes];
        for (w, &l) in wv.iter().zip(labels) {
            values[l] += w;
        }
        self.push(
            Op::OneHotMix {
                weights,
                labels: labels.to_vec(),
            },
            Tensor::vector(values),
            "one_hot_mix",
        )
    }

    /// −ln p[target] with the probability clamped away from 0 and 1.
    pub fn cross_entropy(&mut self, probs: NodeId, target: usize) -> Result<NodeId> {
        let pv = self.value(probs);
        if target >= pv.len() {
            return Err(Error::IndexOutOfBounds {
                index: target,
                len: pv.len(),
            });
        }
        let p = math::fmin(math::fmax(pv[target], PROB_CLAMP), 1.0 - PROB_CLAMP);
        self.push(
            Op::CrossEntropy { probs, target },
            Tensor::scalar(-math::ln(p)),
            "cross_entropy",
        )
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `root`: every node's gradient slot is
    /// reset, the root is seeded with 1, and adjoints accumulate down the
    /// tape. Fails if any gradient comes out non-finite.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        self.expect_len(root, 1, "backward: root must be scalar")?;
        for node in &mut self.nodes {
            let g = node.tensor.grad_mut();
            g.fill(0.0);
        }
        self.nodes[root.idx()].tensor.grad_mut()[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Linear { w, x, b } => {
                    let go = self.grad_of(i);
                    let wt = &self.nodes[w.idx()].tensor;
                    let cols = wt.cols();
                    let wv = wt.values().to_vec();
                    let xv = self.nodes[x.idx()].tensor.values().to_vec();
                    {
                        let gw = self.nodes[w.idx()].tensor.grad_mut();
                        for (r, g) in go.iter().enumerate() {
                            for (c, xc) in xv.iter().enumerate() {
                                gw[r * cols + c] += g * xc;
                            }
                        }
                    }
                    {
                        let gx = self.nodes[x.idx()].tensor.grad_mut();
                        for (c, gxc) in gx.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (r, g) in go.iter().enumerate() {
                                acc += g * wv[r * cols + c];
                            }
                            *gxc += acc;
                        }
                    }
                    {
                        let gb = self.nodes[b.idx()].tensor.grad_mut();
                        for (gbi, g) in gb.iter_mut().zip(&go) {
                            *gbi += g;
                        }
                    }
                }
                Op::MatVec { w, x } => {
                    let go = self.grad_of(i);
                    let wt = &self.nodes[w.idx()].tensor;
                    let cols = wt.cols();
                    let wv = wt.values().to_vec();
                    let xv = self.nodes[x.idx()].tensor.values().to_vec();
                    {
                        let gw = self.nodes[w.idx()].tensor.grad_mut();
                        for (r, g) in go.iter().enumerate() {
                            for (c, xc) in xv.iter().enumerate() {
                                gw[r * cols + c] += g * xc;
                            }
                        }
                    }
                    {
                        let gx = self.nodes[x.idx()].tensor.grad_mut();
                        for (c, gxc) in gx.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (r, g) in go.iter().enumerate() {
                                acc += g * wv[r * cols + c];
                            }
                            *gxc += acc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    let go = self.grad_of(i);
                    self.bump(a, &go, |g, _| g);
                    self.bump(b, &go, |g, _| g);
                }
                Op::Sub(a, b) => {
                    let go = self.grad_of(i);
                    self.bump(a, &go, |g, _| g);
                    self.bump(b, &go, |g, _| -g);
                }
                Op::Mul(a, b) => {
                    let go = self.grad_of(i);
                    let av = self.nodes[a.idx()].tensor.values().to_vec();
                    let bv = self.nodes[b.idx()].tensor.values().to_vec();
                    {
                        let ga = self.nodes[a.idx()].tensor.grad_mut();
                        for ((g, b), dst) in go.iter().zip(&bv).zip(ga.iter_mut()) {
                            *dst += g * b;
                        }
                    }
                    {
                        let gb = self.nodes[b.idx()].tensor.grad_mut();
                        for ((g, a), dst) in go.iter().zip(&av).zip(gb.iter_mut()) {
                            *dst += g * a;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let go = self.grad_of(i);
                    let yv = self.nodes[i].tensor.values().to_vec();
                    let ga = self.nodes[a.idx()].tensor.grad_mut();
                    for ((g, y), dst) in go.iter().zip(&yv).zip(ga.iter_mut()) {
                        *dst += g * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let go = self.grad_of(i);
                    let yv = self.nodes[i].tensor.values().to_vec();
                    let ga = self.nodes[a.idx()].tensor.grad_mut();
                    for ((g, y), dst) in go.iter().zip(&yv).zip(ga.iter_mut()) {
                        *dst += g * y * (1.0 - y);
                    }
                }
                Op::Concat(a, b) => {
                    let go = self.grad_of(i);
                    let la = self.nodes[a.idx()].tensor.len();
                    {
                        let ga = self.nodes[a.idx()].tensor.grad_mut();
                        for (dst, g) in ga.iter_mut().zip(&go[..la]) {
                            *dst += g;
                        }
                    }
                    {
                        let gb = self.nodes[b.idx()].tensor.grad_mut();
                        for (dst, g) in gb.iter_mut().zip(&go[la..]) {
                            *dst += g;
                        }
                    }
                }
                Op::Softmax { x, temperature } => {
                    let go = self.grad_of(i);
                    let yv = self.nodes[i].tensor.values().to_vec();
                    let inner: f64 = go.iter().zip(&yv).map(|(g, y)| g * y).sum();
                    let gx = self.nodes[x.idx()].tensor.grad_mut();
                    for ((g, y), dst) in go.iter().zip(&yv).zip(gx.iter_mut()) {
                        *dst += temperature * y * (g - inner);
                    }
                }
                Op::LogSoftmax { x, temperature } => {
                    let go = self.grad_of(i);
                    let yv = self.nodes[i].tensor.values().to_vec();
                    let gsum: f64 = go.iter().sum();
                    let gx = self.nodes[x.idx()].tensor.grad_mut();
                    for ((g, y), dst) in go.iter().zip(&yv).zip(gx.iter_mut()) {
                        *dst += temperature * (g - math::exp(*y) * gsum);
                    }
                }
                Op::Gather { x, index } => {
                    let go = self.grad_of(i);
                    self.nodes[x.idx()].tensor.grad_mut()[index] += go[0];
                }
                Op::Stack(parts) => {
                    let go = self.grad_of(i);
                    for (part, g) in parts.iter().zip(&go) {
                        self.nodes[part.idx()].tensor.grad_mut()[0] += g;
                    }
                }
                Op::Sum(x) => {
                    let go = self.grad_of(i)[0];
                    let gx = self.nodes[x.idx()].tensor.grad_mut();
                    for dst in gx.iter_mut() {
                        *dst += go;
                    }
                }
                Op::ScaleConst { x, c } => {
                    let go = self.grad_of(i);
                    self.bump(x, &go, |g, _| g * c);
                }
                Op::LnClamped(x) => {
                    let go = self.grad_of(i);
                    let xv = self.nodes[x.idx()].tensor.values().to_vec();
                    let gx = self.nodes[x.idx()].tensor.grad_mut();
                    for ((g, v), dst) in go.iter().zip(&xv).zip(gx.iter_mut()) {
                        if *v > PROB_CLAMP {
                            *dst += g / v;
                        }
                    }
                }
                Op::CosineSim(a, b) => {
                    let go = self.grad_of(i)[0];
                    let av = self.nodes[a.idx()].tensor.values().to_vec();
                    let bv = self.nodes[b.idx()].tensor.values().to_vec();
                    let (na, nb) = (math::norm2(&av), math::norm2(&bv));
                    if na >= ZERO_NORM && nb >= ZERO_NORM {
                        let c = math::dot(&av, &bv) / (na * nb);
                        {
                            let ga = self.nodes[a.idx()].tensor.grad_mut();
                            for ((dst, &aj), &bj) in ga.iter_mut().zip(&av).zip(&bv) {
                                *dst += go * (bj / (na * nb) - c * aj / (na * na));
                            }
                        }
                        {
                            let gb = self.nodes[b.idx()].tensor.grad_mut();
                            for ((dst, &bj), &aj) in gb.iter_mut().zip(&bv).zip(&av) {
                                *dst += go * (aj / (na * nb) - c * bj / (nb * nb));
                            }
                        }
                    }
                }
                Op::NegEuclid(a, b) => {
                    let go = self.grad_of(i)[0];
                    let av = self.nodes[a.idx()].tensor.values().to_vec();
                    let bv = self.nodes[b.idx()].tensor.values().to_vec();
                    let d = math::euclidean_distance(&av, &bv);
                    if d >= ZERO_NORM {
                        {
                            let ga = self.nodes[a.idx()].tensor.grad_mut();
                            for ((dst, &aj), &bj) in ga.iter_mut().zip(&av).zip(&bv) {
                                *dst += go * (-(aj - bj) / d);
                            }
                        }
                        {
                            let gb = self.nodes[b.idx()].tensor.grad_mut();
                            for ((dst, &bj), &aj) in gb.iter_mut().zip(&bv).zip(&av) {
                                *dst += go * ((aj - bj) / d);
                            }
                        }
                    }
                }
                Op::OneHotMix { weights, labels } => {
                    let go = self.grad_of(i);
                    let gw = self.nodes[weights.idx()].tensor.grad_mut();
                    for (dst, &l) in gw.iter_mut().zip(&labels) {
                        *dst += go[l];
                    }
                }
                Op::CrossEntropy { probs, target } => {
                    let go = self.grad_of(i)[0];
                    let p = self.nodes[probs.idx()].tensor.values()[target];
                    if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                        self.nodes[probs.idx()].tensor.grad_mut()[target] += go * (-1.0 / p);
                    }
                }
            }
        }

        for node in &self.nodes {
            if let Some(g) = node.tensor.grad() {
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("backward"));
                }
            }
        }
        Ok(())
    }

    fn grad_of(&mut self, index: usize) -> Vec<f64> {
        self.nodes[index].tensor.grad_mut().to_vec()
    }

    fn bump(&mut self, target: NodeId, go: &[f64], f: impl Fn(f64, usize) -> f64) {
        let g = self.nodes[target.idx()].tensor.grad_mut();
        for (k, (dst, &src)) in g.iter_mut().zip(go).enumerate() {
            *dst += f(src, k);
        }
    }
}
