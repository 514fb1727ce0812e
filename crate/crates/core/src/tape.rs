//! Reverse-mode differentiation over a linear tape.
//!
//! Each op evaluates eagerly and records its inputs. `backward` walks the tape
//! once in reverse, accumulating parameter gradients into the owning
//! [`ParamStore`] and returning gradients for `var` leaves.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::losses::{mmd_core, MmdConfig};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{
    channel_sums, conv1d, conv1d_adjoint, conv1d_weight_grad, leaky_relu, leaky_relu_derivative,
    ConvSpec, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op<F> {
    Leaf,
    Constant,
    Param(ParamId),
    Conv {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        spec: ConvSpec,
    },
    ConvAdjoint {
        y: NodeId,
        w: NodeId,
        spec: ConvSpec,
    },
    AddBias {
        x: NodeId,
        bias: NodeId,
    },
    LeakyRelu {
        x: NodeId,
        slope: F,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, F),
    Sum(NodeId),
    MeanAbs(NodeId),
    MeanSquare(NodeId),
    SquaredErrorTo {
        x: NodeId,
        target: F,
    },
    MeanOverLength(NodeId),
    Mmd {
        x: NodeId,
        y: NodeId,
        cfg: MmdConfig,
    },
}

#[derive(Clone, Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    params: HashMap<ParamId, NodeId>,
    frozen: HashSet<ParamId>,
}

/// Gradients of the loss with respect to the `var` leaves of a tape.
#[derive(Debug, Default)]
pub struct Gradients<F> {
    leaves: HashMap<NodeId, Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&[F]> {
        self.leaves.get(&id).map(|v| v.as_slice())
    }
}

fn add_into<F: Real>(slot: &mut Option<Vec<F>>, delta: Vec<F>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
        None => *slot = Some(delta),
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            frozen: HashSet::new(),
        }
    }

    /// Parameters in `ids` enter this tape as constants (no gradient).
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Every parameter buffer read by this tape, frozen or not.
    pub fn params_used(&self) -> BTreeSet<ParamId> {
        self.params.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn var(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    /// Node for a stored parameter. Repeated calls with the same id return
    /// the same node, so shared buffers stay shared on the tape.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let trainable = !self.frozen.contains(&id);
        let src = store.value(id);
        let value = Tensor::new(src.shape(), src.data().to_vec()).expect("param shape");
        let node = self.push(value, Op::Param(id), trainable);
        self.params.insert(id, node);
        node
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        let out = conv1d(
            self.value(x),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
            &spec,
        )?;
        let needs = self.needs(x) || self.needs(w) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { x, w, bias, spec }, needs))
    }

    pub fn conv1d_adjoint(
        &mut self,
        y: NodeId,
        w: NodeId,
        spec: ConvSpec,
        original_input_length: usize,
    ) -> Result<NodeId> {
        let out = conv1d_adjoint(self.value(y), self.value(w).data(), &spec, original_input_length)?;
        let needs = self.needs(y) || self.needs(w);
        Ok(self.push(out, Op::ConvAdjoint { y, w, spec }, needs))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let [n, c, len] = xv.shape();
        if bv.numel() != c {
            return Err(Error::invalid(format!(
                "bias: expected {c} entries, got {}",
                bv.numel()
            )));
        }
        let mut out = xv.clone();
        for b in 0..n {
            for ch in 0..c {
                let add = bv.data()[ch];
                out.data_mut()[(b * c + ch) * len..(b * c + ch + 1) * len]
                    .iter_mut()
                    .for_each(|v| *v += add);
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias { x, bias }, needs))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: F) -> NodeId {
        let out = leaky_relu(self.value(x), slope);
        let needs = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, needs)
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::invalid(format!("{what}: shape {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(o, &v)| *o += v);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape(a, b, "sub")?;
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(o, &v)| *o -= v);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    pub fn scale(&mut self, a: NodeId, c: F) -> NodeId {
        let out = self.value(a).map(|v| v * c);
        let needs = self.needs(a);
        self.push(out, Op::Scale(a, c), needs)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().copied().sum::<F>();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    fn mean_of(&self, a: NodeId, f: impl Fn(F) -> F) -> F {
        let v = self.value(a);
        let n = F::from_usize(v.numel()).unwrap();
        v.data().iter().map(|&x| f(x)).sum::<F>() / n
    }

    pub fn mean_abs(&mut self, a: NodeId) -> NodeId {
        let m = self.mean_of(a, |x| x.abs());
        let needs = self.needs(a);
        self.push(Tensor::scalar(m), Op::MeanAbs(a), needs)
    }

    pub fn mean_square(&mut self, a: NodeId) -> NodeId {
        let m = self.mean_of(a, |x| x * x);
        let needs = self.needs(a);
        self.push(Tensor::scalar(m), Op::MeanSquare(a), needs)
    }

    /// `mean((x - target)²)` against a constant target.
    pub fn squared_error_to(&mut self, x: NodeId, target: F) -> NodeId {
        let m = self.mean_of(x, |v| (v - target) * (v - target));
        let needs = self.needs(x);
        self.push(Tensor::scalar(m), Op::SquaredErrorTo { x, target }, needs)
    }

    /// `(n, c, L) -> (n, c, 1)` by averaging along time.
    pub fn mean_over_length(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let [n, c, len] = v.shape();
        let l = F::from_usize(len).unwrap();
        let data = v
            .data()
            .chunks(len)
            .map(|row| row.iter().copied().sum::<F>() / l)
            .collect();
        let out = Tensor::new([n, c, 1], data).expect("mean_over_length shape");
        let needs = self.needs(a);
        self.push(out, Op::MeanOverLength(a), needs)
    }

    /// Multi-kernel MMD between the batch rows of `x` and `y` (each row
    /// flattened to one sample).
    pub fn mk_mmd(&mut self, x: NodeId, y: NodeId, cfg: &MmdConfig) -> Result<NodeId> {
        let (xv, yv) = (self.value(x), self.value(y));
        let dx = xv.channels() * xv.length();
        let dy = yv.channels() * yv.length();
        if dx != dy {
            return Err(Error::invalid(format!(
                "mk_mmd: feature sizes differ ({dx} vs {dy})"
            )));
        }
        let value = mmd_core(xv.data(), xv.batch(), yv.data(), yv.batch(), dx, cfg, false)?.value;
        let needs = self.needs(x) || self.needs(y);
        Ok(self.push(
            Tensor::scalar(value),
            Op::Mmd {
                x,
                y,
                cfg: cfg.clone(),
            },
            needs,
        ))
    }

    /// Which branch every non-smooth operation took: activation and
    /// absolute-value signs, and the median pair of data-driven MMD
    /// bandwidths. Two inputs with equal signatures lie in the same smooth
    /// piece of the recorded function.
    pub fn branch_signature(&self) -> Result<Vec<usize>> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { x, .. } => {
                    sig.extend(self.value(*x).data().iter().map(|&v| usize::from(v > F::zero())));
                }
                Op::MeanAbs(x) => {
                    sig.extend(self.value(*x).data().iter().map(|&v| {
                        if v > F::zero() {
                            2
                        } else if v < F::zero() {
                            0
                        } else {
                            1
                        }
                    }));
                }
                Op::Mmd { x, y, cfg } => {
                    let (xv, yv) = (self.value(*x), self.value(*y));
                    let d = xv.channels() * xv.length();
                    let out = mmd_core(xv.data(), xv.batch(), yv.data(), yv.batch(), d, cfg, false)?;
                    let (p, q) = out.median_pair.unwrap_or((usize::MAX, usize::MAX));
                    sig.extend([p, q]);
                }
                _ => {}
            }
        }
        Ok(sig)
    }

    /// Back-propagates from a scalar `loss`. Parameter gradients are added to
    /// the store's grad buffers (so repeated calls accumulate); gradients of
    /// `var` leaves are returned.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<F>) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    out.leaves.insert(NodeId(i), g);
                }
                Op::Constant => {}
                Op::Param(pid) => store.get_mut(*pid).value.accumulate_grad(&g),
                Op::Conv { x, w, bias, spec } => {
                    let gt = Tensor::new(node.value.shape(), g)?;
                    let xv = self.value(*x);
                    if self.needs(*x) {
                        let dx = conv1d_adjoint(&gt, self.value(*w).data(), spec, xv.length())?;
                        add_into(&mut grads[x.0], dx.into_data());
                    }
                    if self.needs(*w) {
                        let mut dw = vec![F::zero(); spec.weight_len()];
                        conv1d_weight_grad(xv, &gt, spec, &mut dw);
                        add_into(&mut grads[w.0], dw);
                    }
                    if let Some(b) = bias {
                        if self.needs(*b) {
                            add_into(&mut grads[b.0], channel_sums(&gt));
                        }
                    }
                }
                Op::ConvAdjoint { y, w, spec } => {
                    let gt = Tensor::new(node.value.shape(), g)?;
                    if self.needs(*y) {
                        let dy = conv1d(&gt, self.value(*w).data(), None, spec)?;
                        add_into(&mut grads[y.0], dy.into_data());
                    }
                    if self.needs(*w) {
                        let mut dw = vec![F::zero(); spec.weight_len()];
                        conv1d_weight_grad(&gt, self.value(*y), spec, &mut dw);
                        add_into(&mut grads[w.0], dw);
                    }
                }
                Op::AddBias { x, bias } => {
                    if self.needs(*bias) {
                        let gt = Tensor::new(node.value.shape(), g.clone())?;
                        add_into(&mut grads[bias.0], channel_sums(&gt));
                    }
                    if self.needs(*x) {
                        add_into(&mut grads[x.0], g);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = self.value(*x).data();
                    let dx = g
                        .iter()
                        .zip(xv)
                        .map(|(&gi, &xi)| gi * leaky_relu_derivative(xi, *slope))
                        .collect();
                    add_into(&mut grads[x.0], dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        add_into(&mut grads[a.0], g.clone());
                    }
                    if self.needs(*b) {
                        add_into(&mut grads[b.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        add_into(&mut grads[b.0], g.iter().map(|&v| -v).collect());
                    }
                    if self.needs(*a) {
                        add_into(&mut grads[a.0], g);
                    }
                }
                Op::Scale(a, c) => {
                    add_into(&mut grads[a.0], g.iter().map(|&v| v * *c).collect());
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    add_into(&mut grads[a.0], vec![g[0]; n]);
                }
                Op::MeanAbs(a) => {
                    let xv = self.value(*a).data();
                    let k = g[0] / F::from_usize(xv.len()).unwrap();
                    let dx = xv
                        .iter()
                        .map(|&v| {
                            if v > F::zero() {
                                k
                            } else if v < F::zero() {
                                -k
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    add_into(&mut grads[a.0], dx);
                }
                Op::MeanSquare(a) => {
                    let xv = self.value(*a).data();
                    let k = (g[0] + g[0]) / F::from_usize(xv.len()).unwrap();
                    add_into(&mut grads[a.0], xv.iter().map(|&v| k * v).collect());
                }
                Op::SquaredErrorTo { x, target } => {
                    let xv = self.value(*x).data();
                    let k = (g[0] + g[0]) / F::from_usize(xv.len()).unwrap();
                    add_into(
                        &mut grads[x.0],
                        xv.iter().map(|&v| k * (v - *target)).collect(),
                    );
                }
                Op::MeanOverLength(a) => {
                    let len = self.value(*a).length();
                    let l = F::from_usize(len).unwrap();
                    let dx = g
                        .iter()
                        .flat_map(|&gi| std::iter::repeat_n(gi / l, len))
                        .collect();
                    add_into(&mut grads[a.0], dx);
                }
                Op::Mmd { x, y, cfg } => {
                    let (xv, yv) = (self.value(*x), self.value(*y));
                    let d = xv.channels() * xv.length();
                    let out = mmd_core(xv.data(), xv.batch(), yv.data(), yv.batch(), d, cfg, true)?;
                    let (gx, gy) = out.grad.expect("gradient requested");
                    if self.needs(*x) {
                        add_into(&mut grads[x.0], gx.into_iter().map(|v| v * g[0]).collect());
                    }
                    if self.needs(*y) {
                        add_into(&mut grads[y.0], gy.into_iter().map(|v| v * g[0]).collect());
                    }
                }
            }
        }
        Ok(out)
    }
}
