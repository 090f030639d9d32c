use std::collections::HashMap;

use super::conv::{self, ConvDims, ConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Exp,
    Sigmoid,
    Tanh,
    Elu(f64),
    /// d/dx elu: `1` for x > 0, `α·eˣ` otherwise.
    EluSlope(f64),
    /// d²/dx² elu: `0` for x > 0, `α·eˣ` otherwise.
    EluCurve(f64),
    LeakyRelu(f64),
    LeakySlope(f64),
    Abs,
    Sign,
    Sqrt,
    /// `1/x`, with `0` at `x = 0`.
    SafeRecip,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Exp => x.exp(),
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Elu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x.exp_m1()
                }
            }
            Unary::EluSlope(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a * x.exp()
                }
            }
            Unary::EluCurve(a) => {
                if x > 0.0 {
                    0.0
                } else {
                    a * x.exp()
                }
            }
            Unary::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Unary::LeakySlope(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Unary::Abs => x.abs(),
            Unary::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Sqrt => x.sqrt(),
            Unary::SafeRecip => {
                if x == 0.0 {
                    0.0
                } else {
                    1.0 / x
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Unary(Var, Unary),
    Conv {
        x: Var,
        w: Var,
        geom: ConvGeometry,
    },
    ConvInputGrad {
        gy: Var,
        w: Var,
        geom: ConvGeometry,
    },
    ConvWeightGrad {
        x: Var,
        gy: Var,
        geom: ConvGeometry,
    },
    Upsample(Var, usize),
    UpsampleAdjoint(Var, usize),
    SumAll(Var),
    ExpandAll(Var),
    /// Sums a `[outer, inner]` view over `inner`.
    SumInner(Var),
    ExpandInner(Var),
    ChannelSum(Var),
    ChannelExpand(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape. Recording order is a topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Values of `∂output/∂leaf` for every differentiable leaf of a graph.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.grads.get(&leaf)
    }

    /// Gradient of `leaf`; panics if the leaf was not differentiable.
    pub fn of(&self, leaf: Var) -> &Tensor {
        self.grads
            .get(&leaf)
            .unwrap_or_else(|| panic!("no gradient recorded for {leaf:?}"))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        value.ensure_finite("graph leaf")?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf treated as fixed data.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        Ok(self.push(op, value, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), value, &[a])
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(Op::Shift(a), value, &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    fn unary(&mut self, a: Var, kind: Unary) -> Var {
        let value = self.value(a).map(|x| kind.apply(x));
        self.push(Op::Unary(a, kind), value, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(a, Unary::Elu(alpha))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Unary::LeakyRelu(slope))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    /// Square root; its derivative is taken as zero where the value is zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sqrt)
    }

    /// Reciprocal that maps zero to zero.
    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Unary::SafeRecip)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same shape")
    }

    /// Convolution (cross-correlation) with optional per-output-channel bias.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let dims = ConvDims::new(self.shape(x), self.shape(w), geom)?;
        let data = conv::conv_forward(self.value(x).data(), self.value(w).data(), &dims, geom);
        let value = Tensor::new(&[dims.batch, dims.cout, dims.ho, dims.wo], data)?;
        let y = self.push(Op::Conv { x, w, geom }, value, &[x, w]);
        match bias {
            Some(b) => self.add_channel_bias(y, b),
            None => Ok(y),
        }
    }

    fn conv_input_grad(&mut self, gy: Var, w: Var, geom: ConvGeometry, input: [usize; 4]) -> Result<Var> {
        let dims = ConvDims::new(&input, self.shape(w), geom)?;
        let data = conv::conv_input_grad(self.value(gy).data(), self.value(w).data(), &dims, geom);
        let value = Tensor::new(&input, data)?;
        Ok(self.push(Op::ConvInputGrad { gy, w, geom }, value, &[gy, w]))
    }

    fn conv_weight_grad(&mut self, x: Var, gy: Var, geom: ConvGeometry, kernel: usize) -> Result<Var> {
        let [_, cin, _, _] = self.value(x).dims4()?;
        let cout = self.shape(gy)[1];
        let wshape = [cout, cin, kernel, kernel];
        let dims = ConvDims::new(self.shape(x), &wshape, geom)?;
        let data = conv::conv_weight_grad(self.value(x).data(), self.value(gy).data(), &dims, geom);
        let value = Tensor::new(&wshape, data)?;
        Ok(self.push(Op::ConvWeightGrad { x, gy, geom }, value, &[x, gy]))
    }

    /// Adds `b[c]` to every element of channel `c`.
    pub fn add_channel_bias(&mut self, y: Var, b: Var) -> Result<Var> {
        let dims = self.value(y).dims4()?;
        if self.shape(b) != [dims[1]] {
            return Err(Error::shape(format!(
                "bias {:?} for {} channels",
                self.shape(b),
                dims[1]
            )));
        }
        let e = self.channel_expand(b, dims)?;
        self.add(y, e)
    }

    fn channel_expand(&mut self, b: Var, dims: [usize; 4]) -> Result<Var> {
        let [n, c, h, w] = dims;
        let bv = self.value(b).data();
        let plane = h * w;
        let value = Tensor::from_fn(&dims, |i| bv[(i / plane) % c]);
        debug_assert_eq!(value.len(), n * c * plane);
        Ok(self.push(Op::ChannelExpand(b), value, &[b]))
    }

    fn channel_sum(&mut self, y: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(y).dims4()?;
        let plane = h * w;
        let yv = self.value(y).data();
        let mut out = vec![0.0; c];
        for bi in 0..n {
            for (ci, o) in out.iter_mut().enumerate() {
                let start = (bi * c + ci) * plane;
                *o += yv[start..start + plane].iter().sum::<f64>();
            }
        }
        Ok(self.push(Op::ChannelSum(y), Tensor::new(&[c], out)?, &[y]))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor < 2 {
            return Err(Error::invalid(format!("upsample factor {factor} < 2")));
        }
        let [n, c, h, w] = self.value(x).dims4()?;
        let data = conv::upsample_nearest(self.value(x).data(), n * c, h, w, factor);
        let value = Tensor::new(&[n, c, h * factor, w * factor], data)?;
        Ok(self.push(Op::Upsample(x, factor), value, &[x]))
    }

    fn upsample_adjoint(&mut self, g: Var, factor: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(g).dims4()?;
        let (hs, ws) = (h / factor, w / factor);
        let data = conv::upsample_adjoint(self.value(g).data(), n * c, hs, ws, factor);
        let value = Tensor::new(&[n, c, hs, ws], data)?;
        Ok(self.push(Op::UpsampleAdjoint(g, factor), value, &[g]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::SumAll(x), value, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    fn expand_all(&mut self, s: Var, shape: &[usize]) -> Var {
        let v = self.value(s).item();
        self.push(Op::ExpandAll(s), Tensor::full(shape, v), &[s])
    }

    /// Views `x` as `[outer, inner]` and sums over `inner`; result has shape `[outer]`.
    pub fn sum_inner(&mut self, x: Var, outer: usize) -> Result<Var> {
        let n = self.value(x).len();
        if outer == 0 || !n.is_multiple_of(outer) {
            return Err(Error::shape(format!("cannot split {n} elements into {outer} groups")));
        }
        let inner = n / outer;
        let xv = self.value(x).data();
        let out: Vec<f64> = (0..outer)
            .map(|o| xv[o * inner..(o + 1) * inner].iter().sum())
            .collect();
        Ok(self.push(Op::SumInner(x), Tensor::new(&[outer], out)?, &[x]))
    }

    /// Broadcasts `v: [outer]` to `shape`, repeating each entry over a contiguous inner block.
    pub fn expand_inner(&mut self, v: Var, shape: &[usize]) -> Result<Var> {
        let outer = self.value(v).len();
        let n: usize = shape.iter().product();
        if !n.is_multiple_of(outer) {
            return Err(Error::shape(format!("cannot expand {outer} groups to {shape:?}")));
        }
        let inner = n / outer;
        let vv = self.value(v).data();
        let value = Tensor::from_fn(shape, |i| vv[i / inner]);
        Ok(self.push(Op::ExpandInner(v), value, &[v]))
    }

    /// Per-sample sum over all non-batch axes, shape `[B]`.
    pub fn sum_per_sample(&mut self, x: Var) -> Result<Var> {
        let b = self.shape(x)[0];
        self.sum_inner(x, b)
    }

    pub fn mean_per_sample(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let inner: usize = shape[1..].iter().product();
        let s = self.sum_inner(x, shape[0])?;
        Ok(self.scale(s, 1.0 / inner as f64))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value, &[x]))
    }

    /// Per-(sample, channel) standardization without affine parameters.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let [n, c, h, w] = self.value(x).dims4()?;
        if h * w < 2 {
            return Err(Error::shape(format!(
                "instance norm needs at least two positions per slice, got {shape:?}"
            )));
        }
        let count = (h * w) as f64;
        let s = self.sum_inner(x, n * c)?;
        let mean = self.scale(s, 1.0 / count);
        let mean_full = self.expand_inner(mean, &shape)?;
        let centered = self.sub(x, mean_full)?;
        let sq = self.square(centered);
        let ss = self.sum_inner(sq, n * c)?;
        let var = self.scale(ss, 1.0 / count);
        let var_eps = self.shift(var, eps);
        let std = self.sqrt(var_eps);
        let inv = self.recip(std);
        let inv_full = self.expand_inner(inv, &shape)?;
        self.mul(centered, inv_full)
    }

    fn accumulate(&mut self, grads: &mut [Option<Var>], target: Var, contrib: Var) -> Result<()> {
        if !self.nodes[target.0].requires_grad {
            return Ok(());
        }
        grads[target.0] = Some(match grads[target.0] {
            Some(prev) => self.add(prev, contrib)?,
            None => contrib,
        });
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records the gradient of the scalar `output` with respect to each of
    /// `wrt` as new nodes, so the result can itself be differentiated.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let grads = self.record_backward(output)?;
        wrt.iter()
            .map(|&v| match grads[v.0] {
                Some(g) => Ok(g),
                None => {
                    let zeros = Tensor::zeros(self.shape(v));
                    self.constant(zeros)
                }
            })
            .collect()
    }

    fn record_backward(&mut self, output: Var) -> Result<Vec<Option<Var>>> {
        if self.shape(output) != [1] {
            return Err(Error::shape(format!(
                "gradient requested for non-scalar output of shape {:?}",
                self.shape(output)
            )));
        }
        let end = output.0 + 1;
        let mut grads: Vec<Option<Var>> = vec![None; end];
        if !self.wants(output) {
            return Ok(grads);
        }
        let seed = self.constant(Tensor::scalar(1.0))?;
        grads[output.0] = Some(seed);

        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let y = Var(i);
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, a, g)?;
                    self.accumulate(&mut grads, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, a, g)?;
                    if self.wants(b) {
                        let ng = self.neg(g);
                        self.accumulate(&mut grads, b, ng)?;
                    }
                }
                Op::Mul(a, b) => {
                    if self.wants(a) {
                        let ga = self.mul(g, b)?;
                        self.accumulate(&mut grads, a, ga)?;
                    }
                    if self.wants(b) {
                        let gb = self.mul(g, a)?;
                        self.accumulate(&mut grads, b, gb)?;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    self.accumulate(&mut grads, a, ga)?;
                }
                Op::Shift(a) => self.accumulate(&mut grads, a, g)?,
                Op::Unary(a, kind) => {
                    let local = match kind {
                        Unary::Exp => Some(y),
                        Unary::Sigmoid => {
                            let neg = self.neg(y);
                            let one_minus = self.shift(neg, 1.0);
                            Some(self.mul(y, one_minus)?)
                        }
                        Unary::Tanh => {
                            let sq = self.square(y);
                            let neg = self.neg(sq);
                            Some(self.shift(neg, 1.0))
                        }
                        Unary::Elu(al) => Some(self.unary(a, Unary::EluSlope(al))),
                        Unary::EluSlope(al) | Unary::EluCurve(al) => {
                            Some(self.unary(a, Unary::EluCurve(al)))
                        }
                        Unary::LeakyRelu(s) => Some(self.unary(a, Unary::LeakySlope(s))),
                        Unary::Abs => Some(self.unary(a, Unary::Sign)),
                        Unary::LeakySlope(_) | Unary::Sign => None,
                        Unary::Sqrt => {
                            let r = self.recip(y);
                            Some(self.scale(r, 0.5))
                        }
                        Unary::SafeRecip => {
                            let sq = self.square(y);
                            Some(self.neg(sq))
                        }
                    };
                    if let Some(local) = local {
                        let ga = self.mul(g, local)?;
                        self.accumulate(&mut grads, a, ga)?;
                    }
                }
                Op::Conv { x, w, geom } => {
                    if self.wants(x) {
                        let input = self.value(x).dims4()?;
                        let gx = self.conv_input_grad(g, w, geom, input)?;
                        self.accumulate(&mut grads, x, gx)?;
                    }
                    if self.wants(w) {
                        let k = self.shape(w)[2];
                        let gw = self.conv_weight_grad(x, g, geom, k)?;
                        self.accumulate(&mut grads, w, gw)?;
                    }
                }
                Op::ConvInputGrad { gy, w, geom } => {
                    if self.wants(gy) {
                        let ggy = self.conv2d(g, w, None, geom)?;
                        self.accumulate(&mut grads, gy, ggy)?;
                    }
                    if self.wants(w) {
                        let k = self.shape(w)[2];
                        let gw = self.conv_weight_grad(g, gy, geom, k)?;
                        self.accumulate(&mut grads, w, gw)?;
                    }
                }
                Op::ConvWeightGrad { x, gy, geom } => {
                    if self.wants(x) {
                        let input = self.value(x).dims4()?;
                        let gx = self.conv_input_grad(gy, g, geom, input)?;
                        self.accumulate(&mut grads, x, gx)?;
                    }
                    if self.wants(gy) {
                        let ggy = self.conv2d(x, g, None, geom)?;
                        self.accumulate(&mut grads, gy, ggy)?;
                    }
                }
                Op::Upsample(x, f) => {
                    let gx = self.upsample_adjoint(g, f)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::UpsampleAdjoint(x, f) => {
                    let gx = self.upsample_nearest(g, f)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::SumAll(x) => {
                    let shape = self.shape(x).to_vec();
                    let gx = self.expand_all(g, &shape);
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::ExpandAll(x) => {
                    let gx = self.sum(g);
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::SumInner(x) => {
                    let shape = self.shape(x).to_vec();
                    let gx = self.expand_inner(g, &shape)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::ExpandInner(x) => {
                    let outer = self.value(x).len();
                    let s = self.sum_inner(g, outer)?;
                    let shape = self.shape(x).to_vec();
                    let gx = self.reshape(s, &shape)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::ChannelSum(x) => {
                    let dims = self.value(x).dims4()?;
                    let gx = self.channel_expand(g, dims)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::ChannelExpand(x) => {
                    let gx = self.channel_sum(g)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Reshape(x) => {
                    let shape = self.shape(x).to_vec();
                    let gx = self.reshape(g, &shape)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
            }
        }
        Ok(grads)
    }

    /// Gradient values of the scalar `output` with respect to every
    /// differentiable leaf. Leaves that do not influence `output` get zeros.
    /// The tape is restored to its length before the call.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        let mark = self.nodes.len();
        let recorded = self.record_backward(output);
        let result = recorded.map(|grads| {
            let mut out = HashMap::new();
            for (i, node) in self.nodes[..mark].iter().enumerate() {
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    let value = match grads.get(i).copied().flatten() {
                        Some(g) => self.nodes[g.0].value.clone(),
                        None => Tensor::zeros(node.value.shape()),
                    };
                    out.insert(Var(i), value);
                }
            }
            Gradients { grads: out }
        });
        self.nodes.truncate(mark);
        result
    }
}
