use rand::Rng;

use super::conv::{col2im, gemm, im2col, ConvGeometry, Mat};
use super::{AutodiffError, Tensor};

/// Negative-side slope of the leaky ReLU used throughout the models.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f32, y: f32) -> f32 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    InstanceNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<f32>,
    },
    BceWithLogits {
        logits: Var,
        target: f32,
    },
    L1 {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f32,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    // f64 accumulator behind scalar results, kept so losses do not lose precision.
    precise: Option<f64>,
}

/// Linear record of forward operations, replayed in reverse by [`Tape::backward`].
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves that require them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape(msg.into())
}

fn add_into(dst: &mut Option<Vec<f32>>, src: &[f32]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            precise: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_scalar(&mut self, op: Op, precise: f64, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Tensor::scalar(precise as f32),
            requires_grad,
            precise: Some(precise),
        });
        Var(self.nodes.len() - 1)
    }

    /// Value of a one-element result in full accumulation precision.
    pub fn scalar(&self, var: Var) -> f64 {
        let node = &self.nodes[var.0];
        assert!(
            node.value.is_scalar(),
            "scalar() on shape {:?}",
            node.value.shape()
        );
        node.precise.unwrap_or(node.value.item() as f64)
    }

    /// Register a trainable tensor.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Register a tensor that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    fn any_grad(&self, vars: &[Option<Var>]) -> bool {
        vars.iter().flatten().any(|&v| self.requires_grad(v))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let (o, wc, kh, kw) = self.value(weight).dims4()?;
        if wc != c {
            return Err(shape_err(format!(
                "conv2d: input has {c} channels but weight expects {wc}"
            )));
        }
        if kh != kw {
            return Err(shape_err(format!(
                "conv2d: kernel must be square, got {kh}x{kw}"
            )));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != o {
                return Err(shape_err(format!(
                    "conv2d: bias has {} elements, expected {o}",
                    self.value(b).numel()
                )));
            }
        }
        let geom = ConvGeometry::forward(c, h, w, kh, stride, padding)?;
        let positions = geom.positions();
        let mut out = vec![0.0; n * o * positions];
        let mut cols = vec![0.0; geom.col_rows() * positions];
        {
            let x = self.value(input).data();
            let wt = self.value(weight).data();
            for s in 0..n {
                im2col(&x[s * c * h * w..(s + 1) * c * h * w], &geom, &mut cols);
                let dst = &mut out[s * o * positions..(s + 1) * o * positions];
                gemm(
                    Mat::new(wt, o, geom.col_rows()),
                    Mat::new(&cols, geom.col_rows(), positions),
                    0.0,
                    dst,
                );
                if let Some(b) = bias {
                    let bv = self.value(b).data();
                    for (ch, plane) in dst.chunks_mut(positions).enumerate() {
                        plane.iter_mut().for_each(|v| *v += bv[ch]);
                    }
                }
            }
        }
        let value = Tensor::new(&[n, o, geom.out_h, geom.out_w], out)?;
        let rg = self.any_grad(&[Some(input), Some(weight), bias]);
        Ok(self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            value,
            rg,
        ))
    }

    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let (wi, o, kh, kw) = self.value(weight).dims4()?;
        if wi != c {
            return Err(shape_err(format!(
                "conv_transpose2d: input has {c} channels but weight expects {wi}"
            )));
        }
        if kh != kw {
            return Err(shape_err(format!(
                "conv_transpose2d: kernel must be square, got {kh}x{kw}"
            )));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != o {
                return Err(shape_err(format!(
                    "conv_transpose2d: bias has {} elements, expected {o}",
                    self.value(b).numel()
                )));
            }
        }
        let geom = ConvGeometry::transposed(o, h, w, kh, stride, padding)?;
        let positions = geom.positions();
        let out_plane = geom.in_plane();
        let mut out = vec![0.0; n * o * out_plane];
        let mut cols = vec![0.0; geom.col_rows() * positions];
        {
            let x = self.value(input).data();
            let wt = self.value(weight).data();
            for s in 0..n {
                gemm(
                    Mat::new(wt, c, geom.col_rows()).t(),
                    Mat::new(&x[s * c * positions..(s + 1) * c * positions], c, positions),
                    0.0,
                    &mut cols,
                );
                let dst = &mut out[s * o * out_plane..(s + 1) * o * out_plane];
                col2im(&cols, &geom, dst);
                if let Some(b) = bias {
                    let bv = self.value(b).data();
                    for (ch, plane) in dst.chunks_mut(out_plane).enumerate() {
                        plane.iter_mut().for_each(|v| *v += bv[ch]);
                    }
                }
            }
        }
        let value = Tensor::new(&[n, o, geom.in_h, geom.in_w], out)?;
        let rg = self.any_grad(&[Some(input), Some(weight), bias]);
        Ok(self.push(
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
            },
            value,
            rg,
        ))
    }

    /// Per-sample, per-channel normalization with affine `gamma`/`beta`.
    pub fn instance_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        eps: f32,
    ) -> Result<Var, AutodiffError> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let hw = h * w;
        if hw < 2 {
            return Err(AutodiffError::DegenerateStatistics {
                height: h,
                width: w,
            });
        }
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(shape_err(format!(
                "instance_norm: gamma/beta must have {c} elements"
            )));
        }
        let x = self.value(input).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut normalized = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; n * c];
        for s in 0..n {
            for ch in 0..c {
                let idx = s * c + ch;
                let plane = &x[idx * hw..(idx + 1) * hw];
                let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
                let var = plane
                    .iter()
                    .map(|&v| (v as f64 - mean).powi(2))
                    .sum::<f64>()
                    / hw as f64;
                let istd = 1.0 / (var + eps as f64).sqrt();
                // A constant channel with eps = 0 has no scale; treat it as already centered.
                let istd = if istd.is_finite() { istd } else { 0.0 };
                inv_std[idx] = istd as f32;
                for i in 0..hw {
                    let xh = ((plane[i] as f64 - mean) * istd) as f32;
                    normalized[idx * hw + i] = xh;
                    out[idx * hw + i] = xh * g[ch] + b[ch];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.any_grad(&[Some(input), Some(gamma), Some(beta)]);
        Ok(self.push(
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            value,
            rg,
        ))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let value = self.value(input).map(|v| kind.apply(v));
        let rg = self.requires_grad(input);
        self.push(Op::Activation { input, kind }, value, rg)
    }

    pub fn leaky_relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::LeakyRelu)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    /// Stack `a` and `b` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (na, ca, ha, wa) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (na, ha, wa) != (nb, hb, wb) {
            return Err(shape_err(format!(
                "concat_channels: batch/spatial mismatch {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let hw = ha * wa;
        let mut out = Vec::with_capacity(na * (ca + cb) * hw);
        for s in 0..na {
            out.extend_from_slice(&self.value(a).data()[s * ca * hw..(s + 1) * ca * hw]);
            out.extend_from_slice(&self.value(b).data()[s * cb * hw..(s + 1) * cb * hw]);
        }
        let value = Tensor::new(&[na, ca + cb, ha, wa], out)?;
        let rg = self.any_grad(&[Some(a), Some(b)]);
        Ok(self.push(Op::Concat { a, b }, value, rg))
    }

    /// Inverted dropout. Outside training, or with `p == 0`, returns `input` unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        p: f32,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::Config(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(input);
        }
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f32> = (0..self.value(input).numel())
            .map(|_| {
                if rng.random::<f32>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let x = self.value(input);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape(), data)?;
        let rg = self.requires_grad(input);
        Ok(self.push(Op::Dropout { input, mask }, value, rg))
    }

    /// Mean binary cross-entropy of `logits` against a constant label.
    pub fn bce_with_logits(&mut self, logits: Var, target: f32) -> Var {
        let x = self.value(logits).data();
        let t = target as f64;
        let total: f64 = x
            .iter()
            .map(|&v| {
                let v = v as f64;
                softplus(v) - v * t
            })
            .sum();
        let mean = total / x.len() as f64;
        let rg = self.requires_grad(logits);
        self.push_scalar(Op::BceWithLogits { logits, target }, mean, rg)
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(format!(
                "l1_loss: shapes differ {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let total: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum();
        let mean = total / ta.numel() as f64;
        let rg = self.any_grad(&[Some(a), Some(b)]);
        Ok(self.push_scalar(Op::L1 { a, b }, mean, rg))
    }

    fn elementwise(&mut self, a: Var, b: Var, what: &str) -> Result<Tensor, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(format!(
                "{what}: shapes differ {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        Ok(ta.clone())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.value(a).is_scalar()
            && self.value(b).is_scalar()
            && self.value(a).shape() == self.value(b).shape()
        {
            let rg = self.any_grad(&[Some(a), Some(b)]);
            let v = self.scalar(a) + self.scalar(b);
            return Ok(self.push_scalar(Op::Add { a, b }, v, rg));
        }
        let mut value = self.elementwise(a, b, "add")?;
        let other = self.value(b).data();
        value
            .data_mut()
            .iter_mut()
            .zip(other)
            .for_each(|(x, y)| *x += y);
        let rg = self.any_grad(&[Some(a), Some(b)]);
        Ok(self.push(Op::Add { a, b }, value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.value(a).is_scalar()
            && self.value(b).is_scalar()
            && self.value(a).shape() == self.value(b).shape()
        {
            let rg = self.any_grad(&[Some(a), Some(b)]);
            let v = self.scalar(a) * self.scalar(b);
            return Ok(self.push_scalar(Op::Mul { a, b }, v, rg));
        }
        let mut value = self.elementwise(a, b, "mul")?;
        let other = self.value(b).data();
        value
            .data_mut()
            .iter_mut()
            .zip(other)
            .for_each(|(x, y)| *x *= y);
        let rg = self.any_grad(&[Some(a), Some(b)]);
        Ok(self.push(Op::Mul { a, b }, value, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        if self.value(input).is_scalar() {
            let rg = self.requires_grad(input);
            let v = self.scalar(input) * factor as f64;
            return self.push_scalar(Op::Scale { input, factor }, v, rg);
        }
        let value = self.value(input).map(|v| v * factor);
        let rg = self.requires_grad(input);
        self.push(Op::Scale { input, factor }, value, rg)
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total: f64 = self.value(input).data().iter().map(|&v| v as f64).sum();
        let rg = self.requires_grad(input);
        self.push_scalar(Op::Sum { input }, total, rg)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let total: f64 = x.data().iter().map(|&v| v as f64).sum();
        let mean = total / x.numel() as f64;
        let rg = self.requires_grad(input);
        self.push_scalar(Op::Mean { input }, mean, rg)
    }

    /// Which side of its kink every input of a non-smooth op (relu, leaky relu,
    /// L1) sits on. Two evaluations with equal patterns lie on one smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Activation {
                    input,
                    kind: Activation::Relu | Activation::LeakyRelu,
                } => pattern.extend(self.value(*input).data().iter().map(|&v| v > 0.0)),
                Op::L1 { a, b } => pattern.extend(
                    self.value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(x, y)| x > y),
                ),
                _ => {}
            }
        }
        pattern
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every leaf that
    /// requires one and participates in the loss. Repeated uses of a value sum.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(AutodiffError::NotScalar {
                shape: root.value.shape().to_vec(),
            });
        }
        let mut acc: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        let mut out: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if root.requires_grad {
            acc[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(grad) = acc[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    out[idx] = Some(Tensor::new(node.value.shape(), grad)?);
                }
                continue;
            }
            self.propagate(node, &grad, &mut acc);
        }
        Ok(Gradients { grads: out })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, grad: &[f32], acc: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => self.conv2d_backward(*input, *weight, *bias, geom, grad, acc),
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
            } => self.conv_transpose2d_backward(*input, *weight, *bias, geom, grad, acc),
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (n, c, h, w) = node.value.dims4().expect("NCHW");
                let hw = h * w;
                let g = self.value(*gamma).data();
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                let mut dx = vec![0.0f32; grad.len()];
                for s in 0..n {
                    for ch in 0..c {
                        let idx = s * c + ch;
                        let dy = &grad[idx * hw..(idx + 1) * hw];
                        let xh = &normalized[idx * hw..(idx + 1) * hw];
                        let mut sum_dy = 0.0f64;
                        let mut sum_dy_xh = 0.0f64;
                        for i in 0..hw {
                            sum_dy += dy[i] as f64;
                            sum_dy_xh += dy[i] as f64 * xh[i] as f64;
                        }
                        dgamma[ch] += sum_dy_xh as f32;
                        dbeta[ch] += sum_dy as f32;
                        let scale = g[ch] as f64 * inv_std[idx] as f64;
                        let mean_dy = sum_dy / hw as f64;
                        let mean_dy_xh = sum_dy_xh / hw as f64;
                        for i in 0..hw {
                            dx[idx * hw + i] = (scale
                                * (dy[i] as f64 - mean_dy - xh[i] as f64 * mean_dy_xh))
                                as f32;
                        }
                    }
                }
                if self.wants(*input) {
                    add_into(&mut acc[input.0], &dx);
                }
                if self.wants(*gamma) {
                    add_into(&mut acc[gamma.0], &dgamma);
                }
                if self.wants(*beta) {
                    add_into(&mut acc[beta.0], &dbeta);
                }
            }
            Op::Activation { input, kind } => {
                if self.wants(*input) {
                    let x = self.value(*input).data();
                    let y = node.value.data();
                    let dx: Vec<f32> = grad
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(g, (&xi, &yi))| g * kind.derivative(xi, yi))
                        .collect();
                    add_into(&mut acc[input.0], &dx);
                }
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4().expect("NCHW");
                let cb = self.value(*b).shape()[1];
                let hw = h * w;
                let stride = (ca + cb) * hw;
                if self.wants(*a) {
                    let da: Vec<f32> = (0..n)
                        .flat_map(|s| grad[s * stride..s * stride + ca * hw].iter().copied())
                        .collect();
                    add_into(&mut acc[a.0], &da);
                }
                if self.wants(*b) {
                    let db: Vec<f32> = (0..n)
                        .flat_map(|s| grad[s * stride + ca * hw..(s + 1) * stride].iter().copied())
                        .collect();
                    add_into(&mut acc[b.0], &db);
                }
            }
            Op::Dropout { input, mask } => {
                if self.wants(*input) {
                    let dx: Vec<f32> = grad.iter().zip(mask).map(|(g, m)| g * m).collect();
                    add_into(&mut acc[input.0], &dx);
                }
            }
            Op::BceWithLogits { logits, target } => {
                if self.wants(*logits) {
                    let x = self.value(*logits).data();
                    let scale = grad[0] / x.len() as f32;
                    let dx: Vec<f32> = x.iter().map(|&v| (sigmoid(v) - target) * scale).collect();
                    add_into(&mut acc[logits.0], &dx);
                }
            }
            Op::L1 { a, b } => {
                let xa = self.value(*a).data();
                let xb = self.value(*b).data();
                let scale = grad[0] / xa.len() as f32;
                let sign: Vec<f32> = xa
                    .iter()
                    .zip(xb)
                    .map(|(p, q)| {
                        if p > q {
                            scale
                        } else if p < q {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.wants(*a) {
                    add_into(&mut acc[a.0], &sign);
                }
                if self.wants(*b) {
                    let neg: Vec<f32> = sign.iter().map(|v| -v).collect();
                    add_into(&mut acc[b.0], &neg);
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    add_into(&mut acc[a.0], grad);
                }
                if self.wants(*b) {
                    add_into(&mut acc[b.0], grad);
                }
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let d: Vec<f32> = grad
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(g, y)| g * y)
                        .collect();
                    add_into(&mut acc[a.0], &d);
                }
                if self.wants(*b) {
                    let d: Vec<f32> = grad
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, x)| g * x)
                        .collect();
                    add_into(&mut acc[b.0], &d);
                }
            }
            Op::Scale { input, factor } => {
                if self.wants(*input) {
                    let d: Vec<f32> = grad.iter().map(|g| g * factor).collect();
                    add_into(&mut acc[input.0], &d);
                }
            }
            Op::Sum { input } => {
                if self.wants(*input) {
                    let d = vec![grad[0]; self.value(*input).numel()];
                    add_into(&mut acc[input.0], &d);
                }
            }
            Op::Mean { input } => {
                if self.wants(*input) {
                    let n = self.value(*input).numel();
                    let d = vec![grad[0] / n as f32; n];
                    add_into(&mut acc[input.0], &d);
                }
            }
        }
    }

    fn conv2d_backward(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: &ConvGeometry,
        grad: &[f32],
        acc: &mut [Option<Vec<f32>>],
    ) {
        let x = self.value(input);
        let wt = self.value(weight);
        let (n, c, h, w) = x.dims4().expect("NCHW");
        let o = wt.shape()[0];
        let positions = geom.positions();
        let rows = geom.col_rows();
        let want_x = self.wants(input);
        let want_w = self.wants(weight);

        if let Some(b) = bias.filter(|&b| self.wants(b)) {
            let mut db = vec![0.0f32; o];
            for s in 0..n {
                for (ch, plane) in grad[s * o * positions..(s + 1) * o * positions]
                    .chunks(positions)
                    .enumerate()
                {
                    db[ch] += plane.iter().map(|&v| v as f64).sum::<f64>() as f32;
                }
            }
            add_into(&mut acc[b.0], &db);
        }
        if !want_x && !want_w {
            return;
        }
        let mut cols = vec![0.0f32; rows * positions];
        let mut dw = if want_w {
            vec![0.0f32; o * rows]
        } else {
            Vec::new()
        };
        let mut dx = if want_x {
            vec![0.0f32; x.numel()]
        } else {
            Vec::new()
        };
        for s in 0..n {
            let dout = &grad[s * o * positions..(s + 1) * o * positions];
            if want_w {
                im2col(
                    &x.data()[s * c * h * w..(s + 1) * c * h * w],
                    geom,
                    &mut cols,
                );
                gemm(
                    Mat::new(dout, o, positions),
                    Mat::new(&cols, rows, positions).t(),
                    1.0,
                    &mut dw,
                );
            }
            if want_x {
                gemm(
                    Mat::new(wt.data(), o, rows).t(),
                    Mat::new(dout, o, positions),
                    0.0,
                    &mut cols,
                );
                col2im(&cols, geom, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
            }
        }
        if want_w {
            add_into(&mut acc[weight.0], &dw);
        }
        if want_x {
            add_into(&mut acc[input.0], &dx);
        }
    }

    fn conv_transpose2d_backward(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: &ConvGeometry,
        grad: &[f32],
        acc: &mut [Option<Vec<f32>>],
    ) {
        let x = self.value(input);
        let wt = self.value(weight);
        let (n, c, _, _) = x.dims4().expect("NCHW");
        let o = geom.channels;
        let positions = geom.positions();
        let out_plane = geom.in_plane();
        let rows = geom.col_rows();
        let want_x = self.wants(input);
        let want_w = self.wants(weight);

        if let Some(b) = bias.filter(|&b| self.wants(b)) {
            let mut db = vec![0.0f32; o];
            for s in 0..n {
                for (ch, plane) in grad[s * o * out_plane..(s + 1) * o * out_plane]
                    .chunks(out_plane)
                    .enumerate()
                {
                    db[ch] += plane.iter().map(|&v| v as f64).sum::<f64>() as f32;
                }
            }
            add_into(&mut acc[b.0], &db);
        }
        if !want_x && !want_w {
            return;
        }
        let mut cols = vec![0.0f32; rows * positions];
        let mut dw = if want_w {
            vec![0.0f32; c * rows]
        } else {
            Vec::new()
        };
        let mut dx = if want_x {
            vec![0.0f32; x.numel()]
        } else {
            Vec::new()
        };
        for s in 0..n {
            im2col(
                &grad[s * o * out_plane..(s + 1) * o * out_plane],
                geom,
                &mut cols,
            );
            if want_x {
                gemm(
                    Mat::new(wt.data(), c, rows),
                    Mat::new(&cols, rows, positions),
                    0.0,
                    &mut dx[s * c * positions..(s + 1) * c * positions],
                );
            }
            if want_w {
                gemm(
                    Mat::new(
                        &x.data()[s * c * positions..(s + 1) * c * positions],
                        c,
                        positions,
                    ),
                    Mat::new(&cols, rows, positions).t(),
                    1.0,
                    &mut dw,
                );
            }
        }
        if want_w {
            add_into(&mut acc[weight.0], &dw);
        }
        if want_x {
            add_into(&mut acc[input.0], &dx);
        }
    }
}
