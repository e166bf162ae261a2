//! The tape: an append-only list of executed ops. Backward walks it in exact
//! reverse order and sums every contribution into the input's gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Geometry};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => math::sigmoid(x),
            Activation::Tanh => math::tanh(x),
        }
    }

    /// Derivative expressed through the forward output `y`.
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: Geometry,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: Geometry,
    },
    PixelShuffle {
        input: Var,
        factor: usize,
    },
    Bilinear {
        image: Var,
        flow: Var,
    },
    Resize {
        input: Var,
        factor: usize,
        value_scale: f64,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulMap {
        input: Var,
        map: Var,
    },
    Concat(Vec<Var>),
    Sum(Var),
    Mse(Var, Var),
    TvSquared(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape. One graph per training step (or per inference frame);
/// dropping it frees every intermediate.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Constant copy of `v`: later ops see the same values but no gradient
    /// flows back through the copy.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
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

    /// Gradient accumulated by the last [`Graph::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Clears gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(String::from(name)));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, &[self.shape(a), self.shape(b)], "operand shapes differ"));
        }
        Ok(())
    }

    /// Cross-correlation of `input [C,H,W]` with `weight [D,C,k,k]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let (c, h, w) = match xs.as_slice() {
            &[c, h, w] => (c, h, w),
            _ => return Err(Error::shape("conv2d", &[&xs, &ws], "input must be [C,H,W]")),
        };
        let (d, k) = match ws.as_slice() {
            &[d, wc, k1, k2] if wc == c && k1 == k2 => (d, k1),
            _ => return Err(Error::shape("conv2d", &[&xs, &ws], "kernel must be [D,C,k,k] matching input channels")),
        };
        if k % 2 == 0 {
            return Err(Error::shape("conv2d", &[&xs, &ws], "kernel extent must be odd"));
        }
        self.check_bias("conv2d", bias, d, &ws)?;
        let (oh, ow) = match (kernels::conv_out_extent(h, k, stride, pad), kernels::conv_out_extent(w, k, stride, pad)) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(Error::shape("conv2d", &[&xs, &ws], format!("no valid output for stride {stride}, pad {pad}"))),
        };
        let geom = Geometry {
            channels: c,
            in_h: h,
            in_w: w,
            kernel: k,
            stride,
            pad,
            out_h: oh,
            out_w: ow,
        };
        let data = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            d,
            &geom,
        );
        let value = Tensor::new(&[d, oh, ow], data)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(value, Op::Conv2d { input, weight, bias, geom }, &inputs, "conv2d")
    }

    /// Transposed convolution of `input [C,H,W]` with `weight [C,D,k,k]`;
    /// output extent `(H-1)·stride - 2·pad + k`.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let (c, h, w) = match xs.as_slice() {
            &[c, h, w] => (c, h, w),
            _ => return Err(Error::shape("conv_transpose2d", &[&xs, &ws], "input must be [C,H,W]")),
        };
        let (d, k) = match ws.as_slice() {
            &[wc, d, k1, k2] if wc == c && k1 == k2 => (d, k1),
            _ => {
                return Err(Error::shape(
                    "conv_transpose2d",
                    &[&xs, &ws],
                    "kernel must be [C,D,k,k] matching input channels",
                ))
            }
        };
        if !(1..=2).contains(&stride) {
            return Err(Error::shape("conv_transpose2d", &[&xs, &ws], "stride must be 1 or 2"));
        }
        self.check_bias("conv_transpose2d", bias, d, &ws)?;
        let (oh, ow) = match (
            kernels::transpose_out_extent(h, k, stride, pad),
            kernels::transpose_out_extent(w, k, stride, pad),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(Error::shape("conv_transpose2d", &[&xs, &ws], "padding consumes the whole output")),
        };
        let geom = Geometry {
            channels: d,
            in_h: oh,
            in_w: ow,
            kernel: k,
            stride,
            pad,
            out_h: h,
            out_w: w,
        };
        let data = kernels::conv_transpose2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            c,
            &geom,
        );
        let value = Tensor::new(&[d, oh, ow], data)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(value, Op::ConvTranspose2d { input, weight, bias, geom }, &inputs, "conv_transpose2d")
    }

    fn check_bias(&self, op: &'static str, bias: Option<Var>, d: usize, ws: &[usize]) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [d] {
                return Err(Error::shape(op, &[ws, self.shape(b)], "bias must be [D]"));
            }
        }
        Ok(())
    }

    /// `[s²·D, H, W] → [D, s·H, s·W]`.
    pub fn pixel_shuffle(&mut self, input: Var, factor: usize) -> Result<Var> {
        let (c, h, w) = self.value(input).dims3()?;
        if factor == 0 || c % (factor * factor) != 0 {
            return Err(Error::shape(
                "pixel_shuffle",
                &[self.shape(input)],
                format!("channel count not divisible by {}", factor * factor),
            ));
        }
        let data = kernels::pixel_shuffle(self.value(input).data(), c, h, w, factor);
        let value = Tensor::new(&[c / (factor * factor), h * factor, w * factor], data)?;
        self.push(value, Op::PixelShuffle { input, factor }, &[input], "pixel_shuffle")
    }

    /// Samples `image [C,H,W]` at `(y + flow[0], x + flow[1])` bilinearly,
    /// clamping coordinates to the border.
    pub fn bilinear_sample(&mut self, image: Var, flow: Var) -> Result<Var> {
        let (c, h, w) = self.value(image).dims3()?;
        if self.shape(flow) != [2, h, w] {
            return Err(Error::shape("bilinear_sample", &[self.shape(image), self.shape(flow)], "flow must be [2,H,W]"));
        }
        if !self.value(flow).is_finite() {
            return Err(Error::NonFinite(String::from("bilinear_sample flow")));
        }
        let data = kernels::bilinear_forward(self.value(image).data(), self.value(flow).data(), c, h, w);
        let value = Tensor::new(&[c, h, w], data)?;
        self.push(value, Op::Bilinear { image, flow }, &[image, flow], "bilinear_sample")
    }

    /// Bilinear ×`factor` upsampling that also multiplies values by `value_scale`.
    pub fn resize(&mut self, input: Var, factor: usize, value_scale: f64) -> Result<Var> {
        let (c, h, w) = self.value(input).dims3()?;
        if factor == 0 {
            return Err(Error::invalid("resize factor must be ≥ 1"));
        }
        let data = kernels::resize_forward(self.value(input).data(), c, h, w, factor, value_scale);
        let value = Tensor::new(&[c, h * factor, w * factor], data)?;
        self.push(value, Op::Resize { input, factor, value_scale }, &[input], "resize")
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let value = self.value(input).map(|v| kind.apply(v));
        self.push(value, Op::Act { input, kind }, &[input], kind.name())
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Tanh)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(value, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), &[a, b], "sub")
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), &[a, b], "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor), &[a], "scale")
    }

    /// `input [D,H,W] ⊙ map [1,H,W]`, the map broadcast over channels.
    pub fn mul_map(&mut self, input: Var, map: Var) -> Result<Var> {
        let (d, h, w) = self.value(input).dims3()?;
        if self.shape(map) != [1, h, w] {
            return Err(Error::shape("mul_map", &[self.shape(input), self.shape(map)], "map must be [1,H,W]"));
        }
        let plane = h * w;
        let x = self.value(input).data();
        let m = self.value(map).data();
        let data = (0..d * plane).map(|i| x[i] * m[i % plane]).collect();
        let value = Tensor::new(&[d, h, w], data)?;
        self.push(value, Op::MulMap { input, map }, &[input, map], "mul_map")
    }

    /// Channel-axis concatenation of rank-3 values.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let parts: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat_channels(&parts)?;
        self.push(value, Op::Concat(inputs.to_vec()), inputs, "concat")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a], "sum")
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let total: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        let value = Tensor::scalar(total / x.len() as f64);
        self.push(value, Op::Mse(a, b), &[a, b], "mse")
    }

    /// Sum over channels of squared forward differences along both axes.
    pub fn tv_squared(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = self.value(a).dims3()?;
        let value = Tensor::scalar(kernels::tv_squared(self.value(a).data(), c, h, w));
        self.push(value, Op::TvSquared(a), &[a], "tv_squared")
    }

    /// Populates gradients of the scalar `loss` with respect to every node
    /// that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(String::from(
                "backward already ran on this graph; call reset_grads first",
            )));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Graph(String::from(
                "loss is not connected to any trainable value",
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        self.grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::new(self.nodes[i].value.shape(), g).expect("gradient shape")))
            .collect();
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let d = self.shape(*weight)[0];
                let need = (needs(*input), needs(*weight), bias.is_some_and(needs));
                let cg = kernels::conv2d_backward(self.value(*input).data(), self.value(*weight).data(), g, d, geom, need);
                accumulate(grads, *input, cg.input);
                accumulate(grads, *weight, cg.weight);
                if let Some(b) = bias {
                    accumulate(grads, *b, cg.bias);
                }
            }
            Op::ConvTranspose2d { input, weight, bias, geom } => {
                let c = self.shape(*weight)[0];
                let need = (needs(*input), needs(*weight), bias.is_some_and(needs));
                let cg = kernels::conv_transpose2d_backward(self.value(*input).data(), self.value(*weight).data(), g, c, geom, need);
                accumulate(grads, *input, cg.input);
                accumulate(grads, *weight, cg.weight);
                if let Some(b) = bias {
                    accumulate(grads, *b, cg.bias);
                }
            }
            Op::PixelShuffle { input, factor } => {
                if needs(*input) {
                    let (c, h, w) = self.value(*input).dims3()?;
                    accumulate(grads, *input, Some(kernels::pixel_unshuffle(g, c, h, w, *factor)));
                }
            }
            Op::Bilinear { image, flow } => {
                let (c, h, w) = self.value(*image).dims3()?;
                let (gi, gf) = kernels::bilinear_backward(self.value(*image).data(), self.value(*flow).data(), g, c, h, w);
                if needs(*image) {
                    accumulate(grads, *image, Some(gi));
                }
                if needs(*flow) {
                    accumulate(grads, *flow, Some(gf));
                }
            }
            Op::Resize { input, factor, value_scale } => {
                if needs(*input) {
                    let (c, h, w) = self.value(*input).dims3()?;
                    accumulate(grads, *input, Some(kernels::resize_backward(g, c, h, w, *factor, *value_scale)));
                }
            }
            Op::Act { input, kind } => {
                if needs(*input) {
                    let y = node.value.data();
                    let gi = g.iter().zip(y).map(|(&gv, &yv)| gv * kind.slope_from_output(yv)).collect();
                    accumulate(grads, *input, Some(gi));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, Some(g.to_vec()));
                }
                if needs(*b) {
                    accumulate(grads, *b, Some(g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, Some(g.to_vec()));
                }
                if needs(*b) {
                    accumulate(grads, *b, Some(g.iter().map(|v| -v).collect()));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let gb = self.value(*b).data();
                    accumulate(grads, *a, Some(g.iter().zip(gb).map(|(x, y)| x * y).collect()));
                }
                if needs(*b) {
                    let ga = self.value(*a).data();
                    accumulate(grads, *b, Some(g.iter().zip(ga).map(|(x, y)| x * y).collect()));
                }
            }
            Op::Scale(a, f) => {
                if needs(*a) {
                    accumulate(grads, *a, Some(g.iter().map(|v| v * f).collect()));
                }
            }
            Op::MulMap { input, map } => {
                let (d, h, w) = self.value(*input).dims3()?;
                let plane = h * w;
                let x = self.value(*input).data();
                let m = self.value(*map).data();
                if needs(*input) {
                    accumulate(grads, *input, Some((0..d * plane).map(|j| g[j] * m[j % plane]).collect()));
                }
                if needs(*map) {
                    let mut gm = vec![0.0; plane];
                    for j in 0..d * plane {
                        gm[j % plane] += g[j] * x[j];
                    }
                    accumulate(grads, *map, Some(gm));
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    if needs(*p) {
                        accumulate(grads, *p, Some(g[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            Op::Sum(a) => {
                if needs(*a) {
                    accumulate(grads, *a, Some(vec![g[0]; self.value(*a).len()]));
                }
            }
            Op::Mse(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let k = 2.0 * g[0] / x.len() as f64;
                if needs(*a) {
                    accumulate(grads, *a, Some(x.iter().zip(y).map(|(p, q)| k * (p - q)).collect()));
                }
                if needs(*b) {
                    accumulate(grads, *b, Some(x.iter().zip(y).map(|(p, q)| k * (q - p)).collect()));
                }
            }
            Op::TvSquared(a) => {
                if needs(*a) {
                    let (c, h, w) = self.value(*a).dims3()?;
                    accumulate(grads, *a, Some(kernels::tv_squared_backward(self.value(*a).data(), c, h, w, g[0])));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Option<Vec<f64>>) {
    let Some(c) = contribution else { return };
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&c) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(c),
    }
}
