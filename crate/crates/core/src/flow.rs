//! Optical flow between LR frames, flow-driven warping and the photometric
//! flow loss.
//!
//! A flow `F^{t→k}` is a `[2,H,W]` field in LR pixels (channel 0 vertical,
//! channel 1 horizontal). Warping frame `k` with it gives `X^{k→t}`, i.e.
//! `X^{k→t}(y,x) = X^k(y + F_y, x + F_x)`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvSpec};
use crate::params::{ParamStore, Session};
use crate::tensor::Tensor;

/// A dense displacement field from frame `source` to frame `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub data: Tensor,
    pub source: usize,
    pub target: usize,
}

impl FlowField {
    pub fn new(data: Tensor, source: usize, target: usize) -> Result<Self> {
        let (c, _, _) = data.dims3()?;
        if c != 2 {
            return Err(Error::shape("FlowField", &[data.shape()], "flow must have 2 channels"));
        }
        if !data.is_finite() {
            return Err(Error::NonFinite(format!("flow {source}→{target}")));
        }
        Ok(FlowField { data, source, target })
    }

    /// The identity flow `F^{t→t}`.
    pub fn identity(t: usize, h: usize, w: usize) -> Self {
        FlowField {
            data: Tensor::zeros(&[2, h, w]),
            source: t,
            target: t,
        }
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Mean of `component` (0 vertical, 1 horizontal) over pixels at least
    /// `margin` away from every border.
    pub fn interior_mean(&self, component: usize, margin: usize, f: impl Fn(f64) -> f64) -> f64 {
        let (h, w) = (self.height(), self.width());
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in margin..h.saturating_sub(margin) {
            for x in margin..w.saturating_sub(margin) {
                sum += f(self.data.at3(component, y, x));
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Plain conv stack: `[X^t, X^k]` → 2-channel flow, ReLU between layers and
/// a zero-initialised last layer so training starts from the identity warp.
#[derive(Clone, Debug)]
pub struct FlowNet {
    layers: Vec<Conv2d>,
}

impl FlowNet {
    pub fn new(store: &mut ParamStore, prefix: &str, channels: usize, widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.last() != Some(&2) {
            return Err(Error::invalid("flow network must end with 2 channels"));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut c_in = 2 * channels;
        for (i, &w) in widths.iter().enumerate() {
            let mut spec = ConvSpec::same(c_in, w);
            if i + 1 == widths.len() {
                spec = spec.zeroed();
            }
            layers.push(Conv2d::new(store, &format!("{prefix}.conv{i}"), spec, rng)?);
            c_in = w;
        }
        Ok(FlowNet { layers })
    }

    pub fn forward(&self, s: &mut Session<'_>, x_t: Var, x_k: Var) -> Result<Var> {
        if s.graph.shape(x_t) != s.graph.shape(x_k) {
            return Err(Error::shape(
                "estimate_flow",
                &[s.graph.shape(x_t), s.graph.shape(x_k)],
                "frames differ in shape",
            ));
        }
        let mut x = s.graph.concat(&[x_t, x_k])?;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(s, x)?;
            if i + 1 < self.layers.len() {
                x = s.graph.relu(x)?;
            }
        }
        Ok(x)
    }
}

/// Estimates `F^{t→k}` outside of any training graph.
pub fn estimate_flow(net: &FlowNet, store: &ParamStore, x_t: &Tensor, x_k: &Tensor, t: usize, k: usize) -> Result<FlowField> {
    let mut s = Session::frozen(store);
    let a = s.constant(x_t.clone());
    let b = s.constant(x_k.clone());
    let f = net.forward(&mut s, a, b)?;
    FlowField::new(s.graph.value(f).clone(), t, k)
}

/// `X^{k→t}`: bilinear warp of `x_k` along `flow`, recorded on the graph.
pub fn warp(s: &mut Session<'_>, x_k: Var, flow: Var) -> Result<Var> {
    s.graph.bilinear_sample(x_k, flow)
}

/// Warps a tensor without recording.
pub fn warp_lr(x_k: &Tensor, flow: &FlowField) -> Result<Tensor> {
    crate::autodiff::bilinear_sample(x_k, &flow.data)
}

/// Bilinear ×`r` upsampling of a flow with displacements scaled by `r`, so
/// the result is measured in HR pixels.
pub fn upsample_flow(s: &mut Session<'_>, flow: Var, r: usize) -> Result<Var> {
    s.graph.resize(flow, r, r as f64)
}

pub fn upsample_flow_field(flow: &FlowField, r: usize) -> Result<FlowField> {
    let mut s = Session::frozen_empty();
    let f = s.constant(flow.data.clone());
    let up = upsample_flow(&mut s, f, r)?;
    FlowField::new(s.graph.value(up).clone(), flow.source, flow.target)
}

/// Photometric error plus squared-gradient smoothness of one flow:
/// `‖X^{k→t} − X^t‖² / (c·w·h) + α / (2·w·h) · Σ (∇F)²`.
pub fn flow_loss_pair(s: &mut Session<'_>, warped: Var, x_t: Var, flow: Var, alpha: f64) -> Result<Var> {
    let (_, h, w) = s.graph.value(flow).dims3()?;
    let photo = s.graph.mse(warped, x_t)?;
    if alpha == 0.0 {
        return Ok(photo);
    }
    let tv = s.graph.tv_squared(flow)?;
    let tv = s.graph.scale(tv, alpha / (2.0 * (w * h) as f64))?;
    s.graph.add(photo, tv)
}

/// Mean of the `2·T1` pair losses of one frame (the γ weight is applied by
/// the caller, once).
pub fn flow_loss_total(s: &mut Session<'_>, pair_losses: &[Var], t1: usize) -> Result<Var> {
    if pair_losses.len() != 2 * t1 {
        return Err(Error::invalid(format!(
            "expected {} flow pair losses, got {}",
            2 * t1,
            pair_losses.len()
        )));
    }
    let Some((&first, rest)) = pair_losses.split_first() else {
        return Ok(s.constant(Tensor::scalar(0.0)));
    };
    let mut acc = first;
    for &l in rest {
        acc = s.graph.add(acc, l)?;
    }
    s.graph.scale(acc, 1.0 / pair_losses.len() as f64)
}
