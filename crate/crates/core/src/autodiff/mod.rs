//! Reverse-mode automatic differentiation over dense tensors, plus Adam.

mod adam;
pub mod gradcheck;
mod graph;
pub(crate) mod kernels;

pub use adam::{Adam, AdamConfig, AdamState};
pub use graph::{Activation, Graph, Var};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Shuffles a tensor without recording it (`[s²D,H,W] → [D,sH,sW]`).
pub fn pixel_shuffle(t: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if factor == 0 || c % (factor * factor) != 0 {
        return Err(Error::shape("pixel_shuffle", &[t.shape()], "channel count not divisible by s²"));
    }
    Tensor::new(
        &[c / (factor * factor), h * factor, w * factor],
        kernels::pixel_shuffle(t.data(), c, h, w, factor),
    )
}

/// Inverse of [`pixel_shuffle`] (`[D,sH,sW] → [s²D,H,W]`).
pub fn pixel_unshuffle(t: &Tensor, factor: usize) -> Result<Tensor> {
    let (d, sh, sw) = t.dims3()?;
    if factor == 0 || sh % factor != 0 || sw % factor != 0 {
        return Err(Error::shape("pixel_unshuffle", &[t.shape()], "extent not divisible by s"));
    }
    let (h, w) = (sh / factor, sw / factor);
    let c = d * factor * factor;
    Tensor::new(&[c, h, w], kernels::pixel_unshuffle(t.data(), c, h, w, factor))
}

/// Bilinear warp without recording (see [`Graph::bilinear_sample`]).
pub fn bilinear_sample(image: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (i, f) = (g.constant(image.clone()), g.constant(flow.clone()));
    let out = g.bilinear_sample(i, f)?;
    Ok(g.value(out).clone())
}

/// Collects the values of several vars, in order.
pub fn values(g: &Graph, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|&v| g.value(v).clone()).collect()
}
