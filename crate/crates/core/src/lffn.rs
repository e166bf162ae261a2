//! Local frame fusion: a residual dense network over `2·T1 + 1` aligned LR
//! frames that produces the initial HR estimate `Ŷ^t`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::config::LffnConfig;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvSpec};
use crate::params::{ParamStore, Session};

/// Densely connected 3×3 convs, a 1×1 fusion back to the input width, and an
/// identity skip.
#[derive(Clone, Debug)]
pub struct ResidualDenseBlock {
    layers: Vec<Conv2d>,
    fusion: Conv2d,
    width: usize,
}

impl ResidualDenseBlock {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, layers: usize, growth: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut convs = Vec::with_capacity(layers);
        for i in 0..layers {
            let spec = ConvSpec::same(width + i * growth, growth);
            convs.push(Conv2d::new(store, &format!("{name}.conv{i}"), spec, rng)?);
        }
        let fusion = Conv2d::new(
            store,
            &format!("{name}.fuse"),
            ConvSpec::same(width + layers * growth, width).kernel(1),
            rng,
        )?;
        Ok(ResidualDenseBlock {
            layers: convs,
            fusion,
            width,
        })
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        let c = s.graph.shape(x).first().copied().unwrap_or(0);
        if c != self.width {
            return Err(Error::shape("rdb_forward", &[s.graph.shape(x)], format!("expected {} channels", self.width)));
        }
        let mut features = Vec::with_capacity(self.layers.len() + 1);
        features.push(x);
        for layer in &self.layers {
            let input = if features.len() == 1 { x } else { s.graph.concat(&features)? };
            let y = layer.forward(s, input)?;
            features.push(s.graph.relu(y)?);
        }
        let all = if features.len() == 1 { x } else { s.graph.concat(&features)? };
        let fused = self.fusion.forward(s, all)?;
        s.graph.add(fused, x)
    }
}

/// Shallow conv → RDB chain with global fusion and residual → two
/// (conv, ×2 pixel shuffle) stages → output conv.
#[derive(Clone, Debug)]
pub struct Lffn {
    frames: usize,
    shallow: Conv2d,
    blocks: Vec<ResidualDenseBlock>,
    global_fuse: Conv2d,
    global_conv: Conv2d,
    up: [Conv2d; 2],
    output: Conv2d,
}

impl Lffn {
    /// `frames` aligned inputs of `channels` each; the output head starts at zero.
    pub fn new(store: &mut ParamStore, prefix: &str, channels: usize, frames: usize, cfg: &LffnConfig, rng: &mut impl Rng) -> Result<Self> {
        let w = cfg.width;
        let shallow = Conv2d::new(store, &format!("{prefix}.shallow"), ConvSpec::same(channels * frames, w), rng)?;
        let blocks = (0..cfg.blocks)
            .map(|i| ResidualDenseBlock::new(store, &format!("{prefix}.rdb{i}"), w, cfg.layers, cfg.growth, rng))
            .collect::<Result<Vec<_>>>()?;
        let global_fuse = Conv2d::new(
            store,
            &format!("{prefix}.global_fuse"),
            ConvSpec::same(w * cfg.blocks, w).kernel(1),
            rng,
        )?;
        let global_conv = Conv2d::new(store, &format!("{prefix}.global_conv"), ConvSpec::same(w, w), rng)?;
        let [u0, u1] = cfg.up_widths;
        let up = [
            Conv2d::new(store, &format!("{prefix}.up0"), ConvSpec::same(w, 4 * u0), rng)?,
            Conv2d::new(store, &format!("{prefix}.up1"), ConvSpec::same(u0, 4 * u1), rng)?,
        ];
        let output = Conv2d::new(store, &format!("{prefix}.output"), ConvSpec::same(u1, channels).zeroed(), rng)?;
        Ok(Lffn {
            frames,
            shallow,
            blocks,
            global_fuse,
            global_conv,
            up,
            output,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `aligned` in temporal order `X^{t−T1→t} … X^t … X^{t+T1→t}`.
    pub fn forward(&self, s: &mut Session<'_>, aligned: &[Var]) -> Result<Var> {
        if aligned.len() != self.frames {
            return Err(Error::invalid(format!(
                "local fusion expects {} aligned frames, got {}",
                self.frames,
                aligned.len()
            )));
        }
        let x = if aligned.len() == 1 { aligned[0] } else { s.graph.concat(aligned)? };
        let f0 = self.shallow.forward(s, x)?;
        let mut f = f0;
        let mut outs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            f = block.forward(s, f)?;
            outs.push(f);
        }
        let cat = if outs.len() == 1 { outs[0] } else { s.graph.concat(&outs)? };
        let g = self.global_fuse.forward(s, cat)?;
        let g = self.global_conv.forward(s, g)?;
        let mut f = s.graph.add(g, f0)?;
        for conv in &self.up {
            let y = conv.forward(s, f)?;
            let y = s.graph.pixel_shuffle(y, 2)?;
            f = s.graph.relu(y)?;
        }
        self.output.forward(s, f)
    }
}

/// Mean squared error between `Ŷ^t` and the ground truth.
pub fn lffn_loss(s: &mut Session<'_>, y_hat: Var, gt: Var) -> Result<Var> {
    s.graph.mse(y_hat, gt)
}
