//! Enhanced recurrent frame fusion: warped previous HR outputs are stacked
//! with `Ŷ^t`, encoded at three scales, the deepest feature goes through
//! sequential encoding, and the decoder adds a refinement map to `Ŷ^t`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::config::ErffConfig;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvSpec, Deconv2x};
use crate::params::{ParamStore, Session};
use crate::ring::RingBuffer;
use crate::tensor::Tensor;

/// `x + σ(attn(x)) ⊙ res(x)`; without attention the gate is 1.
#[derive(Clone, Debug)]
pub struct AttentionResBlock {
    res: [Conv2d; 2],
    attn: Option<[Conv2d; 2]>,
}

impl AttentionResBlock {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, attention: bool, rng: &mut impl Rng) -> Result<Self> {
        let res = [
            Conv2d::new(store, &format!("{name}.res0"), ConvSpec::same(width, width), rng)?,
            Conv2d::new(store, &format!("{name}.res1"), ConvSpec::same(width, width), rng)?,
        ];
        let attn = if attention {
            let hidden = (width / 2).max(1);
            Some([
                Conv2d::new(store, &format!("{name}.attn0"), ConvSpec::same(width, hidden), rng)?,
                Conv2d::new(store, &format!("{name}.attn1"), ConvSpec::same(hidden, 1), rng)?,
            ])
        } else {
            None
        };
        Ok(AttentionResBlock { res, attn })
    }

    /// Spatial attention map `[1,H,W]`, or `None` when attention is disabled.
    pub fn attention_map(&self, s: &mut Session<'_>, x: Var) -> Result<Option<Var>> {
        let Some([a0, a1]) = &self.attn else { return Ok(None) };
        let a = a0.forward(s, x)?;
        let a = s.graph.relu(a)?;
        let a = a1.forward(s, a)?;
        Ok(Some(s.graph.sigmoid(a)?))
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        let r = self.res[0].forward(s, x)?;
        let r = s.graph.relu(r)?;
        let r = self.res[1].forward(s, r)?;
        let r = match self.attention_map(s, x)? {
            Some(map) => s.graph.mul_map(r, map)?,
            None => r,
        };
        s.graph.add(x, r)
    }
}

/// Encoder features at full, 1/2 and 1/4 resolution.
#[derive(Clone, Copy, Debug)]
pub struct Features {
    pub e1: Var,
    pub e2: Var,
    pub e3: Var,
}

#[derive(Clone, Debug)]
pub struct Erff {
    in_channels: usize,
    enc1: [Conv2d; 2],
    enc2: [Conv2d; 2],
    enc3: Conv2d,
    enc_blocks: Vec<AttentionResBlock>,
    dec_blocks: Vec<AttentionResBlock>,
    up2: Deconv2x,
    dec2: Conv2d,
    up1: Deconv2x,
    dec1: Conv2d,
    output: Conv2d,
}

impl Erff {
    /// Encoder input is `channels · (T2 + 1)`. Residual blocks are split
    /// between the deepest encoder scale (rounded up) and the decoder.
    pub fn new(store: &mut ParamStore, prefix: &str, channels: usize, t2: usize, cfg: &ErffConfig, rng: &mut impl Rng) -> Result<Self> {
        let [w1, w2, w3] = cfg.widths;
        let c_in = channels * (t2 + 1);
        let conv = |store: &mut ParamStore, rng: &mut _, name: &str, spec| Conv2d::new(store, &format!("{prefix}.{name}"), spec, rng);
        let enc1 = [
            conv(store, rng, "enc1a", ConvSpec::same(c_in, w1))?,
            conv(store, rng, "enc1b", ConvSpec::same(w1, w1))?,
        ];
        let enc2 = [
            conv(store, rng, "enc2a", ConvSpec::same(w1, w2).stride(2))?,
            conv(store, rng, "enc2b", ConvSpec::same(w2, w2))?,
        ];
        let enc3 = conv(store, rng, "enc3", ConvSpec::same(w2, w3).stride(2))?;
        let n_dec = cfg.res_blocks / 2;
        let n_enc = cfg.res_blocks - n_dec;
        let enc_blocks = (0..n_enc)
            .map(|i| AttentionResBlock::new(store, &format!("{prefix}.enc_block{i}"), w3, cfg.attention, rng))
            .collect::<Result<Vec<_>>>()?;
        let dec_blocks = (0..n_dec)
            .map(|i| AttentionResBlock::new(store, &format!("{prefix}.dec_block{i}"), w3, cfg.attention, rng))
            .collect::<Result<Vec<_>>>()?;
        let up2 = Deconv2x::new(store, &format!("{prefix}.up2"), w3, w2, rng)?;
        let dec2 = conv(store, rng, "dec2", ConvSpec::same(w2, w2))?;
        let up1 = Deconv2x::new(store, &format!("{prefix}.up1"), w2, w1, rng)?;
        let dec1 = conv(store, rng, "dec1", ConvSpec::same(w1, w1))?;
        let output = conv(store, rng, "output", ConvSpec::same(w1, channels).zeroed())?;
        Ok(Erff {
            in_channels: c_in,
            enc1,
            enc2,
            enc3,
            enc_blocks,
            dec_blocks,
            up2,
            dec2,
            up1,
            dec1,
            output,
        })
    }

    pub fn encode(&self, s: &mut Session<'_>, input: Var) -> Result<Features> {
        let (c, h, w) = s.graph.value(input).dims3()?;
        if c != self.in_channels || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(
                "encode",
                &[s.graph.shape(input)],
                format!("expected {} channels and extents divisible by 4", self.in_channels),
            ));
        }
        let mut x = input;
        for conv in &self.enc1 {
            x = conv.forward(s, x)?;
            x = s.graph.relu(x)?;
        }
        let e1 = x;
        for conv in &self.enc2 {
            x = conv.forward(s, x)?;
            x = s.graph.relu(x)?;
        }
        let e2 = x;
        x = self.enc3.forward(s, x)?;
        x = s.graph.relu(x)?;
        for block in &self.enc_blocks {
            x = block.forward(s, x)?;
        }
        Ok(Features { e1, e2, e3: x })
    }

    /// `Y^t = Ŷ^t + decoder(E_1, E_2, Ê_3)`.
    pub fn decode(&self, s: &mut Session<'_>, e1: Var, e2: Var, e3_hat: Var, y_hat: Var) -> Result<Var> {
        let mut x = e3_hat;
        for block in &self.dec_blocks {
            x = block.forward(s, x)?;
        }
        let x = self.up2.forward(s, x)?;
        let x = s.graph.relu(x)?;
        let x = skip(s, x, e2)?;
        let x = self.dec2.forward(s, x)?;
        let x = s.graph.relu(x)?;
        let x = self.up1.forward(s, x)?;
        let x = s.graph.relu(x)?;
        let x = skip(s, x, e1)?;
        let x = self.dec1.forward(s, x)?;
        let x = s.graph.relu(x)?;
        let refine = self.output.forward(s, x)?;
        if s.graph.shape(refine) != s.graph.shape(y_hat) {
            return Err(Error::shape("decode", &[s.graph.shape(refine), s.graph.shape(y_hat)], "refinement does not match Ŷ"));
        }
        s.graph.add(y_hat, refine)
    }
}

fn skip(s: &mut Session<'_>, x: Var, e: Var) -> Result<Var> {
    if s.graph.shape(x) != s.graph.shape(e) {
        return Err(Error::shape("decode", &[s.graph.shape(x), s.graph.shape(e)], "skip connection scale mismatch"));
    }
    s.graph.add(x, e)
}

/// `[Ŷ^t, Y^{t−1→t}, …, Y^{t−T2→t}]`. `prev[j]` is `Y^{t−1−j}` (`None`
/// before the first frame, treated as zeros) and `hr_flows[j]` the matching
/// upsampled flow.
pub fn fuse_inputs(s: &mut Session<'_>, y_hat: Var, prev: &[Option<Var>], hr_flows: &[Option<Var>]) -> Result<Var> {
    if prev.len() != hr_flows.len() {
        return Err(Error::invalid(format!(
            "{} previous frames but {} flows",
            prev.len(),
            hr_flows.len()
        )));
    }
    if prev.is_empty() {
        return Ok(y_hat);
    }
    let shape = s.graph.shape(y_hat).to_vec();
    let mut parts = Vec::with_capacity(prev.len() + 1);
    parts.push(y_hat);
    for (y, f) in prev.iter().zip(hr_flows) {
        let warped = match (y, f) {
            (Some(y), Some(f)) => s.graph.bilinear_sample(*y, *f)?,
            (Some(y), None) => *y,
            (None, _) => s.zeros(&shape),
        };
        parts.push(warped);
    }
    s.graph.concat(&parts)
}

/// Previous HR outputs kept for recurrent fusion; holds at most `T2` frames.
#[derive(Clone, Debug)]
pub struct FrameFusionState {
    frames: RingBuffer<Tensor>,
}

impl FrameFusionState {
    pub fn new(t2: usize) -> Self {
        FrameFusionState {
            frames: RingBuffer::new(t2),
        }
    }

    pub fn push(&mut self, y: Tensor) {
        self.frames.push(y);
    }

    /// `Y^{t−j}` for `j = 1…T2`, `None` where no frame exists yet.
    pub fn previous(&self) -> Vec<Option<&Tensor>> {
        (1..=self.frames.capacity()).map(|j| self.frames.back(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
