//! Convolution layers whose weights live in a [`ParamStore`].

use alloc::format;

use rand::Rng;

use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{Init, ParamId, ParamStore, Session};

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Options for [`Conv2d::new`]; `zero_init` zeroes the kernel too.
#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub zero_init: bool,
}

impl ConvSpec {
    /// 3×3 ("same" padding), stride 1, with bias.
    pub fn same(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            bias: true,
            zero_init: false,
        }
    }

    pub fn kernel(mut self, k: usize) -> Self {
        self.kernel = k;
        self
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn zeroed(mut self) -> Self {
        self.zero_init = true;
        self
    }
}

impl Conv2d {
    /// Registers `<name>.weight` (Kaiming fan-in or zeros) and `<name>.bias` (zeros).
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Result<Self> {
        let k = spec.kernel;
        let shape = [spec.out_channels, spec.in_channels, k, k];
        let init = if spec.zero_init {
            Init::Zeros
        } else {
            Init::KaimingNormal {
                fan_in: spec.in_channels * k * k,
            }
        };
        let weight = store.add(format!("{name}.weight"), init.sample(&shape, rng))?;
        let bias = if spec.bias {
            Some(store.add(format!("{name}.bias"), Init::Zeros.sample(&[spec.out_channels], rng))?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
            kernel: k,
            stride: spec.stride,
            pad: k / 2,
        })
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        s.graph.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// ×2 learned upsampling: 4×4 kernel, stride 2, padding 1.
#[derive(Clone, Debug)]
pub struct Deconv2x {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Deconv2x {
    pub fn new(store: &mut ParamStore, name: &str, in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Result<Self> {
        // each output pixel receives in_ch · (k/stride)² taps
        let init = Init::KaimingNormal { fan_in: in_ch * 4 };
        let weight = store.add(format!("{name}.weight"), init.sample(&[in_ch, out_ch, 4, 4], rng))?;
        let bias = store.add(format!("{name}.bias"), Init::Zeros.sample(&[out_ch], rng))?;
        Ok(Deconv2x { weight, bias })
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        s.graph.conv_transpose2d(x, w, Some(b), 2, 1)
    }
}
