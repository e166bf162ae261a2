//! Dense row-major `f64` arrays.
//!
//! Image-like tensors are `[channels, height, width]`; convolution kernels are
//! `[out, in, k, k]` (transposed convolutions use `[in, out, k, k]`). A scalar
//! has rank 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(
                "tensor",
                &[shape],
                alloc::format!("{} values for {} slots", data.len(), len),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(channels, height, width)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(Error::shape("dims3", &[s], "expected [C,H,W]")),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape("reshape", &[&self.shape, shape], "element count differs"));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape("zip_map", &[&self.shape, &other.shape], "shapes differ"));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Concatenates rank-3 tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let (_, h, w) = first.dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape("concat", &[first.shape(), p.shape()], "spatial extents differ"));
            }
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Tensor::new(&[channels, h, w], data)
    }

    /// Channels `start..start + count` of a rank-3 tensor.
    pub fn channel_range(&self, start: usize, count: usize) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        if start + count > c {
            return Err(Error::shape("channel_range", &[&self.shape], "range past channel count"));
        }
        let plane = h * w;
        Tensor::new(
            &[count, h, w],
            self.data[start * plane..(start + count) * plane].to_vec(),
        )
    }

    /// Mirror along the width axis.
    pub fn flip_horizontal(&self) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        let mut out = Tensor::zeros(&[c, h, w]);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set3(ch, y, x, self.at3(ch, y, w - 1 - x));
                }
            }
        }
        Ok(out)
    }

    /// Window `[y0, y0+h) × [x0, x0+w)` of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor> {
        let (c, ih, iw) = self.dims3()?;
        if y0 + h > ih || x0 + w > iw {
            return Err(Error::shape("crop", &[&self.shape], "crop window exceeds image"));
        }
        let mut out = Tensor::zeros(&[c, h, w]);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set3(ch, y, x, self.at3(ch, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }
}
