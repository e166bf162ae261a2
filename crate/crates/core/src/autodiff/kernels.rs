//! Raw forward/backward kernels over flat slices. Shape validation happens in
//! the graph layer; these functions assume consistent extents.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Sliding-window geometry shared by `im2col` and `col2im`.
///
/// `channels × in_h × in_w` is the image side, `out_h × out_w` the grid of
/// window positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// True when im2col would be the identity (1×1, stride 1, no padding).
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

pub(crate) fn transpose_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if input == 0 || stride == 0 {
        return None;
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * pad {
        None
    } else {
        Some(full - 2 * pad)
    }
}

/// Output columns `[lo, hi)` whose tap `kx` lands inside the image row.
#[inline]
fn valid_span(k_off: usize, stride: usize, pad: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k_off {
        (pad - k_off + stride - 1) / stride
    } else {
        0
    };
    let hi = if in_len + pad > k_off {
        ((in_len - 1 + pad - k_off) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

pub(crate) fn im2col(src: &[f64], g: &Geometry, dst: &mut [f64]) {
    let (k, s, pad) = (g.kernel, g.stride, g.pad);
    let plane = g.positions();
    let in_plane = g.in_h * g.in_w;
    debug_assert!(dst.len() >= g.col_rows() * plane);
    for c in 0..g.channels {
        let img = &src[c * in_plane..(c + 1) * in_plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let out = &mut dst[row..row + plane];
                let (x0, x1) = valid_span(kx, s, pad, g.in_w, g.out_w);
                for oy in 0..g.out_h {
                    let line = &mut out[oy * g.out_w..(oy + 1) * g.out_w];
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.in_h as isize || x0 >= x1 {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &img[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    line[..x0].fill(0.0);
                    line[x1..].fill(0.0);
                    if s == 1 {
                        let ix0 = x0 + kx - pad;
                        line[x0..x1].copy_from_slice(&src_row[ix0..ix0 + (x1 - x0)]);
                    } else {
                        for ox in x0..x1 {
                            line[ox] = src_row[ox * s + kx - pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back onto the image.
pub(crate) fn col2im(col: &[f64], g: &Geometry, dst: &mut [f64]) {
    let (k, s, pad) = (g.kernel, g.stride, g.pad);
    let plane = g.positions();
    let in_plane = g.in_h * g.in_w;
    for c in 0..g.channels {
        let img = &mut dst[c * in_plane..(c + 1) * in_plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * plane;
                let src = &col[row..row + plane];
                let (x0, x1) = valid_span(kx, s, pad, g.in_w, g.out_w);
                if x0 >= x1 {
                    continue;
                }
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst_row = &mut img[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    if s == 1 {
                        let ix0 = x0 + kx - pad;
                        for (d, v) in dst_row[ix0..ix0 + (x1 - x0)].iter_mut().zip(&line[x0..x1]) {
                            *d += *v;
                        }
                    } else {
                        for ox in x0..x1 {
                            dst_row[ox * s + kx - pad] += line[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Strided view of a row-major matrix operand.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major `rows × cols` matrix.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }

    fn max_index(&self, rows: usize, cols: usize) -> usize {
        (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    assert!(a.max_index(m, k) < a.data.len(), "gemm: lhs operand too short");
    assert!(b.max_index(k, n) < b.data.len(), "gemm: rhs operand too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    // SAFETY: every index touched by the kernel is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation. `weight` is `[d, c, k, k]`, the result `[d, out_h, out_w]`.
pub(crate) fn conv2d_forward(x: &[f64], weight: &[f64], bias: Option<&[f64]>, out_ch: usize, g: &Geometry) -> Vec<f64> {
    let p = g.positions();
    let rows = g.col_rows();
    let mut out = vec![0.0; out_ch * p];
    if g.is_pointwise() {
        gemm(out_ch, rows, p, MatRef::rows(weight, rows), MatRef::rows(x, p), 0.0, &mut out);
    } else {
        let mut col = vec![0.0; rows * p];
        im2col(x, g, &mut col);
        gemm(out_ch, rows, p, MatRef::rows(weight, rows), MatRef::rows(&col, p), 0.0, &mut out);
    }
    if let Some(b) = bias {
        add_channel_bias(&mut out, b, p);
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    out_ch: usize,
    g: &Geometry,
    need: (bool, bool, bool),
) -> ConvGrads {
    let p = g.positions();
    let rows = g.col_rows();
    let (need_x, need_w, need_b) = need;
    let mut grads = ConvGrads {
        input: None,
        weight: None,
        bias: None,
    };
    if need_w {
        let mut gw = vec![0.0; out_ch * rows];
        if g.is_pointwise() {
            gemm(out_ch, p, rows, MatRef::rows(grad_out, p), MatRef::transposed(x, p), 0.0, &mut gw);
        } else {
            let mut col = vec![0.0; rows * p];
            im2col(x, g, &mut col);
            gemm(out_ch, p, rows, MatRef::rows(grad_out, p), MatRef::transposed(&col, p), 0.0, &mut gw);
        }
        grads.weight = Some(gw);
    }
    if need_x {
        let mut gcol = vec![0.0; rows * p];
        gemm(rows, out_ch, p, MatRef::transposed(weight, rows), MatRef::rows(grad_out, p), 0.0, &mut gcol);
        if g.is_pointwise() {
            grads.input = Some(gcol);
        } else {
            let mut gx = vec![0.0; g.channels * g.in_h * g.in_w];
            col2im(&gcol, g, &mut gx);
            grads.input = Some(gx);
        }
    }
    if need_b {
        grads.bias = Some(channel_sums(grad_out, out_ch, p));
    }
    grads
}

/// Transposed convolution. `weight` is `[c_in, d, k, k]`; `g` describes the
/// *output* image as the im2col image side and the input grid as positions.
pub(crate) fn conv_transpose2d_forward(x: &[f64], weight: &[f64], bias: Option<&[f64]>, in_ch: usize, g: &Geometry) -> Vec<f64> {
    let p = g.positions();
    let rows = g.col_rows();
    let mut cols = vec![0.0; rows * p];
    gemm(rows, in_ch, p, MatRef::transposed(weight, rows), MatRef::rows(x, p), 0.0, &mut cols);
    let plane = g.in_h * g.in_w;
    let mut out = vec![0.0; g.channels * plane];
    col2im(&cols, g, &mut out);
    if let Some(b) = bias {
        add_channel_bias(&mut out, b, plane);
    }
    out
}

pub(crate) fn conv_transpose2d_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    in_ch: usize,
    g: &Geometry,
    need: (bool, bool, bool),
) -> ConvGrads {
    let p = g.positions();
    let rows = g.col_rows();
    let (need_x, need_w, need_b) = need;
    let mut gcols = vec![0.0; rows * p];
    if need_x || need_w {
        im2col(grad_out, g, &mut gcols);
    }
    let mut grads = ConvGrads {
        input: None,
        weight: None,
        bias: None,
    };
    if need_x {
        let mut gx = vec![0.0; in_ch * p];
        gemm(in_ch, rows, p, MatRef::rows(weight, rows), MatRef::rows(&gcols, p), 0.0, &mut gx);
        grads.input = Some(gx);
    }
    if need_w {
        let mut gw = vec![0.0; in_ch * rows];
        gemm(in_ch, p, rows, MatRef::rows(x, p), MatRef::transposed(&gcols, p), 0.0, &mut gw);
        grads.weight = Some(gw);
    }
    if need_b {
        grads.bias = Some(channel_sums(grad_out, g.channels, g.in_h * g.in_w));
    }
    grads
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn channel_sums(data: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    (0..channels)
        .map(|d| data[d * plane..(d + 1) * plane].iter().sum())
        .collect()
}

/// Channel `c·s² + dy·s + dx` at `(y, x)` moves to channel `c` at `(s·y+dy, s·x+dx)`.
pub(crate) fn pixel_shuffle(x: &[f64], channels: usize, h: usize, w: usize, s: usize) -> Vec<f64> {
    let d = channels / (s * s);
    let (oh, ow) = (h * s, w * s);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..d {
        for dy in 0..s {
            for dx in 0..s {
                let src_c = c * s * s + dy * s + dx;
                for y in 0..h {
                    for xx in 0..w {
                        out[(c * oh + y * s + dy) * ow + xx * s + dx] = x[(src_c * h + y) * w + xx];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle`]; `channels`, `h`, `w` describe the shuffled side.
pub(crate) fn pixel_unshuffle(y: &[f64], channels: usize, h: usize, w: usize, s: usize) -> Vec<f64> {
    let (oh, ow) = (h * s, w * s);
    let d = channels / (s * s);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..d {
        for dy in 0..s {
            for dx in 0..s {
                let dst_c = c * s * s + dy * s + dx;
                for yy in 0..h {
                    for xx in 0..w {
                        out[(dst_c * h + yy) * w + xx] = y[(c * oh + yy * s + dy) * ow + xx * s + dx];
                    }
                }
            }
        }
    }
    out
}

/// Bilinear tap for a clamped sample position.
#[derive(Clone, Copy, Debug)]
struct Tap {
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
    wy: f64,
    wx: f64,
    /// Whether the unclamped coordinate was inside the image (clamp slope).
    in_y: bool,
    in_x: bool,
}

#[inline]
fn tap(sy: f64, sx: f64, h: usize, w: usize) -> Tap {
    let (maxy, maxx) = ((h - 1) as f64, (w - 1) as f64);
    let in_y = (0.0..=maxy).contains(&sy);
    let in_x = (0.0..=maxx).contains(&sx);
    let cy = sy.clamp(0.0, maxy);
    let cx = sx.clamp(0.0, maxx);
    let y0 = (math::floor(cy) as usize).min(h - 1);
    let x0 = (math::floor(cx) as usize).min(w - 1);
    Tap {
        y0,
        y1: (y0 + 1).min(h - 1),
        x0,
        x1: (x0 + 1).min(w - 1),
        wy: cy - y0 as f64,
        wx: cx - x0 as f64,
        in_y,
        in_x,
    }
}

/// `out(c, y, x) = image(c, y + flow_y, x + flow_x)` with border clamping.
pub(crate) fn bilinear_forward(image: &[f64], flow: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; c * plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = tap(y as f64 + flow[i], x as f64 + flow[plane + i], h, w);
            for ch in 0..c {
                let img = &image[ch * plane..(ch + 1) * plane];
                let top = img[t.y0 * w + t.x0] * (1.0 - t.wx) + img[t.y0 * w + t.x1] * t.wx;
                let bot = img[t.y1 * w + t.x0] * (1.0 - t.wx) + img[t.y1 * w + t.x1] * t.wx;
                out[ch * plane + i] = top * (1.0 - t.wy) + bot * t.wy;
            }
        }
    }
    out
}

pub(crate) fn bilinear_backward(
    image: &[f64],
    flow: &[f64],
    grad_out: &[f64],
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut g_img = vec![0.0; c * plane];
    let mut g_flow = vec![0.0; 2 * plane];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = tap(y as f64 + flow[i], x as f64 + flow[plane + i], h, w);
            let (mut gy, mut gx) = (0.0, 0.0);
            for ch in 0..c {
                let g = grad_out[ch * plane + i];
                if g == 0.0 {
                    continue;
                }
                let img = &image[ch * plane..(ch + 1) * plane];
                let (a, b) = (img[t.y0 * w + t.x0], img[t.y0 * w + t.x1]);
                let (cc, d) = (img[t.y1 * w + t.x0], img[t.y1 * w + t.x1]);
                let gi = &mut g_img[ch * plane..(ch + 1) * plane];
                gi[t.y0 * w + t.x0] += g * (1.0 - t.wy) * (1.0 - t.wx);
                gi[t.y0 * w + t.x1] += g * (1.0 - t.wy) * t.wx;
                gi[t.y1 * w + t.x0] += g * t.wy * (1.0 - t.wx);
                gi[t.y1 * w + t.x1] += g * t.wy * t.wx;
                gy += g * ((1.0 - t.wx) * (cc - a) + t.wx * (d - b));
                gx += g * ((1.0 - t.wy) * (b - a) + t.wy * (d - cc));
            }
            if t.in_y {
                g_flow[i] = gy;
            }
            if t.in_x {
                g_flow[plane + i] = gx;
            }
        }
    }
    (g_img, g_flow)
}

/// Bilinear ×`factor` resize in which high-resolution pixel `Y` reads
/// low-resolution coordinate `Y / factor` (clamped), then scales values.
pub(crate) fn resize_forward(x: &[f64], c: usize, h: usize, w: usize, factor: usize, value_scale: f64) -> Vec<f64> {
    let (oh, ow) = (h * factor, w * factor);
    let plane = h * w;
    let mut out = vec![0.0; c * oh * ow];
    let f = factor as f64;
    for yy in 0..oh {
        for xx in 0..ow {
            let t = tap(yy as f64 / f, xx as f64 / f, h, w);
            for ch in 0..c {
                let img = &x[ch * plane..(ch + 1) * plane];
                let top = img[t.y0 * w + t.x0] * (1.0 - t.wx) + img[t.y0 * w + t.x1] * t.wx;
                let bot = img[t.y1 * w + t.x0] * (1.0 - t.wx) + img[t.y1 * w + t.x1] * t.wx;
                out[(ch * oh + yy) * ow + xx] = value_scale * (top * (1.0 - t.wy) + bot * t.wy);
            }
        }
    }
    out
}

pub(crate) fn resize_backward(grad_out: &[f64], c: usize, h: usize, w: usize, factor: usize, value_scale: f64) -> Vec<f64> {
    let (oh, ow) = (h * factor, w * factor);
    let plane = h * w;
    let mut g = vec![0.0; c * plane];
    let f = factor as f64;
    for yy in 0..oh {
        for xx in 0..ow {
            let t = tap(yy as f64 / f, xx as f64 / f, h, w);
            for ch in 0..c {
                let go = value_scale * grad_out[(ch * oh + yy) * ow + xx];
                let gi = &mut g[ch * plane..(ch + 1) * plane];
                gi[t.y0 * w + t.x0] += go * (1.0 - t.wy) * (1.0 - t.wx);
                gi[t.y0 * w + t.x1] += go * (1.0 - t.wy) * t.wx;
                gi[t.y1 * w + t.x0] += go * t.wy * (1.0 - t.wx);
                gi[t.y1 * w + t.x1] += go * t.wy * t.wx;
            }
        }
    }
    g
}

/// Sum of squared forward differences along x and y over all channels.
pub(crate) fn tv_squared(x: &[f64], c: usize, h: usize, w: usize) -> f64 {
    let mut acc = 0.0;
    for ch in 0..c {
        let p = &x[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                let v = p[y * w + xx];
                if xx + 1 < w {
                    let d = p[y * w + xx + 1] - v;
                    acc += d * d;
                }
                if y + 1 < h {
                    let d = p[(y + 1) * w + xx] - v;
                    acc += d * d;
                }
            }
        }
    }
    acc
}

pub(crate) fn tv_squared_backward(x: &[f64], c: usize, h: usize, w: usize, g: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let off = ch * h * w;
        for y in 0..h {
            for xx in 0..w {
                let i = off + y * w + xx;
                if xx + 1 < w {
                    let d = 2.0 * g * (x[i + 1] - x[i]);
                    out[i + 1] += d;
                    out[i] -= d;
                }
                if y + 1 < h {
                    let d = 2.0 * g * (x[i + w] - x[i]);
                    out[i + w] += d;
                    out[i] -= d;
                }
            }
        }
    }
    out
}
