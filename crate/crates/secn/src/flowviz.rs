//! Colour coding of flow fields: hue follows direction, saturation follows
//! magnitude relative to the largest vector.

use image::{Rgb, RgbImage};
use secn_core::flow::FlowField;

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// White for zero motion; fully saturated for the longest vector (or for
/// `max_magnitude` when given).
pub fn render(flow: &FlowField, max_magnitude: Option<f64>) -> RgbImage {
    let (h, w) = (flow.height(), flow.width());
    let d = flow.data.data();
    let mag = |i: usize| d[i].hypot(d[h * w + i]);
    let peak = max_magnitude.unwrap_or_else(|| (0..h * w).map(mag).fold(0.0, f64::max));
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let (fy, fx) = (d[i], d[h * w + i]);
        let s = if peak > 0.0 { (mag(i) / peak).min(1.0) } else { 0.0 };
        let hue = fy.atan2(fx) / (2.0 * std::f64::consts::PI);
        Rgb(hsv(hue, s, 1.0))
    })
}
