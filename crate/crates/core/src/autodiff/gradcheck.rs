//! Central finite-difference gradient checks.
//!
//! Errors are reported normwise: `max|a - n| / max(max|a|, max|n|, 1e-12)`,
//! which stays meaningful when individual gradient entries are near zero.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, Graph, Var};
use crate::error::Result;
use crate::params::{ParamStore, Session};
use crate::tensor::Tensor;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    diff / scale
}

/// Checks `d loss / d inputs[i]` for every input. `build` receives the inputs
/// as trainable leaves and must return a scalar. Returns one error per input.
pub fn check_inputs<F>(inputs: &[Tensor], step: f64, build: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss)?;
    let mut errors = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| alloc::vec![0.0; inputs[i].len()]);
        let mut numeric = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * step));
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

/// Outcome of [`check_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    /// `(parameter name, error)` in registration order.
    pub per_tensor: Vec<(String, f64)>,
    /// Error over all parameters at once.
    pub overall: f64,
    /// Entries whose stencil straddled a non-differentiable point and were
    /// estimated from the smooth side.
    pub kinks: usize,
}

impl ParamCheck {
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.per_tensor
            .iter()
            .map(|(n, e)| (n.as_str(), *e))
            .fold(None, |m, (n, e)| match m {
                Some((_, w)) if w >= e => m,
                _ => Some((n, e)),
            })
    }
}

/// Derivative from `f(x-2h) … f(x+2h)`. A kink within `h` of `x` shows up as
/// mismatched second differences on the two sides; the estimate then uses
/// the second-order one-sided stencil on the smooth side.
fn robust_derivative(f: [f64; 5], h: f64) -> (f64, bool) {
    let [m2, m1, f0, p1, p2] = f;
    let left = (f0 - 2.0 * m1 + m2).abs();
    let right = (p2 - 2.0 * p1 + f0).abs();
    let floor = 64.0 * f64::EPSILON * (1.0 + f0.abs());
    if (left - right).abs() > 0.5 * left.max(right) && left.max(right) > floor {
        if left < right {
            ((3.0 * f0 - 4.0 * m1 + m2) / (2.0 * h), true)
        } else {
            ((-3.0 * f0 + 4.0 * p1 - p2) / (2.0 * h), true)
        }
    } else {
        ((p1 - m1) / (2.0 * h), false)
    }
}

/// Checks every parameter of `store` against finite differences of `build`.
pub fn check_params<F>(store: &ParamStore, step: f64, build: F) -> Result<ParamCheck>
where
    F: Fn(&mut Session<'_>) -> Result<Var>,
{
    let mut session = Session::new(store);
    let loss = build(&mut session)?;
    let f0 = session.graph.value(loss).item();
    session.graph.backward(loss)?;
    let grads = session.param_grads();
    let mut work = store.clone();
    let mut per_tensor = Vec::new();
    let (mut all_a, mut all_n) = (Vec::new(), Vec::new());
    let mut kinks = 0;
    for id in store.ids() {
        let n = store.get(id).len();
        let analytic = grads
            .iter()
            .find(|(g, _)| *g == id)
            .map(|(_, t)| t.data().to_vec())
            .unwrap_or_else(|| alloc::vec![0.0; n]);
        let mut numeric = Vec::with_capacity(n);
        for j in 0..n {
            let orig = work.get(id).data()[j];
            let mut at = |d: f64| -> Result<f64> {
                work.get_mut(id).data_mut()[j] = orig + d;
                eval_store(&work, &build)
            };
            let f = [at(-2.0 * step)?, at(-step)?, f0, at(step)?, at(2.0 * step)?];
            work.get_mut(id).data_mut()[j] = orig;
            let (d, kink) = robust_derivative(f, step);
            kinks += kink as usize;
            numeric.push(d);
        }
        per_tensor.push((String::from(store.name(id)), relative_error(&analytic, &numeric)));
        all_a.extend(analytic);
        all_n.extend(numeric);
    }
    Ok(ParamCheck {
        per_tensor,
        overall: relative_error(&all_a, &all_n),
        kinks,
    })
}

fn eval_store<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Session<'_>) -> Result<Var>,
{
    let mut s = Session::frozen(store);
    let loss = build(&mut s)?;
    Ok(s.graph.value(loss).item())
}

/// Result of checking one op over several random draws.
#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub op: String,
    pub max_error: f64,
    pub threshold: f64,
    pub draws: usize,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_error < self.threshold
    }
}

pub const STEP: f64 = 1e-5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const ACTIVATION_TOLERANCE: f64 = 1e-8;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Uniform values whose magnitude is at least `gap`, away from kinks at 0.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
fn weighted_sum(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(out, w)?;
    g.sum(p)
}

/// Output shape of `build` evaluated on `inputs`, used to draw weights.
fn output_shape<F>(inputs: &[Tensor], build: &F) -> Result<Vec<usize>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    Ok(g.shape(out).to_vec())
}

/// Checks `build` (tensor-valued) through a random weighted sum.
fn check_op<F>(inputs: &[Tensor], rng: &mut impl Rng, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let shape = output_shape(inputs, &build)?;
    let weights = uniform(&shape, -1.0, 1.0, rng);
    let errs = check_inputs(inputs, STEP, |g, v| {
        let out = build(g, v)?;
        if g.shape(out).is_empty() {
            Ok(out)
        } else {
            weighted_sum(g, out, &weights)
        }
    })?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Finite-difference checks of every primitive over `draws` random shapes
/// and values each, seeded from `seed`.
pub fn primitive_suite(seed: u64, draws: usize) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, threshold: f64, rng: &mut ChaCha8Rng, f: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<f64>| -> Result<()> {
        let mut worst = 0.0f64;
        for _ in 0..draws {
            worst = worst.max(f(rng)?);
        }
        out.push(OpCheck {
            op: String::from(name),
            max_error: worst,
            threshold,
            draws,
        });
        Ok(())
    };

    run("conv2d", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let (c, d) = (rng.random_range(1..4), rng.random_range(1..4));
        let k = if rng.random_bool(0.5) { 3 } else { 1 };
        let stride = rng.random_range(1..3);
        let pad = if rng.random_bool(0.7) { k / 2 } else { 0 };
        let (h, w) = (rng.random_range(3..7), rng.random_range(3..7));
        let inputs = [uniform(&[c, h, w], -1.0, 1.0, rng), uniform(&[d, c, k, k], -1.0, 1.0, rng), uniform(&[d], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad))
    })?;
    run("conv_transpose2d", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let (c, d) = (rng.random_range(1..4), rng.random_range(1..4));
        let stride = rng.random_range(1..3);
        let (k, pad) = if stride == 2 { (4, 1) } else { (rng.random_range(1..4), 0) };
        let (h, w) = (rng.random_range(2..5), rng.random_range(2..5));
        let inputs = [uniform(&[c, h, w], -1.0, 1.0, rng), uniform(&[c, d, k, k], -1.0, 1.0, rng), uniform(&[d], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), stride, pad))
    })?;
    run("pixel_shuffle", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let s = rng.random_range(1..4);
        let d = rng.random_range(1..3);
        let (h, w) = (rng.random_range(1..4), rng.random_range(1..4));
        let inputs = [uniform(&[d * s * s, h, w], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.pixel_shuffle(v[0], s))
    })?;
    run("bilinear_sample", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let c = rng.random_range(1..4);
        let (h, w) = (rng.random_range(3..7), rng.random_range(3..7));
        let image = uniform(&[c, h, w], -1.0, 1.0, rng);
        // integer part in [-2, 2] plus a fraction kept away from cell edges
        let flow = Tensor::from_fn(&[2, h, w], |_| rng.random_range(-2i32..3) as f64 + rng.random_range(0.2..0.8));
        check_op(&[image, flow], rng, |g, v| g.bilinear_sample(v[0], v[1]))
    })?;
    run("resize", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let factor = rng.random_range(1..5);
        let scale = rng.random_range(0.5..4.0);
        let inputs = [uniform(&[rng.random_range(1..3), rng.random_range(1..5), rng.random_range(1..5)], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.resize(v[0], factor, scale))
    })?;
    for (name, kind) in [("relu", Activation::Relu), ("sigmoid", Activation::Sigmoid), ("tanh", Activation::Tanh)] {
        run(name, ACTIVATION_TOLERANCE, &mut rng, &mut |rng| {
            let inputs = [away_from_zero(&[2, 3, 4], 0.05, rng).scale(3.0)];
            check_op(&inputs, rng, |g, v| g.activation(v[0], kind))
        })?;
    }
    type Binary = fn(&mut Graph, Var, Var) -> Result<Var>;
    let binaries: [(&str, Binary); 4] = [
        ("add", |g, a, b| g.add(a, b)),
        ("sub", |g, a, b| g.sub(a, b)),
        ("mul", |g, a, b| g.mul(a, b)),
        ("mse", |g, a, b| g.mse(a, b)),
    ];
    for (name, op) in binaries {
        run(name, PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
            let shape = [rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)];
            let inputs = [uniform(&shape, -1.0, 1.0, rng), uniform(&shape, -1.0, 1.0, rng)];
            check_op(&inputs, rng, |g, v| op(g, v[0], v[1]))
        })?;
    }
    run("scale", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let f = rng.random_range(-3.0..3.0);
        let inputs = [uniform(&[2, 3, 3], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.scale(v[0], f))
    })?;
    run("mul_map", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let (d, h, w) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5));
        let inputs = [uniform(&[d, h, w], -1.0, 1.0, rng), uniform(&[1, h, w], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.mul_map(v[0], v[1]))
    })?;
    run("concat", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let (h, w) = (rng.random_range(1..5), rng.random_range(1..5));
        let inputs = [
            uniform(&[rng.random_range(1..3), h, w], -1.0, 1.0, rng),
            uniform(&[rng.random_range(1..3), h, w], -1.0, 1.0, rng),
            uniform(&[rng.random_range(1..3), h, w], -1.0, 1.0, rng),
        ];
        check_op(&inputs, rng, |g, v| g.concat(v))
    })?;
    run("sum", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let inputs = [uniform(&[2, 3, 2], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.sum(v[0]))
    })?;
    run("tv_squared", PRIMITIVE_TOLERANCE, &mut rng, &mut |rng| {
        let inputs = [uniform(&[2, rng.random_range(1..6), rng.random_range(1..6)], -1.0, 1.0, rng)];
        check_op(&inputs, rng, |g, v| g.tv_squared(v[0]))
    })?;
    Ok(out)
}
