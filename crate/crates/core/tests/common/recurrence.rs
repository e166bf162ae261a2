use rand::Rng;
use secn_core::config::SfeStrategy;
use secn_core::params::{ParamStore, Session};
use secn_core::sfe::{ConvLstmCell, Sfe};
use secn_core::tensor::Tensor;

use super::{jitter, max_diff, rng, uniform};

pub const GATES: [&str; 4] = ["i", "f", "g", "o"];

/// Cell weights copied out of a store, evaluated with direct loops.
pub struct OracleCell {
    w_e: Vec<Tensor>,
    w_h: Vec<Tensor>,
    b: Vec<Tensor>,
}

impl OracleCell {
    pub fn load(store: &ParamStore, prefix: &str) -> Self {
        let get = |n: String| store.get(store.id(&n).unwrap()).clone();
        OracleCell {
            w_e: GATES.iter().map(|g| get(format!("{prefix}.w_e{g}"))).collect(),
            w_h: GATES.iter().map(|g| get(format!("{prefix}.w_h{g}"))).collect(),
            b: GATES.iter().map(|g| get(format!("{prefix}.b_{g}"))).collect(),
        }
    }

    pub fn step(&self, h: &Tensor, c: &Tensor, e: &Tensor) -> (Tensor, Tensor) {
        let pre: Vec<Tensor> = (0..4)
            .map(|g| {
                let a = conv3(e, &self.w_e[g], Some(&self.b[g]));
                let b = conv3(h, &self.w_h[g], None);
                a.zip_map(&b, |x, y| x + y).unwrap()
            })
            .collect();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let n = c.len();
        let mut c_new = c.clone();
        let mut h_new = c.clone();
        for j in 0..n {
            let i = sig(pre[0].data()[j]);
            let f = sig(pre[1].data()[j]);
            let g = pre[2].data()[j].tanh();
            let o = sig(pre[3].data()[j]);
            c_new.data_mut()[j] = f * c.data()[j] + i * g;
            h_new.data_mut()[j] = o * c_new.data()[j].tanh();
        }
        (h_new, c_new)
    }
}

pub fn conv3(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (c, h, wd) = x.dims3().unwrap();
    let d = w.shape()[0];
    Tensor::from_fn(&[d, h, wd], |idx| {
        let (o, y, xx) = (idx / (h * wd), idx / wd % h, idx % wd);
        let mut acc = b.map_or(0.0, |b| b.data()[o]);
        for ci in 0..c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at3(ci, iy as usize, ix as usize) * w.data()[((o * c + ci) * 3 + ky) * 3 + kx];
                    }
                }
            }
        }
        acc
    })
}

pub fn oracle_bidirectional(back: &OracleCell, fwd: &OracleCell, window: &[Tensor], fused: bool) -> Tensor {
    let zero = Tensor::zeros(window[0].shape());
    let (mut h, mut c) = (zero.clone(), zero.clone());
    let mut hb = vec![zero.clone(); window.len()];
    for k in (0..window.len()).rev() {
        (h, c) = back.step(&h, &c, &window[k]);
        hb[k] = h.clone();
    }
    let (mut h, mut c) = (zero.clone(), zero);
    for k in 0..window.len() {
        let input = if fused { Tensor::concat_channels(&[&hb[k], &window[k]]).unwrap() } else { hb[k].clone() };
        (h, c) = fwd.step(&h, &c, &input);
    }
    h
}

pub fn run_sfe(sfe: &Sfe, store: &ParamStore, window: &[Tensor], state: Option<(Tensor, Tensor)>) -> (Tensor, Option<(Tensor, Tensor)>) {
    let mut s = Session::frozen(store);
    let vars: Vec<_> = window.iter().map(|t| s.constant(t.clone())).collect();
    let st = state.map(|(h, c)| (s.constant(h), s.constant(c)));
    let (e, st) = sfe.forward(&mut s, &vars, st).unwrap();
    let v = |x| s.graph.value(x).clone();
    (v(e), st.map(|(h, c)| (v(h), v(c))))
}

pub fn build(strategy: SfeStrategy, width: usize, seed: u64) -> (Sfe, ParamStore) {
    let mut store = ParamStore::new();
    let sfe = Sfe::new(&mut store, strategy, width, &mut rng(seed)).unwrap();
    jitter(&mut store, 0.2, seed + 1);
    (sfe, store)
}

/// Largest deviation of a 1×1 cell from a scalar LSTM over five steps.
pub fn scalar_lstm_gap(seed: u64) -> f64 {
    let mut store = ParamStore::new();
    let cell = ConvLstmCell::new(&mut store, "c", 1, 1, &mut rng(seed)).unwrap();
    jitter(&mut store, 0.5, 100 + seed);
    // only the centre tap of each kernel sees a 1×1 map
    let centre = |n: &str| store.get(store.id(n).unwrap()).data()[4];
    let bias = |n: &str| store.get(store.id(n).unwrap()).data()[0];
    let mut r = rng(200 + seed);
    let (mut h, mut c) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let mut s = Session::frozen(&store);
    let (mut hv, mut cv) = (s.constant(Tensor::full(&[1, 1, 1], h)), s.constant(Tensor::full(&[1, 1, 1], c)));
    let mut gap = 0.0f64;
    for _ in 0..5 {
        let e: f64 = r.random_range(-2.0..2.0);
        let z = |g: &str| centre(&format!("c.w_e{g}")) * e + centre(&format!("c.w_h{g}")) * h + bias(&format!("c.b_{g}"));
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (i, f, g, o) = (sig(z("i")), sig(z("f")), z("g").tanh(), sig(z("o")));
        c = f * c + i * g;
        h = o * c.tanh();
        let ev = s.constant(Tensor::full(&[1, 1, 1], e));
        let out = cell.step(&mut s, hv, cv, ev).unwrap();
        (hv, cv) = (out.h, out.c);
        gap = gap.max((s.graph.value(hv).item() - h).abs()).max((s.graph.value(cv).item() - c).abs());
    }
    gap
}

/// One-way encoding of `len` random features fed one at a time against the
/// cell folded by hand.
pub fn oneway_gap(seed: u64, len: usize) -> f64 {
    let (sfe, store) = build(SfeStrategy::OneWay, 3, 300 + seed);
    let oracle = OracleCell::load(&store, "sfe.f");
    let mut r = rng(400 + 10 * seed + len as u64);
    let feats: Vec<_> = (0..len).map(|_| uniform(&[3, 4, 5], &mut r)).collect();
    let (mut h, mut c) = (Tensor::zeros(&[3, 4, 5]), Tensor::zeros(&[3, 4, 5]));
    let mut state = None;
    let mut gap = 0.0f64;
    for e in &feats {
        (h, c) = oracle.step(&h, &c, e);
        let (out, st) = run_sfe(&sfe, &store, std::slice::from_ref(e), state);
        let st = st.unwrap();
        gap = gap.max(max_diff(&out, &h)).max(max_diff(&st.1, &c));
        state = Some(st);
    }
    gap
}

/// Bidirectional strategy on a window of `len` random features against the
/// unrolled backward and forward passes.
pub fn bidirectional_gap(strategy: SfeStrategy, seed: u64, len: usize) -> f64 {
    let fused = strategy == SfeStrategy::Fused;
    let (sfe, store) = build(strategy, 3, 500 + seed);
    let back = OracleCell::load(&store, "sfe.b");
    let fwd = OracleCell::load(&store, "sfe.f");
    let mut r = rng(600 + 10 * seed + len as u64);
    let window: Vec<_> = (0..len).map(|_| uniform(&[3, 4, 5], &mut r)).collect();
    let (got, state) = run_sfe(&sfe, &store, &window, None);
    assert!(state.is_none());
    max_diff(&got, &oracle_bidirectional(&back, &fwd, &window, fused))
}
