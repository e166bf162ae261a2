//! Sequential feature encoding: a ConvLSTM cell and the one-way, cascaded
//! bidirectional and fused bidirectional strategies that turn the deepest
//! encoder feature `E_3^t` into `Ê_3^t`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Var;
use crate::config::SfeStrategy;
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, Session};

/// One gate: `E ∗ W_e + H ∗ W_h + b`.
#[derive(Clone, Debug)]
struct Gate {
    w_e: ParamId,
    w_h: ParamId,
    b: ParamId,
}

/// ConvLSTM with 3×3 kernels. `input` is the width of `E`, `hidden` the
/// width of `H` and `C`.
#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    input: usize,
    hidden: usize,
    // i, f, g, o
    gates: [Gate; 4],
}

/// Values of one cell step, exposed for inspection.
#[derive(Clone, Copy, Debug)]
pub struct CellOutput {
    pub h: Var,
    pub c: Var,
    pub a_i: Var,
    pub a_f: Var,
    pub a_g: Var,
    pub a_o: Var,
}

impl ConvLstmCell {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let fan_in = (input + hidden) * 9;
        let mut gate = |g: &str| -> Result<Gate> {
            let init = Init::KaimingNormal { fan_in };
            Ok(Gate {
                w_e: store.add(format!("{prefix}.w_e{g}"), init.sample(&[hidden, input, 3, 3], rng))?,
                w_h: store.add(format!("{prefix}.w_h{g}"), init.sample(&[hidden, hidden, 3, 3], rng))?,
                b: store.add(format!("{prefix}.b_{g}"), Init::Zeros.sample(&[hidden], rng))?,
            })
        };
        let gates = [gate("i")?, gate("f")?, gate("g")?, gate("o")?];
        Ok(ConvLstmCell { input, hidden, gates })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn gate(&self, s: &mut Session<'_>, idx: usize, e: Var, h: Var) -> Result<Var> {
        let g = &self.gates[idx];
        let (w_e, w_h, b) = (s.param(g.w_e), s.param(g.w_h), s.param(g.b));
        let from_e = s.graph.conv2d(e, w_e, Some(b), 1, 1)?;
        let from_h = s.graph.conv2d(h, w_h, None, 1, 1)?;
        s.graph.add(from_e, from_h)
    }

    pub fn step(&self, s: &mut Session<'_>, h_prev: Var, c_prev: Var, e: Var) -> Result<CellOutput> {
        let es = s.graph.shape(e).to_vec();
        if es.len() != 3 || es[0] != self.input {
            return Err(Error::shape("convlstm_cell", &[&es], format!("expected {} input channels", self.input)));
        }
        let state_shape = [self.hidden, es[1], es[2]];
        if s.graph.shape(h_prev) != state_shape || s.graph.shape(c_prev) != state_shape {
            return Err(Error::shape(
                "convlstm_cell",
                &[s.graph.shape(h_prev), s.graph.shape(c_prev), &state_shape],
                "state shape mismatch",
            ));
        }
        let zi = self.gate(s, 0, e, h_prev)?;
        let a_i = s.graph.sigmoid(zi)?;
        let zf = self.gate(s, 1, e, h_prev)?;
        let a_f = s.graph.sigmoid(zf)?;
        let zg = self.gate(s, 2, e, h_prev)?;
        let a_g = s.graph.tanh(zg)?;
        let keep = s.graph.mul(a_f, c_prev)?;
        let write = s.graph.mul(a_i, a_g)?;
        let c = s.graph.add(keep, write)?;
        let zo = self.gate(s, 3, e, h_prev)?;
        let a_o = s.graph.sigmoid(zo)?;
        let tc = s.graph.tanh(c)?;
        let h = s.graph.mul(a_o, tc)?;
        Ok(CellOutput { h, c, a_i, a_f, a_g, a_o })
    }

    /// Zero `(H, C)` for features of spatial size `h × w`.
    pub fn zero_state(&self, s: &mut Session<'_>, h: usize, w: usize) -> (Var, Var) {
        let shape = [self.hidden, h, w];
        (s.zeros(&shape), s.zeros(&shape))
    }
}

/// Backward pass of the bidirectional strategies: newest to oldest from a
/// zero state. Returns the hidden states in temporal order.
fn backward_pass(s: &mut Session<'_>, cell: &ConvLstmCell, window: &[Var]) -> Result<Vec<Var>> {
    let (_, h, w) = s.graph.value(window[0]).dims3()?;
    let (mut hb, mut cb) = cell.zero_state(s, h, w);
    let mut out = alloc::vec![hb; window.len()];
    for (k, &e) in window.iter().enumerate().rev() {
        let step = cell.step(s, hb, cb, e)?;
        hb = step.h;
        cb = step.c;
        out[k] = hb;
    }
    Ok(out)
}

/// `Ê = H^t` after one step from the carried state.
pub fn sfe_oneway(s: &mut Session<'_>, cell: &ConvLstmCell, e: Var, state: (Var, Var)) -> Result<(Var, (Var, Var))> {
    let out = cell.step(s, state.0, state.1, e)?;
    Ok((out.h, (out.h, out.c)))
}

/// Backward pass over raw features, forward pass over the backward hiddens.
/// `window` is in temporal order and ends with the current feature.
pub fn sfe_cascaded(s: &mut Session<'_>, back: &ConvLstmCell, fwd: &ConvLstmCell, window: &[Var]) -> Result<Var> {
    bidirectional(s, back, fwd, window, false)
}

/// Like [`sfe_cascaded`] but the forward cell reads `[H_b^k, E^k]`.
pub fn sfe_fused(s: &mut Session<'_>, back: &ConvLstmCell, fwd: &ConvLstmCell, window: &[Var]) -> Result<Var> {
    bidirectional(s, back, fwd, window, true)
}

fn bidirectional(s: &mut Session<'_>, back: &ConvLstmCell, fwd: &ConvLstmCell, window: &[Var], fused: bool) -> Result<Var> {
    if window.is_empty() {
        return Err(Error::invalid("sequential feature encoding needs a non-empty window"));
    }
    let hb = backward_pass(s, back, window)?;
    let (_, h, w) = s.graph.value(window[0]).dims3()?;
    let (mut hf, mut cf) = fwd.zero_state(s, h, w);
    for (k, &b) in hb.iter().enumerate() {
        let input = if fused { s.graph.concat(&[b, window[k]])? } else { b };
        let step = fwd.step(s, hf, cf, input)?;
        hf = step.h;
        cf = step.c;
    }
    Ok(hf)
}

/// Pass-through used when sequential encoding is disabled.
pub fn sfe_disabled(e: Var) -> Var {
    e
}

/// The configured strategy with its cells (parameters under `sfe.b.` and
/// `sfe.f.`; the one-way cell lives under `sfe.f.`).
#[derive(Clone, Debug)]
pub enum Sfe {
    Off,
    OneWay { cell: ConvLstmCell },
    Cascaded { back: ConvLstmCell, fwd: ConvLstmCell },
    Fused { back: ConvLstmCell, fwd: ConvLstmCell },
}

impl Sfe {
    pub fn new(store: &mut ParamStore, strategy: SfeStrategy, width: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(match strategy {
            SfeStrategy::Off => Sfe::Off,
            SfeStrategy::OneWay => Sfe::OneWay {
                cell: ConvLstmCell::new(store, "sfe.f", width, width, rng)?,
            },
            SfeStrategy::Cascaded => Sfe::Cascaded {
                back: ConvLstmCell::new(store, "sfe.b", width, width, rng)?,
                fwd: ConvLstmCell::new(store, "sfe.f", width, width, rng)?,
            },
            SfeStrategy::Fused => Sfe::Fused {
                back: ConvLstmCell::new(store, "sfe.b", width, width, rng)?,
                fwd: ConvLstmCell::new(store, "sfe.f", 2 * width, width, rng)?,
            },
        })
    }

    pub fn strategy(&self) -> SfeStrategy {
        match self {
            Sfe::Off => SfeStrategy::Off,
            Sfe::OneWay { .. } => SfeStrategy::OneWay,
            Sfe::Cascaded { .. } => SfeStrategy::Cascaded,
            Sfe::Fused { .. } => SfeStrategy::Fused,
        }
    }

    /// Whether past features are consumed through a window (bidirectional).
    pub fn uses_window(&self) -> bool {
        matches!(self, Sfe::Cascaded { .. } | Sfe::Fused { .. })
    }

    pub fn carries_state(&self) -> bool {
        matches!(self, Sfe::OneWay { .. })
    }

    /// Encodes the newest feature of `window` (temporal order). `state` is
    /// the one-way `(H, C)`; it is created as zeros when absent and the new
    /// state is returned.
    pub fn forward(&self, s: &mut Session<'_>, window: &[Var], state: Option<(Var, Var)>) -> Result<(Var, Option<(Var, Var)>)> {
        let Some(&current) = window.last() else {
            return Err(Error::invalid("sequential feature encoding needs a non-empty window"));
        };
        match self {
            Sfe::Off => Ok((sfe_disabled(current), None)),
            Sfe::OneWay { cell } => {
                let st = match state {
                    Some(st) => st,
                    None => {
                        let (_, h, w) = s.graph.value(current).dims3()?;
                        cell.zero_state(s, h, w)
                    }
                };
                let (e, st) = sfe_oneway(s, cell, current, st)?;
                Ok((e, Some(st)))
            }
            Sfe::Cascaded { back, fwd } => Ok((sfe_cascaded(s, back, fwd, window)?, None)),
            Sfe::Fused { back, fwd } => Ok((sfe_fused(s, back, fwd, window)?, None)),
        }
    }
}

/// Number of features in the window at frame `t` (1-based): `min(t, T3 + 1)`.
pub fn window_len(t: usize, t3: usize) -> usize {
    t.min(t3 + 1)
}
