//! The full network, the recurrent per-clip training step, the two-phase
//! schedule with validation checkpoints, and streaming inference.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::ParamCheck;
use crate::autodiff::{Adam, AdamConfig, Var};
use crate::config::{FlowGradient, ModelConfig};
use crate::datapipe::Clip;
use crate::erff::{fuse_inputs, Erff, FrameFusionState};
use crate::error::{Error, Result};
use crate::flow::{flow_loss_pair, flow_loss_total, upsample_flow, FlowNet};
use crate::lffn::Lffn;
use crate::metrics;
use crate::params::{ParamId, ParamStore, Session};
use crate::ring::RingBuffer;
use crate::sfe::{window_len, Sfe};
use crate::tensor::Tensor;

/// The four stages with their parameter handles. Values live in a
/// [`ParamStore`] under `flow.`, `lffn.`, `erff.` and `sfe.`.
#[derive(Clone, Debug)]
pub struct SecNet {
    pub config: ModelConfig,
    pub flow: FlowNet,
    pub lffn: Lffn,
    pub erff: Erff,
    pub sfe: Sfe,
}

impl SecNet {
    pub fn new(config: &ModelConfig, store: &mut ParamStore, rng: &mut impl rand::Rng) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let flow = FlowNet::new(store, "flow", c, &config.flow_widths, rng)?;
        let lffn = Lffn::new(store, "lffn", c, 2 * config.t1 + 1, &config.lffn, rng)?;
        let erff = Erff::new(store, "erff", c, config.t2, &config.erff, rng)?;
        let sfe = Sfe::new(store, config.sfe, config.erff.widths[2], rng)?;
        Ok(SecNet {
            config: config.clone(),
            flow,
            lffn,
            erff,
            sfe,
        })
    }

    /// Builds the network and a freshly initialised store from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Self::new(config, &mut store, &mut rng)?;
        Ok((net, store))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Flow and local fusion only: `L_l + γ·L_f`.
    Pretrain,
    /// Everything: `L_e + L_l + γ·L_f`.
    Joint,
}

#[derive(Clone, Copy)]
struct FlowPair {
    attached: Var,
    detached: Var,
}

/// What one frame needs from its neighbourhood and from the past.
struct FrameInputs<'a> {
    t: usize,
    /// `lr[i]` is frame `first + i`.
    lr: &'a [Var],
    first: usize,
    /// Newest frame that exists; later indices replicate it.
    last: usize,
    /// `Y^{t−j}` for `j = 1…T2`.
    prev_hr: Vec<Option<Var>>,
    /// `E_3^k` for the `T_t − 1` frames before `t`, oldest first.
    e3_past: Vec<Var>,
    lstm: Option<(Var, Var)>,
    /// Compute the flow loss `L_f^t`.
    flow_loss: bool,
}

struct FrameOutputs {
    y_hat: Var,
    y: Option<Var>,
    e3: Option<Var>,
    lstm: Option<(Var, Var)>,
    lf: Option<Var>,
}

impl SecNet {
    fn frame(&self, s: &mut Session<'_>, io: &FrameInputs<'_>, phase: Phase) -> Result<FrameOutputs> {
        let cfg = &self.config;
        let clamp = |k: isize| -> usize { k.clamp(1, io.last as isize) as usize };
        let lr_at = |k: usize| -> Result<Var> {
            k.checked_sub(io.first)
                .and_then(|i| io.lr.get(i).copied())
                .ok_or_else(|| Error::invalid(format!("frame {k} is not buffered")))
        };
        let t = io.t;
        let x_t = lr_at(t)?;
        let mut flows: BTreeMap<usize, FlowPair> = BTreeMap::new();
        let mut flow = |s: &mut Session<'_>, kc: usize| -> Result<FlowPair> {
            if let Some(f) = flows.get(&kc) {
                return Ok(*f);
            }
            let x_k = lr_at(kc)?;
            let attached = self.flow.forward(s, x_t, x_k)?;
            let detached = s.graph.detach(attached);
            let pair = FlowPair { attached, detached };
            flows.insert(kc, pair);
            Ok(pair)
        };

        let t1 = cfg.t1 as isize;
        let mut aligned = Vec::with_capacity(2 * cfg.t1 + 1);
        let mut pair_losses = Vec::with_capacity(2 * cfg.t1);
        for k in t as isize - t1..=t as isize + t1 {
            if k == t as isize {
                aligned.push(x_t);
                continue;
            }
            let kc = clamp(k);
            let x_k = lr_at(kc)?;
            let f = flow(s, kc)?;
            let lr_flow = match cfg.flow_grad {
                FlowGradient::Photometric => f.detached,
                FlowGradient::Local | FlowGradient::Full => f.attached,
            };
            let warped = s.graph.bilinear_sample(x_k, lr_flow)?;
            aligned.push(warped);
            if io.flow_loss {
                let w = if lr_flow == f.attached {
                    warped
                } else {
                    s.graph.bilinear_sample(x_k, f.attached)?
                };
                pair_losses.push(flow_loss_pair(s, w, x_t, f.attached, cfg.alpha)?);
            }
        }
        let y_hat = self.lffn.forward(s, &aligned)?;
        let lf = if io.flow_loss {
            Some(flow_loss_total(s, &pair_losses, cfg.t1)?)
        } else {
            None
        };
        if phase == Phase::Pretrain {
            return Ok(FrameOutputs {
                y_hat,
                y: None,
                e3: None,
                lstm: None,
                lf,
            });
        }

        let mut hr_flows = Vec::with_capacity(cfg.t2);
        for (j, prev) in io.prev_hr.iter().enumerate() {
            let k = t as isize - 1 - j as isize;
            if prev.is_none() || k < 1 {
                hr_flows.push(None);
                continue;
            }
            let f = flow(s, k as usize)?;
            let f = match cfg.flow_grad {
                FlowGradient::Full => f.attached,
                FlowGradient::Photometric | FlowGradient::Local => f.detached,
            };
            hr_flows.push(Some(upsample_flow(s, f, cfg.scale)?));
        }
        let fused = fuse_inputs(s, y_hat, &io.prev_hr, &hr_flows)?;
        let feats = self.erff.encode(s, fused)?;
        let mut window = io.e3_past.clone();
        window.push(feats.e3);
        let (e3_hat, lstm) = self.sfe.forward(s, &window, io.lstm)?;
        let y = self.erff.decode(s, feats.e1, feats.e2, e3_hat, y_hat)?;
        Ok(FrameOutputs {
            y_hat,
            y: Some(y),
            e3: Some(feats.e3),
            lstm,
            lf,
        })
    }
}

/// Loss terms of one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameLosses {
    pub le: f64,
    pub ll: f64,
    pub lf: f64,
}

/// Per-frame terms of a step (all clips of the batch, in order) and the
/// reported total.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub gamma: f64,
    pub frames: Vec<FrameLosses>,
}

impl LossBreakdown {
    fn mean_of(&self, f: impl Fn(&FrameLosses) -> f64) -> f64 {
        self.frames.iter().map(f).sum::<f64>() / self.frames.len().max(1) as f64
    }

    pub fn le(&self) -> f64 {
        self.mean_of(|f| f.le)
    }

    pub fn ll(&self) -> f64 {
        self.mean_of(|f| f.ll)
    }

    pub fn lf(&self) -> f64 {
        self.mean_of(|f| f.lf)
    }

    /// `(1/N) Σ (L_e + L_l + γ·L_f)` from the logged components.
    pub fn recomputed_total(&self) -> f64 {
        self.mean_of(|f| f.le + f.ll + self.gamma * f.lf)
    }
}

struct ClipTrace {
    total: Var,
    frames: Vec<FrameLosses>,
    outputs: Vec<Var>,
}

fn component<T>(t: usize, name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(op) => Error::Training(format!("frame {t}: {name} is not finite ({op})")),
        other => other,
    })
}

impl SecNet {
    /// Runs the recurrent forward pass over one clip and records
    /// `(1/N) Σ_t (L_e + L_l + γ·L_f)`.
    fn clip_forward(&self, s: &mut Session<'_>, clip: &Clip, phase: Phase) -> Result<ClipTrace> {
        let cfg = &self.config;
        let n = clip.len();
        if n == 0 || clip.hr.len() != n {
            return Err(Error::invalid(format!(
                "clip needs matching non-empty LR/HR sequences, got {} and {}",
                n,
                clip.hr.len()
            )));
        }
        let lr: Vec<Var> = clip.lr.iter().map(|f| s.constant(f.clone())).collect();
        let hold = |s: &mut Session<'_>, v: Var| if cfg.recurrent_backprop { v } else { s.graph.detach(v) };
        let mut outputs: Vec<Var> = Vec::with_capacity(n);
        let mut e3s: Vec<Var> = Vec::with_capacity(n);
        let mut lstm: Option<(Var, Var)> = None;
        let mut frames = Vec::with_capacity(n);
        let mut acc: Option<Var> = None;
        for t in 1..=n {
            let prev_hr = (1..=cfg.t2)
                .map(|j| if t > j { Some(hold(s, outputs[t - j - 1])) } else { None })
                .collect();
            let e3_past = if phase == Phase::Joint && self.sfe.uses_window() {
                let tt = window_len(t, cfg.t3);
                (t - tt + 1..t).map(|k| hold(s, e3s[k - 1])).collect()
            } else {
                Vec::new()
            };
            let state = lstm.map(|(h, c)| (hold(s, h), hold(s, c)));
            let io = FrameInputs {
                t,
                lr: &lr,
                first: 1,
                last: n,
                prev_hr,
                e3_past,
                lstm: state,
                flow_loss: true,
            };
            let out = component(t, "forward", self.frame(s, &io, phase))?;
            let gt = s.constant(clip.hr[t - 1].clone());
            let ll = component(t, "L_l", s.graph.mse(out.y_hat, gt))?;
            let lf = out.lf.ok_or_else(|| Error::invalid("flow loss missing"))?;
            let weighted = component(t, "L_f", s.graph.scale(lf, cfg.gamma))?;
            let mut frame_total = s.graph.add(ll, weighted)?;
            let mut le_value = 0.0;
            if let Some(y) = out.y {
                let le = component(t, "L_e", s.graph.mse(y, gt))?;
                le_value = s.graph.value(le).item();
                frame_total = s.graph.add(frame_total, le)?;
                outputs.push(y);
            } else {
                outputs.push(out.y_hat);
            }
            if let Some(e3) = out.e3 {
                e3s.push(e3);
            }
            lstm = out.lstm;
            frames.push(FrameLosses {
                le: le_value,
                ll: s.graph.value(ll).item(),
                lf: s.graph.value(lf).item(),
            });
            acc = Some(match acc {
                Some(a) => s.graph.add(a, frame_total)?,
                None => frame_total,
            });
        }
        let total = s.graph.scale(acc.expect("n ≥ 1"), 1.0 / n as f64)?;
        let value = s.graph.value(total).item();
        if !value.is_finite() {
            return Err(Error::Training(format!("total loss is not finite ({value})")));
        }
        Ok(ClipTrace { total, frames, outputs })
    }

    /// Loss of a batch without touching any gradient.
    pub fn evaluate_loss(&self, store: &ParamStore, clips: &[Clip], phase: Phase) -> Result<LossBreakdown> {
        let mut frames = Vec::new();
        let mut total = 0.0;
        for clip in clips {
            let mut s = Session::frozen(store);
            let trace = self.clip_forward(&mut s, clip, phase)?;
            total += s.graph.value(trace.total).item();
            frames.extend(trace.frames);
        }
        Ok(LossBreakdown {
            total: total / clips.len().max(1) as f64,
            gamma: self.config.gamma,
            frames,
        })
    }

    /// Loss and parameter gradients of a batch (gradients averaged over clips).
    pub fn loss_and_grads(&self, store: &ParamStore, clips: &[Clip], phase: Phase) -> Result<(LossBreakdown, Vec<(ParamId, Tensor)>)> {
        if clips.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let inv_b = 1.0 / clips.len() as f64;
        let mut grads: BTreeMap<ParamId, Tensor> = BTreeMap::new();
        let mut frames = Vec::new();
        let mut total = 0.0;
        for clip in clips {
            let mut s = Session::new(store);
            let trace = self.clip_forward(&mut s, clip, phase)?;
            total += s.graph.value(trace.total).item() * inv_b;
            s.graph.backward(trace.total)?;
            for (id, g) in s.param_grads() {
                let g = g.scale(inv_b);
                match grads.get_mut(&id) {
                    Some(acc) => *acc = acc.zip_map(&g, |a, b| a + b)?,
                    None => {
                        grads.insert(id, g);
                    }
                }
            }
            frames.extend(trace.frames);
        }
        let breakdown = LossBreakdown {
            total,
            gamma: self.config.gamma,
            frames,
        };
        Ok((breakdown, grads.into_iter().collect()))
    }

    /// HR outputs of a clip computed exactly as during training (joint phase).
    pub fn clip_outputs(&self, store: &ParamStore, clip: &Clip, phase: Phase) -> Result<Vec<Tensor>> {
        let mut s = Session::frozen(store);
        let trace = self.clip_forward(&mut s, clip, phase)?;
        Ok(trace.outputs.iter().map(|&v| s.graph.value(v).clone()).collect())
    }
}

/// Receives checkpoints when validation improves.
pub trait CheckpointSink {
    /// Persists the parameters and optimiser state; returns a label (path).
    fn save(&mut self, step: u64, params: &ParamStore, adam: &Adam) -> Result<String>;
}

/// Keeps checkpoints in memory.
#[derive(Clone, Debug, Default)]
pub struct MemorySink {
    pub saved: Vec<(u64, ParamStore)>,
}

impl CheckpointSink for MemorySink {
    fn save(&mut self, step: u64, params: &ParamStore, _adam: &Adam) -> Result<String> {
        self.saved.push((step, params.clone()));
        Ok(format!("memory:{step}"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainerState {
    pub step: u64,
    pub pretrain_steps: u64,
    pub joint_steps: u64,
    pub best_psnr: Option<f64>,
    pub best_checkpoint: Option<String>,
    /// `(step, mean validation PSNR)` of every validation run.
    pub validations: Vec<(u64, f64)>,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub phase: Phase,
    pub loss: LossBreakdown,
    pub lr: f64,
}

/// Network, parameters, optimiser and progress.
pub struct Trainer {
    pub model: SecNet,
    pub params: ParamStore,
    pub adam: Adam,
    pub state: TrainerState,
}

impl Trainer {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let (model, params) = SecNet::init(config, seed)?;
        Ok(Self::from_parts(model, params))
    }

    pub fn from_parts(model: SecNet, params: ParamStore) -> Self {
        let adam = Adam::new(AdamConfig {
            lr: model.config.lr,
            ..AdamConfig::default()
        });
        Trainer {
            model,
            params,
            adam,
            state: TrainerState::default(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    /// One optimiser update on a batch of independent clips.
    pub fn train_step(&mut self, clips: &[Clip], phase: Phase) -> Result<LossBreakdown> {
        let (loss, grads) = self.model.loss_and_grads(&self.params, clips, phase)?;
        self.adam.step(&mut self.params, &grads)?;
        self.state.step += 1;
        match phase {
            Phase::Pretrain => self.state.pretrain_steps += 1,
            Phase::Joint => self.state.joint_steps += 1,
        }
        Ok(loss)
    }

    /// Exactly `steps` updates of `phase`. Every `val_period` steps the
    /// validation set (if any) is scored and improvements are checkpointed.
    pub fn run_phase(
        &mut self,
        phase: Phase,
        steps: usize,
        next_batch: &mut dyn FnMut() -> Result<Vec<Clip>>,
        mut validation: Option<(&[Clip], &mut dyn CheckpointSink)>,
        log: &mut dyn FnMut(&StepLog),
    ) -> Result<()> {
        for i in 1..=steps {
            let batch = next_batch()?;
            let loss = self.train_step(&batch, phase)?;
            log(&StepLog {
                step: self.state.step,
                phase,
                loss,
                lr: self.adam.config.lr,
            });
            let period = self.model.config.val_period;
            if let Some((val, sink)) = validation.as_mut() {
                if period > 0 && (i % period == 0 || i == steps) {
                    self.validate_and_checkpoint(val, &mut **sink)?;
                }
            }
        }
        Ok(())
    }

    /// Pretrains flow and local fusion for `steps` updates.
    pub fn pretrain_lffn(&mut self, steps: usize, next_batch: &mut dyn FnMut() -> Result<Vec<Clip>>, log: &mut dyn FnMut(&StepLog)) -> Result<()> {
        self.run_phase(Phase::Pretrain, steps, next_batch, None, log)
    }

    /// Mean PSNR of streamed inference over `val`; checkpoints when it is
    /// the best so far. Returns whether a checkpoint was written.
    pub fn validate_and_checkpoint(&mut self, val: &[Clip], sink: &mut dyn CheckpointSink) -> Result<bool> {
        if val.is_empty() {
            return Err(Error::invalid("empty validation set"));
        }
        let mut total = 0.0;
        for clip in val {
            let out = infer_sequence(&self.model, &self.params, &clip.lr)?;
            total += metrics::psnr(&out, &clip.hr, 1.0)?;
        }
        let score = total / val.len() as f64;
        self.state.validations.push((self.state.step, score));
        let improved = self.state.best_psnr.is_none_or(|b| score > b);
        if improved {
            let label = sink.save(self.state.step, &self.params, &self.adam)?;
            self.state.best_psnr = Some(score);
            self.state.best_checkpoint = Some(label);
        }
        Ok(improved)
    }
}

/// Left-to-right inference that keeps only what later frames need: the
/// LR frames inside the fusion window, `T2` HR outputs, `T3` deepest
/// features (bidirectional strategies) and one `(H, C)` pair (one-way).
pub struct StreamingSuperResolver<'m> {
    model: &'m SecNet,
    params: &'m ParamStore,
    lr: VecDeque<Tensor>,
    lr_first: usize,
    received: usize,
    next_out: usize,
    hr: FrameFusionState,
    e3: RingBuffer<Tensor>,
    lstm: Option<(Tensor, Tensor)>,
    peak: usize,
}

impl<'m> StreamingSuperResolver<'m> {
    pub fn new(model: &'m SecNet, params: &'m ParamStore) -> Self {
        let cfg = &model.config;
        let e3_cap = if model.sfe.uses_window() { cfg.t3 } else { 0 };
        StreamingSuperResolver {
            model,
            params,
            lr: VecDeque::new(),
            lr_first: 1,
            received: 0,
            next_out: 1,
            hr: FrameFusionState::new(cfg.t2),
            e3: RingBuffer::new(e3_cap),
            lstm: None,
            peak: 0,
        }
    }

    /// Tensors currently held between frames.
    pub fn buffered_tensors(&self) -> usize {
        self.lr.len() + self.hr.len() + self.e3.len() + if self.lstm.is_some() { 2 } else { 0 }
    }

    /// Largest [`Self::buffered_tensors`] seen so far.
    pub fn peak_buffered(&self) -> usize {
        self.peak
    }

    /// Feeds the next LR frame; returns an HR frame once its future
    /// neighbours have arrived.
    pub fn push(&mut self, frame: Tensor) -> Result<Option<Tensor>> {
        if let Some(first) = self.lr.front() {
            if first.shape() != frame.shape() {
                return Err(Error::shape("infer_sequence", &[first.shape(), frame.shape()], "frame size changed"));
            }
        }
        self.received += 1;
        self.lr.push_back(frame);
        self.note_peak();
        if self.received >= self.next_out + self.model.config.t1 {
            let y = self.emit(self.received)?;
            return Ok(Some(y));
        }
        Ok(None)
    }

    /// Emits the remaining frames, replicating the last input as needed.
    pub fn finish(mut self) -> Result<Vec<Tensor>> {
        let mut out = Vec::new();
        while self.next_out <= self.received {
            out.push(self.emit(self.received)?);
        }
        Ok(out)
    }

    fn note_peak(&mut self) {
        self.peak = self.peak.max(self.buffered_tensors());
    }

    fn emit(&mut self, last: usize) -> Result<Tensor> {
        let model = self.model;
        let cfg = &model.config;
        let t = self.next_out;
        let mut s = Session::frozen(self.params);
        let lr: Vec<Var> = self.lr.iter().map(|f| s.constant(f.clone())).collect();
        let prev_hr = self
            .hr
            .previous()
            .into_iter()
            .map(|y| y.map(|y| s.constant(y.clone())))
            .collect();
        let e3_past = if model.sfe.uses_window() {
            let keep = window_len(t, cfg.t3) - 1;
            let mut past: Vec<Var> = (1..=keep).filter_map(|j| self.e3.back(j)).map(|e| s.constant(e.clone())).collect();
            past.reverse();
            past
        } else {
            Vec::new()
        };
        let lstm = self
            .lstm
            .as_ref()
            .map(|(h, c)| (s.constant(h.clone()), s.constant(c.clone())));
        let io = FrameInputs {
            t,
            lr: &lr,
            first: self.lr_first,
            last,
            prev_hr,
            e3_past,
            lstm,
            flow_loss: false,
        };
        let out = model.frame(&mut s, &io, Phase::Joint)?;
        let y = s.graph.value(out.y.expect("joint phase yields Y")).clone();
        self.hr.push(y.clone());
        if model.sfe.uses_window() {
            if let Some(e3) = out.e3 {
                self.e3.push(s.graph.value(e3).clone());
            }
        }
        self.lstm = out
            .lstm
            .map(|(h, c)| (s.graph.value(h).clone(), s.graph.value(c).clone()));
        self.next_out += 1;
        // frames older than the next frame's reach are no longer needed
        let reach = cfg.t1.max(cfg.t2);
        while self.lr_first + reach < self.next_out && self.lr.len() > 1 {
            self.lr.pop_front();
            self.lr_first += 1;
        }
        self.note_peak();
        Ok(y)
    }
}

/// Streams `frames` through the network and returns every HR output.
pub fn infer_sequence(model: &SecNet, params: &ParamStore, frames: &[Tensor]) -> Result<Vec<Tensor>> {
    Ok(infer_sequence_with_stats(model, params, frames)?.0)
}

/// Like [`infer_sequence`], also returning the peak number of tensors
/// buffered between frames.
pub fn infer_sequence_with_stats(model: &SecNet, params: &ParamStore, frames: &[Tensor]) -> Result<(Vec<Tensor>, usize)> {
    let mut sr = StreamingSuperResolver::new(model, params);
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        out.extend(sr.push(f.clone())?);
    }
    let peak = sr.peak_buffered();
    out.extend(sr.finish()?);
    Ok((out, peak))
}

/// Boxed batch source, handy for closures over datasets.
pub type BatchSource<'a> = Box<dyn FnMut() -> Result<Vec<Clip>> + 'a>;

/// Convenience: a source that yields the same batch every step.
pub fn fixed_batch(clips: Vec<Clip>) -> impl FnMut() -> Result<Vec<Clip>> {
    move || Ok(clips.clone())
}

pub const END_TO_END_TOLERANCE: f64 = 1e-4;

/// Finite-difference check of every parameter of a [`ModelConfig::tiny`]
/// network over one random clip in the joint phase. Parameters are jittered
/// away from their initial values so zeroed output layers do not leave
/// flows sitting exactly on bilinear cell edges. The overall error is the
/// one compared against [`END_TO_END_TOLERANCE`].
pub fn end_to_end_gradcheck(seed: u64) -> Result<ParamCheck> {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use crate::autodiff::gradcheck::{check_params, STEP};

    let config = ModelConfig::tiny();
    let (model, mut store) = SecNet::init(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let jitter = Normal::new(0.0, 0.1).expect("valid deviation");
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let base = store.get(id);
        let t = Tensor::from_fn(base.shape(), |i| base.data()[i] + jitter.sample(&mut rng));
        store.set(id, t)?;
    }
    let (c, lr_side) = (config.channels, config.hr_crop / config.scale);
    let frames = |side: usize, rng: &mut ChaCha8Rng| -> Vec<Tensor> {
        (0..config.n_frames)
            .map(|_| Tensor::from_fn(&[c, side, side], |_| rng.random_range(0.0..1.0)))
            .collect()
    };
    let clip = Clip {
        lr: frames(lr_side, &mut rng),
        hr: frames(config.hr_crop, &mut rng),
    };
    check_params(&store, STEP, |s| Ok(model.clip_forward(s, &clip, Phase::Joint)?.total))
}
