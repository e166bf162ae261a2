//! The `secn` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use secn_core::autodiff::gradcheck::primitive_suite;
use secn_core::config::{ModelConfig, Profile};
use secn_core::datapipe::{
    degrade_sequence, stream_rng, synth_sequence, AugmentConfig, BatchSampler, Clip, DegradeConfig, Motion, Pattern,
    SynthSceneConfig,
};
use secn_core::flow::{estimate_flow, FlowField};
use secn_core::metrics::{crop_border, MetricReport, SequenceMetrics, SsimConfig};
use secn_core::trainer::{end_to_end_gradcheck, infer_sequence, Phase, Trainer, END_TO_END_TOLERANCE};
use secn_core::Tensor;

use crate::checkpoint::{self, DirSink};
use crate::config_file;
use crate::flowviz;
use crate::frames::{self, FrameFormat};
use crate::report;
use crate::tenfile::{self, Dtype};
use crate::trainlog::TrainLog;

/// Exit status of a successful run (also `--help`).
pub const EXIT_OK: i32 = 0;
/// Bad flags, unreadable or incomplete config files.
pub const EXIT_USAGE: i32 = 1;
/// Anything that fails while running.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "secn", version, about = "Recurrent self-enhancing video super-resolution", propagate_version = true)]
pub struct Cli {
    /// Flat `key = value` model config (must set every key; see `secn train --print-config`)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for data loading and per-sequence work
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: u32,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "secn-out")]
    pub out: PathBuf,
    /// Preset used when no config file is given
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Toy)]
    pub profile: ProfileArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Toy,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Blob,
    Gradient,
    Checker,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic HR sequences and a dataset manifest
    Synth(SynthArgs),
    /// Blur and decimate HR sequences to LR
    Degrade(DegradeArgs),
    /// Pretrain local fusion, then train the whole network
    Train(TrainArgs),
    /// Super-resolve LR sequences with a checkpoint
    Infer(InferArgs),
    /// Score predictions against ground truth
    Eval(EvalArgs),
    /// Paired t-tests between two evaluation reports
    Compare(CompareArgs),
    /// Finite-difference check of every primitive and the whole network
    GradCheck(GradCheckArgs),
    /// Colour-coded image of a flow field
    FlowViz(FlowVizArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub sequences: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Frame edge in pixels
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = PatternArg::Blob)]
    pub pattern: PatternArg,
    /// Horizontal motion per frame (pixels)
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub dx: f64,
    /// Vertical motion per frame (pixels)
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub dy: f64,
    #[arg(long, value_enum, default_value_t = FrameFormat::Ppm)]
    pub format: FrameFormat,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Sequence directory or dataset manifest
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub phase: usize,
    #[arg(long, value_enum, default_value_t = FrameFormat::Ppm)]
    pub format: FrameFormat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// HR training sequences (directory or manifest)
    #[arg(long, required_unless_present = "print_config")]
    pub data: Option<PathBuf>,
    /// HR validation sequences; enables best-checkpoint tracking
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Print the effective config and exit
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// LR sequence directory or manifest
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FrameFormat::Ppm)]
    pub format: FrameFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted sequences (directory or manifest)
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth sequences, matched to predictions by directory name
    #[arg(long)]
    pub gt: PathBuf,
    /// Pixels dropped from every side before scoring
    #[arg(long, default_value_t = 0)]
    pub border: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report of the method under test (`report.json` or its directory)
    pub a: PathBuf,
    /// Baseline report
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Random draws per primitive
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    /// Seeds for the whole-network check (0 skips it)
    #[arg(long, default_value_t = 1)]
    pub network_seeds: u64,
}

#[derive(Debug, Args)]
pub struct FlowVizArgs {
    /// Flow field stored as a `[2, H, W]` .ten file
    #[arg(long, conflicts_with_all = ["checkpoint", "frames"])]
    pub flow: Option<PathBuf>,
    /// Checkpoint whose flow network estimates the field
    #[arg(long, requires = "frames")]
    pub checkpoint: Option<PathBuf>,
    /// Reference and neighbouring LR frame
    #[arg(long, num_args = 2, value_names = ["T", "K"])]
    pub frames: Vec<PathBuf>,
    /// Magnitude drawn fully saturated (defaults to the largest vector)
    #[arg(long)]
    pub max: Option<f64>,
}

/// An error the user fixes by changing the invocation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<config_file::ConfigFileError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Degrade(a) => degrade(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Compare(a) => compare(cli, a),
        Command::GradCheck(a) => grad_check(cli, a),
        Command::FlowViz(a) => flow_viz(cli, a),
    }
}

/// The config file when given, else the selected profile.
pub fn model_config(cli: &Cli) -> Result<ModelConfig> {
    match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            Ok(config_file::parse(path, &text)?)
        }
        None => Ok(ModelConfig::profile(match cli.profile {
            ProfileArg::Toy => Profile::Toy,
            ProfileArg::Full => Profile::Full,
        })),
    }
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: u32, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = (workers as usize).clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|part| s.spawn(|| part.iter().map(&f).collect::<Result<Vec<R>>>())).collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    ensure!(a.sequences > 0 && a.frames > 0 && a.size > 0, usage("--sequences, --frames and --size must be positive"));
    let pattern = match a.pattern {
        PatternArg::Blob => Pattern::TexturedBlob,
        PatternArg::Gradient => Pattern::Gradient,
        PatternArg::Checker => Pattern::Checkerboard { period: a.size as f64 / 8.0 },
    };
    let scene = SynthSceneConfig {
        pattern,
        motion: Motion::Translation { dy: a.dy, dx: a.dx },
        frames: a.frames,
        height: a.size,
        width: a.size,
        channels: 3,
    };
    let names: Vec<String> = (0..a.sequences).map(|k| format!("seq_{:04}", k + 1)).collect();
    let indexed: Vec<(usize, &String)> = names.iter().enumerate().collect();
    parallel_map(&indexed, cli.workers, |&(k, name)| {
        let (hr, _) = synth_sequence(&scene, cli.seed.wrapping_mul(1_000_003).wrapping_add(k as u64))?;
        frames::write_sequence(&cli.out.join(name), &hr, a.format)
    })?;
    frames::write_manifest(&cli.out.join("dataset.txt"), &names)?;
    println!("wrote {} sequences of {} frames to {}", a.sequences, a.frames, cli.out.display());
    Ok(())
}

fn degrade(cli: &Cli, a: &DegradeArgs) -> Result<()> {
    ensure!(a.factor > 0 && a.phase < a.factor, usage("--phase must be smaller than --factor"));
    let cfg = DegradeConfig { sigma: a.sigma, factor: a.factor, phase: a.phase, ..DegradeConfig::default() };
    let dirs = frames::resolve_sequences(&a.input)?;
    let names: Vec<String> = dirs.iter().map(|d| frames::sequence_name(d)).collect();
    let jobs: Vec<(&PathBuf, &String)> = dirs.iter().zip(&names).collect();
    parallel_map(&jobs, cli.workers, |(dir, name)| {
        let hr = frames::read_sequence(dir)?;
        let lr = degrade_sequence(&hr, &cfg)?;
        frames::write_sequence(&cli.out.join(name), &lr, a.format)
    })?;
    frames::write_manifest(&cli.out.join("dataset.txt"), &names)?;
    println!("degraded {} sequences into {}", names.len(), cli.out.display());
    Ok(())
}

fn load_sequences(path: &Path, workers: u32) -> Result<Vec<(String, Vec<Tensor>)>> {
    let dirs = frames::resolve_sequences(path)?;
    parallel_map(&dirs, workers, |d| Ok((frames::sequence_name(d), frames::read_sequence(d)?)))
}

/// Batches drawn by `workers` threads, each with its own RNG stream per
/// epoch, consumed round-robin so the order depends only on the seed and
/// the worker count.
struct Loader {
    queues: Vec<mpsc::Receiver<Result<Vec<Clip>>>>,
    next: usize,
}

impl Loader {
    fn spawn<'s>(
        scope: &'s thread::Scope<'s, '_>,
        data: &'s [Vec<Tensor>],
        cfg: &ModelConfig,
        seed: u64,
        workers: u32,
        steps: usize,
    ) -> Loader {
        let augment = AugmentConfig::facial(cfg.n_frames, cfg.hr_crop);
        let degrade = DegradeConfig { factor: cfg.scale, ..DegradeConfig::default() };
        let batch = cfg.batch_size;
        let per_epoch = data.len().div_ceil(batch).max(1);
        let mut queues = Vec::new();
        for w in 0..workers {
            let (tx, rx) = mpsc::sync_channel(2);
            let share = steps / workers as usize + usize::from((w as usize) < steps % workers as usize);
            scope.spawn(move || {
                let mut sampler = BatchSampler::new(data.len());
                let mut made = 0;
                let mut epoch = 0u32;
                while made < share {
                    let mut rng = stream_rng(seed, w, epoch);
                    for _ in 0..per_epoch.min(share - made) {
                        let b = sampler.augment_batch(data, batch, &augment, &degrade, &mut rng).map_err(anyhow::Error::from);
                        let failed = b.is_err();
                        if tx.send(b).is_err() || failed {
                            return;
                        }
                        made += 1;
                    }
                    epoch += 1;
                }
            });
            queues.push(rx);
        }
        Loader { queues, next: 0 }
    }

    fn next(&mut self) -> Result<Vec<Clip>> {
        let q = &self.queues[self.next % self.queues.len()];
        self.next += 1;
        q.recv().context("data loader stopped")?
    }
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = model_config(cli)?;
    if a.print_config {
        print!("{}", config_file::render(&cfg));
        return Ok(());
    }
    let data_path = a.data.as_ref().expect("clap enforces --data");
    let data: Vec<Vec<Tensor>> = load_sequences(data_path, cli.workers)?.into_iter().map(|(_, s)| s).collect();
    if let Some(short) = data.iter().find(|s| s.len() < cfg.n_frames) {
        log::warn!("a training sequence has {} frames, fewer than n_frames = {}; it will be skipped", short.len(), cfg.n_frames);
    }
    let degrade = DegradeConfig { factor: cfg.scale, ..DegradeConfig::default() };
    let val: Vec<Clip> = match &a.val {
        Some(p) => load_sequences(p, cli.workers)?
            .into_iter()
            .map(|(_, hr)| Ok(Clip { lr: degrade_sequence(&hr, &degrade)?, hr }))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    fs::create_dir_all(&cli.out)?;
    config_file::save(&cli.out.join("config.txt"), &cfg)?;
    let mut log = TrainLog::create(&cli.out.join("train_log.csv"))?;
    let mut trainer = Trainer::new(&cfg, cli.seed)?;
    let mut sink = DirSink { dir: cli.out.join("best"), config: cfg.clone() };
    let total = cfg.pretrain_steps + cfg.joint_steps;
    let mut log_error = None;
    thread::scope(|scope| -> Result<()> {
        let mut loader = Loader::spawn(scope, &data, &cfg, cli.seed, cli.workers, total);
        let mut next_batch = || loader.next().map_err(|e| secn_core::Error::Training(format!("{e:#}")));
        let mut record = |l: &secn_core::trainer::StepLog| {
            if let Err(e) = log.record(l) {
                log_error.get_or_insert(e);
            }
            if l.step % 50 == 0 || l.step as usize == total {
                log::info!("step {} {:?}: L {:.6} L_e {:.6} L_l {:.6} L_f {:.6}", l.step, l.phase, l.loss.total, l.loss.le(), l.loss.ll(), l.loss.lf());
            }
        };
        trainer.run_phase(Phase::Pretrain, cfg.pretrain_steps, &mut next_batch, None, &mut record)?;
        let validation = if val.is_empty() { None } else { Some((val.as_slice(), &mut sink as &mut dyn secn_core::trainer::CheckpointSink)) };
        trainer.run_phase(Phase::Joint, cfg.joint_steps, &mut next_batch, validation, &mut record)?;
        Ok(())
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    log.flush()?;
    checkpoint::save(&cli.out.join("final"), &cfg, trainer.state.step, &trainer.params, &trainer.adam)?;
    println!("trained {} steps; final checkpoint in {}", trainer.state.step, cli.out.join("final").display());
    if let (Some(best), Some(path)) = (trainer.state.best_psnr, &trainer.state.best_checkpoint) {
        println!("best validation PSNR {best:.3} dB at {path}");
    }
    Ok(())
}

fn infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let loaded = checkpoint::load(&a.checkpoint)?;
    let seqs = load_sequences(&a.input, cli.workers)?;
    parallel_map(&seqs, cli.workers, |(name, lr)| {
        let hr = infer_sequence(&loaded.model, &loaded.params, lr)?;
        frames::write_sequence(&cli.out.join(name), &hr, a.format)
    })?;
    let names: Vec<String> = seqs.iter().map(|(n, _)| n.clone()).collect();
    frames::write_manifest(&cli.out.join("dataset.txt"), &names)?;
    println!("super-resolved {} sequences into {}", names.len(), cli.out.display());
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let pred = load_sequences(&a.pred, cli.workers)?;
    let gt = load_sequences(&a.gt, cli.workers)?;
    let pairs: Vec<(&String, &Vec<Tensor>, &Vec<Tensor>)> = if pred.len() == 1 && gt.len() == 1 {
        vec![(&pred[0].0, &pred[0].1, &gt[0].1)]
    } else {
        pred.iter()
            .map(|(name, p)| {
                let g = gt.iter().find(|(n, _)| n == name).with_context(|| format!("no ground truth named `{name}`"))?;
                Ok((name, p, &g.1))
            })
            .collect::<Result<_>>()?
    };
    let ssim = SsimConfig::default();
    let sequences = parallel_map(&pairs, cli.workers, |&(name, p, g)| {
        ensure!(p.len() == g.len(), "`{name}`: {} predicted frames but {} ground-truth frames", p.len(), g.len());
        let (p, g) = if a.border > 0 { (crop_border(p, a.border)?, crop_border(g, a.border)?) } else { (p.clone(), g.clone()) };
        Ok(SequenceMetrics::evaluate(name.clone(), &p, &g, 1.0, &ssim)?)
    })?;
    let r = MetricReport { sequences };
    report::write_all(&cli.out, &r)?;
    print!("{}", report::render_text(&r));
    Ok(())
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

fn compare(cli: &Cli, a: &CompareArgs) -> Result<()> {
    let ra = report::read_json(&report_path(&a.a))?;
    let rb = report::read_json(&report_path(&a.b))?;
    let rows = ra.compare(&rb)?;
    let table = report::render_comparison(&rows, &a.a.display().to_string(), &a.b.display().to_string());
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("compare.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn grad_check(cli: &Cli, a: &GradCheckArgs) -> Result<()> {
    ensure!(a.draws > 0, usage("--draws must be positive"));
    let mut failed = Vec::new();
    println!("{:<20} {:>12} {:>10} {:>6}", "op", "max rel err", "threshold", "");
    for c in primitive_suite(cli.seed, a.draws)? {
        let ok = c.passed();
        println!("{:<20} {:>12.3e} {:>10.0e} {:>6}", c.op, c.max_error, c.threshold, if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(c.op);
        }
    }
    for k in 0..a.network_seeds {
        let seed = cli.seed + k;
        let c = end_to_end_gradcheck(seed)?;
        let ok = c.overall < END_TO_END_TOLERANCE;
        let (worst, werr) = c.worst().map(|(n, e)| (n.to_string(), e)).unwrap_or_default();
        println!(
            "{:<20} {:>12.3e} {:>10.0e} {:>6}  (seed {seed}, worst tensor {worst} {werr:.1e}, {} one-sided)",
            "network",
            c.overall,
            END_TO_END_TOLERANCE,
            if ok { "ok" } else { "FAIL" },
            c.kinks
        );
        if !ok {
            failed.push(format!("network (seed {seed})"));
        }
    }
    if !failed.is_empty() {
        bail!("gradient check failed for {}", failed.join(", "));
    }
    Ok(())
}

fn flow_viz(cli: &Cli, a: &FlowVizArgs) -> Result<()> {
    let flow = match (&a.flow, &a.checkpoint) {
        (Some(path), _) => FlowField::new(tenfile::read(path)?, 0, 0)?,
        (None, Some(ckpt)) => {
            let loaded = checkpoint::load(ckpt)?;
            let x_t = frames::read_frame(&a.frames[0])?;
            let x_k = frames::read_frame(&a.frames[1])?;
            estimate_flow(&loaded.model.flow, &loaded.params, &x_t, &x_k, 1, 2)?
        }
        (None, None) => return Err(usage("give either --flow or --checkpoint with --frames")),
    };
    fs::create_dir_all(&cli.out)?;
    tenfile::write(&cli.out.join("flow.ten"), &flow.data, Dtype::F64)?;
    flowviz::render(&flow, a.max)
        .save_with_format(cli.out.join("flow.ppm"), image::ImageFormat::Pnm)
        .context("writing flow.ppm")?;
    let n = (flow.height() * flow.width()) as f64;
    let mean_x = flow.data.data()[flow.height() * flow.width()..].iter().sum::<f64>() / n;
    let mean_y = flow.data.data()[..flow.height() * flow.width()].iter().sum::<f64>() / n;
    println!("mean flow (x, y) = ({mean_x:.4}, {mean_y:.4}); wrote {}", cli.out.join("flow.ppm").display());
    Ok(())
}
