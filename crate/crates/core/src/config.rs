//! Model and training hyperparameters with the `toy` and `full` profiles.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Sequential feature encoding variant applied to the deepest encoder feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfeStrategy {
    Off,
    OneWay,
    Cascaded,
    Fused,
}

impl SfeStrategy {
    pub const ALL: [SfeStrategy; 4] = [SfeStrategy::Off, SfeStrategy::OneWay, SfeStrategy::Cascaded, SfeStrategy::Fused];
}

impl fmt::Display for SfeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SfeStrategy::Off => "off",
            SfeStrategy::OneWay => "oneway",
            SfeStrategy::Cascaded => "cascaded",
            SfeStrategy::Fused => "fused",
        })
    }
}

impl FromStr for SfeStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SfeStrategy::Off),
            "oneway" => Ok(SfeStrategy::OneWay),
            "cascaded" => Ok(SfeStrategy::Cascaded),
            "fused" => Ok(SfeStrategy::Fused),
            _ => Err(config_err("sfe", "expected off|oneway|cascaded|fused")),
        }
    }
}

/// Which losses may train the flow network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowGradient {
    /// Only the photometric flow loss (flows are detached everywhere else).
    Photometric,
    /// The flow loss plus the local-fusion loss through the LR warps; the
    /// recurrent HR path stays cut.
    Local,
    /// Nothing detached. Used for end-to-end finite-difference checks.
    Full,
}

impl fmt::Display for FlowGradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowGradient::Photometric => "photometric",
            FlowGradient::Local => "local",
            FlowGradient::Full => "full",
        })
    }
}

impl FromStr for FlowGradient {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "photometric" => Ok(FlowGradient::Photometric),
            "local" => Ok(FlowGradient::Local),
            "full" => Ok(FlowGradient::Full),
            _ => Err(config_err("flow_grad", "expected photometric|local|full")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Toy,
    Full,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Profile::Toy),
            "full" => Ok(Profile::Full),
            _ => Err(config_err("profile", "expected toy|full")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LffnConfig {
    /// Feature width of the shallow conv and the residual dense blocks.
    pub width: usize,
    pub blocks: usize,
    pub layers: usize,
    pub growth: usize,
    /// Feature widths after the first and second ×2 pixel shuffle.
    pub up_widths: [usize; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErffConfig {
    /// Encoder widths at full, 1/2 and 1/4 resolution.
    pub widths: [usize; 3],
    /// Attention residual blocks, split between encoder and decoder.
    pub res_blocks: usize,
    pub attention: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Neighbouring LR frames on each side fed to local fusion.
    pub t1: usize,
    /// Previous HR outputs fed back (0 disables recurrent frame fusion).
    pub t2: usize,
    /// Past deepest features kept for the bidirectional encoders.
    pub t3: usize,
    /// Frames per training clip.
    pub n_frames: usize,
    /// Flow smoothness weight.
    pub alpha: f64,
    /// Flow loss weight in the total loss.
    pub gamma: f64,
    /// Upscaling factor.
    pub scale: usize,
    pub channels: usize,
    pub flow_widths: Vec<usize>,
    pub lffn: LffnConfig,
    pub erff: ErffConfig,
    pub sfe: SfeStrategy,
    pub lr: f64,
    pub batch_size: usize,
    pub val_period: usize,
    pub pretrain_steps: usize,
    pub joint_steps: usize,
    /// HR crop edge for augmented training clips.
    pub hr_crop: usize,
    pub flow_grad: FlowGradient,
    /// Backpropagate through previous HR outputs and stored features within a clip.
    pub recurrent_backprop: bool,
}

impl ModelConfig {
    /// Full-scale settings (64×64 → 256×256 patches).
    pub fn full() -> Self {
        ModelConfig {
            t1: 2,
            t2: 2,
            t3: 6,
            n_frames: 8,
            alpha: 0.01,
            gamma: 0.1,
            scale: 4,
            channels: 3,
            flow_widths: vec![16, 16, 32, 16, 2],
            lffn: LffnConfig {
                width: 64,
                blocks: 8,
                layers: 6,
                growth: 32,
                up_widths: [64, 64],
            },
            erff: ErffConfig {
                widths: [32, 64, 128],
                res_blocks: 8,
                attention: true,
            },
            sfe: SfeStrategy::Fused,
            lr: 1e-4,
            batch_size: 4,
            val_period: 200,
            pretrain_steps: 200_000,
            joint_steps: 150_000,
            hr_crop: 256,
            flow_grad: FlowGradient::Photometric,
            recurrent_backprop: true,
        }
    }

    /// Desk-scale settings (16×16 → 64×64) sized for a single CPU core.
    pub fn toy() -> Self {
        ModelConfig {
            flow_widths: vec![8, 8, 16, 8, 2],
            lffn: LffnConfig {
                width: 8,
                blocks: 2,
                layers: 3,
                growth: 8,
                up_widths: [8, 4],
            },
            erff: ErffConfig {
                widths: [8, 8, 8],
                res_blocks: 2,
                attention: true,
            },
            lr: 1e-3,
            batch_size: 1,
            pretrain_steps: 2000,
            joint_steps: 2000,
            hr_crop: 64,
            ..Self::full()
        }
    }

    /// A network small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        ModelConfig {
            t1: 1,
            t2: 1,
            t3: 2,
            n_frames: 3,
            flow_widths: vec![4, 2],
            lffn: LffnConfig {
                width: 4,
                blocks: 1,
                layers: 2,
                growth: 2,
                up_widths: [2, 2],
            },
            erff: ErffConfig {
                widths: [2, 2, 2],
                res_blocks: 2,
                attention: true,
            },
            hr_crop: 16,
            flow_grad: FlowGradient::Full,
            ..Self::toy()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Toy => Self::toy(),
            Profile::Full => Self::full(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(config_err("n_frames", "must be ≥ 1"));
        }
        if self.scale != 4 {
            return Err(config_err("scale", "local fusion upsamples with two ×2 shuffles; only 4 is supported"));
        }
        if self.alpha < 0.0 || self.gamma < 0.0 || !self.alpha.is_finite() || !self.gamma.is_finite() {
            return Err(config_err("alpha/gamma", "must be finite and ≥ 0"));
        }
        if self.flow_widths.last() != Some(&2) {
            return Err(config_err("flow_widths", "last layer must emit 2 channels"));
        }
        if self.flow_widths.contains(&0) || self.erff.widths.contains(&0) || self.lffn.up_widths.contains(&0) {
            return Err(config_err("widths", "channel widths must be positive"));
        }
        if self.lffn.width == 0 || self.lffn.blocks == 0 {
            return Err(config_err("lffn_width", "local fusion needs at least one block of positive width"));
        }
        if self.channels == 0 || self.batch_size == 0 {
            return Err(config_err("channels/batch_size", "must be ≥ 1"));
        }
        if self.hr_crop % (4 * self.scale) != 0 {
            return Err(config_err("hr_crop", "must be a multiple of 4·scale"));
        }
        if !(self.lr > 0.0) {
            return Err(config_err("lr", "must be positive"));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "t1" => self.t1 = parse(key, v)?,
            "t2" => self.t2 = parse(key, v)?,
            "t3" => self.t3 = parse(key, v)?,
            "n_frames" | "n" => self.n_frames = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "scale" | "r" => self.scale = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "flow_widths" => self.flow_widths = parse_list(key, v)?,
            "lffn_width" => self.lffn.width = parse(key, v)?,
            "lffn_blocks" => self.lffn.blocks = parse(key, v)?,
            "lffn_layers" => self.lffn.layers = parse(key, v)?,
            "lffn_growth" => self.lffn.growth = parse(key, v)?,
            "lffn_up_widths" => self.lffn.up_widths = parse_array(key, v)?,
            "erff_widths" => self.erff.widths = parse_array(key, v)?,
            "res_blocks" => self.erff.res_blocks = parse(key, v)?,
            "attention" => self.erff.attention = parse_bool(key, v)?,
            "sfe" => self.sfe = v.parse()?,
            "lr" => self.lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "val_period" => self.val_period = parse(key, v)?,
            "pretrain_steps" => self.pretrain_steps = parse(key, v)?,
            "joint_steps" => self.joint_steps = parse(key, v)?,
            "hr_crop" => self.hr_crop = parse(key, v)?,
            "flow_grad" => self.flow_grad = v.parse()?,
            "recurrent_backprop" => self.recurrent_backprop = parse_bool(key, v)?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in a stable order; `set` accepts them back.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("t1", self.t1.to_string()),
            ("t2", self.t2.to_string()),
            ("t3", self.t3.to_string()),
            ("n_frames", self.n_frames.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("gamma", format!("{:?}", self.gamma)),
            ("scale", self.scale.to_string()),
            ("channels", self.channels.to_string()),
            ("flow_widths", list(&self.flow_widths)),
            ("lffn_width", self.lffn.width.to_string()),
            ("lffn_blocks", self.lffn.blocks.to_string()),
            ("lffn_layers", self.lffn.layers.to_string()),
            ("lffn_growth", self.lffn.growth.to_string()),
            ("lffn_up_widths", list(&self.lffn.up_widths)),
            ("erff_widths", list(&self.erff.widths)),
            ("res_blocks", self.erff.res_blocks.to_string()),
            ("attention", self.erff.attention.to_string()),
            ("sfe", self.sfe.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("val_period", self.val_period.to_string()),
            ("pretrain_steps", self.pretrain_steps.to_string()),
            ("joint_steps", self.joint_steps.to_string()),
            ("hr_crop", self.hr_crop.to_string()),
            ("flow_grad", self.flow_grad.to_string()),
            ("recurrent_backprop", self.recurrent_backprop.to_string()),
        ]
    }
}

fn config_err(key: &str, detail: &str) -> Error {
    Error::Config {
        key: String::from(key),
        detail: String::from(detail),
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(key, &format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(config_err(key, &format!("expected a boolean, got `{v}`"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_array<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let list = parse_list(key, v)?;
    list.try_into()
        .map_err(|_| config_err(key, &format!("expected {N} comma-separated values")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_settings() {
        let c = ModelConfig::full();
        assert_eq!((c.t1, c.t2, c.t3, c.n_frames), (2, 2, 6, 8));
        assert_eq!((c.alpha, c.gamma, c.lr), (0.01, 0.1, 1e-4));
        assert_eq!((c.batch_size, c.val_period, c.erff.res_blocks), (4, 200, 8));
        c.validate().unwrap();
        ModelConfig::toy().validate().unwrap();
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let mut c = ModelConfig::toy();
        c.sfe = SfeStrategy::Cascaded;
        c.alpha = 0.125;
        let mut d = ModelConfig::full();
        for (k, v) in c.to_pairs() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = ModelConfig::toy().set("bogus", "1").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bogus"));
    }
}
