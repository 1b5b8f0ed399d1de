//! `section.key = value` run configuration files.
//!
//! ```text
//! # toy run
//! arch.scales = 32x16, 64x32, 128x64
//! arch.bottleneck = 8x4
//! train.steps = 2000
//! data.root = data/toy
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Omitted keys keep the toy defaults, except that omitted `arch.widths`
//! follow [`default_widths`] when the chain changes the number of levels.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::losses::LossWeights;
use crate::nets::{default_widths, ArchitectureConfig, Resolution};
use crate::tensor::AdamConfig;
use crate::{Error, Result};

/// Environment variable that overrides `train.seed`.
pub const SEED_ENV: &str = "MSGU_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub weights: LossWeights,
    /// Random horizontal flips of training pairs.
    pub flip: bool,
    /// Optional checkpoint-format file with `extractor.stage{i}` tensors.
    pub extractor_weights: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub root: PathBuf,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Loss rows are written every `log_every` steps.
    pub log_every: u64,
    /// 0 saves only the final checkpoint.
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchitectureConfig::toy(),
            train: TrainConfig {
                steps: 2000,
                batch_size: 4,
                seed: 0,
                optimizer: AdamConfig::default(),
                weights: LossWeights::default(),
                flip: false,
                extractor_weights: None,
            },
            data: DataConfig {
                root: PathBuf::from("data"),
                split: "train".into(),
            },
            output: OutputConfig {
                dir: PathBuf::from("runs"),
                log_every: 1,
                checkpoint_every: 0,
            },
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| format!("bad list entry `{}`", s.trim())))
        .collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("bad number `{v}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut widths_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `section.key = value`, got `{line}`")))?;
            let (key, v) = (key.trim(), value.trim());
            let a = &mut c.arch;
            let t = &mut c.train;
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "arch.preset" => {
                        *a = match v {
                            "toy" => ArchitectureConfig::toy(),
                            "cityscapes" => ArchitectureConfig::cityscapes(),
                            _ => return Err(format!("unknown preset `{v}` (toy or cityscapes)")),
                        };
                        widths_given = true;
                    }
                    "arch.scales" => a.scales = parse_list::<Resolution>(v)?,
                    "arch.bottleneck" => a.bottleneck = v.parse()?,
                    "arch.widths" => {
                        if v == "auto" {
                            widths_given = false;
                        } else {
                            a.widths = parse_list(v)?;
                            widths_given = true;
                        }
                    }
                    "arch.kernel" => a.kernel = parse_num(v)?,
                    "arch.leaky_slope" => a.leaky_slope = parse_num(v)?,
                    "arch.disc_width" => a.disc_width = parse_num(v)?,
                    "arch.extractor_widths" => a.extractor_widths = parse_list(v)?,
                    "arch.bn_eps" => a.bn_eps = parse_num(v)?,
                    "arch.bn_momentum" => a.bn_momentum = parse_num(v)?,
                    "train.intermediate_heads" => a.intermediate_heads = parse_bool(v)?,
                    "train.steps" => t.steps = parse_num(v)?,
                    "train.batch_size" => t.batch_size = parse_num(v)?,
                    "train.seed" => t.seed = parse_num(v)?,
                    "train.lr" => t.optimizer.lr = parse_num(v)?,
                    "train.beta1" => t.optimizer.beta1 = parse_num(v)?,
                    "train.beta2" => t.optimizer.beta2 = parse_num(v)?,
                    "train.alpha" => t.weights.alpha = parse_num(v)?,
                    "train.beta" => t.weights.beta = parse_num(v)?,
                    "train.flip" => t.flip = parse_bool(v)?,
                    "train.extractor_weights" => {
                        t.extractor_weights = (!v.is_empty()).then(|| PathBuf::from(v))
                    }
                    "data.root" => c.data.root = PathBuf::from(v),
                    "data.split" => c.data.split = v.to_owned(),
                    "output.dir" => c.output.dir = PathBuf::from(v),
                    "output.log_every" => c.output.log_every = parse_num(v)?,
                    "output.checkpoint_every" => c.output.checkpoint_every = parse_num(v)?,
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        if !widths_given && !c.arch.scales.is_empty() && c.arch.bottleneck.h > 0 {
            let levels = (c.arch.finest().h / c.arch.bottleneck.h).max(1).ilog2() as usize + 1;
            if c.arch.widths.len() != levels {
                c.arch.widths = default_widths(levels);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { line: 0, msg: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    /// Applies [`SEED_ENV`] if it is set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.train.seed = v.trim().parse().map_err(|_| Error::Config {
                line: 0,
                msg: format!("{SEED_ENV}=`{v}` is not an unsigned integer"),
            })?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let err = |msg: &str| Err(Error::Config { line: 0, msg: msg.into() });
        if self.train.batch_size == 0 {
            return err("train.batch_size must be positive");
        }
        if !(self.train.optimizer.lr > 0.0) {
            return err("train.lr must be positive");
        }
        let b = [self.train.optimizer.beta1, self.train.optimizer.beta2];
        if b.iter().any(|b| !(0.0..1.0).contains(b)) {
            return err("train.beta1 and train.beta2 must lie in [0, 1)");
        }
        self.train.weights.validate()?;
        if self.output.log_every == 0 {
            return err("output.log_every must be positive");
        }
        Ok(())
    }

    /// Text that [`RunConfig::parse`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        let a = &self.arch;
        let t = &self.train;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let scales: Vec<String> = a.scales.iter().map(|r| r.to_string()).collect();
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("arch.scales", scales.join(", "));
        put("arch.bottleneck", a.bottleneck.to_string());
        put("arch.widths", join(&a.widths));
        put("arch.kernel", a.kernel.to_string());
        put("arch.leaky_slope", a.leaky_slope.to_string());
        put("arch.disc_width", a.disc_width.to_string());
        put("arch.extractor_widths", join(&a.extractor_widths));
        put("arch.bn_eps", a.bn_eps.to_string());
        put("arch.bn_momentum", a.bn_momentum.to_string());
        put("train.intermediate_heads", a.intermediate_heads.to_string());
        put("train.steps", t.steps.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.seed", t.seed.to_string());
        put("train.lr", t.optimizer.lr.to_string());
        put("train.beta1", t.optimizer.beta1.to_string());
        put("train.beta2", t.optimizer.beta2.to_string());
        put("train.alpha", t.weights.alpha.to_string());
        put("train.beta", t.weights.beta.to_string());
        put("train.flip", t.flip.to_string());
        if let Some(p) = &t.extractor_weights {
            put("train.extractor_weights", p.display().to_string());
        }
        put("data.root", self.data.root.display().to_string());
        put("data.split", self.data.split.clone());
        put("output.dir", self.output.dir.display().to_string());
        put("output.log_every", self.output.log_every.to_string());
        put("output.checkpoint_every", self.output.checkpoint_every.to_string());
        s
    }
}
