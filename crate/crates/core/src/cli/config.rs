use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{AugmentConfig, NormalizeScheme};
use crate::error::{Error, Result};
use crate::model::{Architecture, Task};
use crate::train::{AdamConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezeMode {
    /// Convolutional layers frozen; only the dense head trains.
    #[default]
    HeadOnly,
    /// Every layer trains.
    Full,
}

impl FromStr for FreezeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head-only" => Ok(FreezeMode::HeadOnly),
            "full" => Ok(FreezeMode::Full),
            other => Err(Error::Config(format!(
                "unknown freeze mode `{other}` (expected head-only or full)"
            ))),
        }
    }
}

impl fmt::Display for FreezeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreezeMode::HeadOnly => "head-only",
            FreezeMode::Full => "full",
        })
    }
}

/// Recognised keys of the `key = value` config file.
pub const CONFIG_KEYS: [&str; 18] = [
    "data",
    "arch",
    "task",
    "weights",
    "manifest",
    "seed",
    "learning_rate",
    "batch_size",
    "epochs",
    "rotation",
    "flip_probability",
    "augment",
    "augment_validation",
    "freeze",
    "out",
    "positive_class",
    "tiny",
    "normalize",
];

/// Settings as given in a file or on the command line; unset fields fall
/// back to defaults in [`ConfigLayer::resolve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub data: Option<PathBuf>,
    pub arch: Option<Architecture>,
    pub task: Option<Task>,
    pub weights: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub rotation: Option<f64>,
    pub flip_probability: Option<f64>,
    pub augment: Option<bool>,
    pub augment_validation: Option<bool>,
    pub freeze: Option<FreezeMode>,
    pub out: Option<PathBuf>,
    pub positive_class: Option<String>,
    pub tiny: Option<bool>,
    pub normalize: Option<NormalizeScheme>,
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::Config(format!("`{other}` is not a boolean"))),
    }
}

fn parse_num<T: FromStr>(v: &str, what: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{v}` is not a valid {what}")))
}

impl ConfigLayer {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => self.data = Some(v.into()),
            "arch" => self.arch = Some(v.parse()?),
            "task" => self.task = Some(v.parse()?),
            "weights" => self.weights = Some(v.into()),
            "manifest" => self.manifest = Some(v.into()),
            "seed" => self.seed = Some(parse_num(v, "unsigned 64-bit seed")?),
            "learning_rate" => self.learning_rate = Some(parse_num(v, "number")?),
            "batch_size" => self.batch_size = Some(parse_num(v, "batch size")?),
            "epochs" => self.epochs = Some(parse_num(v, "epoch count")?),
            "rotation" => self.rotation = Some(parse_num(v, "number of degrees")?),
            "flip_probability" => self.flip_probability = Some(parse_num(v, "probability")?),
            "augment" => self.augment = Some(parse_bool(v)?),
            "augment_validation" => self.augment_validation = Some(parse_bool(v)?),
            "freeze" => self.freeze = Some(v.parse()?),
            "out" => self.out = Some(v.into()),
            "positive_class" => self.positive_class = Some(v.to_string()),
            "tiny" => self.tiny = Some(parse_bool(v)?),
            "normalize" => self.normalize = Some(v.parse()?),
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}` (known keys: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut layer = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let at_line = |e: Error| Error::ConfigLine {
                line,
                message: match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                },
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| at_line(Error::Config(format!("expected `key = value`, got `{content}`"))))?;
            layer.set(key.trim(), value).map_err(at_line)?;
        }
        Ok(layer)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            data,
            arch,
            task,
            weights,
            manifest,
            seed,
            learning_rate,
            batch_size,
            epochs,
            rotation,
            flip_probability,
            augment,
            augment_validation,
            freeze,
            out,
            positive_class,
            tiny,
            normalize
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let task = self.task.unwrap_or(Task::Binary);
        let defaults = TrainConfig::for_task(task);
        let augment_defaults = AugmentConfig::default();
        let cfg = RunConfig {
            data: self.data,
            arch: self.arch.unwrap_or(Architecture::Vgg16),
            task,
            weights: self.weights,
            manifest: self.manifest,
            seed: self.seed.unwrap_or(0),
            learning_rate: self.learning_rate.unwrap_or(defaults.adam.learning_rate),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            epochs: self.epochs.unwrap_or(defaults.epochs),
            rotation: self.rotation.unwrap_or(augment_defaults.rotation_degrees),
            flip_probability: self.flip_probability.unwrap_or(augment_defaults.flip_probability),
            augment: self.augment.unwrap_or(true),
            augment_validation: self.augment_validation.unwrap_or(true),
            freeze: self.freeze.unwrap_or_default(),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            positive_class: self.positive_class,
            tiny: self.tiny.unwrap_or(false),
            normalize: self.normalize.unwrap_or_default(),
        };
        cfg.train_config()?;
        Ok(cfg)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub arch: Architecture,
    pub task: Task,
    pub weights: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rotation: f64,
    pub flip_probability: f64,
    pub augment: bool,
    pub augment_validation: bool,
    pub freeze: FreezeMode,
    pub out: PathBuf,
    pub positive_class: Option<String>,
    pub tiny: bool,
    pub normalize: NormalizeScheme,
}

impl Default for RunConfig {
    fn default() -> Self {
        ConfigLayer::default().resolve().expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            augment: self.augment.then_some(AugmentConfig {
                rotation_degrees: self.rotation,
                flip_probability: self.flip_probability,
                seed: self.seed,
            }),
            augment_validation: self.augment_validation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_root(&self) -> Result<&PathBuf> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("a dataset root is required (`--data` or `data = ...`)".into()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out.join(SPLITS_FILE))
    }

    pub fn weights_path(&self) -> PathBuf {
        self.weights
            .clone()
            .unwrap_or_else(|| self.out.join(WEIGHTS_FILE))
    }
}

pub const WEIGHTS_FILE: &str = "weights.vggw";
pub const SPLITS_FILE: &str = "splits.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const EPOCHS_FILE: &str = "epochs.csv";

/// Reads the optional config file and lays `flags` over it.
pub fn parse_config(file_text: Option<&str>, flags: ConfigLayer) -> Result<RunConfig> {
    let base = match file_text {
        Some(text) => ConfigLayer::parse(text)?,
        None => ConfigLayer::default(),
    };
    base.overlay(flags).resolve()
}
