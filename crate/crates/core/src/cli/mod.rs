//! Command-line front end: `key = value` config files, flag overrides and
//! the split / train / evaluate / predict / gradcheck / inspect commands.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{dispatch, thousands, Command};
pub use config::{
    parse_config, ConfigLayer, FreezeMode, RunConfig, CONFIG_KEYS, CONFUSION_FILE, EPOCHS_FILE, METRICS_FILE,
    SPLITS_FILE, WEIGHTS_FILE,
};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "vggft",
    version,
    about = "Fine-tuned VGG-16/VGG-19 image classification"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum CommandArg {
    /// Stratified 70/10/20 split; writes splits.csv
    Split,
    /// Fine-tune; writes weights.vggw and epochs.csv
    Train,
    /// Score the test partition; writes metrics.csv and confusion.csv
    Evaluate,
    /// Print class probabilities per image
    Predict {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Finite-difference check of every kernel
    Gradcheck,
    /// Layer table and parameter counts
    Inspect,
}

#[derive(Debug, Args)]
struct Flags {
    /// Config file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root: <root>/<class>/<images>
    #[arg(long, global = true)]
    data: Option<String>,
    /// vgg16 | vgg19
    #[arg(long, global = true)]
    arch: Option<String>,
    /// binary | multiclass
    #[arg(long, global = true)]
    task: Option<String>,
    /// Pretrained features (train) or trained model (evaluate, predict)
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Split manifest (default <out>/splits.csv)
    #[arg(long, global = true)]
    manifest: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Learning rate
    #[arg(long, global = true)]
    lr: Option<String>,
    /// Batch size
    #[arg(long, global = true)]
    batch: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// Output directory for artifacts
    #[arg(long, global = true)]
    out: Option<String>,
    /// Class reported as positive in metrics.csv
    #[arg(long, global = true)]
    positive_class: Option<String>,
    /// head-only | full
    #[arg(long, global = true)]
    freeze: Option<String>,
    /// Width-reduced 64x64 graph for quick runs
    #[arg(long, global = true)]
    tiny: bool,
    /// Rotation range in degrees
    #[arg(long, global = true)]
    rotation: Option<String>,
    #[arg(long, global = true)]
    flip_probability: Option<String>,
    /// Disable augmentation entirely
    #[arg(long, global = true)]
    no_augment: bool,
    /// Augment training samples only
    #[arg(long, global = true)]
    no_augment_validation: bool,
    /// unit | imagenet | half
    #[arg(long, global = true)]
    normalize: Option<String>,
}

impl Flags {
    fn layer(&self) -> Result<ConfigLayer> {
        let mut layer = ConfigLayer::default();
        let pairs = [
            ("data", &self.data, "--data"),
            ("arch", &self.arch, "--arch"),
            ("task", &self.task, "--task"),
            ("weights", &self.weights, "--weights"),
            ("manifest", &self.manifest, "--manifest"),
            ("seed", &self.seed, "--seed"),
            ("learning_rate", &self.lr, "--lr"),
            ("batch_size", &self.batch, "--batch"),
            ("epochs", &self.epochs, "--epochs"),
            ("out", &self.out, "--out"),
            ("positive_class", &self.positive_class, "--positive-class"),
            ("freeze", &self.freeze, "--freeze"),
            ("rotation", &self.rotation, "--rotation"),
            ("flip_probability", &self.flip_probability, "--flip-probability"),
            ("normalize", &self.normalize, "--normalize"),
        ];
        for (key, value, flag) in pairs {
            if let Some(v) = value {
                layer.set(key, v).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{flag}: {m}")),
                    other => other,
                })?;
            }
        }
        if self.tiny {
            layer.tiny = Some(true);
        }
        if self.no_augment {
            layer.augment = Some(false);
        }
        if self.no_augment_validation {
            layer.augment_validation = Some(false);
        }
        Ok(layer)
    }
}

fn prepare(cli: Cli) -> Result<(Command, RunConfig)> {
    let text = match &cli.flags.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let cfg = parse_config(text.as_deref(), cli.flags.layer()?)?;
    let command = match cli.command {
        CommandArg::Split => Command::Split,
        CommandArg::Train => Command::Train,
        CommandArg::Evaluate => Command::Evaluate,
        CommandArg::Predict { images } => Command::Predict { images },
        CommandArg::Gradcheck => Command::Gradcheck,
        CommandArg::Inspect => Command::Inspect,
    };
    Ok((command, cfg))
}

/// Full CLI entry point. Returns the process exit status; diagnostics go to
/// `err` as a single `error[<kind>]: ...` line.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            let _ = writeln!(err, "error[usage]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match prepare(cli).and_then(|(command, cfg)| dispatch(&command, &cfg, out)) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error[{}]: {line}", e.kind());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn unknown_command_is_usage_error() {
        let (code, _, err) = run_capture(&["vggft", "launch"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error[usage]: "), "{err}");
        assert_eq!(err.lines().count(), 1);
    }

    #[test]
    fn bad_flag_value_is_config_error() {
        let (code, _, err) = run_capture(&["vggft", "inspect", "--lr", "banana"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[config]: "), "{err}");
        assert!(err.contains("--lr"));
    }

    #[test]
    fn inspect_tiny_via_flags() {
        let (code, out, _) = run_capture(&["vggft", "inspect", "--tiny", "--arch", "vgg19"]);
        assert_eq!(code, 0);
        assert!(out.contains("weight layers: 19 (16 conv, 3 dense)"), "{out}");
        assert!(out.contains("non-paper"));
    }
}
