use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{
    FreezeMode, RunConfig, CONFUSION_FILE, EPOCHS_FILE, METRICS_FILE, SPLITS_FILE, WEIGHTS_FILE,
};
use crate::data::{
    decode_image, load_dataset, stratified_split, DatasetSplit, DiskSet, Partition, Preprocess, SplitRatios,
};
use crate::error::{Error, Result};
use crate::metrics::{confusion_csv, metrics_csv, round3};
use crate::model::{
    load_features, load_weights, read_header, save_weights, Architecture, GraphOptions, LayerKind,
    ModelGraph, Task, WeightStore,
};
use crate::train::{epochs_csv, evaluate, fit, predict};
use crate::verify::{gradient_suite, TOLERANCE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Split,
    Train,
    Evaluate,
    Predict { images: Vec<PathBuf> },
    Gradcheck,
    Inspect,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split => "split",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Predict { .. } => "predict",
            Command::Gradcheck => "gradcheck",
            Command::Inspect => "inspect",
        }
    }
}

fn io_err(out: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(out, e)
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|e| Error::io("<stdout>", e))?
    };
}

fn graph_options(cfg: &RunConfig) -> GraphOptions {
    if cfg.tiny {
        GraphOptions::tiny()
    } else {
        GraphOptions::default()
    }
}

fn build_graph(cfg: &RunConfig, arch: Architecture, task: Task) -> Result<ModelGraph> {
    let graph = ModelGraph::build(arch, task, graph_options(cfg))?;
    Ok(match cfg.freeze {
        FreezeMode::HeadOnly => graph.freeze_features(),
        FreezeMode::Full => graph,
    })
}

fn preprocess(cfg: &RunConfig, graph: &ModelGraph) -> Preprocess {
    Preprocess {
        size: graph.input_shape()[1],
        scheme: cfg.normalize,
    }
}

fn write_artifact(cfg: &RunConfig, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn check_class_count(classes: &[String], task: Task) -> Result<()> {
    if classes.len() != task.classes() {
        return Err(Error::Config(format!(
            "task {task} needs {} classes but the dataset has {} ({})",
            task.classes(),
            classes.len(),
            classes.join(", ")
        )));
    }
    Ok(())
}

/// Full (task-bearing) weights for evaluate/predict: `weights` when it names
/// a trained model, otherwise `<out>/weights.vggw`.
fn trained_weights(cfg: &RunConfig) -> Result<(PathBuf, Architecture, Task)> {
    let candidate = match &cfg.weights {
        Some(p) if read_header(p)?.1 != 0 => p.clone(),
        _ => cfg.out.join(WEIGHTS_FILE),
    };
    let (arch, task_id) = read_header(&candidate)?;
    let task = Task::from_id(task_id).ok_or_else(|| {
        Error::Input(format!(
            "{} holds features only; train a head first",
            candidate.display()
        ))
    })?;
    Ok((candidate, arch, task))
}

fn split_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let root = cfg.data_root()?;
    let dataset = load_dataset(root)?;
    let split = stratified_split(&dataset, SplitRatios::default(), cfg.seed)?;
    let path = write_artifact(cfg, SPLITS_FILE, split.to_manifest()?.as_bytes())?;
    say!(w, "class,train,validation,test");
    let counts = [Partition::Train, Partition::Validation, Partition::Test].map(|p| split.class_counts(p));
    for (c, name) in split.classes.iter().enumerate() {
        say!(w, "{name},{},{},{}", counts[0][c], counts[1][c], counts[2][c]);
    }
    say!(w, "wrote {}", path.display());
    Ok(())
}

fn load_or_make_split(cfg: &RunConfig, w: &mut dyn Write) -> Result<DatasetSplit> {
    let root = cfg.data_root()?;
    let manifest = cfg.manifest_path();
    if manifest.exists() {
        say!(w, "using split manifest {}", manifest.display());
        return DatasetSplit::read_manifest(&manifest, root);
    }
    let split = stratified_split(&load_dataset(root)?, SplitRatios::default(), cfg.seed)?;
    let path = write_artifact(cfg, SPLITS_FILE, split.to_manifest()?.as_bytes())?;
    say!(w, "wrote {}", path.display());
    Ok(split)
}

fn train_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let train_cfg = cfg.train_config()?;
    let split = load_or_make_split(cfg, w)?;
    check_class_count(&split.classes, cfg.task)?;
    let graph = build_graph(cfg, cfg.arch, cfg.task)?;
    if cfg.tiny {
        say!(
            w,
            "note: --tiny graph (widths / 8, 64x64 input) is non-paper behavior"
        );
    }

    let mut weights = WeightStore::<f32>::init(&graph, cfg.seed);
    match &cfg.weights {
        Some(p) => {
            let (_, task_id) = read_header(p)?;
            if task_id == 0 {
                weights.transfer_features(&graph, &load_features(p, &graph)?)?;
                say!(w, "initialised convolutional layers from {}", p.display());
            } else {
                weights = load_weights(p, &graph)?;
                say!(w, "continuing from full model {}", p.display());
            }
        }
        None => {
            say!(
                w,
                "note: no pretrained weights given; training from scratch is non-paper behavior"
            );
        }
    }
    weights.sync_frozen(&graph);
    let counts = graph.param_count();
    say!(
        w,
        "{} {} freeze={} trainable={} frozen={} epochs={} batch={} lr={}",
        cfg.arch,
        cfg.task,
        cfg.freeze,
        counts.trainable,
        counts.frozen,
        train_cfg.epochs,
        train_cfg.batch_size,
        train_cfg.adam.learning_rate
    );

    let pre = preprocess(cfg, &graph);
    let train = DiskSet::from_split(&split, Partition::Train, pre);
    let val = DiskSet::from_split(&split, Partition::Validation, pre);
    let (trained, reports) = fit(&graph, weights, &train, &val, &train_cfg)?;
    for r in &reports {
        say!(
            w,
            "epoch {:>3}  loss {:.4}  acc {:.3}  val_loss {:.4}  val_acc {:.3}",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.val_loss,
            r.val_accuracy
        );
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let weights_path = cfg.out.join(WEIGHTS_FILE);
    save_weights(&trained, &graph, &weights_path)?;
    let epochs_path = write_artifact(cfg, EPOCHS_FILE, epochs_csv(&reports)?.as_bytes())?;
    say!(w, "wrote {}", weights_path.display());
    say!(w, "wrote {}", epochs_path.display());
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let root = cfg.data_root()?;
    let (weights_path, arch, task) = trained_weights(cfg)?;
    let graph = build_graph(cfg, arch, task)?;
    let weights = load_weights(&weights_path, &graph)?;
    let split = DatasetSplit::read_manifest(&cfg.manifest_path(), root)?;
    check_class_count(&split.classes, task)?;
    let test = DiskSet::from_split(&split, Partition::Test, preprocess(cfg, &graph));
    let (cm, report) = evaluate(&graph, &weights, &test, cfg.batch_size)?;

    let positive = match &cfg.positive_class {
        Some(name) => Some(split.classes.iter().position(|c| c == name).ok_or_else(|| {
            Error::Config(format!(
                "positive class `{name}` is not one of {}",
                split.classes.join(", ")
            ))
        })?),
        None if task == Task::Binary => Some(0),
        None => None,
    };
    let metrics = write_artifact(
        cfg,
        METRICS_FILE,
        metrics_csv(arch.name(), task.name(), &report, positive)?.as_bytes(),
    )?;
    let confusion = write_artifact(cfg, CONFUSION_FILE, confusion_csv(&cm)?.as_bytes())?;
    say!(
        w,
        "{arch} {task} test samples={}  precision {:.3}  recall {:.3}  f1 {:.3}  accuracy {:.3}  (macro)",
        report.total,
        round3(report.precision),
        round3(report.recall),
        round3(report.f_measure),
        round3(report.accuracy)
    );
    if let Some(c) = positive.map(|p| &report.per_class[p]) {
        say!(
            w,
            "positive class {}: precision {:.3}  recall {:.3}  f1 {:.3}",
            c.class,
            round3(c.precision),
            round3(c.recall),
            round3(c.f_measure)
        );
    }
    say!(w, "wrote {}", metrics.display());
    say!(w, "wrote {}", confusion.display());
    Ok(())
}

fn predict_cmd(cfg: &RunConfig, images: &[PathBuf], w: &mut dyn Write) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Input("predict needs at least one image path".into()));
    }
    let (weights_path, arch, task) = trained_weights(cfg)?;
    let graph = build_graph(cfg, arch, task)?;
    let weights = load_weights(&weights_path, &graph)?;
    let manifest = cfg.manifest_path();
    let classes = if manifest.exists() {
        let root = cfg.data.clone().unwrap_or_default();
        DatasetSplit::read_manifest(&manifest, &root)?.classes
    } else {
        (0..task.classes()).map(|c| format!("class_{c}")).collect()
    };
    check_class_count(&classes, task)?;
    let pre = preprocess(cfg, &graph);
    say!(w, "path,{},predicted", classes.join(","));
    for path in images {
        let x = pre.apply(&decode_image(path)?)?;
        let batch = x.reshape([1, 3, pre.size, pre.size].to_vec())?;
        let probs = predict(&graph, &weights, &batch)?;
        let best = probs.argmax_rows()?[0];
        let cells: Vec<String> = probs.data().iter().map(|p| format!("{p:.6}")).collect();
        say!(w, "{},{},{}", path.display(), cells.join(","), classes[best]);
    }
    Ok(())
}

fn gradcheck_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let checks = gradient_suite(cfg.seed)?;
    say!(w, "kernel,elements,max_rel_error,status");
    for c in &checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        say!(w, "{},{},{:.3e},{status}", c.kernel, c.elements, c.max_rel_error);
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed()).map(|c| c.kernel).collect();
    if !failed.is_empty() {
        return Err(Error::State(format!(
            "gradient check above tolerance {TOLERANCE:e} for {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

/// `24416579` as `24,416,579`.
pub fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn inspect_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let graph = build_graph(cfg, cfg.arch, cfg.task)?;
    graph.audit()?;
    let trace = graph.shape_trace()?;
    say!(
        w,
        "{:<14} {:<10} {:<16} {:>12}  trainable",
        "layer",
        "kind",
        "output",
        "params"
    );
    for (layer, shape) in graph.layers().iter().zip(&trace) {
        let kind = match layer.kind {
            LayerKind::Conv { .. } => "conv3x3",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool2x2",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Output(_) => "output",
        };
        let (params, trainable) = if layer.is_weighted() {
            (
                thousands(layer.param_count()),
                if layer.trainable { "yes" } else { "no" },
            )
        } else {
            (String::new(), "")
        };
        say!(
            w,
            "{:<14} {:<10} {:<16} {:>12}  {trainable}",
            layer.name,
            kind,
            format!("{shape:?}"),
            params
        );
    }
    let counts = graph.param_count();
    say!(
        w,
        "weight layers: {} ({} conv, {} dense)",
        graph.conv_count() + graph.dense_count(),
        graph.conv_count(),
        graph.dense_count()
    );
    say!(
        w,
        "total parameters: {} ({})",
        counts.total,
        thousands(counts.total)
    );
    say!(
        w,
        "trainable parameters: {} ({})",
        counts.trainable,
        thousands(counts.trainable)
    );
    say!(
        w,
        "frozen parameters: {} ({})",
        counts.frozen,
        thousands(counts.frozen)
    );
    if cfg.tiny {
        say!(
            w,
            "note: --tiny graph (widths / 8, 64x64 input) is non-paper behavior"
        );
    }
    Ok(())
}

/// Runs one command, writing human-readable progress to `w`.
pub fn dispatch(command: &Command, cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    match command {
        Command::Split => split_cmd(cfg, w),
        Command::Train => train_cmd(cfg, w),
        Command::Evaluate => evaluate_cmd(cfg, w),
        Command::Predict { images } => predict_cmd(cfg, images, w),
        Command::Gradcheck => gradcheck_cmd(cfg, w),
        Command::Inspect => inspect_cmd(cfg, w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_grouping() {
        assert_eq!(thousands(24_416_579), "24,416,579");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(0), "0");
    }

    #[test]
    fn inspect_full_vgg16() {
        let mut out = Vec::new();
        let cfg = RunConfig {
            task: Task::Multiclass,
            ..RunConfig::default()
        };
        dispatch(&Command::Inspect, &cfg, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("weight layers: 16 (13 conv, 3 dense)"), "{text}");
        assert!(text.contains("total parameters: 24416579 (24,416,579)"));
        assert!(text.contains("trainable parameters: 9701891"));
    }
}
