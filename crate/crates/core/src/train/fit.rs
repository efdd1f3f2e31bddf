use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::data::{augment, sample_rng, AugmentConfig, SampleSet};
use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, confusion_matrix, ConfusionMatrix, MetricsReport};
use crate::model::{Mode, ModelGraph, Network, Task, WeightStore};
use crate::seed::mix;
use crate::tensor::{sigmoid_binary_loss, softmax_cross_entropy, LossOutput, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
    /// Augment validation samples too (training samples always are when
    /// `augment` is set).
    pub augment_validation: bool,
}

impl TrainConfig {
    /// Binary: batch 24, 12 epochs. Multiclass: batch 32, 16 epochs.
    pub fn for_task(task: Task) -> Self {
        let (batch_size, epochs) = match task {
            Task::Binary => (24, 12),
            Task::Multiclass => (32, 16),
        };
        Self {
            adam: AdamConfig::default(),
            batch_size,
            epochs,
            seed: 0,
            augment: Some(AugmentConfig::default()),
            augment_validation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

pub const EPOCHS_HEADER: [&str; 5] = [
    "epoch",
    "train_loss",
    "train_accuracy",
    "val_loss",
    "val_accuracy",
];

pub fn epochs_csv(reports: &[EpochReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPOCHS_HEADER)?;
    for r in reports {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.train_accuracy.to_string(),
            r.val_loss.to_string(),
            r.val_accuracy.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Input(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn task_of(graph: &ModelGraph) -> Result<Task> {
    graph
        .task()
        .ok_or_else(|| Error::State("graph has no classifier head attached".into()))
}

fn check_set<S: SampleSet + ?Sized>(set: &S, task: Task, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Input(format!("{what} split is empty")));
    }
    if set.classes().len() != task.classes() {
        return Err(Error::Input(format!(
            "{what} split has {} classes but the {} head has {} outputs",
            set.classes().len(),
            task.name(),
            task.classes()
        )));
    }
    Ok(())
}

/// Stacks the samples at `indices`, augmenting each with its own stream when
/// `aug` is given.
fn load_batch<S: SampleSet + ?Sized>(
    set: &S,
    indices: &[usize],
    aug: Option<(&AugmentConfig, usize)>,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let mut images = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let img = set.image(i)?;
        images.push(match aug {
            Some((cfg, epoch)) => augment(&img, cfg, &mut sample_rng(cfg.seed, &set.key(i), epoch)),
            None => img,
        });
        labels.push(set.label(i));
    }
    Ok((Tensor::stack(&images)?, labels))
}

fn one_hot(labels: &[usize], k: usize) -> Result<Tensor<f32>> {
    let mut data = vec![0.0; labels.len() * k];
    for (row, &l) in labels.iter().enumerate() {
        data[row * k + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), k], data)
}

fn task_loss(task: Task, logits: &Tensor<f32>, labels: &[usize]) -> Result<LossOutput<f32>> {
    let y = one_hot(labels, task.classes())?;
    match task {
        Task::Multiclass => softmax_cross_entropy(logits, &y),
        Task::Binary => sigmoid_binary_loss(logits, &y),
    }
}

fn correct(logits: &Tensor<f32>, labels: &[usize]) -> Result<usize> {
    Ok(logits
        .argmax_rows()?
        .iter()
        .zip(labels)
        .filter(|(p, t)| p == t)
        .count())
}

/// Inference-mode mean loss and accuracy over a set.
fn score<S: SampleSet + ?Sized>(
    graph: &ModelGraph,
    weights: &WeightStore<f32>,
    set: &S,
    batch_size: usize,
    aug: Option<(&AugmentConfig, usize)>,
) -> Result<(f64, f64)> {
    let task = task_of(graph)?;
    let net = Network::new(graph, weights)?;
    let (mut loss, mut hits) = (0.0f64, 0usize);
    let order: Vec<usize> = (0..set.len()).collect();
    for chunk in order.chunks(batch_size) {
        let (x, labels) = load_batch(set, chunk, aug)?;
        let pass = net.forward(&x, Mode::Inference)?;
        loss += f64::from(task_loss(task, &pass.logits, &labels)?.loss) * chunk.len() as f64;
        hits += correct(&pass.logits, &labels)?;
    }
    let n = set.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Trains the graph's trainable layers for exactly `cfg.epochs` epochs and
/// returns the final weights with one report per epoch.
pub fn fit<S: SampleSet + ?Sized, V: SampleSet + ?Sized>(
    graph: &ModelGraph,
    mut weights: WeightStore<f32>,
    train: &S,
    val: &V,
    cfg: &TrainConfig,
) -> Result<(WeightStore<f32>, Vec<EpochReport>)> {
    cfg.validate()?;
    let task = task_of(graph)?;
    check_set(train, task, "training")?;
    check_set(val, task, "validation")?;
    weights.sync_frozen(graph);
    weights.validate(graph)?;

    let mut state = AdamState::new();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ epoch as u64));
        let aug = cfg.augment.as_ref().map(|a| (a, epoch));

        let (mut loss_sum, mut hits) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = load_batch(train, chunk, aug)?;
            let grads = {
                let net = Network::new(graph, &weights)?;
                let dropout_seed = mix(cfg.seed, mix(epoch as u64, b as u64));
                let pass = net.forward(&x, Mode::Training { seed: dropout_seed })?;
                let out = task_loss(task, &pass.logits, &labels)?;
                if !out.loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        batch: b + 1,
                    });
                }
                loss_sum += f64::from(out.loss) * chunk.len() as f64;
                hits += correct(&pass.logits, &labels)?;
                net.backward(&pass, &out.grad)?
            };
            adam_step(&mut weights, &grads, &mut state, &cfg.adam)?;
        }

        let val_aug = if cfg.augment_validation { aug } else { None };
        let (val_loss, val_accuracy) = score(graph, &weights, val, cfg.batch_size, val_aug)?;
        let n = train.len() as f64;
        reports.push(EpochReport {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_accuracy: hits as f64 / n,
            val_loss,
            val_accuracy,
        });
    }
    Ok((weights, reports))
}

/// Inference-mode class probabilities for a batch `[N, 3, S, S]`.
pub fn predict(graph: &ModelGraph, weights: &WeightStore<f32>, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
    task_of(graph)?;
    Ok(Network::new(graph, weights)?
        .forward(batch, Mode::Inference)?
        .probs)
}

/// Argmax predictions over a whole set, counted against its labels.
pub fn evaluate<S: SampleSet + ?Sized>(
    graph: &ModelGraph,
    weights: &WeightStore<f32>,
    set: &S,
    batch_size: usize,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let task = task_of(graph)?;
    check_set(set, task, "evaluation")?;
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let net = Network::new(graph, weights)?;
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    let order: Vec<usize> = (0..set.len()).collect();
    for chunk in order.chunks(batch_size) {
        let (x, labels) = load_batch(set, chunk, None)?;
        pred.extend(net.forward(&x, Mode::Inference)?.probs.argmax_rows()?);
        truth.extend(labels);
    }
    let cm = confusion_matrix(&truth, &pred, task.classes())?.with_class_names(set.classes().to_vec())?;
    let report = classification_metrics(&cm)?;
    Ok((cm, report))
}
