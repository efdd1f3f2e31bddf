//! Dataset ingestion, decoding, resize/normalize, stratified splitting and
//! on-the-fly augmentation.

mod augment;
mod dataset;
mod image;
mod split;
mod transform;

use std::path::PathBuf;
use std::sync::Arc;

pub use augment::{augment, flip_horizontal, rotate, sample_rng, AugmentConfig};
pub use dataset::{load_dataset, Dataset, LabeledSample, IMAGE_EXTENSIONS};
pub use image::{decode_image, Decoders, ImageDecoder, PnmDecoder, RawImage};
pub use split::{stratified_split, DatasetSplit, Partition, SplitRatios, MANIFEST_HEADER};
pub use transform::{normalize, resize_bilinear, NormalizeScheme, Preprocess};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indexed source of preprocessed `[3, S, S]` images with labels.
pub trait SampleSet {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> usize;
    /// Stable identifier, used to key augmentation streams.
    fn key(&self, index: usize) -> String;
    fn image(&self, index: usize) -> Result<Tensor<f32>>;
    fn classes(&self) -> &[String];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Images already in memory.
#[derive(Debug, Clone)]
pub struct InMemorySet {
    classes: Vec<String>,
    images: Vec<Tensor<f32>>,
    labels: Vec<usize>,
}

impl InMemorySet {
    pub fn new(classes: Vec<String>, images: Vec<Tensor<f32>>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Input(format!("label {bad} outside 0..{}", classes.len())));
        }
        if let Some(first) = images.first() {
            if let Some(other) = images.iter().find(|t| t.shape() != first.shape()) {
                return Err(Error::Shape(format!(
                    "image shapes differ: {:?} vs {:?}",
                    first.shape(),
                    other.shape()
                )));
            }
        }
        Ok(Self {
            classes,
            images,
            labels,
        })
    }
}

impl SampleSet for InMemorySet {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn key(&self, index: usize) -> String {
        format!("#{index}")
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>> {
        Ok(self.images[index].clone())
    }

    fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// Samples decoded from disk on each access.
#[derive(Clone)]
pub struct DiskSet {
    root: PathBuf,
    classes: Vec<String>,
    samples: Vec<LabeledSample>,
    preprocess: Preprocess,
    decoders: Arc<Decoders>,
}

impl DiskSet {
    pub fn new(
        root: PathBuf,
        classes: Vec<String>,
        samples: Vec<LabeledSample>,
        preprocess: Preprocess,
    ) -> Self {
        Self {
            root,
            classes,
            samples,
            preprocess,
            decoders: Arc::new(Decoders::default()),
        }
    }

    pub fn from_split(split: &DatasetSplit, partition: Partition, preprocess: Preprocess) -> Self {
        Self::new(
            split.root.clone(),
            split.classes.clone(),
            split.partition(partition).to_vec(),
            preprocess,
        )
    }

    pub fn with_decoders(mut self, decoders: Arc<Decoders>) -> Self {
        self.decoders = decoders;
        self
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }
}

impl SampleSet for DiskSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> usize {
        self.samples[index].label
    }

    fn key(&self, index: usize) -> String {
        self.samples[index].path.clone()
    }

    fn image(&self, index: usize) -> Result<Tensor<f32>> {
        let raw = self
            .decoders
            .decode_file(&self.root.join(&self.samples[index].path))?;
        self.preprocess.apply(&raw)
    }

    fn classes(&self) -> &[String] {
        &self.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_pipeline_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        for (class, v) in [("a", 10u8), ("b", 200u8)] {
            std::fs::create_dir(tmp.path().join(class)).unwrap();
            for i in 0..3 {
                let mut bytes = b"P5 4 4 255\n".to_vec();
                bytes.extend((0..16).map(|k| v.wrapping_add(k * i)));
                std::fs::write(tmp.path().join(class).join(format!("{i}.pgm")), bytes).unwrap();
            }
        }
        let ds = load_dataset(tmp.path()).unwrap();
        let split = stratified_split(&ds, SplitRatios::default(), 3).unwrap();
        let pre = Preprocess {
            size: 8,
            scheme: NormalizeScheme::Unit,
        };
        let set = DiskSet::from_split(&split, Partition::Train, pre);
        assert_eq!(set.len(), 4);
        let img = set.image(0).unwrap();
        assert_eq!(img.shape(), &[3, 8, 8]);
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(set.image(0).unwrap().data(), img.data());
        assert_eq!(set.key(0), split.train[0].path);
    }

    #[test]
    fn in_memory_checks() {
        let img = Tensor::<f32>::zeros(vec![3, 2, 2]);
        let names = vec!["x".to_string(), "y".to_string()];
        assert!(InMemorySet::new(names.clone(), vec![img.clone()], vec![2]).is_err());
        assert!(InMemorySet::new(names.clone(), vec![img.clone()], vec![]).is_err());
        let set = InMemorySet::new(names, vec![img], vec![1]).unwrap();
        assert_eq!((set.len(), set.label(0)), (1, 1));
    }
}
