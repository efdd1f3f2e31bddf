use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::seed::{fnv1a, mix};

pub const MANIFEST_HEADER: [&str; 3] = ["path", "class", "partition"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Input(format!("unknown partition `{other}`"))),
        }
    }
}

/// Partition fractions, held in thousandths so rounding is exact integer
/// arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatios {
    train: u32,
    validation: u32,
    test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 700,
            validation: 100,
            test: 200,
        }
    }
}

impl SplitRatios {
    /// Fractions must be multiples of 0.001 and sum to 1.
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let permille = |name: &str, r: f64| -> Result<u32> {
            let p = (r * 1000.0).round();
            if !(0.0..=1.0).contains(&r) || (r * 1000.0 - p).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} ratio {r} must be in [0, 1] with at most 3 decimals"
                )));
            }
            Ok(p as u32)
        };
        let s = Self {
            train: permille("train", train)?,
            validation: permille("validation", validation)?,
            test: permille("test", test)?,
        };
        if s.train + s.validation + s.test != 1000 {
            return Err(Error::Config(format!(
                "split ratios {train}/{validation}/{test} do not sum to 1"
            )));
        }
        Ok(s)
    }

    /// `(train, validation, test)` for a class of `n`: test and validation are
    /// rounded half-up, train takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let round = |pm: u32| (n * pm as usize + 500) / 1000;
        let test = round(self.test);
        let validation = round(self.validation).min(n - test);
        (n - test - validation, validation, test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    /// `None` when read back from a manifest.
    pub seed: Option<u64>,
}

impl DatasetSplit {
    pub fn partition(&self, p: Partition) -> &[LabeledSample] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-class sample counts of one partition.
    pub fn class_counts(&self, p: Partition) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in self.partition(p) {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn to_manifest(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER)?;
        for p in [Partition::Train, Partition::Validation, Partition::Test] {
            for s in self.partition(p) {
                w.write_record([s.path.as_str(), s.class_name.as_str(), p.name()])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Input(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("manifest is UTF-8"))
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a manifest; class indices are the sorted distinct class names,
    /// matching [`super::load_dataset`].
    pub fn from_manifest(text: &str, root: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(Error::Input(format!(
                "manifest header is `{}`, expected `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                MANIFEST_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 3 {
                return Err(Error::Input(format!("manifest line {line}: expected 3 fields")));
            }
            let part: Partition = rec[2]
                .parse()
                .map_err(|e| Error::Input(format!("manifest line {line}: {e}")))?;
            rows.push((rec[0].to_string(), rec[1].to_string(), part));
        }
        let mut classes: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::Input("manifest lists no samples".into()));
        }
        let mut split = DatasetSplit {
            root: root.to_path_buf(),
            classes,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            seed: None,
        };
        for (path, class_name, part) in rows {
            let label = split.classes.binary_search(&class_name).expect("class collected");
            let sample = LabeledSample {
                path,
                label,
                class_name,
            };
            match part {
                Partition::Train => split.train.push(sample),
                Partition::Validation => split.validation.push(sample),
                Partition::Test => split.test.push(sample),
            }
        }
        Ok(split)
    }

    pub fn read_manifest(path: &Path, root: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest(&text, root)
    }
}

/// Per class: shuffle with a stream derived from `seed` and the class name,
/// then take test, validation and train in that order.
pub fn stratified_split(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    let mut split = DatasetSplit {
        root: dataset.root.clone(),
        classes: dataset.classes.clone(),
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed: Some(seed),
    };
    for (label, class) in dataset.classes.iter().enumerate() {
        let mut members: Vec<LabeledSample> = dataset
            .samples
            .iter()
            .filter(|s| s.label == label)
            .cloned()
            .collect();
        if members.len() < 3 {
            return Err(Error::Input(format!(
                "class `{class}` has {} samples; at least 3 are needed to split",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, fnv1a(class.as_bytes())));
        members.shuffle(&mut rng);
        let (_, n_val, n_test) = ratios.counts(members.len());
        let mut rest = members.into_iter();
        split.test.extend(rest.by_ref().take(n_test));
        split.validation.extend(rest.by_ref().take(n_val));
        split.train.extend(rest);
    }
    Ok(split)
}
