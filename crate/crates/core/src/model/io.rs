//! The `VGGW` weight file.
//!
//! Little-endian layout:
//!
//! ```text
//! "VGGW" | u32 version (1) | u8 architecture (1 = vgg16, 2 = vgg19)
//! | u8 task (0 = features only, 2 = binary, 3 = multiclass) | u32 entry count
//! per entry: u32 name length | UTF-8 name | u8 rank | rank x u32 dims | f32 values
//! ```
//!
//! Each layer contributes two entries, `<layer>.weight` and `<layer>.bias`.
//! A features-only file carries the convolutional layers alone and is how
//! pretrained weights enter the pipeline.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::graph::{Architecture, LayerKind, ModelGraph, Task};
use super::weights::{WeightEntry, WeightStore};
use crate::error::{Error, Result, WeightFileError};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"VGGW";
pub const VERSION: u32 = 1;
pub const FEATURES_ONLY: u8 = 0;

/// Parsed contents of a weight file, before binding to a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub arch: Architecture,
    pub task_id: u8,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn weight_key(layer: &str) -> String {
    format!("{layer}.weight")
}

fn bias_key(layer: &str) -> String {
    format!("{layer}.bias")
}

impl WeightFile {
    /// Full file for a graph with an attached head.
    pub fn from_store(store: &WeightStore<f32>, graph: &ModelGraph) -> Result<Self> {
        let task = graph
            .task()
            .ok_or_else(|| Error::State("graph has no head; save features instead".into()))?;
        Self::collect(store, graph, task.id(), |_| true)
    }

    /// Convolutional layers only (task id 0).
    pub fn features_from_store(store: &WeightStore<f32>, graph: &ModelGraph) -> Result<Self> {
        Self::collect(store, graph, FEATURES_ONLY, |kind| {
            matches!(kind, LayerKind::Conv { .. })
        })
    }

    fn collect(
        store: &WeightStore<f32>,
        graph: &ModelGraph,
        task_id: u8,
        keep: impl Fn(&LayerKind) -> bool,
    ) -> Result<Self> {
        store.validate(graph)?;
        let mut tensors = Vec::new();
        for layer in graph.weighted_layers().filter(|l| keep(&l.kind)) {
            let entry = store.require(&layer.name)?;
            tensors.push((weight_key(&layer.name), entry.weights.clone()));
            tensors.push((bias_key(&layer.name), entry.bias.clone()));
        }
        Ok(Self {
            arch: graph.arch(),
            task_id,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .tensors
            .iter()
            .map(|(n, t)| 4 + n.len() + 1 + 4 * t.rank() + 4 * t.len())
            .sum();
        let mut out = Vec::with_capacity(14 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.arch.id());
        out.push(self.task_id);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.rank() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightFileError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WeightFileError::BadMagic { found: magic });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(WeightFileError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let arch_id = r.u8("architecture id")?;
        let arch = Architecture::from_id(arch_id).ok_or(WeightFileError::UnknownArchitecture(arch_id))?;
        let task_id = r.u8("task id")?;
        if task_id != FEATURES_ONLY && Task::from_id(task_id).is_none() {
            return Err(WeightFileError::UnknownTask(task_id));
        }
        let count = r.u32("entry count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for index in 0..count {
            let ctx = format!("entry {index} name");
            let len = r.u32(&ctx)? as usize;
            let name = std::str::from_utf8(r.take(len, &ctx)?)
                .map_err(|_| WeightFileError::BadName)?
                .to_string();
            let ctx = format!("entry `{name}` shape");
            let rank = r.u8(&ctx)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&ctx)? as usize);
            }
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let n = n
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| WeightFileError::Truncated {
                    context: format!("entry `{name}` values"),
                })?;
            let raw = r.take(n, &format!("entry `{name}` values"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor = Tensor::new(shape.clone(), data).map_err(|_| WeightFileError::ShapeMismatch {
                layer: name.clone(),
                file: shape,
                graph: Vec::new(),
            })?;
            tensors.push((name, tensor));
        }
        if r.pos != bytes.len() {
            return Err(WeightFileError::TrailingBytes {
                extra: bytes.len() - r.pos,
            });
        }
        Ok(Self {
            arch,
            task_id,
            tensors,
        })
    }

    fn check_arch(&self, graph: &ModelGraph) -> Result<(), WeightFileError> {
        if self.arch != graph.arch() {
            return Err(WeightFileError::Architecture {
                file: self.arch.to_string(),
                graph: graph.arch().to_string(),
            });
        }
        Ok(())
    }

    fn index(&self) -> Result<HashMap<&str, &Tensor<f32>>, WeightFileError> {
        let mut map = HashMap::new();
        for (name, t) in &self.tensors {
            if map.insert(name.as_str(), t).is_some() {
                return Err(WeightFileError::DuplicateLayer { layer: name.clone() });
            }
        }
        Ok(map)
    }

    /// Binds a full weight file to `graph`, checking every entry.
    pub fn into_store(self, graph: &ModelGraph) -> Result<WeightStore<f32>, WeightFileError> {
        self.check_arch(graph)?;
        let expected = graph.task().map(Task::id).unwrap_or(FEATURES_ONLY);
        if self.task_id != expected {
            return Err(WeightFileError::Task {
                file: self.task_id,
                graph: expected,
            });
        }
        self.bind(graph, |_| true, true)
    }

    /// Convolutional entries only; head entries of a full file are ignored.
    pub fn into_feature_store(self, graph: &ModelGraph) -> Result<WeightStore<f32>, WeightFileError> {
        self.check_arch(graph)?;
        self.bind(graph, |k| matches!(k, LayerKind::Conv { .. }), false)
    }

    fn bind(
        &self,
        graph: &ModelGraph,
        keep: impl Fn(&LayerKind) -> bool,
        strict: bool,
    ) -> Result<WeightStore<f32>, WeightFileError> {
        let index = self.index()?;
        let mut used = 0;
        let mut entries = Vec::new();
        for layer in graph.weighted_layers().filter(|l| keep(&l.kind)) {
            let (w_shape, b_shape) = layer.param_shapes().expect("weighted layer");
            let mut fetch = |key: String, shape: Vec<usize>| {
                let t = *index
                    .get(key.as_str())
                    .ok_or_else(|| WeightFileError::MissingLayer {
                        layer: layer.name.clone(),
                    })?;
                if t.shape() != shape {
                    return Err(WeightFileError::ShapeMismatch {
                        layer: key,
                        file: t.shape().to_vec(),
                        graph: shape,
                    });
                }
                used += 1;
                Ok(t.clone())
            };
            let weights = fetch(weight_key(&layer.name), w_shape)?;
            let bias = fetch(bias_key(&layer.name), b_shape)?;
            entries.push(WeightEntry {
                name: layer.name.clone(),
                weights,
                bias,
                frozen: !layer.trainable,
            });
        }
        if strict && used != self.tensors.len() {
            let known: std::collections::HashSet<String> = graph
                .weighted_layers()
                .flat_map(|l| [weight_key(&l.name), bias_key(&l.name)])
                .collect();
            let extra = self
                .tensors
                .iter()
                .find(|(n, _)| !known.contains(n))
                .map(|(n, _)| n.clone())
                .unwrap_or_default();
            return Err(WeightFileError::UnexpectedLayer { layer: extra });
        }
        Ok(WeightStore::from_entries(entries))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8], WeightFileError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| WeightFileError::Truncated {
                context: context.to_string(),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, context: &str) -> Result<u8, WeightFileError> {
        Ok(self.take(1, context)?[0])
    }

    fn u32(&mut self, context: &str) -> Result<u32, WeightFileError> {
        Ok(u32::from_le_bytes(
            self.take(4, context)?.try_into().expect("4 bytes"),
        ))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<WeightFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(WeightFile::from_bytes(&bytes)?)
}

pub fn save_weights(store: &WeightStore<f32>, graph: &ModelGraph, path: &Path) -> Result<()> {
    write_file(path, &WeightFile::from_store(store, graph)?.to_bytes())
}

pub fn save_features(store: &WeightStore<f32>, graph: &ModelGraph, path: &Path) -> Result<()> {
    write_file(path, &WeightFile::features_from_store(store, graph)?.to_bytes())
}

pub fn load_weights(path: &Path, graph: &ModelGraph) -> Result<WeightStore<f32>> {
    Ok(read_file(path)?.into_store(graph)?)
}

pub fn load_features(path: &Path, graph: &ModelGraph) -> Result<WeightStore<f32>> {
    Ok(read_file(path)?.into_feature_store(graph)?)
}

/// Architecture and task id from a file header, without reading the payload.
pub fn read_header(path: &Path) -> Result<(Architecture, u8)> {
    use std::io::Read;
    let mut head = [0u8; 10];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    f.read_exact(&mut head).map_err(|_| {
        Error::from(WeightFileError::Truncated {
            context: "header".into(),
        })
    })?;
    let mut r = Reader { bytes: &head, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WeightFileError::BadMagic { found: magic }.into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(WeightFileError::Version {
            found: version,
            expected: VERSION,
        }
        .into());
    }
    let arch_id = r.u8("architecture id")?;
    let arch = Architecture::from_id(arch_id).ok_or(WeightFileError::UnknownArchitecture(arch_id))?;
    Ok((arch, r.u8("task id")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::graph::GraphOptions;

    fn graph(arch: Architecture) -> ModelGraph {
        ModelGraph::build(arch, Task::Binary, GraphOptions::tiny()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let g = graph(Architecture::Vgg16);
        let store = WeightStore::<f32>::init(&g, 5);
        let bytes = WeightFile::from_store(&store, &g).unwrap().to_bytes();
        let back = WeightFile::from_bytes(&bytes).unwrap().into_store(&g).unwrap();
        assert_eq!(back, store);
        let again = WeightFile::from_store(&back, &g).unwrap().to_bytes();
        assert_eq!(again, bytes);
    }

    #[test]
    fn header_layout() {
        let g = graph(Architecture::Vgg19);
        let bytes = WeightFile::from_store(&WeightStore::zeros(&g), &g)
            .unwrap()
            .to_bytes();
        assert_eq!(&bytes[..4], b"VGGW");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 2);
        assert_eq!(bytes[9], 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 38);
        let name_len = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
        assert_eq!(&bytes[18..18 + name_len], b"conv1_1.weight");
        assert_eq!(bytes[18 + name_len], 4);
    }

    #[test]
    fn missing_layer_is_named() {
        let g = graph(Architecture::Vgg16);
        let mut file = WeightFile::from_store(&WeightStore::zeros(&g), &g).unwrap();
        file.tensors.retain(|(n, _)| !n.starts_with("conv2_1."));
        let bytes = file.to_bytes();
        let err = WeightFile::from_bytes(&bytes)
            .unwrap()
            .into_store(&g)
            .unwrap_err();
        assert_eq!(
            err,
            WeightFileError::MissingLayer {
                layer: "conv2_1".into()
            }
        );
    }

    #[test]
    fn architecture_mismatch() {
        let g19 = graph(Architecture::Vgg19);
        let bytes = WeightFile::from_store(&WeightStore::zeros(&g19), &g19)
            .unwrap()
            .to_bytes();
        let err = WeightFile::from_bytes(&bytes)
            .unwrap()
            .into_store(&graph(Architecture::Vgg16))
            .unwrap_err();
        assert!(matches!(err, WeightFileError::Architecture { .. }));
    }

    #[test]
    fn header_and_truncation_errors() {
        let g = graph(Architecture::Vgg16);
        let bytes = WeightFile::from_store(&WeightStore::zeros(&g), &g)
            .unwrap()
            .to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            WeightFile::from_bytes(&bad),
            Err(WeightFileError::BadMagic { .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            WeightFile::from_bytes(&bad),
            Err(WeightFileError::Version { found: 2, .. })
        ));

        match WeightFile::from_bytes(&bytes[..bytes.len() - 3]) {
            Err(WeightFileError::Truncated { context }) => {
                assert!(context.contains("fc3.bias"), "{context}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_names_entry() {
        let tiny = graph(Architecture::Vgg16);
        let full = ModelGraph::build(Architecture::Vgg16, Task::Binary, GraphOptions::default()).unwrap();
        let bytes = WeightFile::from_store(&WeightStore::zeros(&tiny), &tiny)
            .unwrap()
            .to_bytes();
        match WeightFile::from_bytes(&bytes).unwrap().into_store(&full) {
            Err(WeightFileError::ShapeMismatch { layer, .. }) => {
                assert_eq!(layer, "conv1_1.weight")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn features_only_transfer() {
        let g = graph(Architecture::Vgg16);
        let store = WeightStore::<f32>::init(&g, 8);
        let file = WeightFile::features_from_store(&store, &g).unwrap();
        assert_eq!(file.task_id, FEATURES_ONLY);
        assert_eq!(file.tensors.len(), 26);
        let bytes = file.to_bytes();
        // a features-only file is not a complete model
        assert!(WeightFile::from_bytes(&bytes).unwrap().into_store(&g).is_err());
        let features = WeightFile::from_bytes(&bytes)
            .unwrap()
            .into_feature_store(&g)
            .unwrap();
        let mut fresh = WeightStore::<f32>::init(&g, 9);
        fresh.transfer_features(&g, &features).unwrap();
        assert_eq!(fresh.get("conv5_3"), store.get("conv5_3"));
        assert_ne!(fresh.get("fc1"), store.get("fc1"));
    }
}
