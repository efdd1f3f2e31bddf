use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// File extensions picked up by [`load_dataset`], compared case-insensitively.
pub const IMAGE_EXTENSIONS: [&str; 6] = ["pgm", "ppm", "pnm", "png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSample {
    /// Relative to the dataset root, `/`-separated.
    pub path: String,
    pub label: usize,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') {
            out.push((name, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Scans `<root>/<class>/<image>`. Classes and files are sorted by name, so
/// label indices do not depend on directory enumeration order.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let class_dirs: Vec<_> = sorted_entries(root)?
        .into_iter()
        .filter(|(_, p)| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Input(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    let mut classes = Vec::with_capacity(class_dirs.len());
    let mut samples = Vec::new();
    for (label, (class, dir)) in class_dirs.into_iter().enumerate() {
        let files: Vec<_> = sorted_entries(&dir)?
            .into_iter()
            .filter(|(_, p)| p.is_file() && is_image(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Input(format!(
                "class directory `{class}` contains no images ({})",
                dir.display()
            )));
        }
        for (name, path) in files {
            fs::File::open(&path)
                .map_err(|e| Error::Input(format!("unreadable image file {}: {e}", path.display())))?;
            samples.push(LabeledSample {
                path: format!("{class}/{name}"),
                label,
                class_name: class.clone(),
            });
        }
        classes.push(class);
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        classes,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, rel: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"P5 1 1 255\n\0").unwrap();
    }

    #[test]
    fn sorted_classes_and_files() {
        let tmp = tempfile::tempdir().unwrap();
        for f in [
            "non_covid/b.pgm",
            "non_covid/a.PGM",
            "covid/z.ppm",
            "covid/notes.txt",
        ] {
            touch(tmp.path(), f);
        }
        let d = load_dataset(tmp.path()).unwrap();
        assert_eq!(d.classes, ["covid", "non_covid"]);
        let paths: Vec<_> = d.samples.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(paths, ["covid/z.ppm", "non_covid/a.PGM", "non_covid/b.pgm"]);
        assert_eq!(d.samples[1].label, 1);
        assert_eq!(d.class_counts(), [1, 2]);
    }

    #[test]
    fn distinct_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let err = load_dataset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("no class directories"), "{err}");

        fs::create_dir(tmp.path().join("empty")).unwrap();
        let err = load_dataset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("`empty` contains no images"), "{err}");

        let err = load_dataset(&tmp.path().join("missing")).unwrap_err();
        assert_eq!(err.kind(), "io");
    }
}
