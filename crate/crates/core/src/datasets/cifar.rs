use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Origin, Sample};
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;
/// One label byte followed by the R, G and B planes (1024 bytes each).
pub const CIFAR_RECORD_LEN: usize = CIFAR_PIXELS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    /// A batch file, or a directory holding `data_batch_{1..5}.bin` and
    /// `test_batch.bin`.
    pub path: PathBuf,
    pub split: Split,
    #[serde(default)]
    pub class_subset: Option<Vec<u8>>,
    #[serde(default)]
    pub max_per_class: Option<usize>,
    /// Block-mean factor; must divide 32.
    #[serde(default = "one")]
    pub downscale: usize,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ImageSource {
    pub fn new(path: impl Into<PathBuf>, split: Split) -> Self {
        Self { path: path.into(), split, class_subset: None, max_per_class: None, downscale: 1, normalize: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.downscale, 1 | 2 | 4 | 8) {
            return Err(Error::config(format!("downscale {} does not divide 32", self.downscale)));
        }
        if let Some(subset) = &self.class_subset {
            if let Some(&bad) = subset.iter().find(|&&l| l > 9) {
                return Err(Error::config(format!("class_subset contains label {bad}")));
            }
        }
        Ok(())
    }

    /// Feature count after downscaling.
    pub fn feature_dim(&self) -> usize {
        let side = CIFAR_SIDE / self.downscale;
        side * side * 3
    }

    fn batch_files(&self) -> Result<Vec<PathBuf>> {
        if self.path.is_file() {
            return Ok(vec![self.path.clone()]);
        }
        if !self.path.is_dir() {
            return Err(Error::io(
                &self.path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
        let names: Vec<String> = match self.split {
            Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            Split::Test => vec!["test_batch.bin".to_string()],
        };
        let files: Vec<PathBuf> = names.iter().map(|n| self.path.join(n)).filter(|p| p.is_file()).collect();
        if files.is_empty() {
            return Err(Error::io(
                self.path.join(&names[0]),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no CIFAR-10 batch files"),
            ));
        }
        Ok(files)
    }
}

/// Decodes raw CIFAR-10 records. `first_index` numbers records across files
/// for error messages.
pub fn parse_cifar10(
    bytes: &[u8],
    path: &Path,
    first_index: usize,
    downscale: usize,
    normalize: bool,
) -> Result<Vec<Sample>> {
    let whole = bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN;
    if whole != bytes.len() {
        return Err(Error::MalformedRecord { path: path.to_path_buf(), offset: whole, len: bytes.len() - whole });
    }
    let scale = if normalize { 1.0 / 255.0 } else { 1.0 };
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label > 9 {
                return Err(Error::InvalidImageLabel { path: path.to_path_buf(), index: first_index + i, label });
            }
            let features = block_mean(&rec[1..], downscale, scale);
            Ok(Sample::new(features, i32::from(label)))
        })
        .collect()
}

fn block_mean(pixels: &[u8], f: usize, scale: f64) -> Vec<f64> {
    let side = CIFAR_SIDE / f;
    let norm = scale / (f * f) as f64;
    let mut out = Vec::with_capacity(side * side * 3);
    for plane in pixels.chunks_exact(CIFAR_SIDE * CIFAR_SIDE) {
        for by in 0..side {
            for bx in 0..side {
                let mut acc = 0u32;
                for y in by * f..(by + 1) * f {
                    for x in bx * f..(bx + 1) * f {
                        acc += u32::from(plane[y * CIFAR_SIDE + x]);
                    }
                }
                out.push(f64::from(acc) * norm);
            }
        }
    }
    out
}

/// Loads CIFAR-10 binary batches, then applies the class filter and the
/// per-class cap in file order.
pub fn load_cifar10(source: &ImageSource) -> Result<LabeledDataset> {
    source.validate()?;
    let mut samples = Vec::new();
    for file in source.batch_files()? {
        let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let first = samples.len();
        samples.extend(parse_cifar10(&bytes, &file, first, source.downscale, source.normalize)?);
    }
    let class_set: std::collections::BTreeSet<i32> = match &source.class_subset {
        Some(subset) => subset.iter().map(|&l| i32::from(l)).collect(),
        None => (0..10).collect(),
    };
    let mut taken: BTreeMap<i32, usize> = BTreeMap::new();
    samples.retain(|s| {
        if !class_set.contains(&s.label) {
            return false;
        }
        let n = taken.entry(s.label).or_default();
        *n += 1;
        source.max_per_class.is_none_or(|cap| *n <= cap)
    });
    LabeledDataset::new(samples, class_set, Origin::Image, None)
}
