//! Labeled datasets: the container every trainer consumes, the Gaussian
//! generator, the CIFAR-10 binary loader and per-class subsampling.

mod cifar;
mod gaussian;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use cifar::{load_cifar10, parse_cifar10, ImageSource, Split, CIFAR_PIXELS, CIFAR_RECORD_LEN};
pub use gaussian::{sample_gaussian, GaussianSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i32,
    pub is_duplicate: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: i32) -> Self {
        Self { features, label, is_duplicate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    class_set: BTreeSet<i32>,
    origin: Origin,
    seed: Option<u64>,
}

impl LabeledDataset {
    /// Builds a dataset, checking that every sample has the same dimension
    /// and a label from `class_set`.
    pub fn new(samples: Vec<Sample>, class_set: BTreeSet<i32>, origin: Origin, seed: Option<u64>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.features.len();
            for s in &samples {
                if s.features.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, actual: s.features.len() });
                }
                if !class_set.contains(&s.label) {
                    return Err(Error::UnknownLabel(s.label));
                }
            }
        }
        Ok(Self { samples, class_set, origin, seed })
    }

    /// Same metadata, different samples. Callers guarantee the invariants.
    pub(crate) fn with_samples(&self, samples: Vec<Sample>) -> Self {
        Self { samples, class_set: self.class_set.clone(), origin: self.origin, seed: self.seed }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn class_set(&self) -> &BTreeSet<i32> {
        &self.class_set
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimension, `None` for an empty dataset.
    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// Sample count per declared class, including zero counts.
    pub fn class_counts(&self) -> BTreeMap<i32, usize> {
        let mut counts: BTreeMap<i32, usize> = self.class_set.iter().map(|&c| (c, 0)).collect();
        for s in &self.samples {
            *counts.entry(s.label).or_default() += 1;
        }
        counts
    }

    /// Keeps the samples matching `keep`, preserving order and metadata.
    pub fn filter(&self, keep: impl Fn(&Sample) -> bool) -> Self {
        self.with_samples(self.samples.iter().filter(|s| keep(s)).cloned().collect())
    }

    /// Canonical CSV form: header `label,is_duplicate,f0,...,f{d-1}`,
    /// duplicate flag as `0`/`1`, features in shortest round-trip notation.
    pub fn to_csv(&self) -> String {
        let d = self.dim().unwrap_or(0);
        let mut out = String::from("label,is_duplicate");
        for j in 0..d {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.label, u8::from(s.is_duplicate));
            for v in &s.features {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the canonical CSV form. The class set is the set of labels
    /// present; `origin` and `seed` are not part of the serialization.
    pub fn from_csv(text: &str, origin: Origin) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "label" || cols[1] != "is_duplicate" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(Error::Parse(format!("unexpected column {c:?}")));
            }
        }
        let d = cols.len() - 2;
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 2 {
                return Err(Error::Parse(format!("row {row}: {} fields, expected {}", fields.len(), d + 2)));
            }
            let label = fields[0].parse::<i32>().map_err(|e| Error::Parse(format!("row {row}: label: {e}")))?;
            let is_duplicate = match fields[1] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("row {row}: is_duplicate {other:?}"))),
            };
            let features = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample { features, label, is_duplicate });
        }
        let class_set = samples.iter().map(|s| s.label).collect();
        Self::new(samples, class_set, origin, None)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, origin: Origin) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, origin)
    }
}

/// Draws `per_class` samples from every class uniformly without replacement.
/// Within each class the drawn samples keep their original relative order, and
/// the output keeps the dataset's sample order.
pub fn subsample(dataset: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: BTreeMap<i32, Vec<usize>> = dataset.class_set().iter().map(|&c| (c, Vec::new())).collect();
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    for (&label, idx) in &by_class {
        if idx.len() < per_class {
            return Err(Error::InsufficientClass { label, available: idx.len(), requested: per_class });
        }
    }
    let mut keep = vec![false; dataset.len()];
    for (&label, idx) in &by_class {
        let mut r = rng::rng_from(rng::derive_seed(seed, &[label as i64 as u64]));
        for &i in idx.choose_multiple(&mut r, per_class) {
            keep[i] = true;
        }
    }
    let samples = dataset.samples().iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect();
    Ok(dataset.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_class(n: usize) -> LabeledDataset {
        let samples = (0..10 * n).map(|i| Sample::new(vec![i as f64, (i * 7 % 13) as f64], (i % 10) as i32)).collect();
        LabeledDataset::new(samples, (0..10).collect(), Origin::Image, None).unwrap()
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let samples = vec![Sample::new(vec![0.0], 1), Sample::new(vec![0.0, 1.0], 1)];
        let err = LabeledDataset::new(samples, [1].into(), Origin::Synthetic, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, actual: 2 }));
    }

    #[test]
    fn rejects_undeclared_label() {
        let samples = vec![Sample::new(vec![0.0], 3)];
        let err = LabeledDataset::new(samples, [1].into(), Origin::Synthetic, None).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(3)));
    }

    #[test]
    fn class_counts_sum_to_len() {
        let ds = ten_class(4);
        let counts = ds.class_counts();
        assert_eq!(counts.values().sum::<usize>(), ds.len());
        assert!(counts.values().all(|&c| c == 4));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let samples = vec![
            Sample { features: vec![0.1, -1e-300, 1.0 / 3.0], label: -1, is_duplicate: false },
            Sample { features: vec![f64::MAX, 0.0, -0.0], label: 1, is_duplicate: true },
        ];
        let ds = LabeledDataset::new(samples, [-1, 1].into(), Origin::Synthetic, None).unwrap();
        let text = ds.to_csv();
        assert!(text.starts_with("label,is_duplicate,f0,f1,f2\n"));
        let back = LabeledDataset::from_csv(&text, Origin::Synthetic).unwrap();
        assert_eq!(back.samples(), ds.samples());
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(LabeledDataset::from_csv("lbl,is_duplicate\n", Origin::Image).is_err());
        assert!(LabeledDataset::from_csv("label,is_duplicate,f1\n", Origin::Image).is_err());
    }

    #[test]
    fn subsample_full_class_is_permutation_of_input() {
        let ds = ten_class(5);
        let sub = subsample(&ds, 5, 9).unwrap();
        let mut a: Vec<_> = ds.to_csv().lines().map(String::from).collect();
        let mut b: Vec<_> = sub.to_csv().lines().map(String::from).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_one_per_class() {
        let ds = ten_class(6);
        let sub = subsample(&ds, 1, 3).unwrap();
        assert_eq!(sub.len(), 10);
        assert!(sub.class_counts().values().all(|&c| c == 1));
    }

    #[test]
    fn subsample_is_deterministic() {
        let ds = ten_class(20);
        assert_eq!(subsample(&ds, 7, 11).unwrap(), subsample(&ds, 7, 11).unwrap());
        assert_ne!(subsample(&ds, 7, 11).unwrap(), subsample(&ds, 7, 12).unwrap());
    }

    #[test]
    fn subsample_reports_deficient_class() {
        let mut samples = ten_class(3).into_samples();
        samples.retain(|s| !(s.label == 4 && s.features[0] > 10.0));
        let ds = LabeledDataset::new(samples, (0..10).collect(), Origin::Image, None).unwrap();
        match subsample(&ds, 2, 0).unwrap_err() {
            Error::InsufficientClass { label, available, requested } => {
                assert_eq!((label, available, requested), (4, 1, 2));
            }
            e => panic!("unexpected {e}"),
        }
    }
}
