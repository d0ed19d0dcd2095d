//! Duplicate injection under uniform or class-biased selection.
//!
//! The duplicate count is `floor(rate_percent * |D| / 100)`. Every duplicate
//! is an exact copy of an original sample, drawn with replacement, flagged
//! `is_duplicate` and appended after the originals.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "weights")]
pub enum Selection {
    /// Every sample equally likely.
    Uniform,
    /// Pick a class by weight, then a member of that class uniformly.
    Biased(BTreeMap<i32, f64>),
}

impl Selection {
    pub fn validate(&self) -> Result<()> {
        if let Selection::Biased(w) = self {
            if w.is_empty() {
                return Err(Error::config("biased selection needs at least one class weight"));
            }
            if let Some((l, v)) = w.iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::config(format!("weight for class {l} is {v}")));
            }
            let total: f64 = w.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("class weights sum to {total}, expected 1")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Uniform => write!(f, "uniform"),
            Selection::Biased(w) => {
                write!(f, "biased:")?;
                for (i, (l, v)) in w.iter().enumerate() {
                    let sep = if i == 0 { "" } else { "," };
                    write!(f, "{sep}{l:+}={v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `uniform` or `biased:<label>=<w>,...` (e.g. `biased:+1=0.7,-1=0.3`).
impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(Selection::Uniform);
        }
        let body = s
            .strip_prefix("biased:")
            .ok_or_else(|| Error::Parse(format!("policy {s:?}: expected uniform or biased:<label>=<w>,...")))?;
        let mut weights = BTreeMap::new();
        for part in body.split(',') {
            let (l, w) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("policy entry {part:?}: expected <label>=<weight>")))?;
            let label: i32 = l.trim().parse().map_err(|e| Error::Parse(format!("label {l:?}: {e}")))?;
            let weight: f64 = w.trim().parse().map_err(|e| Error::Parse(format!("weight {w:?}: {e}")))?;
            if weights.insert(label, weight).is_some() {
                return Err(Error::Parse(format!("label {label} given twice")));
            }
        }
        let sel = Selection::Biased(weights);
        sel.validate()?;
        Ok(sel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicationPolicy {
    pub rate_percent: u32,
    pub selection: Selection,
    pub seed: u64,
}

impl DuplicationPolicy {
    pub fn uniform(rate_percent: u32, seed: u64) -> Self {
        Self { rate_percent, selection: Selection::Uniform, seed }
    }

    pub fn biased(rate_percent: u32, weights: impl IntoIterator<Item = (i32, f64)>, seed: u64) -> Self {
        Self { rate_percent, selection: Selection::Biased(weights.into_iter().collect()), seed }
    }

    /// Number of duplicates this policy adds to a dataset of `n` samples.
    pub fn duplicate_count(&self, n: usize) -> usize {
        (u128::from(self.rate_percent) * n as u128 / 100) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicationReport {
    pub n_duplicates: usize,
    pub per_class_duplicates: BTreeMap<i32, usize>,
    /// Probability that a single duplicate carries each label under the
    /// policy; reported as the D-ratio when no duplicates were drawn.
    pub expected_ratio: BTreeMap<i32, f64>,
}

impl DuplicationReport {
    /// Fraction of duplicates carrying `label`.
    pub fn d_ratio(&self, label: i32) -> Result<f64> {
        let count = *self.per_class_duplicates.get(&label).ok_or(Error::UnknownLabel(label))?;
        if self.n_duplicates == 0 {
            return Ok(self.expected_ratio.get(&label).copied().unwrap_or(0.0));
        }
        Ok(count as f64 / self.n_duplicates as f64)
    }

    pub fn d_ratios(&self) -> BTreeMap<i32, f64> {
        self.per_class_duplicates.keys().map(|&l| (l, self.d_ratio(l).expect("label from report"))).collect()
    }
}

/// Appends duplicates to `dataset` according to `policy`.
pub fn inject(dataset: &LabeledDataset, policy: &DuplicationPolicy) -> Result<(LabeledDataset, DuplicationReport)> {
    policy.selection.validate()?;
    let n = dataset.len();
    let k = policy.duplicate_count(n);
    let counts = dataset.class_counts();
    let mut per_class: BTreeMap<i32, usize> = counts.keys().map(|&l| (l, 0)).collect();

    let expected_ratio: BTreeMap<i32, f64> = match &policy.selection {
        Selection::Uniform => {
            counts.iter().map(|(&l, &c)| (l, if n == 0 { 0.0 } else { c as f64 / n as f64 })).collect()
        }
        Selection::Biased(w) => {
            for &l in w.keys() {
                if !counts.contains_key(&l) {
                    return Err(Error::UnknownLabel(l));
                }
            }
            counts.keys().map(|&l| (l, w.get(&l).copied().unwrap_or(0.0))).collect()
        }
    };

    if k > 0 && n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng::rng_from(policy.seed);
    let picks: Vec<usize> = match &policy.selection {
        Selection::Uniform => (0..k).map(|_| r.random_range(0..n)).collect(),
        Selection::Biased(w) => {
            let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
            for (i, s) in dataset.samples().iter().enumerate() {
                members.entry(s.label).or_default().push(i);
            }
            let labels: Vec<i32> = w.keys().copied().collect();
            for (&l, &v) in w {
                if v > 0.0 && members.get(&l).is_none_or(Vec::is_empty) {
                    return Err(Error::EmptyClass(l));
                }
            }
            if k == 0 {
                Vec::new()
            } else {
                let dist = WeightedIndex::new(w.values().copied())
                    .map_err(|e| Error::config(format!("class weights: {e}")))?;
                (0..k)
                    .map(|_| {
                        let pool = &members[&labels[dist.sample(&mut r)]];
                        pool[r.random_range(0..pool.len())]
                    })
                    .collect()
            }
        }
    };

    let mut samples: Vec<Sample> = dataset.samples().to_vec();
    samples.reserve(k);
    for i in picks {
        let mut dup = dataset.samples()[i].clone();
        dup.is_duplicate = true;
        *per_class.get_mut(&dup.label).expect("label in class set") += 1;
        samples.push(dup);
    }
    let report = DuplicationReport { n_duplicates: k, per_class_duplicates: per_class, expected_ratio };
    Ok((dataset.with_samples(samples), report))
}

/// Drops every sample whose label and feature bits match an earlier sample.
pub fn dedup_exact(dataset: &LabeledDataset) -> LabeledDataset {
    let mut seen: HashSet<(i32, Vec<u64>)> = HashSet::with_capacity(dataset.len());
    let samples = dataset
        .samples()
        .iter()
        .filter(|s| seen.insert((s.label, s.features.iter().map(|v| v.to_bits()).collect())))
        .cloned()
        .collect();
    dataset.with_samples(samples)
}
