//! Sweep records and their CSV form.
//!
//! Sweep CSV columns, in order:
//!
//! ```text
//! experiment,d_rate,seed,n_train,n_duplicates,
//! d_ratio_<c>...,acc_orig_<c>...,acc_dup_<c>...,overall_orig,overall_dup,
//! [test_acc,repetitive_train_acc,non_repetitive_train_acc,
//!  adv_test_acc,adv_train_acc,adv_non_repetitive_train_acc,]
//! fingerprint
//! ```
//!
//! where `<c>` runs over the class labels in ascending order and the bracketed
//! block appears for image sweeps only. Adversarial cells are empty for
//! standard training.
//!
//! Probe CSV columns:
//!
//! ```text
//! seed,policy,d_rate,class,bias_sq,variance,signed_bias,
//! se_bias_sq,se_variance,se_signed_bias,replicates,fingerprint
//! ```
//!
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub test_acc: f64,
    pub repetitive_train_acc: f64,
    pub non_repetitive_train_acc: f64,
    pub adv_test_acc: Option<f64>,
    pub adv_train_acc: Option<f64>,
    pub adv_non_repetitive_train_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment: ExperimentKind,
    pub d_rate: u32,
    pub seed: u64,
    /// Training-set size after injection.
    pub n_train: usize,
    pub n_duplicates: usize,
    pub d_ratio: BTreeMap<i32, f64>,
    pub acc_orig: BTreeMap<i32, f64>,
    pub acc_dup: BTreeMap<i32, f64>,
    pub overall_orig: f64,
    pub overall_dup: f64,
    pub image: Option<ImageMetrics>,
    pub fingerprint: String,
}

/// One probe row for one sweep seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvdRecord {
    pub seed: u64,
    pub policy: String,
    pub d_rate: u32,
    pub class: i32,
    pub bias_sq: f64,
    pub variance: f64,
    pub signed_bias: f64,
    pub se_bias_sq: f64,
    pub se_variance: f64,
    pub se_signed_bias: f64,
    pub replicates: usize,
    pub fingerprint: String,
}

const IMAGE_COLUMNS: [&str; 6] = [
    "test_acc",
    "repetitive_train_acc",
    "non_repetitive_train_acc",
    "adv_test_acc",
    "adv_train_acc",
    "adv_non_repetitive_train_acc",
];

const BVD_HEADER: [&str; 12] = [
    "seed",
    "policy",
    "d_rate",
    "class",
    "bias_sq",
    "variance",
    "signed_bias",
    "se_bias_sq",
    "se_variance",
    "se_signed_bias",
    "replicates",
    "fingerprint",
];

/// Column layout shared by a set of sweep records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSchema {
    pub experiment: ExperimentKind,
    pub classes: Vec<i32>,
}

impl SweepSchema {
    /// Schema of `records`, which must agree on experiment and classes.
    /// An empty slice yields a Gaussian schema without class columns.
    pub fn of(records: &[SweepRecord]) -> Result<Self> {
        let Some(first) = records.first() else {
            return Ok(Self { experiment: ExperimentKind::Gaussian, classes: Vec::new() });
        };
        let schema = Self { experiment: first.experiment, classes: first.acc_orig.keys().copied().collect() };
        for r in records {
            let same = r.experiment == schema.experiment
                && [&r.d_ratio, &r.acc_orig, &r.acc_dup]
                    .iter()
                    .all(|m| m.keys().copied().eq(schema.classes.iter().copied()))
                && r.image.is_some() == (schema.experiment == ExperimentKind::Image);
            if !same {
                return Err(Error::config("records do not share one experiment layout"));
            }
        }
        Ok(schema)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["experiment", "d_rate", "seed", "n_train", "n_duplicates"].map(String::from).to_vec();
        for prefix in ["d_ratio", "acc_orig", "acc_dup"] {
            h.extend(self.classes.iter().map(|c| format!("{prefix}_{c}")));
        }
        h.push("overall_orig".into());
        h.push("overall_dup".into());
        if self.experiment == ExperimentKind::Image {
            h.extend(IMAGE_COLUMNS.map(String::from));
        }
        h.push("fingerprint".into());
        h
    }

    fn from_header(header: &[&str]) -> Result<Self> {
        let classes = header
            .iter()
            .filter_map(|h| h.strip_prefix("acc_orig_"))
            .map(|c| c.parse::<i32>().map_err(|_| Error::Parse(format!("bad class column acc_orig_{c}"))))
            .collect::<Result<Vec<_>>>()?;
        let experiment = if header.contains(&"test_acc") { ExperimentKind::Image } else { ExperimentKind::Gaussian };
        let schema = Self { experiment, classes };
        if schema.header() != header {
            return Err(Error::Parse(format!("unexpected header {}", header.join(","))));
        }
        Ok(schema)
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn sort_sweep(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| (a.d_rate, a.seed, &a.fingerprint).cmp(&(b.d_rate, b.seed, &b.fingerprint)));
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Renders records sorted by `(d_rate, seed)`.
pub fn sweep_csv(records: &[SweepRecord]) -> Result<String> {
    let schema = SweepSchema::of(records)?;
    let mut sorted = records.to_vec();
    sort_sweep(&mut sorted);
    csv_bytes(
        schema.header(),
        sorted.iter().map(|r| {
            let mut row = vec![
                r.experiment.name().to_string(),
                r.d_rate.to_string(),
                r.seed.to_string(),
                r.n_train.to_string(),
                r.n_duplicates.to_string(),
            ];
            for m in [&r.d_ratio, &r.acc_orig, &r.acc_dup] {
                row.extend(m.values().map(|&v| float(v)));
            }
            row.push(float(r.overall_orig));
            row.push(float(r.overall_dup));
            if let Some(img) = &r.image {
                row.extend([
                    float(img.test_acc),
                    float(img.repetitive_train_acc),
                    float(img.non_repetitive_train_acc),
                    opt_float(img.adv_test_acc),
                    opt_float(img.adv_train_acc),
                    opt_float(img.adv_non_repetitive_train_acc),
                ]);
            }
            row.push(r.fingerprint.clone());
            row
        }),
    )
}

/// Writes [`sweep_csv`] to `path`.
pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let text = sweep_csv(records)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn field<T: FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = row.get(i).ok_or_else(|| Error::Parse(format!("missing column {name}")))?;
    raw.parse().map_err(|_| Error::Parse(format!("bad {name} value {raw:?}")))
}

fn opt_field(row: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match row.get(i) {
        Some("") => Ok(None),
        _ => field(row, i, name).map(Some),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes())
}

/// Inverse of [`sweep_csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let schema = SweepSchema::from_header(&names)?;
    let k = schema.classes.len();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let experiment = match row.get(0) {
            Some("gaussian") => ExperimentKind::Gaussian,
            Some("image") => ExperimentKind::Image,
            other => return Err(Error::Parse(format!("bad experiment {other:?}"))),
        };
        let map = |offset: usize| -> Result<BTreeMap<i32, f64>> {
            schema
                .classes
                .iter()
                .enumerate()
                .map(|(j, &c)| Ok((c, field(&row, offset + j, names[offset + j])?)))
                .collect()
        };
        let base = 5 + 3 * k;
        let image = if schema.experiment == ExperimentKind::Image {
            let at = base + 2;
            Some(ImageMetrics {
                test_acc: field(&row, at, IMAGE_COLUMNS[0])?,
                repetitive_train_acc: field(&row, at + 1, IMAGE_COLUMNS[1])?,
                non_repetitive_train_acc: field(&row, at + 2, IMAGE_COLUMNS[2])?,
                adv_test_acc: opt_field(&row, at + 3, IMAGE_COLUMNS[3])?,
                adv_train_acc: opt_field(&row, at + 4, IMAGE_COLUMNS[4])?,
                adv_non_repetitive_train_acc: opt_field(&row, at + 5, IMAGE_COLUMNS[5])?,
            })
        } else {
            None
        };
        out.push(SweepRecord {
            experiment,
            d_rate: field(&row, 1, "d_rate")?,
            seed: field(&row, 2, "seed")?,
            n_train: field(&row, 3, "n_train")?,
            n_duplicates: field(&row, 4, "n_duplicates")?,
            d_ratio: map(5)?,
            acc_orig: map(5 + k)?,
            acc_dup: map(5 + 2 * k)?,
            overall_orig: field(&row, base, "overall_orig")?,
            overall_dup: field(&row, base + 1, "overall_dup")?,
            image,
            fingerprint: field(&row, names.len() - 1, "fingerprint")?,
        });
    }
    Ok(out)
}

/// Renders probe records sorted by `(d_rate, seed, policy, class)`.
pub fn bvd_csv(records: &[BvdRecord]) -> Result<String> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| (a.d_rate, a.seed, &a.policy, a.class).cmp(&(b.d_rate, b.seed, &b.policy, b.class)));
    csv_bytes(
        BVD_HEADER.map(String::from).to_vec(),
        sorted.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.policy.clone(),
                r.d_rate.to_string(),
                r.class.to_string(),
                float(r.bias_sq),
                float(r.variance),
                float(r.signed_bias),
                float(r.se_bias_sq),
                float(r.se_variance),
                float(r.se_signed_bias),
                r.replicates.to_string(),
                r.fingerprint.clone(),
            ]
        }),
    )
}

pub fn parse_bvd_csv(text: &str) -> Result<Vec<BvdRecord>> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if !header.iter().eq(BVD_HEADER) {
        return Err(Error::Parse(format!("unexpected header {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(e.to_string()))?;
            Ok(BvdRecord {
                seed: field(&row, 0, "seed")?,
                policy: field(&row, 1, "policy")?,
                d_rate: field(&row, 2, "d_rate")?,
                class: field(&row, 3, "class")?,
                bias_sq: field(&row, 4, "bias_sq")?,
                variance: field(&row, 5, "variance")?,
                signed_bias: field(&row, 6, "signed_bias")?,
                se_bias_sq: field(&row, 7, "se_bias_sq")?,
                se_variance: field(&row, 8, "se_variance")?,
                se_signed_bias: field(&row, 9, "se_signed_bias")?,
                replicates: field(&row, 10, "replicates")?,
                fingerprint: field(&row, 11, "fingerprint")?,
            })
        })
        .collect()
}
