//! Seeded sweep runners.
//!
//! Every random stream of a sweep point is derived from the master seed, a
//! stream tag, the sweep seed and (for duplication) the D-rate, so adding
//! seeds or rates leaves existing points unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, ModelKind};
use super::records::{bvd_csv, sweep_csv, BvdRecord, ImageMetrics, SweepRecord};
use crate::adversarial::{adversarial_train, robust_accuracy, AdvTrainConfig};
use crate::datasets::synthetic::write_synthetic_cifar;
use crate::datasets::{load_cifar10, sample_gaussian, subsample, ImageSource, LabeledDataset, Sample, Split};
use crate::decomposition::{duplication_bias_probe, MlpMargin, ProbeConfig, ScalarModel};
use crate::duplication::{inject, DuplicationPolicy, DuplicationReport};
use crate::error::{Error, Result};
use crate::metrics::Accuracy;
use crate::neural::{evaluate, train_standard, MlpConfig, MlpModel};
use crate::rng::{derive_seed, stream};
use crate::svm::{evaluate_per_class, train_svm, KernelParams, SvmConfig, SvmModel};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "DUPLAB_WORKERS";

/// Runs `f` on a pool sized by [`WORKERS_ENV`], or rayon's default when the
/// variable is unset or zero.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::config(format!("{WORKERS_ENV}={v:?} is not a count")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.experiment != kind {
        return Err(Error::config(format!("expected a {} config, got {}", kind.name(), cfg.experiment.name())));
    }
    cfg.validate()
}

fn policy(cfg: &ExperimentConfig, seed: u64, d_rate: u32) -> DuplicationPolicy {
    DuplicationPolicy {
        rate_percent: d_rate,
        selection: cfg.policy.clone(),
        seed: derive_seed(cfg.master_seed, &[stream::DUPLICATE, seed, u64::from(d_rate)]),
    }
}

fn points(cfg: &ExperimentConfig) -> Vec<(usize, u32)> {
    (0..cfg.seeds.len()).flat_map(|i| cfg.d_rates.iter().map(move |&r| (i, r))).collect()
}

fn sorted(mut records: Vec<SweepRecord>) -> Vec<SweepRecord> {
    records.sort_by_key(|r| (r.d_rate, r.seed));
    records
}

fn svm_config(cfg: &ExperimentConfig, train: &LabeledDataset, seed: u64) -> Result<SvmConfig> {
    let gamma = match cfg.svm.gamma {
        Some(g) => g,
        None => KernelParams::scale_default(train)?.gamma,
    };
    let mut c = SvmConfig::new(cfg.svm.c, gamma);
    c.kkt_tol = cfg.svm.kkt_tol;
    c.gap_tol = c.gap_tol.min(c.kkt_tol);
    c.max_passes = cfg.svm.max_passes;
    c.seed = seed;
    Ok(c)
}

struct GaussianBase {
    seed: u64,
    train: LabeledDataset,
    test: LabeledDataset,
    svm: SvmConfig,
    orig: Accuracy,
}

fn gaussian_base(cfg: &ExperimentConfig, seed: u64) -> Result<GaussianBase> {
    let train = sample_gaussian(&cfg.gaussian.with_seed(derive_seed(cfg.master_seed, &[stream::TRAIN, seed])))?;
    let test = sample_gaussian(
        &cfg.gaussian
            .with_n(cfg.gaussian_test_per_class)
            .with_seed(derive_seed(cfg.master_seed, &[stream::TEST, seed])),
    )?;
    let svm = svm_config(cfg, &train, derive_seed(cfg.master_seed, &[stream::MODEL, seed]))?;
    let orig = evaluate_per_class(&train_svm(&train, &svm)?, &test)?;
    Ok(GaussianBase { seed, train, test, svm, orig })
}

/// Trains an SVM on each seed's original and duplicated training sets and
/// scores both on a held-out test set drawn from a separate stream. The SVM
/// kernel width is fixed per seed from the original set.
pub fn run_gaussian_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    expect_kind(cfg, ExperimentKind::Gaussian)?;
    let fingerprint = cfg.fingerprint();
    let records = with_workers(|| -> Result<Vec<SweepRecord>> {
        let bases: Vec<GaussianBase> = cfg.seeds.par_iter().map(|&s| gaussian_base(cfg, s)).collect::<Result<_>>()?;
        points(cfg)
            .into_par_iter()
            .map(|(i, d_rate)| {
                let base = &bases[i];
                let (dup, report) = inject(&base.train, &policy(cfg, base.seed, d_rate))?;
                let acc = if report.n_duplicates == 0 {
                    base.orig.clone()
                } else {
                    evaluate_per_class(&train_svm(&dup, &base.svm)?, &base.test)?
                };
                Ok(SweepRecord {
                    experiment: ExperimentKind::Gaussian,
                    d_rate,
                    seed: base.seed,
                    n_train: dup.len(),
                    n_duplicates: report.n_duplicates,
                    d_ratio: report.d_ratios(),
                    acc_orig: per_class(&base.orig, base.train.class_set()),
                    acc_dup: per_class(&acc, base.train.class_set()),
                    overall_orig: base.orig.overall,
                    overall_dup: acc.overall,
                    image: None,
                    fingerprint: fingerprint.clone(),
                })
            })
            .collect()
    })??;
    Ok(sorted(records))
}

fn per_class(acc: &Accuracy, classes: &BTreeSet<i32>) -> BTreeMap<i32, f64> {
    classes.iter().map(|&c| (c, acc.class(c))).collect()
}

/// Relabels a dataset whose labels are listed in `classes` to `0..K`.
fn to_indices(ds: &LabeledDataset, classes: &[i32]) -> Result<LabeledDataset> {
    let samples = ds
        .samples()
        .iter()
        .map(|s| {
            let idx = classes.binary_search(&s.label).map_err(|_| Error::UnknownLabel(s.label))?;
            Ok(Sample { label: idx as i32, ..s.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, (0..classes.len() as i32).collect(), ds.origin(), ds.seed())
}

/// Narrows the class set to the labels that occur.
fn present_classes(ds: LabeledDataset) -> Result<LabeledDataset> {
    let present: BTreeSet<i32> = ds.class_counts().into_iter().filter(|&(_, n)| n > 0).map(|(c, _)| c).collect();
    let (origin, seed) = (ds.origin(), ds.seed());
    LabeledDataset::new(ds.into_samples(), present, origin, seed)
}

/// Directory that holds the image batches for `cfg`, generating synthetic
/// batches under the output directory when requested.
pub fn image_data_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    match (&cfg.image.synthetic, &cfg.image.path) {
        (Some(spec), _) => {
            let dir = cfg.output.join("synthetic-cifar");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_synthetic_cifar(&dir, spec)?;
            Ok(dir)
        }
        (None, Some(path)) => Ok(path.clone()),
        (None, None) => Err(Error::config("image experiment needs image.path or image.synthetic")),
    }
}

fn load_split(cfg: &ExperimentConfig, dir: &Path, split: Split) -> Result<LabeledDataset> {
    let img = &cfg.image;
    let src = ImageSource {
        path: dir.to_path_buf(),
        split,
        class_subset: img.class_subset.clone(),
        max_per_class: if split == Split::Test { img.test_per_class } else { None },
        downscale: img.downscale,
        normalize: img.normalize,
    };
    load_cifar10(&src)
}

fn relabel<V: Copy>(m: &BTreeMap<i32, V>, classes: &[i32]) -> BTreeMap<i32, V> {
    m.iter().map(|(&i, &v)| (classes[i as usize], v)).collect()
}

struct ImageContext<'a> {
    cfg: &'a ExperimentConfig,
    classes: Vec<i32>,
    test: LabeledDataset,
}

impl ImageContext<'_> {
    fn mlp_config(&self, dim: usize, seed: u64) -> MlpConfig {
        let m = &self.cfg.mlp;
        let mut layer_sizes = vec![dim];
        layer_sizes.extend(&m.hidden);
        layer_sizes.push(self.classes.len());
        MlpConfig {
            layer_sizes,
            activation: m.activation,
            learning_rate: m.learning_rate,
            epochs: m.epochs,
            batch_size: m.batch_size,
            weight_init_scale: m.weight_init_scale,
            seed: derive_seed(self.cfg.master_seed, &[stream::MODEL, seed]),
        }
    }

    fn train(&self, train: &LabeledDataset, seed: u64) -> Result<MlpModel> {
        let dim = train.dim().ok_or(Error::EmptyDataset)?;
        let mlp = self.mlp_config(dim, seed);
        let model = if self.cfg.adversarial {
            let attack = self.cfg.pgd.resolve(derive_seed(self.cfg.master_seed, &[stream::ATTACK, seed]));
            adversarial_train(train, &AdvTrainConfig::new(mlp, attack))?.0
        } else {
            train_standard(train, &mlp)?.0
        };
        Ok(model)
    }

    /// Per-class accuracy keyed by original label.
    fn accuracy(&self, t: &MlpModel, ds: &LabeledDataset) -> Result<Accuracy> {
        let acc = evaluate(t, ds)?.accuracy;
        Ok(Accuracy {
            overall: acc.overall,
            per_class: relabel(&acc.per_class, &self.classes),
            counts: relabel(&acc.counts, &self.classes),
        })
    }

    fn robust(&self, t: &MlpModel, ds: &LabeledDataset, seed: u64, which: u64) -> Result<Option<f64>> {
        if !self.cfg.adversarial {
            return Ok(None);
        }
        let pgd = self.cfg.pgd.resolve(derive_seed(self.cfg.master_seed, &[stream::EVAL, seed, which]));
        robust_accuracy(t, ds, &pgd).map(Some)
    }
}

struct ImageBase {
    seed: u64,
    /// Original labels.
    train: LabeledDataset,
    model: MlpModel,
    orig: Accuracy,
}

/// Trains the configured MLP (standard or adversarial) on each seed's
/// subsampled training split, original and duplicated, and reports test,
/// repetitive and non-repetitive training accuracies. Adversarial runs add
/// robust accuracies under the same attack settings.
pub fn run_image_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    expect_kind(cfg, ExperimentKind::Image)?;
    let fingerprint = cfg.fingerprint();
    let dir = image_data_dir(cfg)?;
    let full_train = present_classes(load_split(cfg, &dir, Split::Train)?)?;
    let test_raw = load_split(cfg, &dir, Split::Test)?;
    let classes: Vec<i32> = full_train.class_set().iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::config(format!("image experiment needs at least two classes, got {classes:?}")));
    }
    let ctx = ImageContext { cfg, test: to_indices(&test_raw, &classes)?, classes };
    let records = with_workers(|| -> Result<Vec<SweepRecord>> {
        let bases: Vec<ImageBase> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let train = match cfg.image.train_per_class {
                    Some(k) => subsample(&full_train, k, derive_seed(cfg.master_seed, &[stream::TRAIN, seed]))?,
                    None => full_train.clone(),
                };
                let model = ctx.train(&to_indices(&train, &ctx.classes)?, seed)?;
                let orig = ctx.accuracy(&model, &ctx.test)?;
                Ok(ImageBase { seed, train, model, orig })
            })
            .collect::<Result<_>>()?;
        points(cfg).into_par_iter().map(|(i, d_rate)| image_point(&ctx, &bases[i], d_rate, &fingerprint)).collect()
    })??;
    Ok(sorted(records))
}

fn image_point(ctx: &ImageContext<'_>, base: &ImageBase, d_rate: u32, fingerprint: &str) -> Result<SweepRecord> {
    let (dup, report): (LabeledDataset, DuplicationReport) = inject(&base.train, &policy(ctx.cfg, base.seed, d_rate))?;
    let dup_idx = to_indices(&dup, &ctx.classes)?;
    let orig_idx = to_indices(&base.train, &ctx.classes)?;
    let fresh;
    let model = if report.n_duplicates == 0 {
        &base.model
    } else {
        fresh = ctx.train(&dup_idx, base.seed)?;
        &fresh
    };
    let test = ctx.accuracy(model, &ctx.test)?;
    let repetitive = ctx.accuracy(model, &dup_idx)?.overall;
    let non_repetitive = if report.n_duplicates == 0 { repetitive } else { ctx.accuracy(model, &orig_idx)?.overall };
    let adv_test = ctx.robust(model, &ctx.test, base.seed, 0)?;
    let adv_train = ctx.robust(model, &dup_idx, base.seed, 1)?;
    let adv_non_rep = if report.n_duplicates == 0 { adv_train } else { ctx.robust(model, &orig_idx, base.seed, 1)? };
    Ok(SweepRecord {
        experiment: ExperimentKind::Image,
        d_rate,
        seed: base.seed,
        n_train: dup.len(),
        n_duplicates: report.n_duplicates,
        d_ratio: report.d_ratios(),
        acc_orig: base.orig.per_class.clone(),
        acc_dup: test.per_class.clone(),
        overall_orig: base.orig.overall,
        overall_dup: test.overall,
        image: Some(ImageMetrics {
            test_acc: test.overall,
            repetitive_train_acc: repetitive,
            non_repetitive_train_acc: non_repetitive,
            adv_test_acc: adv_test,
            adv_train_acc: adv_train,
            adv_non_repetitive_train_acc: adv_non_rep,
        }),
        fingerprint: fingerprint.to_string(),
    })
}

enum BvdModel {
    Svm(SvmModel),
    Mlp(MlpMargin),
}

impl ScalarModel for BvdModel {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            BvdModel::Svm(m) => m.value(x),
            BvdModel::Mlp(m) => m.value(x),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BvdModel::Svm(m) => m.gradient(x),
            BvdModel::Mlp(m) => m.gradient(x),
        }
    }
}

/// Runs the per-class duplication bias probe once per sweep seed, with one
/// policy per D-rate. Scores are SVM decision values or MLP logit margins
/// `z(+1) - z(-1)`.
pub fn run_bvd(cfg: &ExperimentConfig) -> Result<Vec<BvdRecord>> {
    expect_kind(cfg, ExperimentKind::Bvd)?;
    let fingerprint = cfg.fingerprint();
    let policies: Vec<DuplicationPolicy> = cfg.d_rates.iter().map(|&r| policy(cfg, 0, r)).collect();
    let trainer = |ds: &LabeledDataset| -> Result<BvdModel> {
        let model_seed = derive_seed(cfg.master_seed, &[stream::MODEL]);
        match cfg.model {
            ModelKind::Svm => Ok(BvdModel::Svm(train_svm(ds, &svm_config(cfg, ds, model_seed)?)?)),
            ModelKind::Mlp => {
                let idx = to_indices(ds, &[-1, 1])?;
                let m = &cfg.mlp;
                let mut layer_sizes = vec![ds.dim().ok_or(Error::EmptyDataset)?];
                layer_sizes.extend(&m.hidden);
                layer_sizes.push(2);
                let mlp = MlpConfig {
                    layer_sizes,
                    activation: m.activation,
                    learning_rate: m.learning_rate,
                    epochs: m.epochs,
                    batch_size: m.batch_size,
                    weight_init_scale: m.weight_init_scale,
                    seed: model_seed,
                };
                Ok(BvdModel::Mlp(MlpMargin { model: train_standard(&idx, &mlp)?.0, pos: 1, neg: 0 }))
            }
        }
    };
    let records = with_workers(|| -> Result<Vec<BvdRecord>> {
        let mut out = Vec::new();
        for &seed in &cfg.seeds {
            let probe = ProbeConfig {
                base: cfg.gaussian.clone(),
                replicates: cfg.probe.replicates,
                eval_per_class: cfg.probe.eval_per_class,
                seed: derive_seed(cfg.master_seed, &[seed]),
            };
            for row in duplication_bias_probe(&probe, &policies, trainer)? {
                out.push(BvdRecord {
                    seed,
                    policy: row.policy,
                    d_rate: row.rate_percent,
                    class: row.class,
                    bias_sq: row.bias_sq,
                    variance: row.variance,
                    signed_bias: row.signed_bias,
                    se_bias_sq: row.se_bias_sq,
                    se_variance: row.se_variance,
                    se_signed_bias: row.se_signed_bias,
                    replicates: row.replicates,
                    fingerprint: fingerprint.clone(),
                });
            }
        }
        Ok(out)
    })??;
    Ok(records)
}

/// Files written by [`run_and_write`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub rows: usize,
}

/// Runs the configured experiment and writes `<output>/<experiment>.csv`
/// next to the sidecar config `<output>/<experiment>.config.json`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (text, rows) = match cfg.experiment {
        ExperimentKind::Gaussian => {
            let r = run_gaussian_sweep(cfg)?;
            (sweep_csv(&r)?, r.len())
        }
        ExperimentKind::Image => {
            let r = run_image_sweep(cfg)?;
            (sweep_csv(&r)?, r.len())
        }
        ExperimentKind::Bvd => {
            let r = run_bvd(cfg)?;
            (bvd_csv(&r)?, r.len())
        }
    };
    let dir = &cfg.output;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", cfg.experiment.name()));
    let sidecar = dir.join(format!("{}.config.json", cfg.experiment.name()));
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&sidecar, cfg.to_json_pretty()?).map_err(|e| Error::io(&sidecar, e))?;
    Ok(RunOutput { csv, sidecar, rows })
}
