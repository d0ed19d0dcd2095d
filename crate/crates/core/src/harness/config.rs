use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::PgdConfig;
use crate::datasets::synthetic::SyntheticImageSpec;
use crate::datasets::GaussianSpec;
use crate::duplication::Selection;
use crate::error::{Error, Result};
use crate::neural::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gaussian,
    Image,
    Bvd,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Gaussian => "gaussian",
            ExperimentKind::Image => "image",
            ExperimentKind::Bvd => "bvd",
        }
    }

    /// `0, 10, ..., 90` for Gaussian runs, `0, 10, ..., 100` for images.
    pub fn default_d_rates(self) -> Vec<u32> {
        match self {
            ExperimentKind::Image => (0..=100).step_by(10).collect(),
            _ => (0..=90).step_by(10).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmSettings {
    pub c: f64,
    /// `None` selects `1 / (d * median feature variance)` of each training set.
    pub gamma: Option<f64>,
    pub kkt_tol: f64,
    pub max_passes: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, kkt_tol: 1e-3, max_passes: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSettings {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_init_scale: f64,
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            activation: Activation::Relu,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            weight_init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdSettings {
    pub epsilon: f64,
    /// `None` selects `2.5 * epsilon / n_steps`.
    pub step_size: Option<f64>,
    pub n_steps: usize,
    pub random_start: bool,
    pub clip_range: Option<[f64; 2]>,
}

impl Default for PgdSettings {
    fn default() -> Self {
        Self { epsilon: 0.5, step_size: None, n_steps: 10, random_start: true, clip_range: Some([0.0, 1.0]) }
    }
}

impl PgdSettings {
    pub fn resolve(&self, seed: u64) -> PgdConfig {
        let step = self.step_size.unwrap_or(if self.epsilon > 0.0 {
            2.5 * self.epsilon / self.n_steps.max(1) as f64
        } else {
            0.1
        });
        PgdConfig {
            epsilon: self.epsilon,
            step_size: step,
            n_steps: self.n_steps,
            random_start: self.random_start,
            clip_range: self.clip_range,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageSettings {
    /// Directory with CIFAR-10 binary batches. Ignored when `synthetic` is set.
    pub path: Option<PathBuf>,
    /// Generate CIFAR-layout data instead of reading `path`.
    pub synthetic: Option<SyntheticImageSpec>,
    pub class_subset: Option<Vec<u8>>,
    pub downscale: usize,
    pub normalize: bool,
    /// Per-seed subsample size of the training split.
    pub train_per_class: Option<usize>,
    /// Test split cap, taken in file order.
    pub test_per_class: Option<usize>,
}

impl Default for ImageSettings {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            class_subset: None,
            downscale: 2,
            normalize: true,
            train_per_class: Some(500),
            test_per_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSettings {
    pub replicates: usize,
    pub eval_per_class: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { replicates: 200, eval_per_class: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d_rates: Vec<u32>,
    pub policy: Selection,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub model: ModelKind,
    pub svm: SvmSettings,
    pub mlp: MlpSettings,
    pub adversarial: bool,
    pub pgd: PgdSettings,
    /// Training distribution; its `seed` field is ignored (seeds come from the sweep).
    pub gaussian: GaussianSpec,
    /// Held-out Gaussian test points per class.
    pub gaussian_test_per_class: usize,
    pub image: ImageSettings,
    pub probe: ProbeSettings,
    /// Output directory; not part of the fingerprint.
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_kind(ExperimentKind::Gaussian)
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            d_rates: kind.default_d_rates(),
            policy: Selection::Uniform,
            seeds: vec![0],
            master_seed: 0,
            model: if kind == ExperimentKind::Image { ModelKind::Mlp } else { ModelKind::Svm },
            svm: SvmSettings::default(),
            mlp: MlpSettings::default(),
            adversarial: false,
            pgd: PgdSettings::default(),
            gaussian: GaussianSpec::default(),
            gaussian_test_per_class: 1_000,
            image: ImageSettings::default(),
            probe: ProbeSettings::default(),
            output: PathBuf::from("results"),
        }
    }

    /// Parses a JSON config. Missing fields take the defaults of the
    /// document's `experiment` kind.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let kind: ExperimentKind = match value.get("experiment") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => return Err(Error::config("config is missing \"experiment\"")),
        };
        let mut merged = serde_json::to_value(Self::for_kind(kind))?;
        merge(&mut merged, value);
        Ok(serde_json::from_value(merged)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form, with
    /// `output` blanked.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_rates.is_empty() {
            return Err(Error::config("d_rates is empty"));
        }
        if self.d_rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("d_rates must be strictly ascending"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds contain duplicates"));
        }
        self.policy.validate()?;
        match (self.experiment, self.model) {
            (ExperimentKind::Gaussian, ModelKind::Mlp) => {
                return Err(Error::config("gaussian sweeps use the svm model"));
            }
            (ExperimentKind::Image, ModelKind::Svm) => {
                return Err(Error::config("image sweeps use the mlp model"));
            }
            _ => {}
        }
        if self.adversarial && (self.model != ModelKind::Mlp || self.experiment != ExperimentKind::Image) {
            return Err(Error::config("adversarial training needs the mlp model on the image experiment"));
        }
        if self.adversarial {
            self.pgd.resolve(0).validate()?;
        }
        if self.experiment == ExperimentKind::Image {
            let img = &self.image;
            if img.path.is_none() && img.synthetic.is_none() {
                return Err(Error::config("image experiment needs image.path or image.synthetic"));
            }
            if !matches!(img.downscale, 1 | 2 | 4 | 8) {
                return Err(Error::config(format!("downscale {} does not divide 32", img.downscale)));
            }
        } else {
            self.gaussian.validate()?;
        }
        if self.experiment == ExperimentKind::Bvd && self.probe.replicates < 2 {
            return Err(Error::config("probe.replicates must be at least 2"));
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
