//! ℓ2-bounded projected gradient ascent on the loss, adversarial training
//! and robust accuracy.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::neural::{class_indices, train_with_hook, MlpConfig, MlpModel, TrainLog};
use crate::rng;

/// Anything with a loss that PGD can ascend.
pub trait AttackTarget {
    type Target: ?Sized;

    fn input_dim(&self) -> usize;

    fn loss_and_input_gradient(&self, x: &[f64], y: &Self::Target) -> Result<(f64, Vec<f64>)>;
}

impl AttackTarget for MlpModel {
    type Target = usize;

    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: &usize) -> Result<(f64, Vec<f64>)> {
        MlpModel::loss_and_input_gradient(self, x, *y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub n_steps: usize,
    pub random_start: bool,
    /// Per-feature `[lo, hi]` box, e.g. `[0, 1]` for normalized pixels.
    pub clip_range: Option<[f64; 2]>,
    pub seed: u64,
}

impl PgdConfig {
    /// 10 steps of `2.5 ε / 10`, random start.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            step_size: if epsilon > 0.0 { 2.5 * epsilon / 10.0 } else { 0.1 },
            n_steps: 10,
            random_start: true,
            clip_range: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be at least 1"));
        }
        if let Some([lo, hi]) = self.clip_range {
            if !(lo <= hi) {
                return Err(Error::config(format!("clip range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self::with_epsilon(0.5)
    }
}

/// Euclidean projection onto the ε-ball around `x0` intersected with the box.
///
/// With `x0` inside the box the minimizer is `clip((x + λ x0) / (1 + λ))` for
/// the smallest `λ ≥ 0` meeting the ball constraint; each coordinate's
/// distance to `x0` shrinks as `λ` grows, so `λ` is found by bisection. If
/// `x0` lies outside the box the point is clipped and then pulled radially
/// onto the ball.
fn project(x: &mut [f64], x0: &[f64], epsilon: f64, clip: Option<[f64; 2]>) {
    let Some([lo, hi]) = clip else {
        radial(x, x0, epsilon);
        return;
    };
    if x0.iter().any(|v| !(lo..=hi).contains(v)) {
        x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        radial(x, x0, epsilon);
        return;
    }
    let y = x.to_vec();
    let fill = |lambda: f64, out: &mut [f64]| {
        for ((o, &a), &b) in out.iter_mut().zip(&y).zip(x0) {
            *o = ((a + lambda * b) / (1.0 + lambda)).clamp(lo, hi);
        }
        out.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    if fill(0.0, x) <= epsilon {
        return;
    }
    let (mut below, mut above) = (0.0, 1.0);
    while fill(above, x) > epsilon {
        below = above;
        above *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (below + above);
        if mid <= below || mid >= above {
            break;
        }
        if fill(mid, x) > epsilon {
            below = mid;
        } else {
            above = mid;
        }
    }
    fill(above, x);
}

fn radial(x: &mut [f64], x0: &[f64], epsilon: f64) {
    let dist = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist > epsilon {
        let scale = epsilon / dist;
        for (v, &o) in x.iter_mut().zip(x0) {
            *v = o + (*v - o) * scale;
        }
    }
}

fn random_start(x0: &[f64], epsilon: f64, r: &mut rng::Rng) -> Vec<f64> {
    let dir: Vec<f64> = x0.iter().map(|_| StandardNormal.sample(r)).collect();
    let n = norm(&dir);
    if n == 0.0 {
        return x0.to_vec();
    }
    let u: f64 = r.random();
    let radius = epsilon * u.powf(1.0 / x0.len() as f64);
    x0.iter().zip(&dir).map(|(o, d)| o + radius * d / n).collect()
}

/// Runs PGD from `x0`, recording the loss before each step when `trace` is set.
pub fn pgd_l2_traced<M: AttackTarget + ?Sized>(
    model: &M,
    x0: &[f64],
    y: &M::Target,
    cfg: &PgdConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x0.len() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), actual: x0.len() });
    }
    if cfg.epsilon == 0.0 {
        return Ok(x0.to_vec());
    }
    let mut x = if cfg.random_start {
        let mut r = rng::rng_from(cfg.seed);
        random_start(x0, cfg.epsilon, &mut r)
    } else {
        x0.to_vec()
    };
    project(&mut x, x0, cfg.epsilon, cfg.clip_range);
    for _ in 0..cfg.n_steps {
        let (loss, g) = model.loss_and_input_gradient(&x, y)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(loss);
        }
        let gn = norm(&g);
        if gn == 0.0 || !gn.is_finite() {
            continue;
        }
        let s = cfg.step_size / gn;
        for (v, gi) in x.iter_mut().zip(&g) {
            *v += s * gi;
        }
        project(&mut x, x0, cfg.epsilon, cfg.clip_range);
    }
    if let Some(t) = trace {
        t.push(model.loss_and_input_gradient(&x, y)?.0);
    }
    Ok(x)
}

pub fn pgd_l2<M: AttackTarget + ?Sized>(model: &M, x0: &[f64], y: &M::Target, cfg: &PgdConfig) -> Result<Vec<f64>> {
    pgd_l2_traced(model, x0, y, cfg, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainConfig {
    pub mlp: MlpConfig,
    pub attack: PgdConfig,
    /// Fraction of each minibatch replaced by adversarial examples.
    pub mix: f64,
}

impl AdvTrainConfig {
    pub fn new(mlp: MlpConfig, attack: PgdConfig) -> Self {
        Self { mlp, attack, mix: 1.0 }
    }
}

/// SGD where the first `round(mix * batch)` inputs of every shuffled batch are
/// replaced by PGD examples against the current model.
pub fn adversarial_train(dataset: &LabeledDataset, cfg: &AdvTrainConfig) -> Result<(MlpModel, TrainLog)> {
    cfg.attack.validate()?;
    if !(0.0..=1.0).contains(&cfg.mix) {
        return Err(Error::config(format!("mix must be in [0, 1], got {}", cfg.mix)));
    }
    let attack = cfg.attack.clone();
    let mix = cfg.mix;
    train_with_hook(dataset, &cfg.mlp, &mut |model, inputs, ys, batch_seed| {
        let m = ((mix * inputs.len() as f64).round() as usize).min(inputs.len());
        inputs[..m].par_iter_mut().zip(&ys[..m]).enumerate().try_for_each(|(i, (x, y))| {
            let c = PgdConfig { seed: rng::derive_seed(attack.seed, &[batch_seed, i as u64]), ..attack.clone() };
            *x = pgd_l2(model, x, y, &c)?;
            Ok(())
        })
    })
}

/// Fraction of samples classified correctly both as given and after a
/// per-sample PGD attack.
pub fn robust_accuracy(model: &MlpModel, dataset: &LabeledDataset, cfg: &PgdConfig) -> Result<f64> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = class_indices(dataset, model.classes())?;
    let hits = dataset
        .samples()
        .par_iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (s, &y))| {
            if model.predict(&s.features)? != y {
                return Ok(0usize);
            }
            let c = PgdConfig { seed: rng::derive_seed(cfg.seed, &[i as u64]), ..cfg.clone() };
            let adv = pgd_l2(model, &s.features, &y, &c)?;
            Ok(usize::from(model.predict(&adv)? == y))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Origin, Sample};
    use crate::neural::{evaluate, train_standard, Activation};

    fn mlp(sizes: &[usize], seed: u64) -> MlpConfig {
        MlpConfig {
            layer_sizes: sizes.to_vec(),
            activation: Activation::Relu,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 16,
            weight_init_scale: 1.0,
            seed,
        }
    }

    fn blobs(n: usize, sep: f64, seed: u64) -> LabeledDataset {
        let mut r = rng::rng_from(seed);
        let samples = (0..2 * n)
            .map(|i| {
                let (c, label) = if i % 2 == 0 { (sep, 1) } else { (-sep, 0) };
                let x = (0..2)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        c + 0.5 * z
                    })
                    .collect();
                Sample::new(x, label)
            })
            .collect();
        LabeledDataset::new(samples, [0, 1].into(), Origin::Synthetic, None).unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let m = MlpModel::init(&mlp(&[3, 4, 2], 0)).unwrap();
        let x = [0.2, -0.4, 0.9];
        let cfg = PgdConfig { epsilon: 0.0, ..Default::default() };
        assert_eq!(pgd_l2(&m, &x, &1, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_model_leaves_input_unchanged() {
        let m = MlpModel::zeros(&mlp(&[3, 4, 2], 0)).unwrap();
        let x = [0.2, -0.4, 0.9];
        let cfg = PgdConfig { random_start: false, ..Default::default() };
        assert_eq!(pgd_l2(&m, &x, &0, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn one_step_on_softmax_regression_matches_closed_form() {
        let m = MlpModel::init(&mlp(&[4, 3], 8)).unwrap();
        let x0 = [0.1, 0.5, -0.3, 0.7];
        let cfg =
            PgdConfig { epsilon: 0.3, step_size: 0.5, n_steps: 1, random_start: false, clip_range: None, seed: 0 };
        let g = m.input_gradient(&x0, 2).unwrap();
        let gn = norm(&g);
        let adv = pgd_l2(&m, &x0, &2, &cfg).unwrap();
        for i in 0..4 {
            assert!((adv[i] - (x0[i] + 0.3 * g[i] / gn)).abs() < 1e-8);
        }
        assert!(m.loss(&adv, 2).unwrap() >= m.loss(&x0, 2).unwrap());
    }

    #[test]
    fn respects_ball_and_box() {
        let m = MlpModel::init(&mlp(&[5, 6, 3], 2)).unwrap();
        let x0 = [0.0, 0.2, 0.5, 0.9, 1.0];
        for seed in 0..50 {
            let cfg = PgdConfig {
                epsilon: 0.7,
                step_size: 0.3,
                n_steps: 7,
                random_start: true,
                clip_range: Some([0.0, 1.0]),
                seed,
            };
            let adv = pgd_l2(&m, &x0, &(seed as usize % 3), &cfg).unwrap();
            let d: f64 = adv.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= 0.7 + 1e-9);
            assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn projection_is_euclidean_onto_ball_and_box() {
        let mut r = rng::rng_from(9);
        for _ in 0..200 {
            let d = 4;
            let x0: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let y: Vec<f64> = (0..d).map(|_| r.random::<f64>() * 3.0 - 1.0).collect();
            let eps = r.random::<f64>() * 0.8;
            let mut p = y.clone();
            project(&mut p, &x0, eps, Some([0.0, 1.0]));
            assert!(norm(&p.iter().zip(&x0).map(|(a, b)| a - b).collect::<Vec<_>>()) <= eps + 1e-9);
            // (y - p) . (z - p) <= 0 for every feasible z
            for _ in 0..50 {
                let mut z: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
                radial(&mut z, &x0, eps);
                let ip: f64 = y.iter().zip(&p).zip(&z).map(|((a, b), c)| (a - b) * (c - b)).sum();
                assert!(ip <= 1e-9, "{ip}");
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let m = MlpModel::init(&mlp(&[2, 2], 0)).unwrap();
        for cfg in [
            PgdConfig { epsilon: -1.0, ..Default::default() },
            PgdConfig { step_size: 0.0, ..Default::default() },
            PgdConfig { n_steps: 0, ..Default::default() },
            PgdConfig { clip_range: Some([1.0, 0.0]), ..Default::default() },
        ] {
            assert!(pgd_l2(&m, &[0.0, 0.0], &0, &cfg).is_err());
        }
        assert!(matches!(pgd_l2(&m, &[0.0], &0, &PgdConfig::default()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_budget_or_zero_mix_reduce_to_standard_training() {
        let data = blobs(40, 2.0, 1);
        let base = train_standard(&data, &mlp(&[2, 6, 2], 3)).unwrap();
        let no_budget = AdvTrainConfig::new(mlp(&[2, 6, 2], 3), PgdConfig { epsilon: 0.0, ..Default::default() });
        assert_eq!(adversarial_train(&data, &no_budget).unwrap(), base);
        let no_mix = AdvTrainConfig { mix: 0.0, ..AdvTrainConfig::new(mlp(&[2, 6, 2], 3), PgdConfig::default()) };
        assert_eq!(adversarial_train(&data, &no_mix).unwrap(), base);
    }

    #[test]
    fn adversarial_training_on_wide_margin() {
        let data = blobs(100, 3.0, 4);
        let attack = PgdConfig::with_epsilon(0.5);
        let cfg = AdvTrainConfig::new(MlpConfig { epochs: 20, ..mlp(&[2, 8, 2], 5) }, attack.clone());
        let (model, _) = adversarial_train(&data, &cfg).unwrap();
        assert!(robust_accuracy(&model, &data, &attack).unwrap() >= 0.95);
    }

    #[test]
    fn robust_accuracy_examples() {
        let data = blobs(50, 1.0, 9);
        let (model, _) = train_standard(&data, &mlp(&[2, 6, 2], 1)).unwrap();
        let clean = evaluate(&model, &data).unwrap().accuracy.overall;
        let zero = PgdConfig { epsilon: 0.0, ..Default::default() };
        assert_eq!(robust_accuracy(&model, &data, &zero).unwrap(), clean);
        for eps in [0.1, 0.5, 2.0] {
            let det = PgdConfig { random_start: false, ..PgdConfig::with_epsilon(eps) };
            assert!(robust_accuracy(&model, &data, &det).unwrap() <= clean);
        }

        let mut constant = MlpModel::zeros(&mlp(&[2, 2], 0)).unwrap();
        constant.layers[0].biases = vec![0.0, 1.0];
        let skewed = data.filter(|s| s.label == 1 || s.features[0] < -1.0);
        let share = skewed.class_counts()[&1] as f64 / skewed.len() as f64;
        for eps in [0.0, 0.5, 5.0] {
            let r = robust_accuracy(&constant, &skewed, &PgdConfig::with_epsilon(eps)).unwrap();
            assert!((r - share).abs() < 1e-15);
        }
        assert!(matches!(robust_accuracy(&model, &data.filter(|_| false), &zero), Err(Error::EmptyDataset)));
    }
}
