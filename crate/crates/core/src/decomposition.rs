//! Monte-Carlo bias/variance decomposition of squared error, the adversarial
//! correction terms `c_x` and `c'_x`, and a per-class probe of how duplication
//! shifts a classifier's decision scores.
//!
//! `f̄(x)` is always the mean over the trained replicates. Standard errors are
//! leave-one-replicate-out jackknife estimates.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{pgd_l2, AttackTarget, PgdConfig};
use crate::datasets::{sample_gaussian, GaussianSpec, LabeledDataset};
use crate::duplication::{inject, DuplicationPolicy};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::neural::MlpModel;
use crate::rng;
use crate::svm::SvmModel;

/// Finite-difference step for models without analytic input gradients.
pub const FD_STEP: f64 = 1e-4;

/// A real-valued predictor.
pub trait ScalarModel: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Central differences by default.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        central_difference(|p| self.value(p), x, FD_STEP)
    }
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

impl ScalarModel for SvmModel {
    fn value(&self, x: &[f64]) -> f64 {
        self.decision_value(x).unwrap_or(f64::NAN)
    }
}

/// Logit margin `z_pos - z_neg` of an MLP, with exact input gradient.
#[derive(Debug, Clone)]
pub struct MlpMargin {
    pub model: MlpModel,
    pub pos: usize,
    pub neg: usize,
}

impl ScalarModel for MlpMargin {
    fn value(&self, x: &[f64]) -> f64 {
        self.model.margin_and_gradient(x, self.pos, self.neg).map_or(f64::NAN, |v| v.0)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.model.margin_and_gradient(x, self.pos, self.neg).map_or_else(|_| vec![f64::NAN; x.len()], |v| v.1)
    }
}

/// Wraps a closure as a model; the gradient falls back to central differences.
pub struct FnModel<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarModel for FnModel<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Linear model `wᵀx + b` with its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScalarModel for LinearModel {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

pub type Target = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type InputSampler = Arc<dyn Fn(&mut rng::Rng) -> Vec<f64> + Send + Sync>;

/// Regression problem `y = f(x) + noise`, `noise ~ N(0, noise_sigma²)`.
#[derive(Clone)]
pub struct RegressionTask {
    pub target: Target,
    pub sampler: InputSampler,
    pub noise_sigma: f64,
    pub train_size: usize,
    pub seed: u64,
}

impl RegressionTask {
    /// Draws the training set of replicate `r`.
    pub fn draw(&self, r: u64) -> Vec<(Vec<f64>, f64)> {
        let mut g = rng::rng_from(rng::derive_seed(self.seed, &[rng::stream::TRAIN, r]));
        (0..self.train_size)
            .map(|_| {
                let x = (self.sampler)(&mut g);
                let z: f64 = StandardNormal.sample(&mut g);
                let y = (self.target)(&x) + self.noise_sigma * z;
                (x, y)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceEstimate {
    pub bias_sq: f64,
    pub variance: f64,
    pub irreducible: f64,
    pub expected_loss: f64,
    pub replicates: usize,
    pub se_bias_sq: f64,
    pub se_variance: f64,
    pub se_expected_loss: f64,
    /// Standard error of `bias_sq + variance + irreducible - expected_loss`.
    pub se_identity_gap: f64,
}

impl BiasVarianceEstimate {
    pub fn identity_gap(&self) -> f64 {
        self.bias_sq + self.variance + self.irreducible - self.expected_loss
    }

    /// Builds the estimate from a replicate × point prediction matrix, the
    /// noiseless targets and, per replicate and point, a fresh noisy label.
    pub fn from_replicates(preds: &[Vec<f64>], targets: &[f64], fresh: &[Vec<f64>], noise_sigma: f64) -> Result<Self> {
        let r = preds.len();
        if r < 2 {
            return Err(Error::config(format!("need at least 2 replicates, got {r}")));
        }
        if fresh.len() != r {
            return Err(Error::DimensionMismatch { expected: r, actual: fresh.len() });
        }
        let p = targets.len();
        if p == 0 {
            return Err(Error::config("no evaluation points"));
        }
        for row in preds.iter().chain(fresh) {
            if row.len() != p {
                return Err(Error::DimensionMismatch { expected: p, actual: row.len() });
            }
        }
        let cols: Vec<usize> = (0..p).collect();
        let stats = PointStats::new(preds, targets, &cols);
        let losses: Vec<f64> = preds
            .iter()
            .zip(fresh)
            .map(|(pr, ys)| pr.iter().zip(ys).map(|(f, y)| (y - f).powi(2)).sum::<f64>() / p as f64)
            .collect();
        let loss_total: f64 = losses.iter().sum();
        let expected_loss = loss_total / r as f64;
        let irreducible = noise_sigma * noise_sigma;

        let mut loo = Vec::with_capacity(r);
        for (k, row) in preds.iter().enumerate() {
            let (b, v, _) = stats.leave_out(row);
            let l = (loss_total - losses[k]) / (r - 1) as f64;
            loo.push([b, v, l, b + v + irreducible - l]);
        }
        let se = |i: usize| jackknife_se(&loo.iter().map(|v| v[i]).collect::<Vec<_>>());
        Ok(Self {
            bias_sq: stats.bias_sq,
            variance: stats.variance,
            irreducible,
            expected_loss,
            replicates: r,
            se_bias_sq: se(0),
            se_variance: se(1),
            se_expected_loss: se(2),
            se_identity_gap: se(3),
        })
    }
}

/// Jackknife standard error from leave-one-out statistics.
fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let m = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
}

/// Per-point running sums over replicates for a subset of columns.
struct PointStats<'a> {
    cols: &'a [usize],
    targets: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    r: usize,
    bias_sq: f64,
    variance: f64,
    signed_bias: f64,
}

impl<'a> PointStats<'a> {
    fn new(preds: &[Vec<f64>], targets: &[f64], cols: &'a [usize]) -> Self {
        let r = preds.len();
        let mut sum = vec![0.0; cols.len()];
        let mut sum_sq = vec![0.0; cols.len()];
        for row in preds {
            for (k, &c) in cols.iter().enumerate() {
                sum[k] += row[c];
                sum_sq[k] += row[c] * row[c];
            }
        }
        let targets: Vec<f64> = cols.iter().map(|&c| targets[c]).collect();
        let mut s = Self { cols, targets, sum, sum_sq, r, bias_sq: 0.0, variance: 0.0, signed_bias: 0.0 };
        let (b, v, sb) = s.summarize(None);
        s.bias_sq = b;
        s.variance = v;
        s.signed_bias = sb;
        s
    }

    fn summarize(&self, without: Option<&[f64]>) -> (f64, f64, f64) {
        let n = self.r - usize::from(without.is_some());
        let nf = n as f64;
        let (mut b, mut v, mut sb) = (0.0, 0.0, 0.0);
        for (k, &c) in self.cols.iter().enumerate() {
            let (mut s, mut s2) = (self.sum[k], self.sum_sq[k]);
            if let Some(row) = without {
                s -= row[c];
                s2 -= row[c] * row[c];
            }
            let mean = s / nf;
            let diff = mean - self.targets[k];
            b += diff * diff;
            sb += diff;
            v += (s2 / nf - mean * mean).max(0.0);
        }
        let p = self.cols.len() as f64;
        (b / p, v / p, sb / p)
    }

    fn leave_out(&self, row: &[f64]) -> (f64, f64, f64) {
        self.summarize(Some(row))
    }
}

/// Trains `replicates` models on independent draws of `task` and decomposes
/// their squared error at `eval_points`.
pub fn estimate_bias_variance<M, T>(
    task: &RegressionTask,
    trainer: T,
    eval_points: &[Vec<f64>],
    replicates: usize,
) -> Result<BiasVarianceEstimate>
where
    M: ScalarModel,
    T: Fn(&[(Vec<f64>, f64)]) -> Result<M> + Sync,
{
    if replicates < 2 {
        return Err(Error::config(format!("need at least 2 replicates, got {replicates}")));
    }
    let targets: Vec<f64> = eval_points.iter().map(|x| (task.target)(x)).collect();
    let rows = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let model = trainer(&task.draw(r))?;
            let preds: Vec<f64> = eval_points.iter().map(|x| model.value(x)).collect();
            let mut g = rng::rng_from(rng::derive_seed(task.seed, &[rng::stream::NOISE, r]));
            let fresh: Vec<f64> = targets
                .iter()
                .map(|f| {
                    let z: f64 = StandardNormal.sample(&mut g);
                    f + task.noise_sigma * z
                })
                .collect();
            Ok((preds, fresh))
        })
        .collect::<Result<Vec<_>>>()?;
    let (preds, fresh): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    BiasVarianceEstimate::from_replicates(&preds, &targets, &fresh, task.noise_sigma)
}

/// Ensemble mean of scalar models; PGD on it ascends `(y - f̄(x))²`.
pub struct EnsembleMean<'a, M> {
    pub models: &'a [M],
    pub dim: usize,
}

/// A model's value and input gradient at one point.
pub type ValueGrad = (f64, Vec<f64>);

impl<M: ScalarModel> EnsembleMean<'_, M> {
    /// Mean value and gradient, accumulated as offsets from the first model so
    /// identical members reproduce it exactly.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<ValueGrad>) {
        let each: Vec<ValueGrad> = self.models.iter().map(|m| (m.value(x), m.gradient(x))).collect();
        let r = each.len() as f64;
        let (v0, g0) = (&each[0].0, &each[0].1);
        let mean_v = v0 + each.iter().map(|(v, _)| v - v0).sum::<f64>() / r;
        let mean_g: Vec<f64> =
            (0..x.len()).map(|i| g0[i] + each.iter().map(|(_, g)| g[i] - g0[i]).sum::<f64>() / r).collect();
        (mean_v, mean_g, each)
    }
}

impl<M: ScalarModel> AttackTarget for EnsembleMean<'_, M> {
    type Target = f64;

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: &f64) -> Result<(f64, Vec<f64>)> {
        let (v, g, _) = self.value_and_gradient(x);
        let resid = y - v;
        Ok((resid * resid, g.iter().map(|gi| -2.0 * resid * gi).collect()))
    }
}

/// `c_x = ∇f̄(x)ᵀβ` and the replicate mean of
/// `c'_x = 2 (f̂(x) - f̄(x)) (∇f̂(x) - ∇f̄(x))ᵀβ` for a given perturbation.
pub fn adv_terms_with_beta<M: ScalarModel>(models: &[M], x: &[f64], beta: &[f64]) -> Result<(f64, f64)> {
    if models.len() < 2 {
        return Err(Error::config(format!("need at least 2 models, got {}", models.len())));
    }
    if x.len() != beta.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: beta.len() });
    }
    let (mean_v, mean_g, each) = EnsembleMean { models, dim: x.len() }.value_and_gradient(x);
    let c = dot(&mean_g, beta);
    let c_prime = each
        .iter()
        .map(|(v, g)| {
            let dg: f64 = g.iter().zip(&mean_g).zip(beta).map(|((a, b), d)| (a - b) * d).sum();
            2.0 * (v - mean_v) * dg
        })
        .sum::<f64>()
        / each.len() as f64;
    Ok((c, c_prime))
}

/// One evaluation point: input, observed label and noiseless target value.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvPoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvDecompTerms {
    pub c_x_mean: f64,
    pub c_prime_x_mean: f64,
    /// Mean of `(y - f̂(x + β))²` over points and replicates.
    pub lhs: f64,
    /// `mean (f - f̄ - c_x)² + noise_var + mean Var[f̂] + mean c'_x`.
    pub rhs: f64,
    pub residual: f64,
    pub replicates: usize,
    pub points: usize,
}

/// Attacks the ensemble mean at every point with PGD, then evaluates both
/// sides of the first-order adversarial decomposition.
pub fn estimate_adv_terms<M: ScalarModel>(
    models: &[M],
    points: &[AdvPoint],
    attack: &PgdConfig,
    noise_var: f64,
) -> Result<AdvDecompTerms> {
    if models.len() < 2 {
        return Err(Error::config(format!("need at least 2 models, got {}", models.len())));
    }
    if points.is_empty() {
        return Err(Error::config("no evaluation points"));
    }
    let d = points[0].x.len();
    if let Some(p) = points.iter().find(|p| p.x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: p.x.len() });
    }
    let ens = EnsembleMean { models, dim: d };
    let r = models.len() as f64;
    let (mut c_sum, mut cp_sum, mut lhs, mut bias_term, mut var_term) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, p) in points.iter().enumerate() {
        let cfg = PgdConfig { seed: rng::derive_seed(attack.seed, &[i as u64]), ..attack.clone() };
        let adv = pgd_l2(&ens, &p.x, &p.y, &cfg)?;
        let beta: Vec<f64> = adv.iter().zip(&p.x).map(|(a, b)| a - b).collect();
        let (c, cp) = adv_terms_with_beta(models, &p.x, &beta)?;
        c_sum += c;
        cp_sum += cp;
        let vals: Vec<f64> = models.iter().map(|m| m.value(&p.x)).collect();
        let mean = vals.iter().sum::<f64>() / r;
        var_term += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
        bias_term += (p.target - mean - c).powi(2);
        lhs += models.iter().map(|m| (p.y - m.value(&adv)).powi(2)).sum::<f64>() / r;
    }
    let n = points.len() as f64;
    let rhs = bias_term / n + noise_var + var_term / n + cp_sum / n;
    let lhs = lhs / n;
    Ok(AdvDecompTerms {
        c_x_mean: c_sum / n,
        c_prime_x_mean: cp_sum / n,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        replicates: models.len(),
        points: points.len(),
    })
}

/// One row of the duplication probe: statistics of the replicate decision
/// scores on the evaluation points of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub policy: String,
    pub rate_percent: u32,
    pub class: i32,
    pub bias_sq: f64,
    pub variance: f64,
    /// Mean of `f̄(x) - f(x)`; positive means scores lean toward label +1.
    pub signed_bias: f64,
    pub se_bias_sq: f64,
    pub se_variance: f64,
    pub se_signed_bias: f64,
    pub replicates: usize,
}

impl ProbeRow {
    /// Signed bias oriented toward `label` (±1).
    pub fn bias_toward(&self, label: i32) -> f64 {
        self.signed_bias * f64::from(label.signum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub base: GaussianSpec,
    pub replicates: usize,
    pub eval_per_class: usize,
    pub seed: u64,
}

/// For each policy, trains `replicates` classifiers on fresh Gaussian training
/// sets with that policy's duplicates and reports per-class bias and variance
/// of their scores against the Bayes score `2 P(+1 | x) - 1`. All policies see
/// the same replicate training sets.
pub fn duplication_bias_probe<M, T>(
    cfg: &ProbeConfig,
    policies: &[DuplicationPolicy],
    trainer: T,
) -> Result<Vec<ProbeRow>>
where
    M: ScalarModel,
    T: Fn(&LabeledDataset) -> Result<M> + Sync,
{
    if cfg.replicates < 2 {
        return Err(Error::config(format!("need at least 2 replicates, got {}", cfg.replicates)));
    }
    cfg.base.validate()?;
    let eval = sample_gaussian(&GaussianSpec {
        n_per_class: cfg.eval_per_class,
        seed: rng::derive_seed(cfg.seed, &[rng::stream::EVAL]),
        ..cfg.base.clone()
    })?;
    let points: Vec<&[f64]> = eval.samples().iter().map(|s| s.features.as_slice()).collect();
    let targets: Vec<f64> = points.iter().map(|x| cfg.base.posterior_score(x)).collect();

    // scores[policy][replicate][point]
    let per_rep = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let train = sample_gaussian(&cfg.base.with_seed(rng::derive_seed(cfg.seed, &[rng::stream::TRAIN, r])))?;
            policies
                .iter()
                .map(|pol| {
                    let pol = DuplicationPolicy { seed: rng::derive_seed(pol.seed, &[cfg.seed, r]), ..pol.clone() };
                    let (dup, _) = inject(&train, &pol)?;
                    let model = trainer(&dup)?;
                    Ok(points.iter().map(|x| model.value(x)).collect::<Vec<f64>>())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (k, pol) in policies.iter().enumerate() {
        let preds: Vec<Vec<f64>> = per_rep.iter().map(|rep| rep[k].clone()).collect();
        for class in [-1, 1] {
            let cols: Vec<usize> = (0..points.len()).filter(|&i| eval.samples()[i].label == class).collect();
            if cols.is_empty() {
                continue;
            }
            let stats = PointStats::new(&preds, &targets, &cols);
            let loo: Vec<(f64, f64, f64)> = preds.iter().map(|row| stats.leave_out(row)).collect();
            rows.push(ProbeRow {
                policy: pol.selection.to_string(),
                rate_percent: pol.rate_percent,
                class,
                bias_sq: stats.bias_sq,
                variance: stats.variance,
                signed_bias: stats.signed_bias,
                se_bias_sq: jackknife_se(&loo.iter().map(|v| v.0).collect::<Vec<_>>()),
                se_variance: jackknife_se(&loo.iter().map(|v| v.1).collect::<Vec<_>>()),
                se_signed_bias: jackknife_se(&loo.iter().map(|v| v.2).collect::<Vec<_>>()),
                replicates: cfg.replicates,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{train_svm, KernelParams, SvmConfig};
    use rand::Rng as _;

    fn constant_task(c: f64, sigma: f64, n: usize, seed: u64) -> RegressionTask {
        RegressionTask {
            target: Arc::new(move |_| c),
            sampler: Arc::new(|g| vec![g.random_range(-1.0..1.0)]),
            noise_sigma: sigma,
            train_size: n,
            seed,
        }
    }

    fn mean_trainer(data: &[(Vec<f64>, f64)]) -> Result<LinearModel> {
        let m = data.iter().map(|(_, y)| y).sum::<f64>() / data.len() as f64;
        Ok(LinearModel { weights: vec![0.0], bias: m })
    }

    fn eval_points() -> Vec<Vec<f64>> {
        vec![vec![-0.5], vec![0.0], vec![0.7]]
    }

    #[test]
    fn zero_predictor_on_constant_target() {
        let task = constant_task(1.5, 0.0, 10, 0);
        let est =
            estimate_bias_variance(&task, |_| Ok(LinearModel { weights: vec![0.0], bias: 0.0 }), &eval_points(), 5)
                .unwrap();
        assert!((est.bias_sq - 2.25).abs() < 1e-12);
        assert_eq!(est.variance, 0.0);
        assert!((est.expected_loss - 2.25).abs() < 1e-12);
    }

    #[test]
    fn mean_estimator_variance_is_sigma_sq_over_n() {
        let task = constant_task(0.3, 1.0, 50, 11);
        let est = estimate_bias_variance(&task, mean_trainer, &eval_points(), 2_000).unwrap();
        assert!((est.variance - 0.02).abs() <= 3.0 * est.se_variance, "{est:?}");
        assert!(est.bias_sq <= 3.0 * est.se_bias_sq + 1e-4, "{est:?}");
        assert!(est.identity_gap().abs() <= 3.0 * est.se_identity_gap, "{est:?}");
    }

    #[test]
    fn too_few_replicates() {
        let task = constant_task(0.0, 1.0, 5, 0);
        assert!(estimate_bias_variance(&task, mean_trainer, &eval_points(), 1).is_err());
    }

    #[test]
    fn replicate_order_does_not_matter() {
        let mut g = rng::rng_from(3);
        let preds: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| g.random::<f64>()).collect()).collect();
        let fresh: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| g.random::<f64>()).collect()).collect();
        let targets = vec![0.1, 0.5, 0.2, 0.9];
        let a = BiasVarianceEstimate::from_replicates(&preds, &targets, &fresh, 0.3).unwrap();
        let (mut p2, mut f2) = (preds.clone(), fresh.clone());
        p2.reverse();
        f2.reverse();
        let b = BiasVarianceEstimate::from_replicates(&p2, &targets, &f2, 0.3).unwrap();
        for (x, y) in [(a.bias_sq, b.bias_sq), (a.variance, b.variance), (a.expected_loss, b.expected_loss)] {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_perturbation_gives_zero_terms() {
        let models = vec![
            LinearModel { weights: vec![1.0, 2.0], bias: 0.0 },
            LinearModel { weights: vec![-1.0, 0.5], bias: 1.0 },
        ];
        let points = vec![AdvPoint { x: vec![0.3, 0.1], y: 1.0, target: 0.8 }];
        let t = estimate_adv_terms(&models, &points, &PgdConfig { epsilon: 0.0, ..Default::default() }, 0.0).unwrap();
        assert_eq!((t.c_x_mean, t.c_prime_x_mean), (0.0, 0.0));
    }

    #[test]
    fn identical_models_have_no_variability_term() {
        let m = LinearModel { weights: vec![0.3, -1.7, 2.2], bias: 0.1 };
        let models = vec![m.clone(), m.clone(), m];
        let (_, cp) = adv_terms_with_beta(&models, &[1.0, 2.0, 3.0], &[0.1, 0.2, -0.3]).unwrap();
        assert_eq!(cp, 0.0);
        let points = vec![AdvPoint { x: vec![0.1, 0.2, 0.3], y: 2.0, target: 1.0 }];
        let t = estimate_adv_terms(&models, &points, &PgdConfig::with_epsilon(0.5), 0.0).unwrap();
        assert_eq!(t.c_prime_x_mean, 0.0);
    }

    #[test]
    fn linear_ensemble_c_x_is_w_dot_beta() {
        let models = vec![
            LinearModel { weights: vec![1.0, 2.0], bias: 0.0 },
            LinearModel { weights: vec![3.0, -2.0], bias: 0.5 },
        ];
        let beta = [0.25, -0.4];
        let (c, _) = adv_terms_with_beta(&models, &[0.7, 0.7], &beta).unwrap();
        let w = [2.0, 0.0];
        assert!((c - (w[0] * beta[0] + w[1] * beta[1])).abs() < 1e-10);
    }

    #[test]
    fn terms_scale_linearly_with_beta() {
        let models: Vec<FnModel<_>> = (1..=3)
            .map(|k| {
                let k = f64::from(k);
                FnModel(move |x: &[f64]| (k * x[0]).sin() + k * x[1] * x[1])
            })
            .collect();
        let x = [0.4, -0.2];
        let beta = [0.3, 0.1];
        let (c1, p1) = adv_terms_with_beta(&models, &x, &beta).unwrap();
        let (c2, p2) = adv_terms_with_beta(&models, &x, &[0.75 * beta[0], 0.75 * beta[1]]).unwrap();
        assert!((c2 - 0.75 * c1).abs() < 1e-9);
        assert!((p2 - 0.75 * p1).abs() < 1e-9);
    }

    #[test]
    fn adv_terms_errors() {
        let one = vec![LinearModel { weights: vec![1.0], bias: 0.0 }];
        let pts = vec![AdvPoint { x: vec![0.0], y: 0.0, target: 0.0 }];
        assert!(estimate_adv_terms(&one, &pts, &PgdConfig::default(), 0.0).is_err());
        let two = vec![one[0].clone(), one[0].clone()];
        let bad = vec![pts[0].clone(), AdvPoint { x: vec![0.0, 1.0], y: 0.0, target: 0.0 }];
        assert!(matches!(
            estimate_adv_terms(&two, &bad, &PgdConfig::default(), 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn svm_trainer(d: &LabeledDataset) -> Result<SvmModel> {
        let cfg = SvmConfig { kernel: KernelParams::scale_default(d)?, ..SvmConfig::new(1.0, 1.0) };
        train_svm(d, &cfg)
    }

    #[test]
    fn zero_rate_row_equals_baseline() {
        let cfg = ProbeConfig { base: GaussianSpec::default().with_n(30), replicates: 4, eval_per_class: 20, seed: 1 };
        let pols = vec![DuplicationPolicy::uniform(0, 0), DuplicationPolicy::biased(0, [(1, 1.0), (-1, 0.0)], 5)];
        let rows = duplication_bias_probe(&cfg, &pols, svm_trainer).unwrap();
        assert_eq!(rows.len(), 4);
        for (a, b) in rows[..2].iter().zip(&rows[2..]) {
            assert_eq!((a.bias_sq, a.variance, a.signed_bias), (b.bias_sq, b.variance, b.signed_bias));
        }
    }
}
