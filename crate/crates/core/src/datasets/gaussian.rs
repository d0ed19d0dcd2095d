use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng;

/// Two 2-D Gaussian classes sharing one covariance matrix.
///
/// Label `-1` is drawn around `mu1` and label `+1` around `mu2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mu1: [f64; 2],
    pub mu2: [f64; 2],
    pub sigma: [[f64; 2]; 2],
    pub n_per_class: usize,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self { mu1: [0.0, 0.0], mu2: [1.0, 1.0], sigma: [[1.0, 0.5], [0.5, 1.0]], n_per_class: 100, seed: 0 }
    }
}

impl GaussianSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_n(&self, n_per_class: usize) -> Self {
        Self { n_per_class, ..self.clone() }
    }

    /// Eigenvalues of `sigma`, smallest first.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.sigma;
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mid - rad, mid + rad]
    }

    pub fn validate(&self) -> Result<()> {
        let [[_, b], [c, _]] = self.sigma;
        if (b - c).abs() > 1e-12 * (1.0 + b.abs()) {
            return Err(Error::NotSymmetric(b, c));
        }
        let [lo, _] = self.eigenvalues();
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: lo });
        }
        Ok(())
    }

    /// Lower-triangular `L` with `L Lᵀ = sigma`.
    fn cholesky(&self) -> [[f64; 2]; 2] {
        let [[a, b], [_, d]] = self.sigma;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        [[l11, 0.0], [l21, l22]]
    }

    /// Log-odds `ln p(x | +1) - ln p(x | -1)` under equal priors.
    pub fn log_odds(&self, x: &[f64]) -> f64 {
        let [[a, b], [_, d]] = self.sigma;
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let quad = |m: &[f64; 2]| {
            let u = [x[0] - m[0], x[1] - m[1]];
            u[0] * (inv[0][0] * u[0] + inv[0][1] * u[1]) + u[1] * (inv[1][0] * u[0] + inv[1][1] * u[1])
        };
        0.5 * (quad(&self.mu1) - quad(&self.mu2))
    }

    /// Bayes-optimal score `2 P(+1 | x) - 1 = tanh(log_odds / 2)`.
    pub fn posterior_score(&self, x: &[f64]) -> f64 {
        (0.5 * self.log_odds(x)).tanh()
    }
}

/// Draws `n_per_class` points of label `-1` followed by `n_per_class` of
/// label `+1`. Each point is `mu + L z` with `z` two standard normals from the
/// seeded ChaCha8 stream (ziggurat sampler).
pub fn sample_gaussian(spec: &GaussianSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let l = spec.cholesky();
    let mut r = rng::rng_from(spec.seed);
    let mut samples = Vec::with_capacity(2 * spec.n_per_class);
    for (label, mu) in [(-1, spec.mu1), (1, spec.mu2)] {
        for _ in 0..spec.n_per_class {
            let z0: f64 = StandardNormal.sample(&mut r);
            let z1: f64 = StandardNormal.sample(&mut r);
            let x = vec![mu[0] + l[0][0] * z0, mu[1] + l[1][0] * z0 + l[1][1] * z1];
            samples.push(Sample::new(x, label));
        }
    }
    LabeledDataset::new(samples, [-1, 1].into(), Origin::Synthetic, Some(spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(ds: &LabeledDataset, label: i32) -> ([f64; 2], [[f64; 2]; 2]) {
        let pts: Vec<&[f64]> =
            ds.samples().iter().filter(|s| s.label == label).map(|s| s.features.as_slice()).collect();
        let n = pts.len() as f64;
        let mut m = [0.0; 2];
        for p in &pts {
            m[0] += p[0] / n;
            m[1] += p[1] / n;
        }
        let mut c = [[0.0; 2]; 2];
        for p in &pts {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (p[i] - m[i]) * (p[j] - m[j]) / (n - 1.0);
                }
            }
        }
        (m, c)
    }

    #[test]
    fn empty_when_no_samples_requested() {
        let ds = sample_gaussian(&GaussianSpec::default().with_n(0)).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.class_set(), &[-1, 1].into());
    }

    #[test]
    fn layout_and_labels() {
        let ds = sample_gaussian(&GaussianSpec::default()).unwrap();
        assert_eq!(ds.len(), 200);
        assert!(ds.samples()[..100].iter().all(|s| s.label == -1));
        assert!(ds.samples()[100..].iter().all(|s| s.label == 1));
        assert!(ds.samples().iter().all(|s| !s.is_duplicate && s.features.len() == 2));
        assert_eq!(ds.seed(), Some(0));
    }

    #[test]
    fn large_sample_moments() {
        // 3 sigma / sqrt(n) = 0.0095 for the means; the sample covariance
        // entries have standard deviation below sqrt(2/n) = 0.0045.
        let spec = GaussianSpec { n_per_class: 100_000, seed: 17, ..Default::default() };
        let ds = sample_gaussian(&spec).unwrap();
        for (label, mu) in [(-1, spec.mu1), (1, spec.mu2)] {
            let (m, c) = moments(&ds, label);
            for i in 0..2 {
                assert!((m[i] - mu[i]).abs() < 0.02, "mean {m:?} vs {mu:?}");
                for j in 0..2 {
                    assert!((c[i][j] - spec.sigma[i][j]).abs() < 0.02, "cov {c:?}");
                }
            }
        }
    }

    #[test]
    fn mean_error_shrinks_with_n() {
        let mut improving = 0;
        let sizes = [1_000, 10_000, 100_000];
        let errs: Vec<f64> = sizes
            .iter()
            .map(|&n| {
                (0..10u64)
                    .map(|seed| {
                        let spec = GaussianSpec { n_per_class: n, seed, ..Default::default() };
                        let (m, _) = moments(&sample_gaussian(&spec).unwrap(), 1);
                        ((m[0] - 1.0).powi(2) + (m[1] - 1.0).powi(2)).sqrt()
                    })
                    .sum::<f64>()
                    / 10.0
            })
            .collect();
        for w in errs.windows(2) {
            if w[1] < w[0] {
                improving += 1;
            }
        }
        assert!(improving >= 2, "{errs:?}");
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let spec = GaussianSpec { sigma: [[1.0, 2.0], [2.0, 1.0]], ..Default::default() };
        match sample_gaussian(&spec).unwrap_err() {
            Error::NotPositiveDefinite { eigenvalue } => assert!((eigenvalue + 1.0).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
        let asym = GaussianSpec { sigma: [[1.0, 0.2], [0.1, 1.0]], ..Default::default() };
        assert!(matches!(sample_gaussian(&asym), Err(Error::NotSymmetric(..))));
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = GaussianSpec { seed: 5, ..Default::default() };
        let a = sample_gaussian(&spec).unwrap().to_csv();
        assert_eq!(a, sample_gaussian(&spec).unwrap().to_csv());
        assert_ne!(a, sample_gaussian(&spec.with_seed(6)).unwrap().to_csv());
    }

    #[test]
    fn posterior_is_symmetric_about_the_midpoint() {
        let spec = GaussianSpec::default();
        assert!(spec.posterior_score(&[0.5, 0.5]).abs() < 1e-12);
        let a = spec.posterior_score(&[1.3, 0.2]);
        let b = spec.posterior_score(&[-0.3, 0.8]);
        assert!((a + b).abs() < 1e-12);
        assert!(spec.posterior_score(&[1.0, 1.0]) > 0.0);
    }
}
