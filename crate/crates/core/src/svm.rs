//! Soft-margin SVM with an RBF kernel, trained on the dual by SMO.
//!
//! The dual is
//!
//! ```text
//! max  Σ α_i − ½ Σ_ij α_i α_j y_i y_j K(x_i, x_j)
//! s.t. 0 ≤ α_i ≤ C,  Σ α_i y_i = 0
//! ```
//!
//! Each SMO step takes the most violating index `i` from the up set, then the
//! partner `j` from the low set that maximizes the second-order gain
//! `b_ij² / a_ij` (ties in either choice broken by the seeded stream). It
//! solves the two-variable subproblem in closed form and updates the
//! gradient. The solver stops once the violation gap drops below `gap_tol`;
//! any gap at or below `kkt_tol` already satisfies every KKT condition within
//! `kkt_tol`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{median, sq_dist};
use crate::metrics::Accuracy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    /// `1 / (d * median per-feature variance)`, falling back to `1 / d` when
    /// the median variance is zero.
    pub fn scale_default(dataset: &LabeledDataset) -> Result<Self> {
        let d = dataset.dim().ok_or(Error::EmptyDataset)?;
        let n = dataset.len() as f64;
        let variances: Vec<f64> = (0..d)
            .map(|j| {
                let m = dataset.samples().iter().map(|s| s.features[j]).sum::<f64>() / n;
                dataset.samples().iter().map(|s| (s.features[j] - m).powi(2)).sum::<f64>() / n
            })
            .collect();
        let v = median(&variances);
        let v = if v > 0.0 { v } else { 1.0 };
        Self::new(1.0 / (d as f64 * v))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.gamma * sq_dist(x, y)).exp()
    }
}

/// `exp(-gamma * ||x - y||²)`.
pub fn kernel_eval(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
    }
    Ok(params.eval_unchecked(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelParams,
    /// Tolerance of the KKT contract on returned models.
    pub kkt_tol: f64,
    /// Stopping threshold on the maximal violation gap; at most `kkt_tol`.
    pub gap_tol: f64,
    /// Iteration budget, in multiples of the training-set size.
    pub max_passes: usize,
    pub seed: u64,
}

impl SvmConfig {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self { c, kernel: KernelParams { gamma }, kkt_tol: 1e-3, gap_tol: 1e-8, max_passes: 10_000, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        KernelParams::new(self.kernel.gamma)?;
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::config(format!("kkt_tol must be positive, got {}", self.kkt_tol)));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol <= self.kkt_tol) {
            return Err(Error::config(format!("gap_tol must be in (0, kkt_tol], got {}", self.gap_tol)));
        }
        Ok(())
    }
}

/// Full dual solution over the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final maximal violation gap.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels: Vec<i32>,
    pub bias: f64,
    pub kernel: KernelParams,
    pub converged: bool,
}

impl SvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// `Σ α_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
            }
        }
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .zip(&self.labels)
            .map(|((sv, &a), &y)| a * f64::from(y) * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Sign of the decision value, with 0 mapped to +1.
    pub fn predict(&self, x: &[f64]) -> Result<i32> {
        Ok(if self.decision_value(x)? >= 0.0 { 1 } else { -1 })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_binary(dataset: &LabeledDataset) -> Result<Vec<f64>> {
    let mut seen = [false; 2];
    let ys = dataset
        .samples()
        .iter()
        .map(|s| match s.label {
            -1 => {
                seen[0] = true;
                Ok(-1.0)
            }
            1 => {
                seen[1] = true;
                Ok(1.0)
            }
            l => Err(Error::UnknownLabel(l)),
        })
        .collect::<Result<Vec<f64>>>()?;
    if !(seen[0] && seen[1]) {
        return Err(Error::SingleClass);
    }
    Ok(ys)
}

const TAU: f64 = 1e-12;

/// Solves the dual on `dataset` (labels must be exactly {-1, +1}).
pub fn solve_dual(dataset: &LabeledDataset, config: &SvmConfig) -> Result<DualSolution> {
    config.validate()?;
    let ys = check_binary(dataset)?;
    let xs: Vec<&[f64]> = dataset.samples().iter().map(|s| s.features.as_slice()).collect();
    let n = xs.len();
    let c = config.c;

    // Q_ij = y_i y_j K_ij, stored dense.
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
        for j in 0..i {
            let v = ys[i] * ys[j] * config.kernel.eval_unchecked(xs[i], xs[j]);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }

    let mut alpha = vec![0.0; n];
    // Gradient of ½ αᵀQα − eᵀα.
    let mut grad = vec![-1.0; n];
    let mut r = rng::rng_from(config.seed);
    let max_iter = config.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    let mut ties: Vec<usize> = Vec::new();

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    loop {
        let mut m_up = f64::NEG_INFINITY;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            if in_up(alpha[t], ys[t]) && v > m_up {
                m_up = v;
            }
            if in_low(alpha[t], ys[t]) && v < m_low {
                m_low = v;
            }
        }
        gap = m_up - m_low;
        if gap <= config.gap_tol || !gap.is_finite() {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        ties.clear();
        ties.extend((0..n).filter(|&t| in_up(alpha[t], ys[t]) && -ys[t] * grad[t] == m_up));
        let i = ties[r.random_range(0..ties.len())];
        // Second index: largest guaranteed decrease b² / a among violators.
        let qii = q[i * n + i];
        let mut best = f64::NEG_INFINITY;
        ties.clear();
        for t in 0..n {
            let b = m_up + ys[t] * grad[t];
            if !in_low(alpha[t], ys[t]) || b <= 0.0 {
                continue;
            }
            let a = (qii + q[t * n + t] - 2.0 * ys[i] * ys[t] * q[i * n + t]).max(TAU);
            let gain = b * b / a;
            if gain > best {
                best = gain;
                ties.clear();
            }
            if gain == best {
                ties.push(t);
            }
        }
        let j = ties[r.random_range(0..ties.len())];

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qjj = q[j * n + j];
        let qij = q[i * n + j];
        let (yi, yj) = (ys[i], ys[j]);

        if yi != yj {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        if di == 0.0 && dj == 0.0 {
            // Degenerate step; nothing moved, so the same pair would be chosen again.
            break;
        }
        let (row_i, row_j) = (&q[i * n..(i + 1) * n], &q[j * n..(j + 1) * n]);
        for t in 0..n {
            grad[t] += row_i[t] * di + row_j[t] * dj;
        }
    }

    let bias = bias_from(&alpha, &grad, &ys, c);
    let objective = alpha.iter().sum::<f64>() - 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum::<f64>();
    Ok(DualSolution { alphas: alpha, bias, objective, converged, iterations, gap })
}

/// Mean of `-y_i G_i` over free variables, or the midpoint of the feasible
/// interval when every variable sits at a bound.
fn bias_from(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> f64 {
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..alpha.len() {
        let v = -ys[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += v;
            free += 1;
        } else {
            let at_upper = alpha[t] >= c;
            // Points at a bound constrain b from one side only.
            if (ys[t] > 0.0) != at_upper {
                lo = lo.max(v);
            } else {
                hi = hi.min(v);
            }
        }
    }
    if free > 0 {
        sum / free as f64
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo
    } else {
        hi
    }
}

/// Trains a model; the returned model keeps only entries with `α_i > 0`.
pub fn train_svm(dataset: &LabeledDataset, config: &SvmConfig) -> Result<SvmModel> {
    let sol = solve_dual(dataset, config)?;
    let mut model = SvmModel {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        labels: Vec::new(),
        bias: sol.bias,
        kernel: config.kernel,
        converged: sol.converged,
    };
    for (s, &a) in dataset.samples().iter().zip(&sol.alphas) {
        if a > 0.0 {
            model.support_vectors.push(s.features.clone());
            model.alphas.push(a);
            model.labels.push(s.label);
        }
    }
    Ok(model)
}

pub fn evaluate_per_class(model: &SvmModel, dataset: &LabeledDataset) -> Result<Accuracy> {
    let pairs =
        dataset.samples().iter().map(|s| Ok((s.label, model.predict(&s.features)?))).collect::<Result<Vec<_>>>()?;
    Accuracy::from_pairs(pairs)
}
