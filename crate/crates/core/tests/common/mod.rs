//! Test-only oracles, written independently of the library code paths they check.
#![allow(dead_code)]

pub mod qp {
    /// Dense Gaussian elimination with partial pivoting; `None` when singular.
    pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
            if a[piv][col].abs() < 1e-13 {
                return None;
            }
            a.swap(col, piv);
            b.swap(col, piv);
            let (top, bottom) = a.split_at_mut(col + 1);
            let pivot = &top[col];
            for (i, row) in bottom.iter_mut().enumerate() {
                let f = row[col] / pivot[col];
                for (dst, src) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *dst -= f * src;
                }
                b[col + 1 + i] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        Some(x)
    }

    pub struct Optimum {
        pub alphas: Vec<f64>,
        pub objective: f64,
        pub bias: f64,
    }

    fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
        (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
    }

    /// Exact maximizer of the SVM dual by enumerating every assignment of the
    /// variables to {0, C, free} and solving the equality-constrained
    /// stationarity system on each face.
    pub fn svm_dual(xs: &[Vec<f64>], ys: &[f64], c: f64, gamma: f64) -> Optimum {
        let n = xs.len();
        assert!(n <= 10);
        let q: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| ys[i] * ys[j] * rbf(&xs[i], &xs[j], gamma)).collect()).collect();
        let objective = |a: &[f64]| {
            let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[i][j] * a[j]).sum::<f64>()).sum();
            a.iter().sum::<f64>() - 0.5 * quad
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            // 0 → α=0, 1 → α=C, 2 → free
            let states: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
            let free: Vec<usize> = (0..n).filter(|&i| states[i] == 2).collect();
            let mut a: Vec<f64> = states.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
            if free.is_empty() {
                let bal: f64 = a.iter().zip(ys).map(|(x, y)| x * y).sum();
                if bal.abs() > 1e-12 {
                    continue;
                }
            } else {
                let m = free.len();
                let mut mat = vec![vec![0.0; m + 1]; m + 1];
                let mut rhs = vec![0.0; m + 1];
                for (r, &i) in free.iter().enumerate() {
                    for (k, &j) in free.iter().enumerate() {
                        mat[r][k] = q[i][j];
                    }
                    mat[r][m] = -ys[i];
                    rhs[r] = 1.0 - (0..n).filter(|j| states[*j] != 2).map(|j| q[i][j] * a[j]).sum::<f64>();
                }
                for (k, &j) in free.iter().enumerate() {
                    mat[m][k] = ys[j];
                }
                rhs[m] = -(0..n).filter(|j| states[*j] != 2).map(|j| ys[j] * a[j]).sum::<f64>();
                let Some(sol) = solve(mat, rhs) else { continue };
                if free.iter().enumerate().any(|(k, _)| sol[k] < -1e-12 || sol[k] > c + 1e-12) {
                    continue;
                }
                for (k, &i) in free.iter().enumerate() {
                    a[i] = sol[k].clamp(0.0, c);
                }
            }
            let v = objective(&a);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, a));
            }
        }
        let (objective, alphas) = best.expect("the zero vector is always feasible");

        // Bias: mean over free points of y_i - Σ α_j y_j K_ij, otherwise the
        // midpoint of the interval allowed by the bound points.
        let g = |i: usize| (0..n).map(|j| alphas[j] * ys[j] * rbf(&xs[i], &xs[j], gamma)).sum::<f64>();
        let tol = 1e-9 * c;
        let free: Vec<usize> = (0..n).filter(|&i| alphas[i] > tol && alphas[i] < c - tol).collect();
        let bias = if !free.is_empty() {
            free.iter().map(|&i| ys[i] - g(i)).sum::<f64>() / free.len() as f64
        } else {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                let v = ys[i] - g(i);
                let at_upper = alphas[i] >= c - tol;
                if (ys[i] > 0.0) != at_upper {
                    lo = lo.max(v);
                } else {
                    hi = hi.min(v);
                }
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                _ => hi,
            }
        };
        Optimum { alphas, objective, bias }
    }

    pub fn decision(xs: &[Vec<f64>], ys: &[f64], opt: &Optimum, gamma: f64, x: &[f64]) -> f64 {
        xs.iter().zip(ys).zip(&opt.alphas).map(|((xi, yi), a)| a * yi * rbf(xi, x, gamma)).sum::<f64>() + opt.bias
    }
}

pub mod fd {
    /// Central finite difference of `f` at `x` along every coordinate.
    pub fn gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
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

    /// Largest elementwise relative error, with magnitudes floored at 1e-6.
    pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6)).fold(0.0, f64::max)
    }
}

pub mod gradcheck {
    use duplab::neural::{Activation, MlpConfig, MlpModel};
    use duplab::rng::rng_from;
    use rand::Rng;

    use super::fd;

    const H: f64 = 1e-5;

    /// Worst relative error between backprop and central differences, over
    /// input and parameter gradients of `models` random small MLPs.
    pub fn worst_error(models: u64, seed: u64) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..models {
            let mut r = rng_from(seed.wrapping_add(m));
            let depth = r.random_range(1..=3);
            let mut sizes = vec![r.random_range(1..=6)];
            for _ in 1..depth {
                sizes.push(r.random_range(2..=7));
            }
            sizes.push(r.random_range(2..=4));
            let cfg = MlpConfig {
                layer_sizes: sizes.clone(),
                activation: if m % 2 == 0 { Activation::Tanh } else { Activation::Relu },
                learning_rate: 0.1,
                epochs: 1,
                batch_size: 1,
                weight_init_scale: 1.5,
                seed: seed ^ m,
            };
            let mut model = MlpModel::init(&cfg).unwrap();
            for layer in &mut model.layers {
                for b in &mut layer.biases {
                    *b = r.random_range(-0.5..0.5);
                }
            }
            let x: Vec<f64> = (0..sizes[0]).map(|_| r.random_range(-1.5..1.5)).collect();
            let y = r.random_range(0..*sizes.last().unwrap());

            let analytic = model.input_gradient(&x, y).unwrap();
            let numeric = fd::gradient(|p| model.loss(p, y).unwrap(), &x, H);
            worst = worst.max(fd::max_rel_err(&analytic, &numeric));

            let (_, grads) = model.gradients(&x, y).unwrap();
            for li in 0..model.layers.len() {
                for (is_weight, analytic) in [(true, &grads.weights[li]), (false, &grads.biases[li])] {
                    let base =
                        if is_weight { model.layers[li].weights.clone() } else { model.layers[li].biases.clone() };
                    let numeric = fd::gradient(
                        |p| {
                            let mut probe = model.clone();
                            let slot =
                                if is_weight { &mut probe.layers[li].weights } else { &mut probe.layers[li].biases };
                            slot.copy_from_slice(p);
                            probe.loss(&x, y).unwrap()
                        },
                        &base,
                        H,
                    );
                    worst = worst.max(fd::max_rel_err(analytic, &numeric));
                }
            }
        }
        worst
    }
}

pub mod pgd {
    use duplab::adversarial::{pgd_l2, pgd_l2_traced, PgdConfig};
    use duplab::neural::{Activation, MlpConfig, MlpModel};
    use duplab::rng::rng_from;
    use rand::Rng;

    #[derive(Debug, Default)]
    pub struct Contract {
        pub runs: usize,
        pub ball_violations: usize,
        pub box_violations: usize,
        pub convex_runs: usize,
        pub monotonicity_violations: usize,
        pub identity_violations: usize,
    }

    impl Contract {
        pub fn holds(&self) -> bool {
            self.ball_violations == 0
                && self.box_violations == 0
                && self.monotonicity_violations == 0
                && self.identity_violations == 0
        }
    }

    /// Randomized attacks over random models, inputs and attack settings.
    /// Every other run uses a model without hidden layers, whose loss is
    /// convex in the input.
    pub fn check(runs: usize, seed: u64) -> Contract {
        let mut c = Contract::default();
        for run in 0..runs {
            let mut r = rng_from(seed.wrapping_mul(1_000_003).wrapping_add(run as u64));
            let convex = run % 2 == 0;
            let d = r.random_range(1..=8);
            let k = r.random_range(2..=4);
            let mut sizes = vec![d];
            if !convex {
                sizes.push(r.random_range(2..=8));
            }
            sizes.push(k);
            let model = MlpModel::init(&MlpConfig {
                layer_sizes: sizes,
                activation: if r.random::<bool>() { Activation::Relu } else { Activation::Tanh },
                learning_rate: 0.1,
                epochs: 1,
                batch_size: 1,
                weight_init_scale: r.random_range(0.5..4.0),
                seed: r.random(),
            })
            .unwrap();
            let clip = r.random::<bool>().then_some([0.0, 1.0]);
            let x0: Vec<f64> =
                (0..d).map(|_| if clip.is_some() { r.random::<f64>() } else { r.random_range(-2.0..2.0) }).collect();
            let y = r.random_range(0..k);
            let epsilon = if r.random_range(0..10) == 0 { 0.0 } else { r.random_range(0.01..2.0) };
            let cfg = PgdConfig {
                epsilon,
                step_size: r.random_range(0.01..1.0),
                n_steps: r.random_range(1..=12),
                random_start: r.random::<bool>(),
                clip_range: clip,
                seed: r.random(),
            };
            let mut trace = Vec::new();
            let adv = pgd_l2_traced(&model, &x0, &y, &cfg, Some(&mut trace)).unwrap();
            c.runs += 1;
            let dist = adv.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            c.ball_violations += usize::from(dist > epsilon + 1e-9);
            if let Some([lo, hi]) = clip {
                c.box_violations += usize::from(adv.iter().any(|v| *v < lo || *v > hi));
            }
            if epsilon == 0.0 {
                c.identity_violations += usize::from(adv != x0);
                let again = pgd_l2(&model, &x0, &y, &cfg).unwrap();
                c.identity_violations += usize::from(again != x0);
            } else if convex {
                c.convex_runs += 1;
                c.monotonicity_violations += usize::from(trace.windows(2).any(|w| w[1] < w[0] - 1e-10));
            }
        }
        c
    }
}
