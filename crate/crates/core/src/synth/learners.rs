use std::sync::Arc;

use crate::data::{LabeledDataset, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::score::{ClassProbabilities, ConstantCovariance, Geometry, LinearMean, ScoreModel};

/// Settings for [`train_multinomial_logit`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitConfig {
    pub max_epochs: usize,
    /// Stop once the largest gradient entry falls below this.
    pub tolerance: f64,
    /// Ridge penalty on slopes; intercepts are not penalized.
    pub l2: f64,
    /// Append pairwise products of the selected features.
    pub interactions: bool,
}

impl Default for LogitConfig {
    fn default() -> Self {
        Self {
            max_epochs: 3000,
            tolerance: 1e-6,
            l2: 1e-3,
            interactions: false,
        }
    }
}

/// Multinomial logistic model on a fixed feature map of the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinear {
    pub features: Vec<usize>,
    pub interactions: bool,
    /// One row per class: intercept then one weight per expanded feature.
    pub weights: Matrix,
    pub converged: bool,
    pub epochs: usize,
}

fn expand(features: &[usize], interactions: bool, x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = features.iter().map(|&j| x[j]).collect();
    if interactions {
        for a in 0..features.len() {
            for b in a + 1..features.len() {
                out.push(x[features[a]] * x[features[b]]);
            }
        }
    }
    out
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - hi).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl SoftmaxLinear {
    fn logits(&self, phi: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w[0] + w[1..].iter().zip(phi).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

impl ClassProbabilities for SoftmaxLinear {
    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(&expand(&self.features, self.interactions, x)))
    }
}

/// Full-batch gradient descent on the mean cross-entropy, features
/// standardized internally, zero initialization. Step size `1/L` from the
/// curvature bound of the standardized problem, so every step descends.
/// Hitting `max_epochs` leaves `converged = false` and returns the lowest
/// objective iterate.
pub fn fit_multinomial_logit(data: &LabeledDataset, features: &[usize], cfg: &LogitConfig) -> Result<SoftmaxLinear> {
    let TaskKind::Classification { num_classes: k } = data.kind() else {
        return Err(invalid("multinomial logit needs classification data"));
    };
    let dim = data.covariate_dim();
    if let Some(&j) = features.iter().find(|&&j| j >= dim) {
        return Err(Error::IndexOutOfRange {
            context: "feature subset",
            index: j,
            len: dim,
        });
    }
    if !(cfg.l2 >= 0.0) || !(cfg.tolerance > 0.0) {
        return Err(invalid("logit l2 must be ≥ 0 and tolerance > 0"));
    }
    let n = data.len();
    let nf = n as f64;
    let raw: Vec<Vec<f64>> = data.xs().iter().map(|x| expand(features, cfg.interactions, x)).collect();
    let p = raw[0].len();
    let mean: Vec<f64> = (0..p).map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let sd: Vec<f64> = (0..p)
        .map(|j| {
            let v = raw.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nf;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect())
        .collect();
    let ys: Vec<usize> = data.ys().iter().map(|y| y.class().expect("classification")).collect();

    let step = 1.0 / (0.5 * (1.0 + p as f64) + cfg.l2);
    let mut w = vec![vec![0.0; p + 1]; k];
    let objective = |w: &Matrix, grad: Option<&mut Matrix>| -> f64 {
        let mut g = vec![vec![0.0; p + 1]; k];
        let mut f = 0.0;
        for (zi, &yi) in z.iter().zip(&ys) {
            let logits: Vec<f64> = w
                .iter()
                .map(|wc| wc[0] + wc[1..].iter().zip(zi).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let pr = softmax(&logits);
            f -= pr[yi].max(1e-300).ln();
            for c in 0..k {
                let r = pr[c] - if c == yi { 1.0 } else { 0.0 };
                g[c][0] += r;
                for (gj, zj) in g[c][1..].iter_mut().zip(zi) {
                    *gj += r * zj;
                }
            }
        }
        f /= nf;
        for (gc, wc) in g.iter_mut().zip(w) {
            gc[0] /= nf;
            for j in 1..=p {
                gc[j] = gc[j] / nf + cfg.l2 * wc[j];
                f += 0.5 * cfg.l2 * wc[j] * wc[j];
            }
        }
        if let Some(out) = grad {
            *out = g;
        }
        f
    };

    let mut grad = vec![vec![0.0; p + 1]; k];
    let mut best = (f64::INFINITY, w.clone());
    let mut converged = false;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let f = objective(&w, Some(&mut grad));
        if f < best.0 {
            best = (f, w.clone());
        }
        let gmax = grad.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < cfg.tolerance {
            converged = true;
            break;
        }
        for (wc, gc) in w.iter_mut().zip(&grad) {
            for (a, b) in wc.iter_mut().zip(gc) {
                *a -= step * b;
            }
        }
        epochs += 1;
    }
    if !converged {
        let f = objective(&w, None);
        if f < best.0 {
            best = (f, w);
        }
    }

    // back to raw feature units
    let weights = best
        .1
        .iter()
        .map(|wc| {
            let slopes: Vec<f64> = (0..p).map(|j| wc[j + 1] / sd[j]).collect();
            let shift: f64 = (0..p).map(|j| slopes[j] * mean[j]).sum();
            std::iter::once(wc[0] - shift).chain(slopes).collect()
        })
        .collect();
    Ok(SoftmaxLinear {
        features: features.to_vec(),
        interactions: cfg.interactions,
        weights,
        converged,
        epochs,
    })
}

/// Softmax-geometry candidate `S(x, y) = 1 - f^y(x)` from a logit fit on
/// `features`. The fitted model is returned alongside for its diagnostics.
pub fn train_multinomial_logit(
    id: usize,
    data: &LabeledDataset,
    features: &[usize],
    cfg: &LogitConfig,
) -> Result<(ScoreModel, Arc<SoftmaxLinear>)> {
    let fit = Arc::new(fit_multinomial_logit(data, features, cfg)?);
    let name = format!("logit{features:?}");
    Ok((ScoreModel::new(id, name, Geometry::Softmax { probs: fit.clone() }), fit))
}

fn regression_targets(data: &LabeledDataset) -> Result<(usize, Vec<Vec<f64>>)> {
    let TaskKind::Regression { dim } = data.kind() else {
        return Err(invalid("mean fitting needs regression data"));
    };
    let ys = data.ys().iter().map(|y| y.vector().expect("regression").to_vec()).collect();
    Ok((dim, ys))
}

/// Per-output least squares on `(1, x)`.
pub fn fit_linear_mean(data: &LabeledDataset) -> Result<LinearMean> {
    let (dim, ys) = regression_targets(data)?;
    let design: Vec<Vec<f64>> = data
        .xs()
        .iter()
        .map(|x| std::iter::once(1.0).chain(x.iter().copied()).collect())
        .collect();
    let coef = (0..dim)
        .map(|j| {
            let t: Vec<f64> = ys.iter().map(|y| y[j]).collect();
            least_squares(&design, &t, 1e-10)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearMean { coef })
}

pub fn train_box_model(id: usize, data: &LabeledDataset) -> Result<ScoreModel> {
    let mean = fit_linear_mean(data)?;
    Ok(ScoreModel::new(id, format!("box-ls-{id}"), Geometry::Box { mean: Arc::new(mean) }))
}

/// Least-squares mean plus the global residual covariance with `ridge · I`
/// added, which keeps the matrix positive definite.
pub fn train_ellipsoid_model(id: usize, data: &LabeledDataset, ridge: f64) -> Result<ScoreModel> {
    if !(ridge > 0.0) {
        return Err(invalid(format!("ridge must be positive, got {ridge}")));
    }
    let mean = fit_linear_mean(data)?;
    let (dim, ys) = regression_targets(data)?;
    let nf = data.len() as f64;
    let resid: Vec<Vec<f64>> = data
        .xs()
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            use crate::score::MeanFunction;
            mean.mean(x).iter().zip(y).map(|(m, v)| v - m).collect()
        })
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for r in &resid {
        for a in 0..dim {
            for b in 0..dim {
                cov[a][b] += r[a] * r[b] / nf;
            }
        }
    }
    for (a, row) in cov.iter_mut().enumerate() {
        row[a] += ridge;
    }
    Ok(ScoreModel::new(
        id,
        format!("ellipsoid-ls-{id}"),
        Geometry::Ellipsoid {
            mean: Arc::new(mean),
            cov: Arc::new(ConstantCovariance(cov)),
        },
    ))
}

/// Greedy candidate `ρ(x, y) + λ L(y)` on top of a softmax classifier.
pub fn make_greedy_score_model(id: usize, classifier: &ScoreModel, lambda: f64, penalty: Vec<f64>) -> Result<ScoreModel> {
    let Geometry::Softmax { probs } = &classifier.geometry else {
        return Err(invalid("greedy scores need a softmax classifier"));
    };
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("greedy penalty weight must be finite and ≥ 0, got {lambda}")));
    }
    if penalty.len() != probs.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "label penalty",
            expected: probs.num_classes(),
            got: penalty.len(),
        });
    }
    Ok(ScoreModel::new(
        id,
        format!("greedy-{lambda}"),
        Geometry::Greedy {
            probs: probs.clone(),
            lambda,
            penalty,
        },
    ))
}

/// Penalty `ℓ(y) = y` on 1-based labels.
pub fn rank_penalty(k: usize) -> Vec<f64> {
    (1..=k).map(|y| y as f64).collect()
}

/// `size` evenly spaced values on `[0, hi]`; a single value is 0.
pub fn lambda_grid(size: usize, hi: f64) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..size).map(|j| hi * j as f64 / (size - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::linalg::Cholesky;
    use crate::score::{ConstantProbabilities, MeanFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_two_class_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let ys: Vec<usize> = xs.iter().map(|x| usize::from(x[0] + 0.5 * x[1] > 0.1)).collect();
        let d = LabeledDataset::classification(xs.clone(), ys.clone(), 2).unwrap();
        let fit = fit_multinomial_logit(&d, &[0, 1], &LogitConfig::default()).unwrap();
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                let p = fit.probabilities(x);
                usize::from(p[1] > p[0]) == y
            })
            .count() as f64
            / 200.0;
        assert!(acc >= 0.95, "{acc}");
        assert_eq!(fit, fit_multinomial_logit(&d, &[0, 1], &LogitConfig::default()).unwrap());
    }

    #[test]
    fn intercept_only_recovers_frequencies() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ys = vec![0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
        let d = LabeledDataset::classification(xs, ys, 3).unwrap();
        let fit = fit_multinomial_logit(&d, &[], &LogitConfig::default()).unwrap();
        assert!(fit.converged);
        let p = fit.probabilities(&[123.0]);
        for (a, b) in p.iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-5, "{p:?}");
        }
    }

    #[test]
    fn single_class_concentrates() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1]).collect();
        let d = LabeledDataset::classification(xs, vec![1; 20], 3).unwrap();
        let cfg = LogitConfig {
            max_epochs: 500,
            ..LogitConfig::default()
        };
        let fit = fit_multinomial_logit(&d, &[0], &cfg).unwrap();
        assert!(!fit.converged);
        assert!(fit.probabilities(&[0.5])[1] > 0.95);
    }

    #[test]
    fn interactions_expand_features() {
        assert_eq!(expand(&[0, 2, 3], true, &[2.0, 9.0, 3.0, 5.0]), vec![2.0, 3.0, 5.0, 6.0, 10.0, 15.0]);
        let d = LabeledDataset::classification(vec![vec![0.0, 1.0]; 3], vec![0, 1, 0], 2).unwrap();
        assert!(fit_multinomial_logit(&d, &[2], &LogitConfig::default()).is_err());
        let r = LabeledDataset::regression(vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        assert!(fit_multinomial_logit(&r, &[0], &LogitConfig::default()).is_err());
    }

    fn normal_equations(xs: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
        // independent oracle: Gaussian elimination on XᵀX β = Xᵀt
        let k = xs[0].len() + 1;
        let mut a = vec![vec![0.0; k + 1]; k];
        for (x, y) in xs.iter().zip(t) {
            let row: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            for i in 0..k {
                for j in 0..k {
                    a[i][j] += row[i] * row[j];
                }
                a[i][k] += row[i] * y;
            }
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..k {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for j in c..=k {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        (0..k).map(|i| a[i][k] / a[i][i]).collect()
    }

    #[test]
    fn box_model_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-1.0..3.0), rng.gen_range(0.0..1.0)]).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![x[0] * x[1] + rng.gen_range(-0.3..0.3), 1.0 - x[0] + rng.gen_range(-0.3..0.3)])
            .collect();
        let d = LabeledDataset::regression(xs.clone(), ys.clone()).unwrap();
        let mean = fit_linear_mean(&d).unwrap();
        for j in 0..2 {
            let t: Vec<f64> = ys.iter().map(|y| y[j]).collect();
            for (a, b) in mean.coef[j].iter().zip(normal_equations(&xs, &t)) {
                assert!((a - b).abs() < 1e-7);
            }
        }
        train_box_model(0, &d).unwrap();
    }

    #[test]
    fn box_model_exact_and_constant() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0 + 2.0 * x[0] - x[1], 4.0]).collect();
        let d = LabeledDataset::regression(xs.clone(), ys.clone()).unwrap();
        let m = train_box_model(0, &d).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!(m.score(x, &Label::Vector(y.clone())).unwrap() < 1e-6);
        }
        let mean = fit_linear_mean(&d).unwrap();
        assert!((mean.mean(&[100.0, -3.0])[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn ellipsoid_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..20_000).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let e: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
                vec![x[0] + 0.5 * e[0], -x[0] + 0.5 * e[1]]
            })
            .collect();
        let d = LabeledDataset::regression(xs, ys).unwrap();
        let m = train_ellipsoid_model(0, &d, 1e-6).unwrap();
        let Geometry::Ellipsoid { cov, .. } = &m.geometry else { panic!() };
        let c = cov.covariance(&[0.0]);
        assert!((c[0][0] - 0.25).abs() < 0.01 && (c[1][1] - 0.25).abs() < 0.01);
        assert!(c[0][1].abs() < 0.01);

        // zero noise, rank-deficient residuals
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0], 1.0 - x[0]]).collect();
        let d = LabeledDataset::regression(xs, ys).unwrap();
        let m = train_ellipsoid_model(0, &d, 1e-6).unwrap();
        let Geometry::Ellipsoid { cov, .. } = &m.geometry else { panic!() };
        let c = cov.covariance(&[0.0]);
        assert!((c[0][0] - 1e-6).abs() < 1e-9 && (c[1][1] - 1e-6).abs() < 1e-9 && c[0][1].abs() < 1e-9);
        Cholesky::new(&c).unwrap();
        assert!(train_ellipsoid_model(0, &d, 0.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let base = ScoreModel::softmax(0, Arc::new(ConstantProbabilities(vec![0.5, 0.3, 0.2])));
        let g = make_greedy_score_model(1, &base, 0.1, rank_penalty(3)).unwrap();
        let s = g.at(&[]).unwrap();
        let s = s.class_scores().unwrap();
        assert!((s[1] - 1.1).abs() < 1e-12);
        let g0 = make_greedy_score_model(1, &base, 0.0, rank_penalty(3)).unwrap();
        let s0 = g0.at(&[]).unwrap();
        let s0 = s0.class_scores().unwrap();
        assert_eq!(s0[0], 0.5);
        assert!((s0[2] - 1.0).abs() < 1e-15);
        assert!(make_greedy_score_model(1, &g, 0.1, rank_penalty(3)).is_err());
        assert!(make_greedy_score_model(1, &base, -0.1, rank_penalty(3)).is_err());
    }

    #[test]
    fn grid_values() {
        assert_eq!(lambda_grid(1, 0.2), vec![0.0]);
        let g = lambda_grid(6, 0.2);
        for (a, b) in g.iter().zip([0.0, 0.04, 0.08, 0.12, 0.16, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
