use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{check_square, mat_mul, transpose, Cholesky, Matrix};

/// Coefficients of the averaged-case class potentials, one row per class:
/// `v_k = a0 + a1 x1 + (a2 + a3 x2) x5 + (a4 + a5 x3) x6 + (a6 + a7 x4) x7`.
pub fn default_avg_coefficients() -> Matrix {
    vec![
        vec![0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0, 3.0],
        vec![0.0, 1.0, 1.0, 4.0, 0.0, 0.0, 2.0, 5.0],
        vec![0.0, 1.0, 6.0, -4.0, 6.0, -5.0, 7.0, -4.0],
        vec![1.0, -1.0, 0.0, 3.0, 1.0, 5.0, 4.0, 1.0],
        vec![1.0, -1.0, 1.0, 6.0, 0.0, 3.0, 2.0, 4.0],
    ]
}

/// Linear potentials `β_k` for the 3-class individualized generator.
pub fn default_ind_betas() -> Matrix {
    vec![vec![1.0, 5.0, 6.0], vec![5.0, 1.0, 6.0], vec![4.0, 4.0, 4.0]]
}

/// `L Lᵀ` for the individualized covariate covariance.
pub fn default_ind_sigma() -> Matrix {
    let l = vec![
        vec![1.5, 0.1, -0.2],
        vec![0.1, 2.0, 0.4],
        vec![-0.2, 0.4, 3.0],
    ];
    mat_mul(&l, &transpose(&l))
}

/// `0.25 L Lᵀ` for the regression noise.
pub fn default_noise_cov() -> Matrix {
    let l = vec![vec![1.0, 0.5], vec![0.5, 4.0]];
    mat_mul(&l, &transpose(&l))
        .into_iter()
        .map(|row| row.into_iter().map(|v| 0.25 * v).collect())
        .collect()
}

/// Covariate centers of the four shifted training pools.
pub const SHIFT_CENTERS: [[f64; 2]; 4] = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorFamily {
    AvgClassification { a: Matrix },
    IndClassification { betas: Matrix, sigma: Matrix },
    RegressionShift { x_mean: Vec<f64>, x_cov: Matrix, noise_cov: Matrix },
}

impl GeneratorFamily {
    pub fn avg_classification() -> Self {
        Self::AvgClassification {
            a: default_avg_coefficients(),
        }
    }

    pub fn ind_classification() -> Self {
        Self::IndClassification {
            betas: default_ind_betas(),
            sigma: default_ind_sigma(),
        }
    }

    /// Test-population regression generator, `X ~ N((1,1), 2.25 I)`.
    pub fn regression_shift() -> Self {
        Self::regression_pool([1.0, 1.0], 2.25)
    }

    /// Regression generator with `X ~ N(center, var · I)`.
    pub fn regression_pool(center: [f64; 2], var: f64) -> Self {
        Self::RegressionShift {
            x_mean: center.to_vec(),
            x_cov: vec![vec![var, 0.0], vec![0.0, var]],
            noise_cov: default_noise_cov(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AvgClassification { .. } => "avg_classification",
            Self::IndClassification { .. } => "ind_classification",
            Self::RegressionShift { .. } => "regression_shift",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::AvgClassification { a } => {
                if a.len() != 5 || a.iter().any(|r| r.len() != 8) {
                    return Err(invalid("coefficient matrix must be 5×8"));
                }
                finite(a.iter().flatten(), "coefficient matrix")
            }
            Self::IndClassification { betas, sigma } => {
                let d = check_square(sigma, "covariate covariance")?;
                if betas.is_empty() || betas.iter().any(|b| b.len() != d) {
                    return Err(Error::DimensionMismatch {
                        context: "class potentials",
                        expected: d,
                        got: betas.first().map_or(0, Vec::len),
                    });
                }
                finite(betas.iter().flatten(), "class potentials")?;
                Cholesky::new(sigma).map(|_| ())
            }
            Self::RegressionShift {
                x_mean,
                x_cov,
                noise_cov,
            } => {
                if x_mean.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        context: "covariate mean",
                        expected: 2,
                        got: x_mean.len(),
                    });
                }
                finite(x_mean.iter(), "covariate mean")?;
                for (m, ctx) in [(x_cov, "covariate covariance"), (noise_cov, "noise covariance")] {
                    if check_square(m, ctx)? != 2 {
                        return Err(Error::DimensionMismatch {
                            context: ctx,
                            expected: 2,
                            got: m.len(),
                        });
                    }
                    Cholesky::new(m)?;
                }
                Ok(())
            }
        }
    }
}

fn finite<'a>(mut values: impl Iterator<Item = &'a f64>, context: &'static str) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::NaN(context));
    }
    Ok(())
}

/// Generator family, sample size and the seed used by [`GeneratorSpec::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: GeneratorFamily,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: GeneratorFamily, n: usize, seed: u64) -> Self {
        Self { family, n, seed }
    }

    pub fn generate(&self) -> Result<LabeledDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.generate_with(&mut rng)
    }

    pub fn generate_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledDataset> {
        match &self.family {
            GeneratorFamily::AvgClassification { .. } => gen_avg_classification(self, rng),
            GeneratorFamily::IndClassification { .. } => gen_ind_classification(self, rng),
            GeneratorFamily::RegressionShift { .. } => gen_regression_shift(self, rng),
        }
    }
}

/// `p_k ∝ exp(-v_k)`, computed stably.
pub fn softmax_neg(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = v.iter().map(|x| (lo - x).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Class probabilities of the averaged-case generator at `x ∈ R⁷`.
pub fn avg_class_probabilities(a: &Matrix, x: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = a
        .iter()
        .map(|r| r[0] + r[1] * x[0] + (r[2] + r[3] * x[1]) * x[4] + (r[4] + r[5] * x[2]) * x[5] + (r[6] + r[7] * x[3]) * x[6])
        .collect();
    softmax_neg(&v)
}

/// Class probabilities `∝ exp(-β_kᵀ x)`.
pub fn ind_class_probabilities(betas: &Matrix, x: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = betas
        .iter()
        .map(|b| b.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect();
    softmax_neg(&v)
}

/// Noise-free regression response `(-x1 - x2², -x1² - x2)`.
pub fn regression_mean(x: &[f64]) -> [f64; 2] {
    [-x[0] - x[1] * x[1], -x[0] * x[0] - x[1]]
}

fn draw_class<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// `mean + L z` with `z` standard normal and `L` the Cholesky factor.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], chol: &Cholesky, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    chol.lower()
        .iter()
        .zip(mean)
        .map(|(row, m)| m + row.iter().zip(&z).map(|(l, v)| l * v).sum::<f64>())
        .collect()
}

fn family_mismatch(expected: &str, spec: &GeneratorSpec) -> Error {
    invalid(format!("expected a {expected} generator, got {}", spec.family.name()))
}

pub fn gen_avg_classification<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<LabeledDataset> {
    let GeneratorFamily::AvgClassification { a } = &spec.family else {
        return Err(family_mismatch("avg_classification", spec));
    };
    spec.family.validate()?;
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut x = Vec::with_capacity(7);
        for _ in 0..4 {
            x.push(if rng.gen::<bool>() { 1.0 } else { 0.0 });
        }
        for _ in 0..3 {
            x.push(rng.sample(StandardNormal));
        }
        ys.push(draw_class(&avg_class_probabilities(a, &x), rng));
        xs.push(x);
    }
    LabeledDataset::classification(xs, ys, 5)
}

pub fn gen_ind_classification<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<LabeledDataset> {
    let GeneratorFamily::IndClassification { betas, sigma } = &spec.family else {
        return Err(family_mismatch("ind_classification", spec));
    };
    spec.family.validate()?;
    let chol = Cholesky::new(sigma)?;
    let zero = vec![0.0; sigma.len()];
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = sample_mvn(&zero, &chol, rng);
        ys.push(draw_class(&ind_class_probabilities(betas, &x), rng));
        xs.push(x);
    }
    LabeledDataset::classification(xs, ys, betas.len())
}

pub fn gen_regression_shift<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<LabeledDataset> {
    let GeneratorFamily::RegressionShift {
        x_mean,
        x_cov,
        noise_cov,
    } = &spec.family
    else {
        return Err(family_mismatch("regression_shift", spec));
    };
    spec.family.validate()?;
    let xc = Cholesky::new(x_cov)?;
    let nc = Cholesky::new(noise_cov)?;
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = sample_mvn(x_mean, &xc, rng);
        let e = sample_mvn(&[0.0, 0.0], &nc, rng);
        let m = regression_mean(&x);
        ys.push(vec![m[0] + e[0], m[1] + e[1]]);
        xs.push(x);
    }
    LabeledDataset::regression(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cov(rows: &[Vec<f64>]) -> Matrix {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn avg_probabilities_normalize_and_match_intercepts() {
        let a = default_avg_coefficients();
        let p = avg_class_probabilities(&a, &[0.0; 7]);
        let w: Vec<f64> = [0.0, 0.0, 0.0, 1.0, 1.0].iter().map(|v: &f64| (-v).exp()).collect();
        let s: f64 = w.iter().sum();
        for (pk, wk) in p.iter().zip(&w) {
            assert!((pk - wk / s).abs() < 1e-15);
        }
        let x = [1.0, 0.0, 1.0, 1.0, 0.3, -1.2, 2.0];
        assert!((avg_class_probabilities(&a, &x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let zero = vec![vec![0.0; 8]; 5];
        assert!(avg_class_probabilities(&zero, &x).iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn avg_covariates_and_class_frequencies() {
        let spec = GeneratorSpec::new(GeneratorFamily::avg_classification(), 100_000, 3);
        let d = spec.generate().unwrap();
        for x in d.xs() {
            assert!(x[..4].iter().all(|v| *v == 0.0 || *v == 1.0));
        }
        let mut freq = [0.0; 5];
        for y in d.ys() {
            freq[y.class().unwrap()] += 1.0 / 100_000.0;
        }
        // analytic marginal: exact sum over the coins, Monte Carlo over the normals
        let a = default_avg_coefficients();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut marg = [0.0; 5];
        let draws = 20_000;
        for _ in 0..draws {
            let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            for bits in 0..16 {
                let mut x = [0.0; 7];
                for (b, xb) in x.iter_mut().take(4).enumerate() {
                    *xb = ((bits >> b) & 1) as f64;
                }
                x[4..].copy_from_slice(&g);
                for (m, p) in marg.iter_mut().zip(avg_class_probabilities(&a, &x)) {
                    *m += p / (16.0 * draws as f64);
                }
            }
        }
        for k in 0..5 {
            assert!((freq[k] - marg[k]).abs() < 0.01, "class {k}: {} vs {}", freq[k], marg[k]);
        }
    }

    #[test]
    fn ind_probabilities_and_covariance() {
        let eq = vec![vec![2.0, 2.0, 2.0]; 3];
        assert!(ind_class_probabilities(&eq, &[0.3, -1.0, 4.0])
            .iter()
            .all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let spec = GeneratorSpec::new(GeneratorFamily::ind_classification(), 100_000, 5);
        let d = spec.generate().unwrap();
        let sigma = default_ind_sigma();
        let s = sample_cov(d.xs());
        for a in 0..3 {
            for b in 0..3 {
                let tol = 0.05 * (sigma[a][a] * sigma[b][b]).sqrt();
                assert!((s[a][b] - sigma[a][b]).abs() < tol, "({a},{b}) {} vs {}", s[a][b], sigma[a][b]);
            }
        }
    }

    #[test]
    fn regression_plug_in_and_noise() {
        assert_eq!(regression_mean(&[1.0, 1.0]), [-2.0, -2.0]);
        assert_eq!(regression_mean(&[0.0, 0.0]), [0.0, 0.0]);
        let spec = GeneratorSpec::new(GeneratorFamily::regression_pool([2.0, 0.0], 1.0), 100_000, 6);
        let d = spec.generate().unwrap();
        let resid: Vec<Vec<f64>> = d
            .xs()
            .iter()
            .zip(d.ys())
            .map(|(x, y)| {
                let m = regression_mean(x);
                let y = y.vector().unwrap();
                vec![y[0] - m[0], y[1] - m[1]]
            })
            .collect();
        let s = sample_cov(&resid);
        let target = default_noise_cov();
        assert!((target[0][0] - 0.3125).abs() < 1e-12);
        assert!((target[0][1] - 0.625).abs() < 1e-12);
        assert!((target[1][1] - 4.0625).abs() < 1e-12);
        for a in 0..2 {
            for b in 0..2 {
                let tol = 0.03 * (target[a][a] * target[b][b]).sqrt();
                assert!((s[a][b] - target[a][b]).abs() < tol);
            }
        }
        let xm: f64 = d.xs().iter().map(|x| x[0]).sum::<f64>() / 100_000.0;
        assert!((xm - 2.0).abs() < 0.02);
    }

    #[test]
    fn deterministic_per_seed() {
        for fam in [
            GeneratorFamily::avg_classification(),
            GeneratorFamily::ind_classification(),
            GeneratorFamily::regression_shift(),
        ] {
            let a = GeneratorSpec::new(fam.clone(), 50, 1).generate().unwrap();
            assert_eq!(a, GeneratorSpec::new(fam.clone(), 50, 1).generate().unwrap());
            assert_ne!(a, GeneratorSpec::new(fam, 50, 2).generate().unwrap());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = GeneratorFamily::AvgClassification { a: vec![vec![0.0; 8]; 4] };
        assert!(GeneratorSpec::new(bad, 5, 0).generate().is_err());
        let bad = GeneratorFamily::IndClassification {
            betas: default_ind_betas(),
            sigma: vec![vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        assert!(bad.validate().is_err());
        let spec = GeneratorSpec::new(GeneratorFamily::regression_shift(), 5, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_avg_classification(&spec, &mut rng).is_err());
    }
}
