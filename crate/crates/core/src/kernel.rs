//! Localization kernels, normalized weights, effective sample size and
//! bandwidth selection.

use crate::error::{invalid, Error, Result};
use crate::sum::exact_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `exp(-d²/h²)`
    GaussianSq,
    /// `exp(-d/h)`
    Exponential,
    /// `1{d <= h}`
    Box,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    /// Euclidean distance on a subset of covariate columns.
    Features(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub distance: Distance,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        let cfg = Self {
            family,
            bandwidth,
            distance: Distance::Euclidean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_distance(mut self, distance: Distance) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Self {
        Self {
            bandwidth,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        Ok(())
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel covariates",
                expected: a.len(),
                got: b.len(),
            });
        }
        let sq = match &self.distance {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
            Distance::Features(cols) => {
                let mut s = 0.0;
                for &c in cols {
                    if c >= a.len() {
                        return Err(Error::IndexOutOfRange {
                            context: "kernel feature column",
                            index: c,
                            len: a.len(),
                        });
                    }
                    s += (a[c] - b[c]) * (a[c] - b[c]);
                }
                s
            }
        };
        Ok(sq.sqrt())
    }

    fn profile(&self, d: f64) -> f64 {
        let h = self.bandwidth;
        match self.family {
            KernelFamily::GaussianSq => (-(d * d) / (h * h)).exp(),
            KernelFamily::Exponential => (-d / h).exp(),
            KernelFamily::Box => {
                if d <= h {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Dimension the distance is computed in.
    pub fn effective_dim(&self, covariate_dim: usize) -> usize {
        match &self.distance {
            Distance::Euclidean => covariate_dim,
            Distance::Features(cols) => cols.len(),
        }
    }
}

/// `H(x1, x2)`.
pub fn kernel_value(cfg: &KernelConfig, x1: &[f64], x2: &[f64]) -> Result<f64> {
    Ok(cfg.profile(cfg.distance(x1, x2)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub weights: Vec<f64>,
    /// Every kernel value was zero and the weights are uniform instead.
    pub fallback: bool,
}

/// `w_i(x) = H(X_i, x) / Σ_j H(X_j, x)`.
pub fn kernel_weights(cfg: &KernelConfig, labeled_xs: &[Vec<f64>], x: &[f64]) -> Result<KernelWeights> {
    if labeled_xs.is_empty() {
        return Err(Error::Empty("kernel weights"));
    }
    let raw = labeled_xs
        .iter()
        .map(|xi| kernel_value(cfg, xi, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize(raw))
}

pub(crate) fn normalize(raw: Vec<f64>) -> KernelWeights {
    let total = exact_sum(raw.iter().copied());
    if total > 0.0 {
        KernelWeights {
            weights: raw.into_iter().map(|h| h / total).collect(),
            fallback: false,
        }
    } else {
        let n = raw.len();
        KernelWeights {
            weights: vec![1.0 / n as f64; n],
            fallback: true,
        }
    }
}

/// Plug-in `n · E[E[H(X,X')|X]²] / E[H(X,X')²]` with pairwise averages over
/// `i ≠ j`, clamped to `[1, n]`.
pub fn effective_sample_size(sample_xs: &[Vec<f64>], cfg: &KernelConfig) -> Result<f64> {
    let n = sample_xs.len();
    if n < 2 {
        return Err(invalid("effective sample size needs at least two points"));
    }
    cfg.validate()?;
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel_value(cfg, &sample_xs[i], &sample_xs[j])?;
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    let m = (n - 1) as f64;
    let mean_sq_cond = exact_sum((0..n).map(|i| {
        let mi = exact_sum((0..n).filter(|&j| j != i).map(|j| h[i][j])) / m;
        mi * mi
    })) / n as f64;
    let mean_sq = exact_sum((0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| h[i][j] * h[i][j]))
        / (n as f64 * m);
    if mean_sq == 0.0 {
        return Ok(1.0);
    }
    Ok((n as f64 * mean_sq_cond / mean_sq).clamp(1.0, n as f64))
}

/// 20 log-spaced constants in `[0.1, 50]`.
pub fn default_c_grid() -> Vec<f64> {
    let (lo, hi) = (0.1f64.ln(), 50f64.ln());
    (0..20).map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp()).collect()
}

/// `h = c · n^{-1/(d+2)}`.
pub fn bandwidth_rule(c: f64, n: usize, d: usize) -> f64 {
    c * (n as f64).powf(-1.0 / (d as f64 + 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthChoice {
    pub c: f64,
    pub bandwidth: f64,
    pub n_eff: f64,
    /// No grid constant reached the target; the largest one was returned.
    pub target_missed: bool,
}

/// Smallest `c` in the (ascending) grid whose bandwidth `c · n^{-1/(d+2)}`
/// gives `n_eff >= target_neff` on `sample_xs`. `n` is the labeled sample
/// size the bandwidth will be used with.
pub fn select_bandwidth(
    sample_xs: &[Vec<f64>],
    target_neff: f64,
    cfg: &KernelConfig,
    c_grid: &[f64],
    n: usize,
) -> Result<BandwidthChoice> {
    if c_grid.is_empty() {
        return Err(Error::Empty("bandwidth grid"));
    }
    if !(target_neff >= 1.0) {
        return Err(invalid(format!("target n_eff must be at least 1, got {target_neff}")));
    }
    let d = cfg.effective_dim(sample_xs.first().map_or(0, Vec::len));
    let mut grid = c_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut last = None;
    for &c in &grid {
        let h = bandwidth_rule(c, n, d);
        let n_eff = effective_sample_size(sample_xs, &cfg.with_bandwidth(h))?;
        if n_eff >= target_neff {
            return Ok(BandwidthChoice {
                c,
                bandwidth: h,
                n_eff,
                target_missed: false,
            });
        }
        last = Some(BandwidthChoice {
            c,
            bandwidth: h,
            n_eff,
            target_missed: true,
        });
    }
    Ok(last.expect("grid is nonempty"))
}
