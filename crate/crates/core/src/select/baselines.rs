use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::kernel::{kernel_weights, KernelConfig};
use crate::quantile::{empirical_quantile, inflated_conformal_threshold, weighted_quantile};
use crate::score::evaluate_scores;

use super::{finish, Diagnostics, ECroms, Problem, SelectionResult};

/// Uniformly random candidate with its split conformal set.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveCp {
    pub thresholds: Vec<f64>,
}

impl NaiveCp {
    pub fn fit(problem: &Problem) -> Result<Self> {
        let thresholds = problem
            .labeled_scores()?
            .iter()
            .map(|s| inflated_conformal_threshold(s, problem.alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { thresholds })
    }

    pub fn predict<R: Rng + ?Sized>(&self, problem: &Problem, x: &[f64], rng: &mut R) -> Result<SelectionResult> {
        let lambda = rng.gen_range(0..problem.models.len());
        finish(
            problem,
            lambda,
            x,
            self.thresholds[lambda],
            Diagnostics {
                thresholds: self.thresholds.clone(),
                ..Diagnostics::default()
            },
        )
    }
}

pub fn naive_cp<R: Rng + ?Sized>(problem: &Problem, x: &[f64], rng: &mut R) -> Result<SelectionResult> {
    NaiveCp::fit(problem)?.predict(problem, x, rng)
}

/// Uniformly random candidate with its localized set at the test point.
#[derive(Debug, Clone)]
pub struct NaiveLcp {
    scores: Vec<Vec<f64>>,
    kernel: KernelConfig,
}

impl NaiveLcp {
    pub fn fit(problem: &Problem, kernel: &KernelConfig) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            scores: problem.labeled_scores()?,
            kernel: kernel.clone(),
        })
    }

    pub fn predict<R: Rng + ?Sized>(&self, problem: &Problem, x: &[f64], rng: &mut R) -> Result<SelectionResult> {
        let lambda = rng.gen_range(0..problem.models.len());
        let w = kernel_weights(&self.kernel, problem.labeled.xs(), x)?;
        let q = weighted_quantile(&self.scores[lambda], &w.weights, 1.0 - problem.alpha)?;
        finish(
            problem,
            lambda,
            x,
            q,
            Diagnostics {
                thresholds: vec![q],
                weights_fallback: w.fallback,
                ..Diagnostics::default()
            },
        )
    }
}

pub fn naive_lcp<R: Rng + ?Sized>(
    problem: &Problem,
    kernel: &KernelConfig,
    x: &[f64],
    rng: &mut R,
) -> Result<SelectionResult> {
    NaiveLcp::fit(problem, kernel)?.predict(problem, x, rng)
}

/// Sample splitting: select on the first part with the E-CROMS rule,
/// calibrate the selected candidate on the second.
#[derive(Debug, Clone, PartialEq)]
pub struct E2e {
    pub lambda_hat: usize,
    pub threshold: f64,
    pub selection_rows: Vec<usize>,
    pub calibration_rows: Vec<usize>,
    pub selection_risks: Vec<f64>,
}

impl E2e {
    pub fn fit<R: Rng + ?Sized>(problem: &Problem, split_fraction: f64, rng: &mut R) -> Result<Self> {
        if !(split_fraction > 0.0 && split_fraction < 1.0) {
            return Err(invalid(format!("split fraction must lie in (0, 1), got {split_fraction}")));
        }
        let n = problem.n();
        let n1 = (split_fraction * n as f64).floor() as usize;
        if n1 == 0 || n1 >= n {
            return Err(Error::Empty("sample-splitting part"));
        }
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(rng);
        let calibration_rows = rows.split_off(n1);
        let d1 = problem.labeled.subset(&rows)?;
        let d2 = problem.labeled.subset(&calibration_rows)?;
        let sel = ECroms::fit(&problem.with_labeled(&d1))?;
        let scores = evaluate_scores(&problem.models[sel.lambda_hat], &d2)?;
        let n2 = scores.len() as f64;
        // the calibration multiset is augmented with +∞, which is the same as
        // the inflated quantile over the finite scores
        let threshold = empirical_quantile(&scores, (1.0 - problem.alpha) * (1.0 + 1.0 / n2))?;
        Ok(Self {
            lambda_hat: sel.lambda_hat,
            threshold,
            selection_rows: rows,
            calibration_rows,
            selection_risks: sel.risks,
        })
    }

    pub fn predict(&self, problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
        finish(
            problem,
            self.lambda_hat,
            x,
            self.threshold,
            Diagnostics {
                thresholds: vec![self.threshold],
                risks: self.selection_risks.clone(),
                ..Diagnostics::default()
            },
        )
    }
}
