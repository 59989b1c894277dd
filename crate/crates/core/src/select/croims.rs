//! Covariate-dependent selection with localized thresholds.

use crate::data::{Label, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::kernel::{kernel_weights, KernelConfig};
use crate::quantile::{inflated_conformal_threshold, weighted_quantile};
use crate::set::PredictionSet;
use crate::sum::ExactSum;

use super::{argmin_lowest, finish, Diagnostics, Problem, SelectionResult};

/// Default work limit for the swap-based variant, in units of
/// `|Y| · n · |Λ|`.
pub const DEFAULT_F_CROIMS_BUDGET: usize = 100_000;

/// Per-point localized thresholds and auxiliary losses for one labeled
/// dataset. Selection at any covariate is then a kernel-weighted argmin.
#[derive(Debug, Clone)]
pub struct Croims {
    kernel: KernelConfig,
    scores: Vec<Vec<f64>>,
    /// `[λ][i]` threshold of candidate `λ` localized at `X_i`.
    pub point_thresholds: Vec<Vec<f64>>,
    /// `[λ][i]` loss `φ(Y_i, z_λ(X_i))` of the localized auxiliary decision.
    pub losses: Vec<Vec<f64>>,
}

impl Croims {
    pub fn fit(problem: &Problem, kernel: &KernelConfig) -> Result<Self> {
        kernel.validate()?;
        let xs = problem.labeled.xs();
        let weights = xs
            .iter()
            .map(|xi| kernel_weights(kernel, xs, xi).map(|w| w.weights))
            .collect::<Result<Vec<_>>>()?;
        let scores = problem.labeled_scores()?;
        let mut point_thresholds = Vec::with_capacity(scores.len());
        let mut losses = Vec::with_capacity(scores.len());
        for (model, s) in problem.models.iter().zip(&scores) {
            let mut qs = Vec::with_capacity(xs.len());
            let mut ls = Vec::with_capacity(xs.len());
            for ((xi, yi), wi) in xs.iter().zip(problem.labeled.ys()).zip(&weights) {
                let q = weighted_quantile(s, wi, 1.0 - problem.alpha)?;
                let (_, sol) = problem.decide(&model.at(xi)?, q)?;
                ls.push(problem.realized(yi, &sol)?);
                qs.push(q);
            }
            point_thresholds.push(qs);
            losses.push(ls);
        }
        Ok(Self {
            kernel: kernel.clone(),
            scores,
            point_thresholds,
            losses,
        })
    }

    /// Kernel-weighted risk per candidate at `x`, the selected candidate and
    /// whether the weights fell back to uniform.
    pub fn select(&self, problem: &Problem, x: &[f64]) -> Result<(usize, Vec<f64>, Vec<f64>, bool)> {
        let w = kernel_weights(&self.kernel, problem.labeled.xs(), x)?;
        let risks: Vec<f64> = self
            .losses
            .iter()
            .map(|row| {
                let mut acc = ExactSum::new();
                acc.extend(row.iter().zip(&w.weights).map(|(l, wi)| l * wi));
                acc.value()
            })
            .collect();
        Ok((argmin_lowest(&risks), risks, w.weights, w.fallback))
    }

    pub fn predict(&self, problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
        let (lambda, risks, weights, fallback) = self.select(problem, x)?;
        let q = weighted_quantile(&self.scores[lambda], &weights, 1.0 - problem.alpha)?;
        finish(
            problem,
            lambda,
            x,
            q,
            Diagnostics {
                thresholds: vec![q],
                risks,
                weights_fallback: fallback,
                ..Diagnostics::default()
            },
        )
    }
}

pub fn croims(problem: &Problem, kernel: &KernelConfig, x: &[f64]) -> Result<SelectionResult> {
    Croims::fit(problem, kernel)?.predict(problem, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FCroimsOutput {
    pub result: SelectionResult,
    /// `[y][j]`: candidate selected at `X_j` after swapping row `j` for the
    /// test point with label `y`.
    pub per_label_selections: Vec<Vec<usize>>,
    /// `[y]`: threshold the test score of `y` was compared with.
    pub label_thresholds: Vec<f64>,
}

/// Swap-based full-conformal variant for classification. Costs
/// `|Y| · n` refits, so it refuses to run when `|Y| · n · |Λ|` exceeds
/// `budget`.
pub fn f_croims(problem: &Problem, kernel: &KernelConfig, x: &[f64], budget: usize) -> Result<FCroimsOutput> {
    let k = match problem.labeled.kind() {
        TaskKind::Classification { num_classes } => num_classes,
        TaskKind::Regression { .. } => return Err(invalid("the swap-based selector supports classification only")),
    };
    let n = problem.n();
    let cost = k.saturating_mul(n).saturating_mul(problem.models.len());
    if cost > budget {
        return Err(Error::BudgetExceeded(format!(
            "{k} labels x {n} points x {} candidates = {cost} > {budget}",
            problem.models.len()
        )));
    }
    let base = Croims::fit(problem, kernel)?;
    let (lambda, risks, _, fallback) = base.select(problem, x)?;
    let test_scorer = problem.models[lambda].at(x)?;
    let mut per_label = Vec::with_capacity(k);
    let mut label_thresholds = Vec::with_capacity(k);
    let mut included = Vec::new();
    for y in 0..k {
        let mut picks = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for j in 0..n {
            let swapped = problem.labeled.with_row_replaced(j, x.to_vec(), Label::Class(y))?;
            let pj = problem.with_labeled(&swapped);
            let xj = problem.labeled.x(j);
            let (pick, ..) = Croims::fit(&pj, kernel)?.select(&pj, xj)?;
            picks.push(pick);
            scores.push(problem.models[pick].score(xj, problem.labeled.y(j))?);
        }
        let q = inflated_conformal_threshold(&scores, problem.alpha)?;
        if test_scorer.score(&Label::Class(y))? <= q {
            included.push(y);
        }
        per_label.push(picks);
        label_thresholds.push(q);
    }
    let set = PredictionSet::FiniteLabels(included);
    let solution = crate::cro::solve(problem.loss, &set, &problem.pgd)?;
    Ok(FCroimsOutput {
        result: SelectionResult {
            lambda_hat: lambda,
            lambda_hat_by_label: None,
            diagnostics: Diagnostics {
                thresholds: label_thresholds.clone(),
                risks,
                set_was_empty: solution.set_was_empty,
                weights_fallback: fallback,
            },
            set,
            solution,
        },
        per_label_selections: per_label,
        label_thresholds,
    })
}
