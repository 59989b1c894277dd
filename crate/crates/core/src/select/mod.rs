//! Model selection by empirical decision risk.
//!
//! Every selector returns a [`SelectionResult`]: the chosen candidate, the
//! final prediction set at the test covariate, and the robust decision over
//! that set. Selectors that do per-replication work once (thresholds, risk
//! tables) expose a fitted struct with a `predict` method; the free functions
//! are one-shot conveniences.
//!
//! Ties in every argmin go to the lowest candidate index. Risk sums use
//! correctly rounded summation so the selection does not depend on the order
//! of the labeled rows.

mod baselines;
mod croims;
mod ecroms;
mod fcroms;

pub use baselines::{naive_cp, naive_lcp, E2e, NaiveCp, NaiveLcp};
pub use croims::{croims, f_croims, Croims, FCroimsOutput, DEFAULT_F_CROIMS_BUDGET};
pub use ecroms::{e_croms, ECroms};
pub use fcroms::{f_croms_classification, f_croms_naive, f_croms_regression, FCroms};

use crate::cro::{self, PgdConfig, RobustSolution};
use crate::data::{Label, LabeledDataset, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::loss::{loss, LossSpec};
use crate::score::{check_compatible, PointScorer, ScoreModel};
use crate::set::PredictionSet;

/// Inputs shared by all selectors.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub models: &'a [ScoreModel],
    pub labeled: &'a LabeledDataset,
    pub loss: &'a LossSpec,
    pub alpha: f64,
    pub pgd: PgdConfig,
}

impl<'a> Problem<'a> {
    pub fn new(models: &'a [ScoreModel], labeled: &'a LabeledDataset, loss: &'a LossSpec, alpha: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("candidate models"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        for m in models {
            check_compatible(m, labeled)?;
        }
        match (labeled.kind(), loss) {
            (TaskKind::Classification { num_classes }, LossSpec::FiniteMatrix { matrix, .. }) => {
                if matrix.len() != num_classes {
                    return Err(Error::DimensionMismatch {
                        context: "loss matrix rows",
                        expected: num_classes,
                        got: matrix.len(),
                    });
                }
            }
            (TaskKind::Regression { dim }, LossSpec::BilinearPortfolio { dim: p }) => {
                if dim != *p {
                    return Err(Error::DimensionMismatch {
                        context: "portfolio dimension",
                        expected: dim,
                        got: *p,
                    });
                }
            }
            _ => return Err(Error::Incompatible("loss does not match the label type".into())),
        }
        Ok(Self {
            models,
            labeled,
            loss,
            alpha,
            pgd: PgdConfig::default(),
        })
    }

    pub fn with_pgd(mut self, pgd: PgdConfig) -> Self {
        self.pgd = pgd;
        self
    }

    /// Same models, loss and settings over different labeled data.
    pub fn with_labeled<'b>(&self, labeled: &'b LabeledDataset) -> Problem<'b>
    where
        'a: 'b,
    {
        Problem {
            models: self.models,
            labeled,
            loss: self.loss,
            alpha: self.alpha,
            pgd: self.pgd.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    /// Robust decision over `{y : S(x, y) <= q}` for a prepared scorer.
    pub fn decide(&self, scorer: &PointScorer, q: f64) -> Result<(PredictionSet, RobustSolution)> {
        let set = scorer.set(q);
        let sol = cro::solve(self.loss, &set, &self.pgd)?;
        Ok((set, sol))
    }

    /// `φ(y, z)` for a labeled row.
    pub fn realized(&self, y: &Label, sol: &RobustSolution) -> Result<f64> {
        loss(self.loss, y, &sol.decision)
    }

    /// Labeled scores `S_λ(X_i, Y_i)` for every candidate.
    pub fn labeled_scores(&self) -> Result<Vec<Vec<f64>>> {
        self.models
            .iter()
            .map(|m| crate::score::evaluate_scores(m, self.labeled))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Threshold per candidate used for the final set (or the relevant
    /// candidate only, see the selector docs).
    pub thresholds: Vec<f64>,
    /// Empirical (or weighted) risk per candidate.
    pub risks: Vec<f64>,
    /// The final set was empty and the decision is the fallback.
    pub set_was_empty: bool,
    /// Kernel weights at the test point fell back to uniform.
    pub weights_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub lambda_hat: usize,
    /// Per-label selections for full-conformal selectors, indexed by label
    /// (class index or grid point index).
    pub lambda_hat_by_label: Option<Vec<usize>>,
    pub set: PredictionSet,
    pub solution: RobustSolution,
    pub diagnostics: Diagnostics,
}

impl SelectionResult {
    /// Equality of everything except diagnostics.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.lambda_hat == other.lambda_hat
            && self.lambda_hat_by_label == other.lambda_hat_by_label
            && self.set == other.set
            && self.solution == other.solution
    }

    /// Whether `y` is in the final set. Sublevel sets are resolved with the
    /// selected model.
    pub fn covers(&self, models: &[ScoreModel], x: &[f64], y: &Label) -> Result<bool> {
        match self.set.contains(y) {
            Some(b) => Ok(b),
            None => match &self.set {
                PredictionSet::Sublevel { model_id, threshold } => {
                    let m = models
                        .iter()
                        .find(|m| m.id == *model_id)
                        .ok_or_else(|| invalid(format!("unknown model id {model_id}")))?;
                    Ok(m.score(x, y)? <= *threshold)
                }
                _ => unreachable!("only sublevel sets defer membership"),
            },
        }
    }
}

/// Index of the smallest value, lowest index on ties; NaN never wins.
pub fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// `|Λ| × n` table of `φ(Y_i, z_λ(X_i; q_λ))`.
pub fn auxiliary_risks(problem: &Problem, thresholds: &[f64]) -> Result<Vec<Vec<f64>>> {
    if thresholds.len() != problem.models.len() {
        return Err(Error::DimensionMismatch {
            context: "thresholds per model",
            expected: problem.models.len(),
            got: thresholds.len(),
        });
    }
    problem
        .models
        .iter()
        .zip(thresholds)
        .map(|(m, &q)| {
            problem
                .labeled
                .xs()
                .iter()
                .zip(problem.labeled.ys())
                .map(|(x, y)| {
                    let (_, sol) = problem.decide(&m.at(x)?, q)?;
                    problem.realized(y, &sol)
                })
                .collect()
        })
        .collect()
}

fn finish(
    problem: &Problem,
    lambda_hat: usize,
    x: &[f64],
    q: f64,
    mut diagnostics: Diagnostics,
) -> Result<SelectionResult> {
    let scorer = problem.models[lambda_hat].at(x)?;
    let (set, solution) = problem.decide(&scorer, q)?;
    diagnostics.set_was_empty = solution.set_was_empty;
    Ok(SelectionResult {
        lambda_hat,
        lambda_hat_by_label: None,
        set,
        solution,
        diagnostics,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::score::{ClassProbabilities, ConstantProbabilities};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Probabilities given by a fixed table lookup on the first covariate,
    /// which holds a row id.
    #[derive(Debug)]
    pub struct TableProbs(pub Vec<Vec<f64>>);

    impl ClassProbabilities for TableProbs {
        fn num_classes(&self) -> usize {
            self.0[0].len()
        }
        fn probabilities(&self, x: &[f64]) -> Vec<f64> {
            self.0[x[0] as usize].clone()
        }
    }

    pub struct Fixture {
        pub models: Vec<ScoreModel>,
        pub labeled: LabeledDataset,
        pub loss: LossSpec,
        pub test_x: Vec<f64>,
    }

    fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        // coarse values produce ties on purpose
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(1..6) as f64).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    /// Random classification fixture: row `n` of each table is the test
    /// point.
    pub fn random_classification(seed: u64, n: usize, k: usize, models: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = (0..models)
            .map(|id| {
                let table: Vec<Vec<f64>> = (0..=n).map(|_| random_probs(&mut rng, k)).collect();
                ScoreModel::softmax(id, Arc::new(TableProbs(table)))
            })
            .collect();
        let xs = (0..n).map(|i| vec![i as f64]).collect();
        let ys = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let matrix = (0..k)
            .map(|y| (0..k).map(|z| if y == z { 0.0 } else { rng.gen_range(1..10) as f64 }).collect())
            .collect();
        Fixture {
            models: ms,
            labeled: LabeledDataset::classification(xs, ys, k).unwrap(),
            loss: LossSpec::matrix(matrix).unwrap(),
            test_x: vec![n as f64],
        }
    }

    pub fn constant_softmax(id: usize, p: Vec<f64>) -> ScoreModel {
        ScoreModel::softmax(id, Arc::new(ConstantProbabilities(p)))
    }
}
