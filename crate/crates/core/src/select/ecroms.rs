use crate::error::Result;
use crate::quantile::inflated_conformal_threshold;
use crate::sum::exact_sum;

use super::{argmin_lowest, auxiliary_risks, finish, Diagnostics, Problem, SelectionResult};

/// Split thresholds per candidate and the candidate with the smallest mean
/// auxiliary loss on the labeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct ECroms {
    pub thresholds: Vec<f64>,
    pub risks: Vec<f64>,
    pub lambda_hat: usize,
}

impl ECroms {
    pub fn fit(problem: &Problem) -> Result<Self> {
        let thresholds = problem
            .labeled_scores()?
            .iter()
            .map(|s| inflated_conformal_threshold(s, problem.alpha))
            .collect::<Result<Vec<_>>>()?;
        let table = auxiliary_risks(problem, &thresholds)?;
        let n = problem.n() as f64;
        let risks: Vec<f64> = table.iter().map(|row| exact_sum(row.iter().copied()) / n).collect();
        let lambda_hat = argmin_lowest(&risks);
        Ok(Self {
            thresholds,
            risks,
            lambda_hat,
        })
    }

    pub fn predict(&self, problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
        finish(
            problem,
            self.lambda_hat,
            x,
            self.thresholds[self.lambda_hat],
            Diagnostics {
                thresholds: self.thresholds.clone(),
                risks: self.risks.clone(),
                ..Diagnostics::default()
            },
        )
    }
}

pub fn e_croms(problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
    ECroms::fit(problem)?.predict(problem, x)
}
