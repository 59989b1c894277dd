//! Full-conformal selection over a finite label space.
//!
//! For a hypothesized label `y` the test pair joins the labeled data, each
//! candidate's threshold becomes the augmented quantile `Q_{1-α}` over `n+1`
//! scores, and the candidate with the smallest augmented empirical risk is
//! `λ̂^y`. `y` enters the final set iff `S_{λ̂^y}(x, y)` is within that
//! candidate's augmented threshold.
//!
//! The augmented threshold only takes three forms (see
//! [`AugmentedBounds`]): the two order statistics `q∓` or the test score
//! itself. The labeled part of the risk at `q∓` is computed once per
//! candidate; only labels whose score falls strictly between the two need a
//! fresh pass over the labeled rows, and even then the auxiliary decisions are
//! memoized by the size of the sublevel set, since the set at a labeled point
//! is always a prefix of that point's labels sorted by score.

use std::collections::HashMap;

use crate::cro::{self, RobustSolution};
use crate::data::{Label, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridConfig, LabelGrid};
use crate::linalg::dot;
use crate::loss::{loss, LossSpec};
use crate::quantile::{empirical_quantile, AugmentedBounds, Branch};
use crate::score::ScoreModel;
use crate::set::PredictionSet;
use crate::sum::ExactSum;

use super::{argmin_lowest, Diagnostics, Problem, SelectionResult};

#[derive(Debug, Clone)]
enum Space {
    Classes(usize),
    Grid { grid: LabelGrid, points: Vec<Vec<f64>> },
}

impl Space {
    fn for_problem(problem: &Problem, grid: Option<LabelGrid>) -> Result<Self> {
        match (problem.labeled.kind(), grid) {
            (TaskKind::Classification { num_classes }, None) => Ok(Space::Classes(num_classes)),
            (TaskKind::Regression { dim }, Some(grid)) => {
                if grid.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "label grid",
                        expected: dim,
                        got: grid.dim(),
                    });
                }
                let points = grid.points();
                Ok(Space::Grid { grid, points })
            }
            (TaskKind::Classification { .. }, Some(_)) => Err(invalid("classification does not use a label grid")),
            (TaskKind::Regression { .. }, None) => Err(invalid("regression needs a label grid")),
        }
    }

    fn len(&self) -> usize {
        match self {
            Space::Classes(k) => *k,
            Space::Grid { points, .. } => points.len(),
        }
    }

    fn label(&self, l: usize) -> Label {
        match self {
            Space::Classes(_) => Label::Class(l),
            Space::Grid { points, .. } => Label::Vector(points[l].clone()),
        }
    }

    /// Label index of a labeled response: the class, or the nearest grid
    /// point.
    fn index_of(&self, y: &Label) -> Result<usize> {
        match (self, y) {
            (Space::Classes(_), Label::Class(c)) => Ok(*c),
            (Space::Grid { grid, .. }, Label::Vector(v)) => {
                if !grid.covers(v) {
                    return Err(invalid("label grid does not cover the labeled responses"));
                }
                Ok(grid.snap_index(v))
            }
            _ => Err(invalid("label type does not match the label space")),
        }
    }

    fn scores(&self, model: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
        let scorer = model.at(x)?;
        match self {
            Space::Classes(_) => scorer
                .class_scores()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| invalid("classification needs class scores")),
            Space::Grid { points, .. } => Ok(points.iter().map(|g| scorer.score_vector(g)).collect()),
        }
    }

    fn set(&self, labels: Vec<usize>, with_grid: bool) -> PredictionSet {
        match self {
            Space::Classes(_) => PredictionSet::FiniteLabels(labels),
            Space::Grid { grid, points } => PredictionSet::FinitePoints {
                points: labels.into_iter().map(|l| points[l].clone()).collect(),
                grid: with_grid.then(|| grid.clone()),
            },
        }
    }

    fn loss_at(&self, spec: &LossSpec, l: usize, sol: &RobustSolution) -> f64 {
        match (self, spec, &sol.decision) {
            (Space::Classes(_), LossSpec::FiniteMatrix { matrix, .. }, crate::loss::Decision::Index(d)) => matrix[l][*d],
            (Space::Grid { points, .. }, LossSpec::BilinearPortfolio { .. }, crate::loss::Decision::Weights(z)) => {
                -dot(&points[l], z)
            }
            _ => unreachable!("problem validation pairs losses with label types"),
        }
    }
}

/// Scores of every label at one covariate, with labels ordered by score
/// (ties by index).
#[derive(Debug, Clone)]
struct LabelScores {
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl LabelScores {
    fn new(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        Self { scores, order }
    }

    fn count_le(&self, q: f64) -> usize {
        self.order.partition_point(|&l| self.scores[l] <= q)
    }

    fn prefix(&self, k: usize) -> Vec<usize> {
        let mut v = self.order[..k].to_vec();
        v.sort_unstable();
        v
    }
}

fn decide_prefix<'m>(
    problem: &Problem,
    space: &Space,
    ls: &LabelScores,
    k: usize,
    memo: &'m mut HashMap<usize, RobustSolution>,
) -> Result<&'m RobustSolution> {
    if !memo.contains_key(&k) {
        let sol = cro::solve(problem.loss, &space.set(ls.prefix(k), false), &problem.pgd)?;
        memo.insert(k, sol);
    }
    Ok(&memo[&k])
}

/// Prepared full-conformal selector for one labeled dataset.
#[derive(Debug, Clone)]
pub struct FCroms {
    space: Space,
    labels: Vec<usize>,
    at_labeled: Vec<Vec<LabelScores>>,
    bounds: Vec<AugmentedBounds>,
    lower_sums: Vec<ExactSum>,
    upper_sums: Vec<ExactSum>,
    memo: Vec<Vec<HashMap<usize, RobustSolution>>>,
}

impl FCroms {
    pub fn classification(problem: &Problem) -> Result<Self> {
        Self::prepare(problem, Space::for_problem(problem, None)?)
    }

    /// Regression over a label grid. Labeled responses are mapped to their
    /// nearest grid point.
    pub fn regression(problem: &Problem, grid: LabelGrid) -> Result<Self> {
        Self::prepare(problem, Space::for_problem(problem, Some(grid))?)
    }

    fn prepare(problem: &Problem, space: Space) -> Result<Self> {
        let labels = problem
            .labeled
            .ys()
            .iter()
            .map(|y| space.index_of(y))
            .collect::<Result<Vec<_>>>()?;
        let n = labels.len();
        let mut at_labeled = Vec::with_capacity(problem.models.len());
        let mut bounds = Vec::with_capacity(problem.models.len());
        for model in problem.models {
            let per_point = problem
                .labeled
                .xs()
                .iter()
                .map(|x| space.scores(model, x).map(LabelScores::new))
                .collect::<Result<Vec<_>>>()?;
            let own: Vec<f64> = per_point.iter().zip(&labels).map(|(s, &l)| s.scores[l]).collect();
            bounds.push(AugmentedBounds::new(&own, problem.alpha)?);
            at_labeled.push(per_point);
        }
        let mut memo = vec![vec![HashMap::new(); n]; problem.models.len()];
        let mut lower_sums = Vec::new();
        let mut upper_sums = Vec::new();
        for (lam, b) in bounds.iter().enumerate() {
            let mut lo = ExactSum::new();
            let mut hi = ExactSum::new();
            for i in 0..n {
                let ls = &at_labeled[lam][i];
                let sol = decide_prefix(problem, &space, ls, ls.count_le(b.lower), &mut memo[lam][i])?;
                lo.add(space.loss_at(problem.loss, labels[i], sol));
                let sol = decide_prefix(problem, &space, ls, ls.count_le(b.upper), &mut memo[lam][i])?;
                hi.add(space.loss_at(problem.loss, labels[i], sol));
            }
            lower_sums.push(lo);
            upper_sums.push(hi);
        }
        Ok(Self {
            space,
            labels,
            at_labeled,
            bounds,
            lower_sums,
            upper_sums,
            memo,
        })
    }

    pub fn bounds(&self) -> &[AugmentedBounds] {
        &self.bounds
    }

    pub fn grid(&self) -> Option<&LabelGrid> {
        match &self.space {
            Space::Grid { grid, .. } => Some(grid),
            Space::Classes(_) => None,
        }
    }

    pub fn predict(&mut self, problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
        let m = problem.models.len();
        let at_x = problem
            .models
            .iter()
            .map(|model| self.space.scores(model, x).map(LabelScores::new))
            .collect::<Result<Vec<_>>>()?;
        let mut memo_x: Vec<HashMap<usize, RobustSolution>> = vec![HashMap::new(); m];
        let mut by_label = Vec::with_capacity(self.space.len());
        let mut included = Vec::new();
        let mut risks = vec![0.0; m];
        let mut qs = vec![0.0; m];
        for l in 0..self.space.len() {
            for lam in 0..m {
                let t = at_x[lam].scores[l];
                let b = self.bounds[lam];
                let (q, mut acc) = match b.branch(t) {
                    Branch::Lower => (b.lower, self.lower_sums[lam].clone()),
                    Branch::Upper => (b.upper, self.upper_sums[lam].clone()),
                    Branch::Interior => {
                        let mut acc = ExactSum::new();
                        for i in 0..self.labels.len() {
                            let ls = &self.at_labeled[lam][i];
                            let sol = decide_prefix(problem, &self.space, ls, ls.count_le(t), &mut self.memo[lam][i])?;
                            acc.add(self.space.loss_at(problem.loss, self.labels[i], sol));
                        }
                        (t, acc)
                    }
                };
                let sol = decide_prefix(problem, &self.space, &at_x[lam], at_x[lam].count_le(q), &mut memo_x[lam])?;
                acc.add(self.space.loss_at(problem.loss, l, sol));
                risks[lam] = acc.value();
                qs[lam] = q;
            }
            let lam = argmin_lowest(&risks);
            by_label.push(lam);
            if at_x[lam].scores[l] <= qs[lam] {
                included.push(l);
            }
        }
        let diagnostics = Diagnostics {
            thresholds: self.bounds.iter().map(|b| b.upper).collect(),
            ..Diagnostics::default()
        };
        assemble(problem, &self.space, included, by_label, diagnostics)
    }
}

fn assemble(
    problem: &Problem,
    space: &Space,
    included: Vec<usize>,
    by_label: Vec<usize>,
    mut diagnostics: Diagnostics,
) -> Result<SelectionResult> {
    let set = space.set(included.clone(), true);
    let solution = cro::solve(problem.loss, &set, &problem.pgd)?;
    diagnostics.set_was_empty = solution.set_was_empty;
    Ok(SelectionResult {
        lambda_hat: most_common(&by_label, &included, problem.models.len()),
        lambda_hat_by_label: Some(by_label),
        set,
        solution,
        diagnostics,
    })
}

/// Most frequent selection among the accepted labels (all labels if none
/// were accepted), lowest index on ties.
fn most_common(by_label: &[usize], included: &[usize], m: usize) -> usize {
    let mut counts = vec![0usize; m];
    if included.is_empty() {
        by_label.iter().for_each(|&l| counts[l] += 1);
    } else {
        included.iter().for_each(|&y| counts[by_label[y]] += 1);
    }
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn f_croms_classification(problem: &Problem, x: &[f64]) -> Result<SelectionResult> {
    FCroms::classification(problem)?.predict(problem, x)
}

/// Discretized regression with a grid built from the labeled responses.
pub fn f_croms_regression(problem: &Problem, x: &[f64], grid: &GridConfig) -> Result<SelectionResult> {
    let ys: Vec<Vec<f64>> = problem
        .labeled
        .ys()
        .iter()
        .map(|y| y.vector().map(<[f64]>::to_vec).ok_or_else(|| invalid("regression labels expected")))
        .collect::<Result<_>>()?;
    let grid = LabelGrid::from_labels(&ys, grid)?;
    FCroms::regression(problem, grid)?.predict(problem, x)
}

/// Reference implementation without any caching: for every hypothesized
/// label and candidate, the augmented quantile is taken over the explicit
/// `n+1` scores and every auxiliary decision is solved from scratch.
pub fn f_croms_naive(problem: &Problem, x: &[f64], grid: Option<&LabelGrid>) -> Result<SelectionResult> {
    let space = Space::for_problem(problem, grid.cloned())?;
    let labels: Vec<Label> = problem
        .labeled
        .ys()
        .iter()
        .map(|y| space.index_of(y).map(|l| space.label(l)))
        .collect::<Result<_>>()?;
    let all: Vec<Label> = (0..space.len()).map(|l| space.label(l)).collect();
    let set_at = |model: &ScoreModel, x: &[f64], q: f64| -> Result<RobustSolution> {
        let mut members = Vec::new();
        for (l, lab) in all.iter().enumerate() {
            if model.score(x, lab)? <= q {
                members.push(l);
            }
        }
        cro::solve(problem.loss, &space.set(members, false), &problem.pgd)
    };
    let m = problem.models.len();
    let mut by_label = Vec::new();
    let mut included = Vec::new();
    for (l, y) in all.iter().enumerate() {
        let mut risks = vec![0.0; m];
        let mut qs = vec![0.0; m];
        for (lam, model) in problem.models.iter().enumerate() {
            let t = model.score(x, y)?;
            let mut aug = Vec::with_capacity(labels.len() + 1);
            for (xi, yi) in problem.labeled.xs().iter().zip(&labels) {
                aug.push(model.score(xi, yi)?);
            }
            aug.push(t);
            let q = empirical_quantile(&aug, 1.0 - problem.alpha)?;
            let mut acc = ExactSum::new();
            for (xi, yi) in problem.labeled.xs().iter().zip(&labels) {
                acc.add(loss(problem.loss, yi, &set_at(model, xi, q)?.decision)?);
            }
            acc.add(loss(problem.loss, y, &set_at(model, x, q)?.decision)?);
            risks[lam] = acc.value();
            qs[lam] = q;
        }
        let lam = argmin_lowest(&risks);
        by_label.push(lam);
        if problem.models[lam].score(x, y)? <= qs[lam] {
            included.push(l);
        }
    }
    assemble(problem, &space, included, by_label, Diagnostics::default())
}
