//! Coverage, robustness and loss metrics over evaluated test points.

use rand::Rng;

use crate::data::Label;
use crate::error::{invalid, Error, Result};
use crate::loss::loss;
use crate::quantile::empirical_quantile;
use crate::score::ScoreModel;
use crate::select::{Problem, SelectionResult};
use crate::sum::exact_sum;

/// Slack for closed-form solvers.
pub const EXACT_TOLERANCE: f64 = 1e-9;
/// Slack for iterative solvers.
pub const ITERATIVE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub x: Vec<f64>,
    pub y_true: Label,
    pub covered: bool,
    pub realized_loss: f64,
    pub worst_case_loss: f64,
    pub misrobust: bool,
    pub lambda_hat: usize,
    pub set_was_empty: bool,
}

impl EvalRecord {
    pub fn new(problem: &Problem, x: &[f64], y: &Label, result: &SelectionResult) -> Result<Self> {
        Self::from_parts(problem.models, problem.loss, x, y, result)
    }

    pub fn from_parts(
        models: &[ScoreModel],
        spec: &crate::loss::LossSpec,
        x: &[f64],
        y: &Label,
        result: &SelectionResult,
    ) -> Result<Self> {
        let covered = !result.solution.set_was_empty && result.covers(models, x, y)?;
        let realized_loss = loss(spec, y, &result.solution.decision)?;
        let tol = if result.solution.approximate {
            ITERATIVE_TOLERANCE
        } else {
            EXACT_TOLERANCE
        };
        let worst = result.solution.worst_case_loss;
        Ok(Self {
            x: x.to_vec(),
            y_true: y.clone(),
            covered,
            realized_loss,
            worst_case_loss: worst,
            misrobust: realized_loss > worst + tol,
            lambda_hat: result.lambda_hat,
            set_was_empty: result.solution.set_was_empty,
        })
    }
}

fn nonempty(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    Ok(())
}

fn rate(records: &[EvalRecord], f: impl Fn(&EvalRecord) -> bool) -> f64 {
    records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
}

pub fn marginal_miscoverage(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records)?;
    Ok(rate(records, |r| !r.covered))
}

pub fn marginal_misrobustness(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records)?;
    Ok(rate(records, |r| r.misrobust))
}

pub fn average_loss(records: &[EvalRecord]) -> Result<f64> {
    nonempty(records)?;
    Ok(exact_sum(records.iter().map(|r| r.realized_loss)) / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    /// The quantile radius was zero; it was bumped to the smallest positive
    /// distance (or left at zero if every point coincides with the center).
    pub degenerate: bool,
}

impl Ball {
    pub fn contains(&self, x: &[f64]) -> bool {
        euclid(&self.center, x) <= self.radius
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `count` balls centered at uniformly drawn test points, each with radius
/// equal to the `mass` quantile of distances from the test set to its center.
pub fn sample_balls<R: Rng + ?Sized>(test_xs: &[Vec<f64>], count: usize, mass: f64, rng: &mut R) -> Result<Vec<Ball>> {
    if test_xs.is_empty() {
        return Err(Error::Empty("ball centers"));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(invalid(format!("ball mass must lie in (0, 1], got {mass}")));
    }
    (0..count)
        .map(|_| {
            let center = test_xs[rng.gen_range(0..test_xs.len())].clone();
            let dists: Vec<f64> = test_xs.iter().map(|x| euclid(x, &center)).collect();
            let mut radius = empirical_quantile(&dists, mass)?;
            let mut degenerate = false;
            if radius == 0.0 {
                degenerate = true;
                radius = dists.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
                if radius.is_infinite() {
                    radius = 0.0;
                }
            }
            Ok(Ball {
                center,
                radius,
                degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Miscoverage,
    Misrobustness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallRates {
    /// Worst case: largest within-ball rate.
    pub max: f64,
    pub min: f64,
    /// Balls without any record.
    pub skipped: usize,
}

pub fn worst_case_conditional(records: &[EvalRecord], balls: &[Ball], which: Which) -> Result<BallRates> {
    nonempty(records)?;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut skipped = 0;
    for b in balls {
        let members: Vec<&EvalRecord> = records.iter().filter(|r| b.contains(&r.x)).collect();
        if members.is_empty() {
            skipped += 1;
            continue;
        }
        let bad = members
            .iter()
            .filter(|r| match which {
                Which::Miscoverage => !r.covered,
                Which::Misrobustness => r.misrobust,
            })
            .count();
        let v = bad as f64 / members.len() as f64;
        max = max.max(v);
        min = min.min(v);
    }
    if skipped == balls.len() {
        return Err(Error::Empty("balls with members"));
    }
    Ok(BallRates { max, min, skipped })
}

/// Half-open interval condition `lower <= x[feature] < upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub feature: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// A covariate group: conjunction of interval conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub conditions: Vec<Condition>,
}

impl Group {
    pub fn new(name: impl Into<String>, conditions: Vec<Condition>) -> Self {
        Self {
            name: name.into(),
            conditions,
        }
    }

    /// Single-feature interval group.
    pub fn interval(name: impl Into<String>, feature: usize, lower: Option<f64>, upper: Option<f64>) -> Self {
        Self::new(name, vec![Condition { feature, lower, upper }])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|c| {
            let v = x.get(c.feature).copied().unwrap_or(f64::NAN);
            c.lower.map_or(true, |l| v >= l) && c.upper.map_or(true, |u| v < u)
        })
    }
}

fn members<'r>(records: &'r [EvalRecord], g: &Group) -> Vec<&'r EvalRecord> {
    records.iter().filter(|r| g.contains(&r.x)).collect()
}

/// Mean realized loss per group; `None` for groups without records.
pub fn group_conditional_loss(records: &[EvalRecord], groups: &[Group]) -> Vec<Option<f64>> {
    groups
        .iter()
        .map(|g| {
            let m = members(records, g);
            (!m.is_empty()).then(|| exact_sum(m.iter().map(|r| r.realized_loss)) / m.len() as f64)
        })
        .collect()
}

fn gap(records: &[EvalRecord], groups: &[Group], alpha: f64, ok: impl Fn(&EvalRecord) -> bool) -> f64 {
    groups
        .iter()
        .filter_map(|g| {
            let m = members(records, g);
            (!m.is_empty()).then(|| {
                let r = m.iter().filter(|r| ok(r)).count() as f64 / m.len() as f64;
                (r - (1.0 - alpha)).abs()
            })
        })
        .sum()
}

/// `Σ_g |coverage_g - (1-α)|` over nonempty groups.
pub fn cov_gap(records: &[EvalRecord], groups: &[Group], alpha: f64) -> f64 {
    gap(records, groups, alpha, |r| r.covered)
}

/// `Σ_g |robustness_g - (1-α)|` over nonempty groups.
pub fn rob_gap(records: &[EvalRecord], groups: &[Group], alpha: f64) -> f64 {
    gap(records, groups, alpha, |r| !r.misrobust)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(x: f64, covered: bool, misrobust: bool, loss: f64) -> EvalRecord {
        EvalRecord {
            x: vec![x],
            y_true: Label::Class(0),
            covered,
            realized_loss: loss,
            worst_case_loss: loss,
            misrobust,
            lambda_hat: 0,
            set_was_empty: false,
        }
    }

    #[test]
    fn marginal_rates() {
        let all: Vec<_> = (0..10).map(|i| rec(i as f64, true, false, 2.0)).collect();
        assert_eq!(marginal_miscoverage(&all).unwrap(), 0.0);
        assert_eq!(marginal_misrobustness(&all).unwrap(), 0.0);
        assert_eq!(average_loss(&all).unwrap(), 2.0);
        let none: Vec<_> = (0..10).map(|i| rec(i as f64, false, true, 0.0)).collect();
        assert_eq!(marginal_miscoverage(&none).unwrap(), 1.0);
        assert_eq!(marginal_misrobustness(&none).unwrap(), 1.0);
        let some: Vec<_> = (0..10).map(|i| rec(i as f64, i >= 3, i < 3, if i % 2 == 0 { 0.0 } else { 4.0 })).collect();
        assert!((marginal_miscoverage(&some).unwrap() - 0.3).abs() < 1e-15);
        assert!((marginal_misrobustness(&some).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(average_loss(&some).unwrap(), 2.0);
        assert!(average_loss(&[]).is_err());
    }

    #[test]
    fn covid_average_loss() {
        // three decisions under the triage matrix: (Normal, No Action) = 0,
        // (COVID-19, Antibiotics) = 7, (Pneumonia, Additional Testing) = 3
        let m = crate::loss::covid_matrix();
        let picks = [(0, 0), (1, 1), (2, 3)];
        let records: Vec<_> = picks
            .iter()
            .map(|&(y, z)| {
                let l = loss(&m, &Label::Class(y), &crate::loss::Decision::Index(z)).unwrap();
                rec(0.0, true, false, l)
            })
            .collect();
        assert!((average_loss(&records).unwrap() - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn balls() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for b in sample_balls(&xs, 10, 0.4, &mut rng).unwrap() {
            let mut d: Vec<f64> = xs.iter().map(|x| (x[0] - b.center[0]).abs()).collect();
            d.sort_by(f64::total_cmp);
            assert_eq!(b.radius, d[1]);
            assert!(xs.iter().filter(|x| b.contains(x)).count() >= 2);
        }
        for b in sample_balls(&xs, 5, 1.0, &mut rng).unwrap() {
            assert!(xs.iter().all(|x| b.contains(x)));
        }
        let one = sample_balls(&[vec![1.0]], 1, 0.5, &mut rng).unwrap();
        assert!(one[0].degenerate && one[0].radius == 0.0);
        let dup = sample_balls(&[vec![1.0], vec![1.0], vec![1.0], vec![3.0]], 3, 0.25, &mut rng).unwrap();
        assert!(dup.iter().all(|b| b.radius > 0.0));
    }

    #[test]
    fn worst_case_rates() {
        let uniform: Vec<_> = (0..20).map(|i| rec(i as f64, i % 5 != 0, false, 0.0)).collect();
        let balls: Vec<Ball> = (0..4)
            .map(|k| Ball {
                center: vec![5.0 * k as f64 + 2.0],
                radius: 2.0,
                degenerate: false,
            })
            .collect();
        let r = worst_case_conditional(&uniform, &balls, Which::Miscoverage).unwrap();
        assert_eq!((r.max, r.min), (0.2, 0.2));
        // failures only in [0, 4]
        let local: Vec<_> = (0..20).map(|i| rec(i as f64, !(i < 3), false, 0.0)).collect();
        let r = worst_case_conditional(&local, &balls, Which::Miscoverage).unwrap();
        assert_eq!(r.max, 0.6);
        assert_eq!(r.min, 0.0);
        let marginal = marginal_miscoverage(&local).unwrap();
        assert!(r.max >= marginal);
        assert!(worst_case_conditional(&[], &balls, Which::Miscoverage).is_err());
    }

    #[test]
    fn groups_and_gaps() {
        let records: Vec<_> = (0..10).map(|i| rec(i as f64, true, false, if i < 5 { 1.0 } else { 3.0 })).collect();
        let one = vec![Group::interval("all", 0, None, None)];
        assert_eq!(group_conditional_loss(&records, &one), vec![Some(2.0)]);
        let two = vec![
            Group::interval("lo", 0, None, Some(5.0)),
            Group::interval("hi", 0, Some(5.0), None),
            Group::interval("none", 0, Some(100.0), None),
        ];
        assert_eq!(group_conditional_loss(&records, &two), vec![Some(1.0), Some(3.0), None]);
        let four: Vec<Group> = (0..4)
            .map(|g| Group::interval(format!("g{g}"), 0, Some(g as f64 * 2.5), Some((g + 1) as f64 * 2.5)))
            .collect();
        assert!((cov_gap(&records, &four, 0.1) - 0.4).abs() < 1e-12);
        // rates (0.8, 1.0)
        let mixed: Vec<_> = (0..10).map(|i| rec(i as f64, !(i == 0), false, 0.0)).collect();
        let halves = vec![
            Group::interval("a", 0, None, Some(5.0)),
            Group::interval("b", 0, Some(5.0), None),
        ];
        assert!((cov_gap(&mixed, &halves, 0.1) - 0.2).abs() < 1e-12);
        let exact: Vec<_> = (0..10).map(|i| rec(i as f64, i != 0, false, 0.0)).collect();
        assert!(cov_gap(&exact, &one, 0.1).abs() < 1e-12);
        assert!((rob_gap(&exact, &one, 0.1) - 0.1).abs() < 1e-12);
    }
}
