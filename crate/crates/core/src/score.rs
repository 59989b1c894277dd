//! Candidate nonconformity scores.
//!
//! A [`ScoreModel`] maps `(x, y)` to a real score where small means
//! conforming. Its [`Geometry`] tells the rest of the crate which closed-form
//! prediction set and robust solver apply:
//!
//! * `Box`: `max_j |y_j - mu(x)_j|`
//! * `Ellipsoid`: `(y - mu(x))ᵀ Σ(x)⁻¹ (y - mu(x))`, stored in squared units
//! * `Softmax`: `1 - f^y(x)`
//! * `Greedy`: cumulative probability mass down to `y` plus a label penalty
//! * `Custom`: arbitrary function, only sublevel sets are available

use std::fmt;
use std::sync::Arc;

use crate::data::{Label, LabeledDataset, TaskKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::set::PredictionSet;

/// Class-probability estimator `x -> f(x) ∈ simplex`.
pub trait ClassProbabilities: Send + Sync + fmt::Debug {
    fn num_classes(&self) -> usize;
    fn probabilities(&self, x: &[f64]) -> Vec<f64>;
}

/// Multi-output point predictor `x -> mu(x) ∈ R^p`.
pub trait MeanFunction: Send + Sync + fmt::Debug {
    fn output_dim(&self) -> usize;
    fn mean(&self, x: &[f64]) -> Vec<f64>;
}

/// Covariance estimator `x -> Σ(x)`, symmetric positive definite.
pub trait CovarianceFunction: Send + Sync + fmt::Debug {
    fn covariance(&self, x: &[f64]) -> Matrix;
}

pub type ScoreFn = Arc<dyn Fn(&[f64], &Label) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantProbabilities(pub Vec<f64>);

impl ClassProbabilities for ConstantProbabilities {
    fn num_classes(&self) -> usize {
        self.0.len()
    }
    fn probabilities(&self, _x: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMean(pub Vec<f64>);

impl MeanFunction for ConstantMean {
    fn output_dim(&self) -> usize {
        self.0.len()
    }
    fn mean(&self, _x: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Affine predictor: `mu(x)_j = coef[j][0] + Σ_k coef[j][k+1] x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMean {
    pub coef: Vec<Vec<f64>>,
}

impl MeanFunction for LinearMean {
    fn output_dim(&self) -> usize {
        self.coef.len()
    }
    fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .map(|c| c[0] + c[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCovariance(pub Matrix);

impl CovarianceFunction for ConstantCovariance {
    fn covariance(&self, _x: &[f64]) -> Matrix {
        self.0.clone()
    }
}

#[derive(Clone)]
pub enum Geometry {
    Custom {
        score: ScoreFn,
        task: TaskKind,
    },
    Box {
        mean: Arc<dyn MeanFunction>,
    },
    Ellipsoid {
        mean: Arc<dyn MeanFunction>,
        cov: Arc<dyn CovarianceFunction>,
    },
    Softmax {
        probs: Arc<dyn ClassProbabilities>,
    },
    Greedy {
        probs: Arc<dyn ClassProbabilities>,
        lambda: f64,
        penalty: Vec<f64>,
    },
}

impl fmt::Debug for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Custom { task, .. } => f.debug_struct("Custom").field("task", task).finish(),
            Geometry::Box { mean } => f.debug_struct("Box").field("mean", mean).finish(),
            Geometry::Ellipsoid { mean, cov } => f
                .debug_struct("Ellipsoid")
                .field("mean", mean)
                .field("cov", cov)
                .finish(),
            Geometry::Softmax { probs } => f.debug_struct("Softmax").field("probs", probs).finish(),
            Geometry::Greedy { probs, lambda, penalty } => f
                .debug_struct("Greedy")
                .field("probs", probs)
                .field("lambda", lambda)
                .field("penalty", penalty)
                .finish(),
        }
    }
}

/// A candidate score `S_λ` with its index `λ` in the candidate family.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    pub id: usize,
    pub name: String,
    pub geometry: Geometry,
}

impl ScoreModel {
    pub fn new(id: usize, name: impl Into<String>, geometry: Geometry) -> Self {
        Self {
            id,
            name: name.into(),
            geometry,
        }
    }

    pub fn softmax(id: usize, probs: Arc<dyn ClassProbabilities>) -> Self {
        Self::new(id, format!("softmax-{id}"), Geometry::Softmax { probs })
    }

    pub fn box_model(id: usize, mean: Arc<dyn MeanFunction>) -> Self {
        Self::new(id, format!("box-{id}"), Geometry::Box { mean })
    }

    pub fn ellipsoid(id: usize, mean: Arc<dyn MeanFunction>, cov: Arc<dyn CovarianceFunction>) -> Self {
        Self::new(id, format!("ellipsoid-{id}"), Geometry::Ellipsoid { mean, cov })
    }

    pub fn custom(id: usize, task: TaskKind, score: ScoreFn) -> Self {
        Self::new(id, format!("custom-{id}"), Geometry::Custom { score, task })
    }

    pub fn task(&self) -> TaskKind {
        match &self.geometry {
            Geometry::Custom { task, .. } => *task,
            Geometry::Box { mean } | Geometry::Ellipsoid { mean, .. } => TaskKind::Regression {
                dim: mean.output_dim(),
            },
            Geometry::Softmax { probs } | Geometry::Greedy { probs, .. } => TaskKind::Classification {
                num_classes: probs.num_classes(),
            },
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.task() {
            TaskKind::Classification { num_classes } => Some(num_classes),
            TaskKind::Regression { .. } => None,
        }
    }

    /// Evaluates everything about `x` the score needs once, so that many
    /// labels can be scored at the same covariate cheaply.
    pub fn at(&self, x: &[f64]) -> Result<PointScorer> {
        Ok(match &self.geometry {
            Geometry::Custom { score, task } => match task {
                TaskKind::Classification { num_classes } => {
                    let scores = (0..*num_classes).map(|c| score(x, &Label::Class(c))).collect();
                    PointScorer::Classes { scores }
                }
                TaskKind::Regression { .. } => PointScorer::Custom {
                    model_id: self.id,
                    x: x.to_vec(),
                    score: score.clone(),
                },
            },
            Geometry::Box { mean } => PointScorer::Box { center: mean.mean(x) },
            Geometry::Ellipsoid { mean, cov } => {
                let center = mean.mean(x);
                let cov = cov.covariance(x);
                if cov.len() != center.len() {
                    return Err(Error::DimensionMismatch {
                        context: "ellipsoid covariance",
                        expected: center.len(),
                        got: cov.len(),
                    });
                }
                let chol = Cholesky::new(&cov)?;
                PointScorer::Ellipsoid { center, cov, chol }
            }
            Geometry::Softmax { probs } => PointScorer::Classes {
                scores: probs.probabilities(x).into_iter().map(|p| 1.0 - p).collect(),
            },
            Geometry::Greedy { probs, lambda, penalty } => PointScorer::Classes {
                scores: greedy_scores(&probs.probabilities(x), *lambda, penalty),
            },
        })
    }

    pub fn score(&self, x: &[f64], y: &Label) -> Result<f64> {
        self.at(x)?.score(y)
    }
}

/// Greedy max-min score for every label: with classes ranked by decreasing
/// probability (ties by index) and `y` at rank `r`, the score is the mass of
/// the top `r` classes plus `lambda` times their summed penalties.
pub fn greedy_scores(probs: &[f64], lambda: f64, penalty: &[f64]) -> Vec<f64> {
    let k = probs.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; k];
    let mut mass = 0.0;
    let mut pen = 0.0;
    for &c in &order {
        mass += probs[c];
        pen += penalty.get(c).copied().unwrap_or(0.0);
        out[c] = mass + lambda * pen;
    }
    out
}

/// Per-covariate score evaluator returned by [`ScoreModel::at`].
#[derive(Clone)]
pub enum PointScorer {
    Classes {
        scores: Vec<f64>,
    },
    Box {
        center: Vec<f64>,
    },
    Ellipsoid {
        center: Vec<f64>,
        cov: Matrix,
        chol: Cholesky,
    },
    Custom {
        model_id: usize,
        x: Vec<f64>,
        score: ScoreFn,
    },
}

impl fmt::Debug for PointScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointScorer::Classes { scores } => f.debug_struct("Classes").field("scores", scores).finish(),
            PointScorer::Box { center } => f.debug_struct("Box").field("center", center).finish(),
            PointScorer::Ellipsoid { center, cov, .. } => f
                .debug_struct("Ellipsoid")
                .field("center", center)
                .field("cov", cov)
                .finish(),
            PointScorer::Custom { model_id, x, .. } => f
                .debug_struct("Custom")
                .field("model_id", model_id)
                .field("x", x)
                .finish(),
        }
    }
}

impl PointScorer {
    pub fn score(&self, y: &Label) -> Result<f64> {
        match (self, y) {
            (PointScorer::Classes { scores }, Label::Class(c)) => {
                scores.get(*c).copied().ok_or(Error::IndexOutOfRange {
                    context: "class label",
                    index: *c,
                    len: scores.len(),
                })
            }
            (PointScorer::Box { center }, Label::Vector(v)) => {
                check_dim(center.len(), v.len())?;
                Ok(center.iter().zip(v).map(|(m, y)| (y - m).abs()).fold(0.0, f64::max))
            }
            (PointScorer::Ellipsoid { center, chol, .. }, Label::Vector(v)) => {
                check_dim(center.len(), v.len())?;
                Ok(self.ellipsoid_score_unchecked(center, chol, v))
            }
            (PointScorer::Custom { x, score, .. }, y) => Ok(score(x, y)),
            _ => Err(invalid("label type does not match the score model")),
        }
    }

    /// Ellipsoid score for a raw vector label, no dimension checks.
    pub fn score_vector(&self, v: &[f64]) -> f64 {
        match self {
            PointScorer::Box { center } => center.iter().zip(v).map(|(m, y)| (y - m).abs()).fold(0.0, f64::max),
            PointScorer::Ellipsoid { center, chol, .. } => self.ellipsoid_score_unchecked(center, chol, v),
            PointScorer::Custom { x, score, .. } => score(x, &Label::Vector(v.to_vec())),
            PointScorer::Classes { .. } => f64::NAN,
        }
    }

    fn ellipsoid_score_unchecked(&self, center: &[f64], chol: &Cholesky, v: &[f64]) -> f64 {
        let r: Vec<f64> = v.iter().zip(center).map(|(a, b)| a - b).collect();
        chol.inv_quad_form(&r)
    }

    /// Scores of every class, for classification scorers.
    pub fn class_scores(&self) -> Option<&[f64]> {
        match self {
            PointScorer::Classes { scores } => Some(scores),
            _ => None,
        }
    }

    /// Sublevel set `{y : S(x, y) <= q}` in the most concrete form available.
    pub fn set(&self, q: f64) -> PredictionSet {
        match self {
            PointScorer::Classes { scores } => PredictionSet::FiniteLabels(
                scores
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s <= q)
                    .map(|(c, _)| c)
                    .collect(),
            ),
            PointScorer::Box { center } => PredictionSet::Box {
                center: center.clone(),
                half_width: q,
            },
            PointScorer::Ellipsoid { center, cov, .. } => PredictionSet::Ellipsoid {
                center: center.clone(),
                cov: cov.clone(),
                radius_sq: q,
            },
            PointScorer::Custom { model_id, .. } => PredictionSet::Sublevel {
                model_id: *model_id,
                threshold: q,
            },
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context: "label dimension",
            expected,
            got,
        });
    }
    Ok(())
}

/// `S_λ(X_i, Y_i)` for every row.
pub fn evaluate_scores(model: &ScoreModel, data: &LabeledDataset) -> Result<Vec<f64>> {
    check_compatible(model, data)?;
    data.xs()
        .iter()
        .zip(data.ys())
        .map(|(x, y)| model.score(x, y))
        .collect()
}

pub(crate) fn check_compatible(model: &ScoreModel, data: &LabeledDataset) -> Result<()> {
    match (model.task(), data.kind()) {
        (TaskKind::Classification { num_classes: a }, TaskKind::Classification { num_classes: b }) => {
            if a != b {
                return Err(Error::DimensionMismatch {
                    context: "number of classes",
                    expected: a,
                    got: b,
                });
            }
        }
        (TaskKind::Regression { dim: a }, TaskKind::Regression { dim: b }) => check_dim(a, b)?,
        _ => {
            return Err(Error::Incompatible(format!(
                "model {} and dataset disagree on classification vs regression",
                model.id
            )))
        }
    }
    Ok(())
}
