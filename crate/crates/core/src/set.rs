//! Prediction set descriptors.

use crate::data::Label;
use crate::grid::LabelGrid;
use crate::linalg::{Cholesky, Matrix};

/// A prediction set `U(x)`. Emptiness is representable for every variant
/// (an empty label list, or a negative radius/half width).
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSet {
    /// Class indices, ascending.
    FiniteLabels(Vec<usize>),
    /// `{y : max_j |y_j - center_j| <= half_width}`; `+∞` is the whole space.
    Box { center: Vec<f64>, half_width: f64 },
    /// `{y : (y - center)ᵀ cov⁻¹ (y - center) <= radius_sq}`.
    Ellipsoid {
        center: Vec<f64>,
        cov: Matrix,
        radius_sq: f64,
    },
    /// Accepted points of a label grid. When `grid` is set, membership of an
    /// arbitrary label is decided by its nearest grid point.
    FinitePoints {
        points: Vec<Vec<f64>>,
        grid: Option<LabelGrid>,
    },
    /// `{y : S_model(x, y) <= threshold}` without a closed form.
    Sublevel { model_id: usize, threshold: f64 },
}

impl PredictionSet {
    /// Whether the set is known to be empty. Sublevel sets report `false`.
    pub fn is_empty(&self) -> bool {
        match self {
            PredictionSet::FiniteLabels(l) => l.is_empty(),
            PredictionSet::Box { half_width, .. } => *half_width < 0.0,
            PredictionSet::Ellipsoid { radius_sq, .. } => *radius_sq < 0.0,
            PredictionSet::FinitePoints { points, .. } => points.is_empty(),
            PredictionSet::Sublevel { .. } => false,
        }
    }

    /// Membership test. Returns `None` for sublevel sets, which need the score
    /// model to decide.
    pub fn contains(&self, y: &Label) -> Option<bool> {
        match (self, y) {
            (PredictionSet::FiniteLabels(l), Label::Class(c)) => Some(l.binary_search(c).is_ok()),
            (PredictionSet::Box { center, half_width }, Label::Vector(v)) => Some(
                v.len() == center.len()
                    && center.iter().zip(v).map(|(c, y)| (y - c).abs()).fold(0.0, f64::max) <= *half_width,
            ),
            (
                PredictionSet::Ellipsoid {
                    center,
                    cov,
                    radius_sq,
                },
                Label::Vector(v),
            ) => {
                if v.len() != center.len() || *radius_sq < 0.0 {
                    return Some(false);
                }
                if radius_sq.is_infinite() {
                    return Some(true);
                }
                let r: Vec<f64> = v.iter().zip(center).map(|(a, b)| a - b).collect();
                Some(Cholesky::new(cov).map(|c| c.inv_quad_form(&r) <= *radius_sq).unwrap_or(false))
            }
            (PredictionSet::FinitePoints { points, grid }, Label::Vector(v)) => {
                let snapped = match grid {
                    Some(g) => g.snap(v),
                    None => v.clone(),
                };
                Some(points.iter().any(|p| *p == snapped))
            }
            (PredictionSet::Sublevel { .. }, _) => None,
            _ => Some(false),
        }
    }

    /// Number of elements for finite variants.
    pub fn len(&self) -> Option<usize> {
        match self {
            PredictionSet::FiniteLabels(l) => Some(l.len()),
            PredictionSet::FinitePoints { points, .. } => Some(points.len()),
            _ => None,
        }
    }
}
