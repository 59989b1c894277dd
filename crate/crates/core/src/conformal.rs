//! Split and localized conformal prediction sets.

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::quantile::{inflated_conformal_threshold, weighted_quantile};
use crate::score::{evaluate_scores, ScoreModel};
use crate::set::PredictionSet;

/// `Q_{(1-α)(1+1/n)}` of the labeled scores of `model`.
pub fn split_threshold(model: &ScoreModel, labeled: &LabeledDataset, alpha: f64) -> Result<f64> {
    inflated_conformal_threshold(&evaluate_scores(model, labeled)?, alpha)
}

/// Split conformal set at `x`, in closed form where the geometry allows.
/// Classification sets are always materialized as label lists.
pub fn split_set(model: &ScoreModel, labeled: &LabeledDataset, alpha: f64, x: &[f64]) -> Result<PredictionSet> {
    let q = split_threshold(model, labeled, alpha)?;
    Ok(model.at(x)?.set(q))
}

/// `S(x, y) <= q`, boundary included.
pub fn membership(model: &ScoreModel, q: f64, x: &[f64], y: &Label) -> Result<bool> {
    Ok(model.score(x, y)? <= q)
}

/// Localized threshold: weighted `(1-α)` quantile of the labeled scores, no
/// finite-sample inflation.
pub fn lcp_threshold(scores: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    weighted_quantile(scores, weights, 1.0 - alpha)
}

pub fn lcp_set(
    model: &ScoreModel,
    labeled: &LabeledDataset,
    weights: &[f64],
    alpha: f64,
    x: &[f64],
) -> Result<PredictionSet> {
    let q = lcp_threshold(&evaluate_scores(model, labeled)?, weights, alpha)?;
    Ok(model.at(x)?.set(q))
}

/// Members of `label_space` in a classification set. Sublevel sets are
/// resolved with `model` at `x`.
pub fn finite_extent(
    set: &PredictionSet,
    label_space: &[usize],
    model: Option<(&ScoreModel, &[f64])>,
) -> Result<Vec<usize>> {
    match set {
        PredictionSet::FiniteLabels(labels) => Ok(label_space
            .iter()
            .copied()
            .filter(|c| labels.binary_search(c).is_ok())
            .collect()),
        PredictionSet::Sublevel { model_id, threshold } => {
            let (m, x) = model.ok_or_else(|| Error::InvalidArgument("sublevel set needs its score model".into()))?;
            if m.id != *model_id {
                return Err(Error::Incompatible(format!(
                    "set belongs to model {model_id}, got model {}",
                    m.id
                )));
            }
            let scorer = m.at(x)?;
            let mut out = Vec::new();
            for &c in label_space {
                if scorer.score(&Label::Class(c))? <= *threshold {
                    out.push(c);
                }
            }
            Ok(out)
        }
        _ => Err(Error::Incompatible("finite extent of a regression set".into())),
    }
}
