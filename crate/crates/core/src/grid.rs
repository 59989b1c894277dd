//! Finite label grids for discretized full-conformal regression.

use crate::error::{invalid, Error, Result};

/// Per-coordinate range padding as a fraction of the observed range.
pub const DEFAULT_PADDING: f64 = 0.25;
pub const DEFAULT_POINTS_PER_AXIS: usize = 25;
pub const DEFAULT_MAX_POINTS: usize = 625;

/// Cartesian product of uniform axes. Points are enumerated in row-major
/// order (last coordinate fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    axes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub padding: f64,
    pub points_per_axis: usize,
    pub max_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            padding: DEFAULT_PADDING,
            points_per_axis: DEFAULT_POINTS_PER_AXIS,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

impl LabelGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(Error::Empty("grid axis"));
        }
        for a in &axes {
            if a.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(invalid("grid axes must be strictly increasing"));
            }
        }
        Ok(Self { axes })
    }

    /// Uniform axis with `points` values from `lo` to `hi` inclusive.
    pub fn uniform_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
        if points == 1 || hi <= lo {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (points - 1) as f64;
        (0..points).map(|i| if i + 1 == points { hi } else { lo + step * i as f64 }).collect()
    }

    /// Grid covering the observed labels padded by `cfg.padding` times the
    /// range on each side. The per-axis resolution is reduced if needed so the
    /// total does not exceed `cfg.max_points`.
    pub fn from_labels(labels: &[Vec<f64>], cfg: &GridConfig) -> Result<Self> {
        let p = labels.first().map(Vec::len).ok_or(Error::Empty("grid labels"))?;
        if p == 0 {
            return Err(Error::Empty("label dimension"));
        }
        if cfg.points_per_axis == 0 || cfg.max_points == 0 {
            return Err(invalid("grid resolution must be positive"));
        }
        let mut per_axis = cfg.points_per_axis;
        while per_axis > 1 && (per_axis as f64).powi(p as i32) > cfg.max_points as f64 {
            per_axis -= 1;
        }
        let axes = (0..p)
            .map(|j| {
                let lo = labels.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min);
                let hi = labels.iter().map(|y| y[j]).fold(f64::NEG_INFINITY, f64::max);
                let r = cfg.padding * (hi - lo);
                Self::uniform_axis(lo - r, hi + r, per_axis)
            })
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point with flat index `idx`.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            let a = &self.axes[j];
            out[j] = a[idx % a.len()];
            idx /= a.len();
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    fn nearest_on_axis(axis: &[f64], v: f64) -> usize {
        let pos = axis.partition_point(|a| *a < v);
        if pos == 0 {
            return 0;
        }
        if pos == axis.len() {
            return axis.len() - 1;
        }
        // ties go to the lower grid value
        if v - axis[pos - 1] <= axis[pos] - v {
            pos - 1
        } else {
            pos
        }
    }

    /// Flat index of the nearest grid point (coordinate-wise, which is the
    /// Euclidean nearest point for a product grid).
    pub fn snap_index(&self, y: &[f64]) -> usize {
        self.axes
            .iter()
            .zip(y)
            .fold(0, |acc, (a, v)| acc * a.len() + Self::nearest_on_axis(a, *v))
    }

    pub fn snap(&self, y: &[f64]) -> Vec<f64> {
        self.point(self.snap_index(y))
    }

    /// Whether `y` lies within the grid's bounding box.
    pub fn covers(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && self
                .axes
                .iter()
                .zip(y)
                .all(|(a, v)| *v >= a[0] && *v <= a[a.len() - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_and_enumeration() {
        let g = LabelGrid::new(vec![vec![-1.0, 0.0, 1.0], vec![0.0, 10.0]]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(0), vec![-1.0, 0.0]);
        assert_eq!(g.point(5), vec![1.0, 10.0]);
        assert_eq!(g.snap(&[0.4, 6.0]), vec![0.0, 10.0]);
        assert_eq!(g.snap(&[-0.5, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(g.snap(&[7.0, -3.0]), vec![1.0, 0.0]);
        for i in 0..g.len() {
            assert_eq!(g.snap_index(&g.point(i)), i);
        }
    }

    #[test]
    fn from_labels_respects_cap() {
        let labels = vec![vec![0.0, 0.0], vec![4.0, 2.0]];
        let g = LabelGrid::from_labels(&labels, &GridConfig::default()).unwrap();
        assert_eq!(g.len(), 625);
        assert_eq!(g.axes()[0][0], -1.0);
        assert_eq!(g.axes()[0][24], 5.0);
        let g3 = LabelGrid::from_labels(&[vec![0.0; 3], vec![1.0; 3]], &GridConfig::default()).unwrap();
        assert!(g3.len() <= 625);
        assert!(labels.iter().all(|y| g.covers(y)));
    }
}
