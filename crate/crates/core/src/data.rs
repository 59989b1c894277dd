//! Labeled datasets.

use crate::error::{invalid, Error, Result};

/// A label: dense class index `0..K` or a real vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Vector(Vec<f64>),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Label::Vector(v) => Some(v),
            Label::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification { num_classes: usize },
    Regression { dim: usize },
}

/// Covariate/label pairs sharing a covariate dimension and a label type.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<Label>,
    kind: TaskKind,
}

impl LabeledDataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Label>, kind: TaskKind) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("labeled dataset"));
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let d = xs[0].len();
        for x in &xs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "covariate dimension",
                    expected: d,
                    got: x.len(),
                });
            }
        }
        for y in &ys {
            match (kind, y) {
                (TaskKind::Classification { num_classes }, Label::Class(c)) => {
                    if *c >= num_classes {
                        return Err(Error::IndexOutOfRange {
                            context: "class label",
                            index: *c,
                            len: num_classes,
                        });
                    }
                }
                (TaskKind::Regression { dim }, Label::Vector(v)) => {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch {
                            context: "label dimension",
                            expected: dim,
                            got: v.len(),
                        });
                    }
                }
                _ => return Err(invalid("label type does not match the task kind")),
            }
        }
        Ok(Self { xs, ys, kind })
    }

    pub fn classification(xs: Vec<Vec<f64>>, ys: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(
            xs,
            ys.into_iter().map(Label::Class).collect(),
            TaskKind::Classification { num_classes },
        )
    }

    pub fn regression(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        let dim = ys.first().map(Vec::len).ok_or(Error::Empty("labeled dataset"))?;
        Self::new(
            xs,
            ys.into_iter().map(Label::Vector).collect(),
            TaskKind::Regression { dim },
        )
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[Label] {
        &self.ys
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i]
    }

    pub fn y(&self, i: usize) -> &Label {
        &self.ys[i]
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn covariate_dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Classification { num_classes } => Some(num_classes),
            TaskKind::Regression { .. } => None,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::IndexOutOfRange {
                    context: "dataset row",
                    index: r,
                    len: self.len(),
                });
            }
            xs.push(self.xs[r].clone());
            ys.push(self.ys[r].clone());
        }
        Self::new(xs, ys, self.kind)
    }

    /// Copy with row `j` replaced by `(x, y)`.
    pub fn with_row_replaced(&self, j: usize, x: Vec<f64>, y: Label) -> Result<Self> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange {
                context: "dataset row",
                index: j,
                len: self.len(),
            });
        }
        let mut xs = self.xs.clone();
        let mut ys = self.ys.clone();
        xs[j] = x;
        ys[j] = y;
        Self::new(xs, ys, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shapes() {
        assert!(LabeledDataset::classification(vec![], vec![], 2).is_err());
        assert!(LabeledDataset::classification(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], 2).is_err());
        assert!(matches!(
            LabeledDataset::classification(vec![vec![1.0]], vec![3], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(LabeledDataset::regression(vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let d = LabeledDataset::regression(vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(d.kind(), TaskKind::Regression { dim: 1 });
        assert_eq!(d.subset(&[1]).unwrap().y(0), &Label::Vector(vec![2.0]));
    }
}
