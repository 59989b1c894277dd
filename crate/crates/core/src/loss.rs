//! Decision losses `φ(y, z)`.

use crate::data::Label;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

/// Loss family. Finite matrices are indexed `[label][decision]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    FiniteMatrix {
        matrix: Matrix,
        decision_names: Vec<String>,
    },
    /// `φ(y, z) = -yᵀz` with `z` on the probability simplex of dimension `dim`.
    BilinearPortfolio { dim: usize },
}

/// A decision: an index into the decision list or a simplex vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Index(usize),
    Weights(Vec<f64>),
}

impl Decision {
    pub fn index(&self) -> Option<usize> {
        match self {
            Decision::Index(i) => Some(*i),
            Decision::Weights(_) => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Decision::Weights(w) => Some(w),
            Decision::Index(_) => None,
        }
    }
}

impl LossSpec {
    /// Validated finite matrix loss with default decision names `d0, d1, ...`.
    pub fn matrix(matrix: Matrix) -> Result<Self> {
        let cols = matrix.first().map(Vec::len).ok_or(Error::Empty("loss matrix"))?;
        if cols == 0 {
            return Err(Error::Empty("loss matrix decisions"));
        }
        for row in &matrix {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "loss matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(invalid("loss matrix entries must be finite"));
            }
        }
        Ok(LossSpec::FiniteMatrix {
            decision_names: (0..cols).map(|j| format!("d{j}")).collect(),
            matrix,
        })
    }

    pub fn with_decision_names(self, names: &[&str]) -> Result<Self> {
        match self {
            LossSpec::FiniteMatrix { matrix, .. } => {
                if names.len() != matrix[0].len() {
                    return Err(Error::DimensionMismatch {
                        context: "decision names",
                        expected: matrix[0].len(),
                        got: names.len(),
                    });
                }
                Ok(LossSpec::FiniteMatrix {
                    matrix,
                    decision_names: names.iter().map(|s| s.to_string()).collect(),
                })
            }
            other => Ok(other),
        }
    }

    pub fn num_labels(&self) -> Option<usize> {
        match self {
            LossSpec::FiniteMatrix { matrix, .. } => Some(matrix.len()),
            LossSpec::BilinearPortfolio { .. } => None,
        }
    }

    pub fn num_decisions(&self) -> Option<usize> {
        match self {
            LossSpec::FiniteMatrix { matrix, .. } => Some(matrix[0].len()),
            LossSpec::BilinearPortfolio { .. } => None,
        }
    }
}

/// `φ(y, z)`.
pub fn loss(spec: &LossSpec, y: &Label, z: &Decision) -> Result<f64> {
    match (spec, y, z) {
        (LossSpec::FiniteMatrix { matrix, .. }, Label::Class(c), Decision::Index(d)) => {
            let row = matrix.get(*c).ok_or(Error::IndexOutOfRange {
                context: "loss matrix label",
                index: *c,
                len: matrix.len(),
            })?;
            row.get(*d).copied().ok_or(Error::IndexOutOfRange {
                context: "loss matrix decision",
                index: *d,
                len: row.len(),
            })
        }
        (LossSpec::BilinearPortfolio { dim }, Label::Vector(v), Decision::Weights(w)) => {
            if v.len() != *dim || w.len() != *dim {
                return Err(Error::DimensionMismatch {
                    context: "portfolio loss",
                    expected: *dim,
                    got: if v.len() != *dim { v.len() } else { w.len() },
                });
            }
            Ok(-dot(v, w))
        }
        _ => Err(invalid("label/decision type does not match the loss")),
    }
}

/// Triage loss for chest X-ray diagnosis. Rows: Normal, COVID-19, Pneumonia,
/// Lung Opacity. Columns: No Action, Antibiotics, Quarantine, Additional
/// Testing.
pub fn covid_matrix() -> LossSpec {
    LossSpec::FiniteMatrix {
        matrix: vec![
            vec![0.0, 8.0, 8.0, 6.0],
            vec![10.0, 7.0, 0.0, 2.0],
            vec![10.0, 0.0, 7.0, 3.0],
            vec![9.0, 6.0, 6.0, 0.0],
        ],
        decision_names: ["No Action", "Antibiotics", "Quarantine", "Additional Testing"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

pub const COVID_LABELS: [&str; 4] = ["Normal", "COVID-19", "Pneumonia", "Lung Opacity"];

/// 5-class loss used with the averaged-case classification generator.
pub fn averaged_case_matrix() -> LossSpec {
    LossSpec::matrix(vec![
        vec![0.0, 3.0, 5.0, 7.0, 10.0],
        vec![2.0, 0.0, 4.0, 6.0, 9.0],
        vec![2.5, 4.5, 0.0, 7.0, 8.0],
        vec![3.0, 5.0, 6.0, 0.0, 7.0],
        vec![3.5, 6.0, 8.0, 10.0, 0.0],
    ])
    .expect("constant matrix is valid")
}

/// 3-class loss used with the individualized classification generator,
/// rows = labels.
pub fn individualized_matrix() -> LossSpec {
    LossSpec::matrix(vec![
        vec![0.0, 4.0, 10.0],
        vec![2.0, 0.0, 9.0],
        vec![7.0, 6.0, 0.0],
    ])
    .expect("constant matrix is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covid_lookups() {
        let m = covid_matrix();
        assert_eq!(loss(&m, &Label::Class(0), &Decision::Index(0)).unwrap(), 0.0);
        assert_eq!(loss(&m, &Label::Class(1), &Decision::Index(2)).unwrap(), 0.0);
        assert!(matches!(
            loss(&m, &Label::Class(4), &Decision::Index(0)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn bilinear_is_negative_dot() {
        let s = LossSpec::BilinearPortfolio { dim: 2 };
        let v = loss(&s, &Label::Vector(vec![1.0, 2.0]), &Decision::Weights(vec![0.5, 0.5])).unwrap();
        assert_eq!(v, -1.5);
    }

    #[test]
    fn matrix_round_trips_bitwise() {
        let raw = vec![vec![0.1, -3.7e-300], vec![f64::MAX, 1.0 / 3.0]];
        let m = LossSpec::matrix(raw.clone()).unwrap();
        for (y, row) in raw.iter().enumerate() {
            for (z, v) in row.iter().enumerate() {
                let got = loss(&m, &Label::Class(y), &Decision::Index(z)).unwrap();
                assert_eq!(got.to_bits(), v.to_bits());
            }
        }
        assert!(LossSpec::matrix(vec![vec![f64::NAN]]).is_err());
    }
}
