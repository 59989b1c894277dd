//! Small dense linear algebra for the low-dimensional matrices used here
//! (covariances of 2-3 dimensional labels, least-squares normal equations).

use crate::error::{Error, Result};

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

pub fn identity(p: usize) -> Matrix {
    (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `zᵀ M z`
pub fn quad_form(m: &Matrix, z: &[f64]) -> f64 {
    dot(z, &mat_vec(m, z))
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(a: &Matrix) -> Matrix {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn check_square(m: &Matrix, context: &'static str) -> Result<usize> {
    let p = m.len();
    for row in m {
        if row.len() != p {
            return Err(Error::DimensionMismatch {
                context,
                expected: p,
                got: row.len(),
            });
        }
    }
    Ok(p)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    pub fn new(m: &Matrix) -> Result<Self> {
        let p = check_square(m, "cholesky")?;
        let mut l = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                if (m[i][j] - m[j][i]).abs() > 1e-9 * (1.0 + m[i][j].abs()) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        for j in 0..p {
            let mut d = m[j][j];
            for k in 0..j {
                d -= l[j][k] * l[j][k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[j][j] = djj;
            for i in (j + 1)..p {
                let mut s = m[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `L w = v`.
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut w = vec![0.0; p];
        for i in 0..p {
            let mut s = v[i];
            for k in 0..i {
                s -= self.lower[i][k] * w[k];
            }
            w[i] = s / self.lower[i][i];
        }
        w
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.forward(b);
        let p = self.dim();
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = w[i];
            for k in (i + 1)..p {
                s -= self.lower[k][i] * x[k];
            }
            x[i] = s / self.lower[i][i];
        }
        x
    }

    /// `vᵀ M⁻¹ v`
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        self.forward(v).iter().map(|w| w * w).sum()
    }
}

/// Least squares fit of `targets ≈ design · beta` via ridge-stabilised normal
/// equations. `design` rows are observations.
pub fn least_squares(design: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let k = design.first().map(Vec::len).ok_or(Error::Empty("design matrix"))?;
    if design.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "least squares targets",
            expected: design.len(),
            got: targets.len(),
        });
    }
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for (row, &t) in design.iter().zip(targets) {
        for a in 0..k {
            rhs[a] += row[a] * t;
            for b in 0..k {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    for (a, row) in gram.iter_mut().enumerate() {
        row[a] += ridge;
    }
    Ok(Cholesky::new(&gram)?.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let c = Cholesky::new(&m).unwrap();
        let l = c.lower().clone();
        let back = mat_mul(&l, &transpose(&l));
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[i][j] - m[i][j]).abs() < 1e-12);
            }
        }
        let x = c.solve(&[1.0, 2.0]);
        let r = mat_vec(&m, &x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
        // vᵀ M⁻¹ v = v·x
        assert!((c.inv_quad_form(&[1.0, 2.0]) - dot(&[1.0, 2.0], &x)).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert_eq!(
            Cholesky::new(&vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite)
        );
        assert_eq!(
            Cholesky::new(&vec![vec![1.0, 0.5], vec![0.0, 1.0]]),
            Err(Error::NotPositiveDefinite)
        );
    }

    #[test]
    fn least_squares_recovers_line() {
        let design: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| 3.0 - 2.0 * i as f64).collect();
        let beta = least_squares(&design, &targets, 0.0).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-9 && (beta[1] + 2.0).abs() < 1e-9);
    }
}
