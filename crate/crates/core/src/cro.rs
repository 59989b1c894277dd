//! Robust decision solvers: `z = argmin_z max_{c ∈ U} φ(c, z)`.
//!
//! Finite classification sets are solved by enumeration. For the portfolio
//! loss `φ(y, z) = -yᵀz` on the simplex, the inner max has a closed form for
//! boxes (`-(μ - q·1)ᵀz`) and ellipsoids (`-μᵀz + √q·√(zᵀΣz)`, `q` in squared
//! units), and is a max over finitely many linear functions for point sets.

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_square, dot, mat_vec, Cholesky, Matrix};
use crate::loss::{Decision, LossSpec};
use crate::set::PredictionSet;

#[derive(Debug, Clone, PartialEq)]
pub enum PgdInit {
    Uniform,
    WarmStart(Vec<f64>),
}

/// Projected (sub)gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PgdConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop once both the objective change and the iterate change are at most
    /// this.
    pub tolerance: f64,
    pub init: PgdInit,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_size: 0.05,
            tolerance: 1e-8,
            init: PgdInit::Uniform,
        }
    }
}

impl PgdConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(invalid("step_size must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(invalid("tolerance must be nonnegative"));
        }
        Ok(())
    }

    fn start(&self, p: usize) -> Result<Vec<f64>> {
        match &self.init {
            PgdInit::Uniform => Ok(uniform(p)),
            PgdInit::WarmStart(z) if z.len() == p => Ok(project_simplex(z)),
            PgdInit::WarmStart(z) => Err(Error::DimensionMismatch {
                context: "warm start",
                expected: p,
                got: z.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    pub decision: Decision,
    pub worst_case_loss: f64,
    /// The set was empty and the decision is the whole-space fallback.
    pub set_was_empty: bool,
    /// The decision came from an iterative solver, so `worst_case_loss` is
    /// only optimal up to solver tolerance (it is still the exact inner max at
    /// the returned decision).
    pub approximate: bool,
}

impl RobustSolution {
    fn exact(decision: Decision, worst_case_loss: f64) -> Self {
        Self {
            decision,
            worst_case_loss,
            set_was_empty: false,
            approximate: false,
        }
    }
}

pub fn uniform(p: usize) -> Vec<f64> {
    vec![1.0 / p as f64; p]
}

fn vertex(p: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[i] = 1.0;
    e
}

/// Index of the largest entry, lowest index on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Minimax decision for a finite loss matrix over a set of label rows.
/// Ties go to the lowest decision index. An empty set falls back to the full
/// label set and raises `set_was_empty`.
pub fn solve_finite(matrix: &Matrix, set: &[usize]) -> Result<RobustSolution> {
    let decisions = matrix.first().map(Vec::len).ok_or(Error::Empty("loss matrix"))?;
    if decisions == 0 {
        return Err(Error::Empty("loss matrix decisions"));
    }
    for &y in set {
        if y >= matrix.len() {
            return Err(Error::IndexOutOfRange {
                context: "prediction set label",
                index: y,
                len: matrix.len(),
            });
        }
    }
    let all: Vec<usize>;
    let rows = if set.is_empty() {
        all = (0..matrix.len()).collect();
        &all
    } else {
        set
    };
    let mut best = (0, f64::INFINITY);
    for z in 0..decisions {
        let worst = rows.iter().map(|&y| matrix[y][z]).fold(f64::NEG_INFINITY, f64::max);
        if worst < best.1 {
            best = (z, worst);
        }
    }
    let mut sol = RobustSolution::exact(Decision::Index(best.0), best.1);
    sol.set_was_empty = set.is_empty();
    Ok(sol)
}

/// Portfolio decision over the box `{c : |c_j - μ_j| <= q}`.
pub fn solve_box_portfolio(mu: &[f64], q: f64) -> Result<RobustSolution> {
    if mu.is_empty() {
        return Err(Error::Empty("box center"));
    }
    if q.is_nan() || q < 0.0 {
        return Err(invalid(format!("box half width must be nonnegative, got {q}")));
    }
    if q.is_infinite() {
        return Ok(RobustSolution::exact(Decision::Weights(uniform(mu.len())), f64::INFINITY));
    }
    let i = argmax(mu);
    Ok(RobustSolution::exact(Decision::Weights(vertex(mu.len(), i)), -(mu[i] - q)))
}

/// `-μᵀz + √q·√(zᵀΣz)`.
pub fn ellipsoid_objective(mu: &[f64], sigma: &Matrix, q: f64, z: &[f64]) -> f64 {
    let quad = dot(z, &mat_vec(sigma, z)).max(0.0);
    -dot(mu, z) + q.sqrt() * quad.sqrt()
}

/// Portfolio decision over the ellipsoid `{c : (c-μ)ᵀΣ⁻¹(c-μ) <= q}` by
/// projected gradient descent with backtracking.
pub fn solve_ellipsoid_portfolio(mu: &[f64], sigma: &Matrix, q: f64, cfg: &PgdConfig) -> Result<RobustSolution> {
    cfg.validate()?;
    let p = mu.len();
    if p == 0 {
        return Err(Error::Empty("ellipsoid center"));
    }
    if check_square(sigma, "ellipsoid covariance")? != p {
        return Err(Error::DimensionMismatch {
            context: "ellipsoid covariance",
            expected: p,
            got: sigma.len(),
        });
    }
    Cholesky::new(sigma)?;
    if q.is_nan() || q < 0.0 {
        return Err(invalid(format!("ellipsoid radius must be nonnegative, got {q}")));
    }
    if q.is_infinite() {
        return Ok(RobustSolution::exact(Decision::Weights(uniform(p)), f64::INFINITY));
    }
    if q == 0.0 {
        let i = argmax(mu);
        return Ok(RobustSolution::exact(Decision::Weights(vertex(p, i)), -mu[i]));
    }
    let f = |z: &[f64]| ellipsoid_objective(mu, sigma, q, z);
    let grad = |z: &[f64]| -> Vec<f64> {
        let sz = mat_vec(sigma, z);
        let norm = dot(z, &sz).max(0.0).sqrt();
        let scale = if norm > 0.0 { q.sqrt() / norm } else { 0.0 };
        mu.iter().zip(&sz).map(|(m, s)| -m + scale * s).collect()
    };
    let mut z = cfg.start(p)?;
    let mut fz = f(&z);
    let mut best = (z.clone(), fz);
    let mut step = cfg.step_size;
    for _ in 0..cfg.max_iters {
        let g = grad(&z);
        let (next, f_next) = loop {
            let cand = project_simplex(&z.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
            let d: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let fc = f(&cand);
            let bound = fz + dot(&g, &d) + dot(&d, &d) / (2.0 * step);
            if fc <= bound + 1e-15 || step < 1e-14 {
                break (cand, fc);
            }
            step *= 0.5;
        };
        let dz = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let df = (f_next - fz).abs();
        z = next;
        fz = f_next;
        if fz < best.1 {
            best = (z.clone(), fz);
        }
        if df <= cfg.tolerance && dz <= cfg.tolerance {
            break;
        }
        step = (step * 1.5).min(cfg.step_size * 1e3);
    }
    for i in 0..p {
        let e = vertex(p, i);
        let fe = f(&e);
        if fe < best.1 {
            best = (e, fe);
        }
    }
    Ok(RobustSolution {
        decision: Decision::Weights(best.0),
        worst_case_loss: best.1,
        set_was_empty: false,
        approximate: true,
    })
}

/// `max_{c ∈ points} -cᵀz`.
pub fn finite_points_objective(points: &[Vec<f64>], z: &[f64]) -> f64 {
    points.iter().map(|c| -dot(c, z)).fold(f64::NEG_INFINITY, f64::max)
}

/// Sorted, deduplicated points with componentwise-dominated ones removed: if
/// `c' <= c` then `-c'ᵀz >= -cᵀz` on the simplex, so `c` never attains the max.
fn pareto_minimal(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup();
    let dominated = |c: &Vec<f64>, by: &Vec<f64>| by != c && by.iter().zip(c).all(|(a, b)| a <= b);
    pts.iter()
        .filter(|c| !pts.iter().any(|o| dominated(c, o)))
        .cloned()
        .collect()
}

/// Portfolio decision against a finite set of label vectors. Exact for
/// `p <= 2`; projected subgradient descent otherwise.
pub fn solve_finite_points(points: &[Vec<f64>], cfg: &PgdConfig) -> Result<RobustSolution> {
    cfg.validate()?;
    let p = points.first().map(Vec::len).ok_or(Error::Empty("finite point set"))?;
    if p == 0 {
        return Err(Error::Empty("point dimension"));
    }
    if let Some(bad) = points.iter().find(|c| c.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "finite point set",
            expected: p,
            got: bad.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("finite point set must contain finite coordinates"));
    }
    let pts = pareto_minimal(points);
    match p {
        1 => Ok(RobustSolution::exact(
            Decision::Weights(vec![1.0]),
            finite_points_objective(&pts, &[1.0]),
        )),
        2 => Ok(solve_points_2d(&pts)),
        _ => solve_points_subgradient(&pts, cfg),
    }
}

/// With `z = (t, 1-t)`, each point contributes the line `-c₂ - (c₁ - c₂)t`;
/// the minimum of their upper envelope on `[0, 1]` is at an endpoint or at a
/// crossing of a rising and a falling line.
fn solve_points_2d(pts: &[Vec<f64>]) -> RobustSolution {
    let h = |t: f64| finite_points_objective(pts, &[t, 1.0 - t]);
    let lines: Vec<(f64, f64)> = pts.iter().map(|c| (-c[1], c[1] - c[0])).collect();
    let mut cands = vec![0.0, 1.0];
    for &(a1, b1) in lines.iter().filter(|l| l.1 > 0.0) {
        for &(a2, b2) in lines.iter().filter(|l| l.1 < 0.0) {
            let t = (a2 - a1) / (b1 - b2);
            if t > 0.0 && t < 1.0 {
                cands.push(t);
            }
        }
    }
    let mut best = (1.0, h(1.0));
    for t in cands {
        let v = h(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    RobustSolution::exact(Decision::Weights(vec![best.0, 1.0 - best.0]), best.1)
}

fn solve_points_subgradient(pts: &[Vec<f64>], cfg: &PgdConfig) -> Result<RobustSolution> {
    let p = pts[0].len();
    let mut z = cfg.start(p)?;
    let mut best = (z.clone(), finite_points_objective(pts, &z));
    let mut prev = best.1;
    for k in 0..cfg.max_iters {
        // subgradient of max_c -cᵀz: -c at the active point
        let active = pts
            .iter()
            .max_by(|a, b| (-dot(a, &z)).total_cmp(&-dot(b, &z)))
            .expect("nonempty");
        let norm = dot(active, active).sqrt();
        if norm == 0.0 {
            break;
        }
        let step = cfg.step_size / ((k + 1) as f64).sqrt();
        let next = project_simplex(&z.iter().zip(active).map(|(zi, ci)| zi + step * ci / norm).collect::<Vec<_>>());
        let dz = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next;
        let v = finite_points_objective(pts, &z);
        if v < best.1 {
            best = (z.clone(), v);
        }
        if (v - prev).abs() <= cfg.tolerance && dz <= cfg.tolerance {
            break;
        }
        prev = v;
    }
    for i in 0..p {
        let e = vertex(p, i);
        let v = finite_points_objective(pts, &e);
        if v < best.1 {
            best = (e, v);
        }
    }
    Ok(RobustSolution {
        decision: Decision::Weights(best.0),
        worst_case_loss: best.1,
        set_was_empty: false,
        approximate: true,
    })
}

/// Euclidean projection onto `{z >= 0, Σz = 1}` (sort-then-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Solves the robust problem for any supported (loss, set) pairing. Empty
/// sets use the whole-space fallback: the full label set for matrix losses,
/// the uniform portfolio with infinite worst case for the portfolio loss.
pub fn solve(loss: &LossSpec, set: &PredictionSet, cfg: &PgdConfig) -> Result<RobustSolution> {
    match (loss, set) {
        (LossSpec::FiniteMatrix { matrix, .. }, PredictionSet::FiniteLabels(labels)) => solve_finite(matrix, labels),
        (LossSpec::BilinearPortfolio { dim }, set) => {
            let check = |len: usize| -> Result<()> {
                if len != *dim {
                    return Err(Error::DimensionMismatch {
                        context: "portfolio set dimension",
                        expected: *dim,
                        got: len,
                    });
                }
                Ok(())
            };
            let fallback = || RobustSolution {
                decision: Decision::Weights(uniform(*dim)),
                worst_case_loss: f64::INFINITY,
                set_was_empty: true,
                approximate: false,
            };
            match set {
                PredictionSet::Box { center, half_width } => {
                    check(center.len())?;
                    if *half_width < 0.0 {
                        return Ok(fallback());
                    }
                    solve_box_portfolio(center, *half_width)
                }
                PredictionSet::Ellipsoid { center, cov, radius_sq } => {
                    check(center.len())?;
                    if *radius_sq < 0.0 {
                        return Ok(fallback());
                    }
                    solve_ellipsoid_portfolio(center, cov, *radius_sq, cfg)
                }
                PredictionSet::FinitePoints { points, .. } => {
                    if points.is_empty() {
                        return Ok(fallback());
                    }
                    check(points[0].len())?;
                    solve_finite_points(points, cfg)
                }
                _ => Err(Error::Incompatible(
                    "portfolio loss needs a box, ellipsoid or point set".into(),
                )),
            }
        }
        _ => Err(Error::Incompatible(
            "matrix loss needs a finite label set; enumerate sublevel sets first".into(),
        )),
    }
}
