//! Euclidean projection onto a polytope by a primal active-set method.
//!
//! The Hessian is the identity, so each working-set subproblem reduces to a
//! projection onto an affine subspace and the working-set rows stay linearly
//! independent (a blocking row always has a component along the step, which
//! is orthogonal to the current working rows).

use nalgebra::{DMatrix, DVector};

use super::polytope::Polytope;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 2_000;

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    /// Lagrange multipliers, one per row of the polytope.
    pub multipliers: DVector<f64>,
}

impl Projection {
    /// Largest violation among stationarity, primal feasibility, dual
    /// feasibility and complementary slackness.
    pub fn kkt_residual(&self, target: &DVector<f64>, poly: &Polytope) -> f64 {
        let stat = (&self.point - target + poly.a().transpose() * &self.multipliers).amax();
        let slack = poly.slacks(&self.point);
        let primal = slack.iter().fold(0.0_f64, |m, s| m.max(-s));
        let dual = self.multipliers.iter().fold(0.0_f64, |m, l| m.max(-l));
        let comp = slack
            .iter()
            .zip(self.multipliers.iter())
            .fold(0.0_f64, |m, (s, l)| m.max((s * l).abs()));
        stat.max(primal).max(dual).max(comp)
    }
}

fn working_matrix(poly: &Polytope, work: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(work.len(), poly.dim(), |i, j| poly.a()[(work[i], j)])
}

/// Solves `(A_W A_Wᵀ) μ = rhs`, falling back to a pseudo-inverse when the
/// Gram system is numerically singular.
fn solve_gram(aw: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let gram = aw * aw.transpose();
    if let Some(ch) = gram.clone().cholesky() {
        return ch.solve(rhs);
    }
    gram.svd(true, true)
        .solve(rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(rhs.len()))
}

fn independent_of(poly: &Polytope, work: &[usize], row: usize) -> bool {
    let mut rows = work.to_vec();
    rows.push(row);
    let aw = working_matrix(poly, &rows);
    let gram = &aw * aw.transpose();
    let sv = gram.singular_values();
    let max = sv.max();
    sv.min() > 1e-12 * max.max(1e-300)
}

pub fn project(point: &DVector<f64>, poly: &Polytope) -> Result<Projection> {
    let m = poly.dim();
    if point.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: point.len(),
        });
    }
    let p = poly.n_rows();
    if poly.contains(point, 0.0) {
        return Ok(Projection {
            point: point.clone(),
            multipliers: DVector::zeros(p),
        });
    }
    let (mut y, depth) = poly.deepest_point()?;
    if depth < -1e-9 {
        return Err(Error::EmptyPolytope);
    }
    let scale = 1.0 + poly.b().amax();
    let mut work: Vec<usize> = Vec::new();
    let slack0 = poly.slacks(&y);
    for j in 0..p {
        if slack0[j] <= 1e-11 * scale && work.len() < m && independent_of(poly, &work, j) {
            work.push(j);
        }
    }

    for _ in 0..MAX_ITERS {
        let resid = point - &y;
        let (step, mu) = if work.is_empty() {
            (resid.clone(), DVector::zeros(0))
        } else {
            let aw = working_matrix(poly, &work);
            let mu = solve_gram(&aw, &(&aw * &resid));
            (&resid - aw.transpose() * &mu, mu)
        };
        // A full working set pins the point; otherwise compare against the
        // rounding level of the residual.
        if work.len() == m || step.norm() <= 1e-12 * (1.0 + resid.norm()) {
            // Stationary on the working face: check multiplier signs.
            let (idx, most_neg) = mu
                .iter()
                .enumerate()
                .fold((usize::MAX, 0.0), |(bi, bv), (i, &v)| {
                    if v < bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                });
            if idx == usize::MAX || most_neg >= -1e-12 {
                return Ok(finish(point, poly, &work));
            }
            work.remove(idx);
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for j in 0..p {
            if work.contains(&j) {
                continue;
            }
            let row = poly.a().row(j);
            let ad = row.dot(&step.transpose());
            if ad > 1e-12 * row.norm() * step.norm() {
                let s = poly.b()[j] - poly.a().row(j).dot(&y.transpose());
                let ratio = s.max(0.0) / ad;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        y += alpha * &step;
        if let Some(j) = blocking {
            if work.len() < m && independent_of(poly, &work, j) {
                work.push(j);
            }
        }
    }
    Err(Error::Solver("projection active-set iteration limit".into()))
}

/// Recomputes the projection exactly from the final working set.
fn finish(point: &DVector<f64>, poly: &Polytope, work: &[usize]) -> Projection {
    let p = poly.n_rows();
    let mut multipliers = DVector::zeros(p);
    if work.is_empty() {
        return Projection {
            point: point.clone(),
            multipliers,
        };
    }
    let aw = working_matrix(poly, work);
    let bw = DVector::from_iterator(work.len(), work.iter().map(|&j| poly.b()[j]));
    let lam = solve_gram(&aw, &(&aw * point - bw));
    let y = point - aw.transpose() * &lam;
    for (k, &j) in work.iter().enumerate() {
        multipliers[j] = lam[k].max(0.0);
    }
    Projection {
        point: y,
        multipliers,
    }
}
