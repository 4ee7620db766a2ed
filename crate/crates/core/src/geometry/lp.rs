//! Dense two-phase simplex method for the small linear programs that the
//! geometry routines need (feasibility, boundedness, Chebyshev-style centers).
//!
//! Problems are stated with free variables:
//!
//! ```text
//!     maximize   cᵀx
//!     subject to G x <= h
//! ```
//!
//! Free variables are split as `x = x⁺ − x⁻`. Bland's rule is used for both
//! entering and leaving variables, so the method terminates on degenerate
//! problems (which the simplex family produces at maximum shrinkage).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row];
        for (j, r) in self.rows.iter_mut().enumerate() {
            if j == row {
                continue;
            }
            let f = r[col];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
            self.rhs[j] -= f * pivot_rhs;
            if self.rhs[j] < 0.0 && self.rhs[j] > -1e-13 {
                self.rhs[j] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<Phase> {
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index column with positive reduced cost.
            let mut entering = None;
            for k in 0..allowed {
                if self.basis.contains(&k) {
                    continue;
                }
                let mut reduced = cost[k];
                for (j, r) in self.rows.iter().enumerate() {
                    reduced -= cost[self.basis[j]] * r[k];
                }
                if reduced > COST_TOL {
                    entering = Some(k);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(Phase::Optimal);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for (j, r) in self.rows.iter().enumerate() {
                let a = r[col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[j] / a;
                    leaving = match leaving {
                        None => Some((j, ratio)),
                        Some((lj, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[j] < self.basis[lj])
                            {
                                Some((j, ratio))
                            } else {
                                Some((lj, lr))
                            }
                        }
                    };
                }
            }
            match leaving {
                None => return Ok(Phase::Unbounded),
                Some((row, _)) => self.pivot(row, col),
            }
        }
        Err(Error::Solver("simplex pivot limit reached".into()))
    }

    fn value_of(&self, col: usize) -> f64 {
        self.basis
            .iter()
            .position(|&b| b == col)
            .map_or(0.0, |j| self.rhs[j])
    }
}

/// Maximize `cᵀx` subject to `G x <= h` with `x` free.
pub fn maximize(c: &[f64], g: &DMatrix<f64>, h: &[f64]) -> Result<LpOutcome> {
    let n = c.len();
    let m = h.len();
    if g.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.ncols(),
        });
    }
    if g.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: g.nrows(),
        });
    }
    let n_art = h.iter().filter(|&&v| v < 0.0).count();
    let slack0 = 2 * n;
    let art0 = slack0 + m;
    let ncols = art0 + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = art0;
    for j in 0..m {
        let mut row = vec![0.0; ncols];
        let sign = if h[j] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            row[k] = sign * g[(j, k)];
            row[n + k] = -sign * g[(j, k)];
        }
        row[slack0 + j] = sign;
        if sign < 0.0 {
            row[next_art] = 1.0;
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(slack0 + j);
        }
        rows.push(row);
        rhs.push(sign * h[j]);
    }
    let mut tab = Tableau {
        rows,
        rhs,
        basis,
        ncols,
    };

    if n_art > 0 {
        let mut cost = vec![0.0; ncols];
        for v in cost.iter_mut().skip(art0) {
            *v = -1.0;
        }
        match tab.run(&cost, ncols)? {
            Phase::Optimal => {}
            Phase::Unbounded => return Err(Error::Solver("phase one unbounded".into())),
        }
        let infeas: f64 = (art0..ncols).map(|k| tab.value_of(k)).sum();
        let scale = 1.0 + h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if infeas > 1e-10 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis.
        for j in 0..m {
            if tab.basis[j] >= art0 {
                if let Some(k) = (0..art0).find(|&k| tab.rows[j][k].abs() > 1e-9) {
                    tab.pivot(j, k);
                }
            }
        }
    }

    let mut cost = vec![0.0; tab.ncols];
    for k in 0..n {
        cost[k] = c[k];
        cost[n + k] = -c[k];
    }
    match tab.run(&cost, art0)? {
        Phase::Unbounded => Ok(LpOutcome::Unbounded),
        Phase::Optimal => {
            let x: Vec<f64> = (0..n)
                .map(|k| tab.value_of(k) - tab.value_of(n + k))
                .collect();
            let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
            Ok(LpOutcome::Optimal { x, value })
        }
    }
}
