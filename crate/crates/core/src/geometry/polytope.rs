use nalgebra::{DMatrix, DVector};

use super::lp::{self, LpOutcome};
use crate::error::{Error, Result};

/// Feasibility slack used by the LP-based emptiness test.
pub const FEASIBILITY_SLACK: f64 = 1e-10;

/// Remembers that a polytope belongs to the diagonally scaled simplex family,
/// so closed forms can be used for its maximum shrinkage and sharpness.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexTag {
    /// Per-axis scales `c_m` of the unscaled simplex.
    pub c: Vec<f64>,
    /// Column scales applied so far (all ones for the unscaled simplex).
    pub beta: Vec<f64>,
}

impl SimplexTag {
    /// `q = Σ 1/c_m` of the unscaled simplex.
    pub fn q(&self) -> f64 {
        self.c.iter().map(|c| 1.0 / c).sum()
    }

    /// `q' = Σ β_m / c_m` of the scaled simplex.
    pub fn q_prime(&self) -> f64 {
        self.c.iter().zip(&self.beta).map(|(c, b)| b / c).sum()
    }

    /// `ρ_m = c_m / β_m`.
    pub fn rho(&self) -> Vec<f64> {
        self.c.iter().zip(&self.beta).map(|(c, b)| c / b).collect()
    }

    pub fn rho_max(&self) -> f64 {
        self.rho().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// H-representation `{x : A x <= b}` of a bounded polytope in `ℝ^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    simplex: Option<SimplexTag>,
}

impl Polytope {
    /// Builds a polytope and checks that it is finite, nonempty and bounded.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let poly = Self::from_parts(a, b, None)?;
        poly.check_nonempty_bounded()?;
        Ok(poly)
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let a = matrix_from_rows(rows)?;
        Self::new(a, DVector::from_column_slice(b))
    }

    /// Shape and finiteness checks only; the set may be empty.
    pub(crate) fn from_parts(
        a: DMatrix<f64>,
        b: DVector<f64>,
        simplex: Option<SimplexTag>,
    ) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidPolytope(
                "need at least one row and one column".into(),
            ));
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polytope entries".into()));
        }
        Ok(Self { a, b, simplex })
    }

    fn check_nonempty_bounded(&self) -> Result<()> {
        if self.is_empty()? {
            return Err(Error::EmptyPolytope);
        }
        let m = self.dim();
        for i in 0..m {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.0; m];
                c[i] = sign;
                if lp::maximize(&c, &self.a, self.b.as_slice())? == LpOutcome::Unbounded {
                    return Err(Error::InvalidPolytope(format!(
                        "unbounded along axis {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Ambient dimension `M`.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Number of constraints `P`.
    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn simplex_tag(&self) -> Option<&SimplexTag> {
        self.simplex.as_ref()
    }

    pub(crate) fn with_tag(mut self, tag: Option<SimplexTag>) -> Self {
        self.simplex = tag;
        self
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|j| self.a.row(j).iter().copied().collect())
            .collect()
    }

    /// `‖a_j‖₁` for every row.
    pub fn row_l1_norms(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_rows(),
            (0..self.n_rows()).map(|j| self.a.row(j).iter().map(|v| v.abs()).sum()),
        )
    }

    /// Per-row slack `b − A x`.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * x
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.slacks(x).iter().all(|&s| s >= -tol)
    }

    /// Solves `min s` subject to `A x − s <= b`; returns the minimizer and
    /// `s*`. The polytope is empty iff `s* > 0`.
    pub fn feasibility_margin(&self) -> Result<(DVector<f64>, f64)> {
        let m = self.dim();
        let p = self.n_rows();
        let mut g = DMatrix::zeros(p + 1, m + 1);
        g.view_mut((0, 0), (p, m)).copy_from(&self.a);
        for j in 0..p {
            g[(j, m)] = -1.0;
        }
        g[(p, m)] = -1.0;
        let mut h: Vec<f64> = self.b.iter().copied().collect();
        // s >= -1 keeps the program bounded for full-dimensional sets.
        h.push(1.0);
        let mut c = vec![0.0; m + 1];
        c[m] = -1.0;
        match lp::maximize(&c, &g, &h)? {
            LpOutcome::Optimal { x, .. } => {
                let s = x[m];
                Ok((DVector::from_column_slice(&x[..m]), s))
            }
            other => Err(Error::Solver(format!("feasibility program: {other:?}"))),
        }
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.feasibility_margin()?.1 > FEASIBILITY_SLACK)
    }

    /// Point maximizing the uniform ∞-norm shrinkage, with that shrinkage.
    /// A negative shrinkage means the set is empty.
    pub fn deepest_point(&self) -> Result<(DVector<f64>, f64)> {
        let m = self.dim();
        let p = self.n_rows();
        let norms = self.row_l1_norms();
        let mut g = DMatrix::zeros(p, m + 1);
        g.view_mut((0, 0), (p, m)).copy_from(&self.a);
        for j in 0..p {
            g[(j, m)] = norms[j];
        }
        let mut c = vec![0.0; m + 1];
        c[m] = 1.0;
        match lp::maximize(&c, &g, self.b.as_slice())? {
            LpOutcome::Optimal { x, value } => Ok((DVector::from_column_slice(&x[..m]), value)),
            other => Err(Error::Solver(format!("deepest point program: {other:?}"))),
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = rows.len();
    if p == 0 {
        return Err(Error::InvalidPolytope("no rows".into()));
    }
    let m = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(p, m, |i, j| rows[i][j]))
}

/// Positive per-axis scales `c_m` defining the simplex
/// `{x : Σ x_m / c_m <= 1/2, x_m >= −1/(2q)}` with `q = Σ 1/c_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSpec {
    c: Vec<f64>,
}

impl SimplexSpec {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidSpec("empty scale vector".into()));
        }
        if let Some((m, v)) = c.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidSpec(format!("c[{m}] = {v} must be positive")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> f64 {
        self.c.iter().map(|c| 1.0 / c).sum()
    }
}

/// Diagonal transform `B = diag(1/β_m)` normalizing per-agent confidence radii.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTransform {
    beta: Vec<f64>,
}

impl ScalingTransform {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if let Some((m, v)) = beta
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidSpec(format!("beta[{m}] = {v} must be positive")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `B x`.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.beta).map(|(v, b)| v / b))
    }

    pub fn inverse(&self) -> ScalingTransform {
        ScalingTransform {
            beta: self.beta.iter().map(|b| 1.0 / b).collect(),
        }
    }

    /// `ρ_m = c_m / β_m`.
    pub fn rho(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.beta).map(|(c, b)| c / b).collect()
    }

    pub fn rho_max(&self, c: &[f64]) -> f64 {
        self.rho(c).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `q' = Σ β_m / c_m`.
    pub fn q_prime(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.beta).map(|(c, b)| b / c).sum()
    }
}
