//! Polytopic safe sets: the simplex family, diagonal scaling, ∞-norm
//! shrinkage, maximum shrinkage and sharpness.
//!
//! Shrinkage is always with respect to the ∞-norm ball, for which the shrunk
//! halfspace `{x : a_jᵀ(x + v) <= b_j  ∀ ‖v‖∞ <= Δ}` is again a halfspace with
//! offset `b_j − Δ‖a_j‖₁`. Sharpness measures the Euclidean distance from the
//! set to its shrunk version. Members of the scaled simplex family carry a
//! [`SimplexTag`] and use closed forms; everything else goes through LP
//! bisection and vertex projection. Redundant rows are not detected; they can
//! only make the shrunk set smaller.

pub mod io;
pub mod lp;
mod polytope;
pub mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use polytope::{Polytope, ScalingTransform, SimplexSpec, SimplexTag, FEASIBILITY_SLACK};
pub use qp::{project, Projection};

/// Absolute tolerance of the bisection on the shrinkage parameter.
pub const BISECTION_TOL: f64 = 1e-9;

/// Upper limit on the number of row subsets examined by vertex enumeration.
pub const MAX_VERTEX_SUBSETS: usize = 200_000;

/// Builds `S(A, b)` with first row `(1/c_1, …, 1/c_M)`, rows `−e_m`, and
/// `b = [1/2, 1/(2q), …, 1/(2q)]`.
pub fn build_simplex(spec: &SimplexSpec) -> Polytope {
    let m = spec.dim();
    let q = spec.q();
    let mut a = DMatrix::zeros(m + 1, m);
    for (k, c) in spec.c().iter().enumerate() {
        a[(0, k)] = 1.0 / c;
        a[(k + 1, k)] = -1.0;
    }
    let mut b = DVector::from_element(m + 1, 1.0 / (2.0 * q));
    b[0] = 0.5;
    let tag = SimplexTag {
        c: spec.c().to_vec(),
        beta: vec![1.0; m],
    };
    Polytope::from_parts(a, b, Some(tag)).expect("simplex spec entries are finite")
}

/// `Y' = B Y`, i.e. `A' = A B⁻¹`: column `m` of `A` multiplied by `β_m`.
pub fn apply_scaling(poly: &Polytope, t: &ScalingTransform) -> Result<Polytope> {
    let m = poly.dim();
    if t.beta().len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: t.beta().len(),
        });
    }
    let mut a = poly.a().clone();
    for (k, beta) in t.beta().iter().enumerate() {
        a.column_mut(k).scale_mut(*beta);
    }
    let tag = poly.simplex_tag().map(|tag| SimplexTag {
        c: tag.c.clone(),
        beta: tag.beta.iter().zip(t.beta()).map(|(a, b)| a * b).collect(),
    });
    Ok(Polytope::from_parts(a, poly.b().clone(), tag)?)
}

/// ∞-norm shrunk set: every offset `b_j` becomes `b_j − Δ‖a_j‖₁`.
///
/// The result may be empty; query it with [`Polytope::is_empty`].
pub fn shrink(poly: &Polytope, delta: f64) -> Result<Polytope> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidPolytope(format!(
            "shrinkage must be nonnegative, got {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(poly.clone());
    }
    let b = poly.b() - poly.row_l1_norms() * delta;
    Ok(Polytope::from_parts(poly.a().clone(), b, None)?)
}

/// `sup{Δ : shrink(Y, Δ) ≠ ∅}`; closed form `1/(2q')` for the simplex family.
pub fn max_shrinkage(poly: &Polytope) -> Result<f64> {
    match poly.simplex_tag() {
        Some(tag) => Ok(1.0 / (2.0 * tag.q_prime())),
        None => max_shrinkage_bisection(poly),
    }
}

/// Bisection on LP feasibility of the shrunk set, to [`BISECTION_TOL`].
pub fn max_shrinkage_bisection(poly: &Polytope) -> Result<f64> {
    if poly.is_empty()? {
        return Err(Error::EmptyPolytope);
    }
    let nonempty = |d: f64| -> Result<bool> { Ok(!shrink(poly, d)?.is_empty()?) };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while nonempty(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidPolytope("shrinkage does not terminate".into()));
        }
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if nonempty(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Extreme points of the polytope.
///
/// Simplex-family members are solved by row deletion (exactly `M + 1`
/// vertices; a singular system is an error). Other polytopes enumerate all
/// `M`-row subsets, skipping singular ones.
pub fn vertices(poly: &Polytope) -> Result<Vec<DVector<f64>>> {
    let m = poly.dim();
    let p = poly.n_rows();
    if poly.simplex_tag().is_some() && p == m + 1 {
        return (0..p)
            .map(|skip| {
                let rows: Vec<usize> = (0..p).filter(|&j| j != skip).collect();
                solve_rows(poly, &rows).ok_or_else(|| {
                    Error::Degenerate(format!("row-deletion system without row {skip}"))
                })
            })
            .collect();
    }
    if binomial(p, m) > MAX_VERTEX_SUBSETS {
        return Err(Error::UnsupportedSize { rows: p, dim: m });
    }
    let scale = 1.0 + poly.b().amax();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for rows in Combinations::new(p, m) {
        let Some(v) = solve_rows(poly, &rows) else {
            continue;
        };
        if !poly.contains(&v, 1e-9 * scale) {
            continue;
        }
        if out.iter().all(|u| (u - &v).amax() > 1e-9 * scale) {
            out.push(v);
        }
    }
    Ok(out)
}

fn solve_rows(poly: &Polytope, rows: &[usize]) -> Option<DVector<f64>> {
    let m = poly.dim();
    let sub = DMatrix::from_fn(m, m, |i, j| poly.a()[(rows[i], j)]);
    let rhs = DVector::from_iterator(m, rows.iter().map(|&j| poly.b()[j]));
    let lu = sub.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return None;
    }
    lu.solve(&rhs)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Sharpness `sup_{x∈Y} inf_{y∈Y_Δ} ‖y − x‖₂` of the ∞-norm shrunk set.
///
/// Simplex-family members use `Δ √((M−1) + (2q'ρ̃ − 1)²)`; other polytopes
/// take the maximum over vertices of the distance to the shrunk set, which
/// is exact because the distance function is convex.
pub fn sharpness(poly: &Polytope, delta: f64) -> Result<f64> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidPolytope(format!(
            "shrinkage must be nonnegative, got {delta}"
        )));
    }
    let h = max_shrinkage(poly)?;
    if delta > h + BISECTION_TOL {
        return Err(Error::OutOfRange { delta, max: h });
    }
    match poly.simplex_tag() {
        Some(tag) => Ok(simplex_sharpness(tag, delta)),
        None => sharpness_by_projection(poly, delta),
    }
}

pub(crate) fn simplex_sharpness(tag: &SimplexTag, delta: f64) -> f64 {
    let m = tag.c.len() as f64;
    let k = 2.0 * tag.q_prime() * tag.rho_max() - 1.0;
    delta * ((m - 1.0) + k * k).sqrt()
}

/// Vertex-projection evaluation of the sharpness, valid for any small
/// polytope (no closed form is consulted).
pub fn sharpness_by_projection(poly: &Polytope, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Ok(0.0);
    }
    let untagged = poly.clone().with_tag(None);
    let verts = vertices(&untagged)?;
    let mut shrunk = shrink(&untagged, delta)?;
    let (_, depth) = shrunk.deepest_point()?;
    if depth < 0.0 {
        if depth < -BISECTION_TOL {
            let h = max_shrinkage_bisection(&untagged)?;
            return Err(Error::OutOfRange { delta, max: h });
        }
        // Within bisection tolerance of the maximum shrinkage: back off to
        // the last nonempty shrinkage.
        shrunk = shrink(&untagged, (delta + depth).max(0.0))?;
    }
    let mut worst = 0.0_f64;
    for v in &verts {
        let pr = project(v, &shrunk)?;
        worst = worst.max((v - &pr.point).norm());
    }
    Ok(worst)
}
