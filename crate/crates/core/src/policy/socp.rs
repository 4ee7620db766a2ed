//! Log-barrier interior method for one optimistic subproblem:
//!
//! ```text
//!     maximize   Σ_m w_mᵀ x_m
//!     subject to Σ_m (a_im θ̂_mᵀ x_m + |a_im| β_m s_m) <= b_i
//!                ‖x_m‖_{G_m⁻¹} <= s_m,   ‖x_m‖₂ <= K
//! ```
//!
//! The epigraph variable `s_m` is dropped for agents with `β_m = 0`. The
//! origin (with small `s_m`) is strictly feasible whenever `b > 0`, so no
//! phase one is needed.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{ActionProfile, ConservativeSet};
use crate::error::{Error, Result};

/// Duality-measure target of the barrier path.
pub const GAP_TOL: f64 = 1e-8;
const T_GROWTH: f64 = 10.0;
const MAX_NEWTON: usize = 100;
const NEWTON_TOL: f64 = 1e-10;
/// Newton decrement accepted before the final stage.
const CENTERING_TOL: f64 = 1e-3;
const ARMIJO: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct SubSolution {
    pub action: ActionProfile,
    pub value: f64,
    /// Multipliers of the linear safety rows (zero after a fallback).
    pub multipliers: DVector<f64>,
    /// Set when the barrier method failed and the crude ascent was used.
    pub fallback: bool,
}

/// Per-round data shared by every subproblem of an enumeration.
pub(crate) struct Prepared<'a> {
    set: &'a ConservativeSet,
    m: usize,
    d: usize,
    n: usize,
    /// Index of `s_m` in `z`, if present.
    s_index: Vec<Option<usize>>,
    /// Row-major `P × n` constraint matrix.
    rows: Vec<f64>,
    b: Vec<f64>,
    /// Row-major `G_m⁻¹`.
    ginv: Vec<Vec<f64>>,
    k2: f64,
    degree: f64,
    z0: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(set: &'a ConservativeSet) -> Result<Self> {
        let m = set.n_agents();
        let d = set.dim();
        let p = set.a().nrows();
        if let Some((i, b)) = set.b().iter().enumerate().find(|(_, b)| **b <= 0.0) {
            return Err(Error::InfeasibleSafeSet(format!(
                "row {i} has offset {b}; the origin must be strictly safe"
            )));
        }
        let mut s_index = Vec::with_capacity(m);
        let mut n = m * d;
        for a in set.agents() {
            if a.beta > 0.0 {
                s_index.push(Some(n));
                n += 1;
            } else {
                s_index.push(None);
            }
        }
        let mut rows = vec![0.0; p * n];
        for i in 0..p {
            for (mm, agent) in set.agents().iter().enumerate() {
                let aim = set.a()[(i, mm)];
                for j in 0..d {
                    rows[i * n + mm * d + j] = aim * agent.theta_hat[j];
                }
                if let Some(si) = s_index[mm] {
                    rows[i * n + si] = aim.abs() * agent.beta;
                }
            }
        }
        let ginv = set
            .agents()
            .iter()
            .map(|a| {
                let mut g = vec![0.0; d * d];
                for r in 0..d {
                    for c in 0..d {
                        g[r * d + c] = a.gram_inv[(r, c)];
                    }
                }
                g
            })
            .collect();
        let n_soc = s_index.iter().filter(|s| s.is_some()).count();
        let degree = (p + 2 * n_soc + m) as f64;

        // Start at x = 0 with s small enough to keep every row strictly slack.
        let mut s0 = f64::INFINITY;
        for i in 0..p {
            let load: f64 = s_index
                .iter()
                .filter_map(|s| s.map(|si| rows[i * n + si]))
                .sum();
            if load > 0.0 {
                s0 = s0.min(0.5 * set.b()[i] / load);
            }
        }
        if !s0.is_finite() {
            s0 = 1.0;
        }
        let mut z0 = vec![0.0; n];
        for si in s_index.iter().flatten() {
            z0[*si] = s0;
        }
        Ok(Self {
            set,
            m,
            d,
            n,
            s_index,
            rows,
            b: set.b().iter().copied().collect(),
            ginv,
            k2: set.k() * set.k(),
            degree,
            z0,
        })
    }

    fn quad(&self, m: usize, x: &[f64]) -> f64 {
        let d = self.d;
        let g = &self.ginv[m];
        let mut acc = 0.0;
        for r in 0..d {
            let mut row = 0.0;
            for c in 0..d {
                row += g[r * d + c] * x[c];
            }
            acc += x[r] * row;
        }
        acc
    }

    /// Barrier value, or `None` outside the interior.
    fn barrier(&self, z: &[f64]) -> Option<f64> {
        let n = self.n;
        let d = self.d;
        let mut phi = 0.0;
        for (i, bi) in self.b.iter().enumerate() {
            let r = &self.rows[i * n..(i + 1) * n];
            let slack = bi - dot(r, z);
            if slack <= 0.0 {
                return None;
            }
            phi -= slack.ln();
        }
        for mm in 0..self.m {
            let x = &z[mm * d..(mm + 1) * d];
            let ball = self.k2 - dot(x, x);
            if ball <= 0.0 {
                return None;
            }
            phi -= ball.ln();
            if let Some(si) = self.s_index[mm] {
                let s = z[si];
                let cone = s * s - self.quad(mm, x);
                if s <= 0.0 || cone <= 0.0 {
                    return None;
                }
                phi -= cone.ln();
            }
        }
        Some(phi)
    }

    fn grad_hess(&self, z: &[f64], t: f64, w: &[f64], g: &mut [f64], h: &mut [f64]) {
        let n = self.n;
        let d = self.d;
        g.iter_mut().for_each(|v| *v = 0.0);
        h.iter_mut().for_each(|v| *v = 0.0);
        for (j, wj) in w.iter().enumerate() {
            g[j] = -t * wj;
        }
        for (i, bi) in self.b.iter().enumerate() {
            let r = &self.rows[i * n..(i + 1) * n];
            let inv = 1.0 / (bi - dot(r, z));
            for a in 0..n {
                if r[a] == 0.0 {
                    continue;
                }
                g[a] += r[a] * inv;
                for c in 0..n {
                    h[a * n + c] += r[a] * r[c] * inv * inv;
                }
            }
        }
        let mut grad_psi = vec![0.0; d + 1];
        for mm in 0..self.m {
            let off = mm * d;
            let x = &z[off..off + d];
            // Ball: ψ = K² − ‖x‖², ∇ψ = −2x, ∇²ψ = −2I.
            let psi = self.k2 - dot(x, x);
            for a in 0..d {
                g[off + a] += 2.0 * x[a] / psi;
                for c in 0..d {
                    h[(off + a) * n + off + c] += 4.0 * x[a] * x[c] / (psi * psi);
                }
                h[(off + a) * n + off + a] += 2.0 / psi;
            }
            // Cone: ψ = s² − xᵀAx, ∇ψ = (−2Ax, 2s), ∇²ψ = diag(−2A, 2).
            if let Some(si) = self.s_index[mm] {
                let s = z[si];
                let ga = &self.ginv[mm];
                let mut ax = vec![0.0; d];
                for r in 0..d {
                    for c in 0..d {
                        ax[r] += ga[r * d + c] * x[c];
                    }
                }
                let psi = s * s - dot(x, &ax);
                for a in 0..d {
                    grad_psi[a] = -2.0 * ax[a];
                }
                grad_psi[d] = 2.0 * s;
                let idx = |k: usize| if k < d { off + k } else { si };
                for a in 0..=d {
                    g[idx(a)] -= grad_psi[a] / psi;
                    for c in 0..=d {
                        h[idx(a) * n + idx(c)] += grad_psi[a] * grad_psi[c] / (psi * psi);
                    }
                }
                for a in 0..d {
                    for c in 0..d {
                        h[(off + a) * n + off + c] += 2.0 * ga[a * d + c] / psi;
                    }
                }
                h[si * n + si] -= 2.0 / psi;
            }
        }
    }

    /// Solves one subproblem with per-agent objective vectors `w`.
    pub(crate) fn solve(&self, w: &[DVector<f64>]) -> Result<SubSolution> {
        let (m, d, n) = (self.m, self.d, self.n);
        let mut wx = vec![0.0; n];
        for mm in 0..m {
            for j in 0..d {
                wx[mm * d + j] = w[mm][j];
            }
        }
        let scale: f64 = w.iter().map(|v| v.norm()).sum::<f64>() * self.set.k();
        if scale == 0.0 {
            return Ok(self.finish(&self.z0, &wx, None, false));
        }
        let mut z = self.z0.clone();
        let mut t = self.degree / scale;
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        let mut dz = vec![0.0; n];
        let mut trial = vec![0.0; n];
        loop {
            let mut converged = false;
            for _ in 0..MAX_NEWTON {
                self.grad_hess(&z, t, &wx, &mut g, &mut h);
                for (o, gi) in dz.iter_mut().zip(&g) {
                    *o = -gi;
                }
                if !cholesky_solve(&mut h, n, &mut dz) {
                    return self.fallback(&z, &wx, "singular Newton system");
                }
                let slope = dot(&g, &dz);
                let last = self.degree / t <= GAP_TOL;
                if -slope / 2.0 <= if last { NEWTON_TOL } else { CENTERING_TOL } {
                    converged = true;
                    break;
                }
                let phi0 = self.barrier(&z).expect("iterate is interior");
                let lin = dot(&wx, &dz);
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    for k in 0..n {
                        trial[k] = z[k] + step * dz[k];
                    }
                    if let Some(phi) = self.barrier(&trial) {
                        let change = -t * step * lin + (phi - phi0);
                        if change <= ARMIJO * step * slope {
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !accepted {
                    // No further decrease is resolvable in floating point.
                    converged = -slope / 2.0 <= 1e-6;
                    break;
                }
                std::mem::swap(&mut z, &mut trial);
            }
            if !converged {
                return self.fallback(&z, &wx, "centering did not converge");
            }
            if self.degree / t <= GAP_TOL {
                break;
            }
            t *= T_GROWTH;
        }
        Ok(self.finish(&z, &wx, Some(t), false))
    }

    fn finish(&self, z: &[f64], wx: &[f64], t: Option<f64>, fallback: bool) -> SubSolution {
        let (m, d, n) = (self.m, self.d, self.n);
        let x = DMatrix::from_fn(m, d, |i, j| z[i * d + j]);
        let value = dot(&wx[..m * d], &z[..m * d]);
        let multipliers = DVector::from_iterator(
            self.b.len(),
            self.b.iter().enumerate().map(|(i, bi)| match t {
                Some(t) => 1.0 / (t * (bi - dot(&self.rows[i * n..(i + 1) * n], z))),
                None => 0.0,
            }),
        );
        SubSolution {
            action: ActionProfile::new(x),
            value,
            multipliers,
            fallback,
        }
    }

    /// Feasible ascent along the objective with radial pull-back towards
    /// the origin, used only when the barrier method breaks down.
    fn fallback(&self, start: &[f64], wx: &[f64], why: &str) -> Result<SubSolution> {
        warn!("barrier method failed ({why}); using feasible ascent");
        let md = self.m * self.d;
        let wn = dot(&wx[..md], &wx[..md]).sqrt();
        let mut x: Vec<f64> = start[..md].to_vec();
        if !self.x_feasible(&x) {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut value = dot(&wx[..md], &x);
        let mut step = self.set.k();
        while step > 1e-12 {
            let cand: Vec<f64> = x.iter().zip(wx).map(|(xi, wi)| xi + step * wi / wn).collect();
            let (mut lo, mut hi) = (0.0, 1.0);
            if !self.x_feasible(&cand) {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let scaled: Vec<f64> = cand.iter().map(|v| v * mid).collect();
                    if self.x_feasible(&scaled) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            } else {
                lo = 1.0;
            }
            let next: Vec<f64> = cand.iter().map(|v| v * lo).collect();
            let nv = dot(&wx[..md], &next);
            if nv > value {
                x = next;
                value = nv;
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        let mut z = vec![0.0; self.n];
        z[..md].copy_from_slice(&x);
        Ok(self.finish(&z, wx, None, true))
    }

    fn x_feasible(&self, x: &[f64]) -> bool {
        let prof = ActionProfile::new(DMatrix::from_fn(self.m, self.d, |i, j| x[i * self.d + j]));
        self.set.slacks(&prof).iter().all(|&s| s >= 0.0) && prof.max_agent_norm() <= self.set.k()
    }
}

/// Solves a single subproblem from scratch.
pub fn solve_subproblem(set: &ConservativeSet, w: &[DVector<f64>]) -> Result<SubSolution> {
    if w.len() != set.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: set.n_agents(),
            got: w.len(),
        });
    }
    Prepared::new(set)?.solve(w)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place Cholesky solve of `H x = rhs`; `rhs` is overwritten with `x`.
fn cholesky_solve(h: &mut [f64], n: usize, rhs: &mut [f64]) -> bool {
    for j in 0..n {
        let mut diag = h[j * n + j];
        for k in 0..j {
            diag -= h[j * n + k] * h[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let l = diag.sqrt();
        h[j * n + j] = l;
        for i in j + 1..n {
            let mut v = h[i * n + j];
            for k in 0..j {
                v -= h[i * n + k] * h[j * n + k];
            }
            h[i * n + j] = v / l;
        }
    }
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v -= h[i * n + k] * rhs[k];
        }
        rhs[i] = v / h[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = rhs[i];
        for k in i + 1..n {
            v -= h[k * n + i] * rhs[k];
        }
        rhs[i] = v / h[i * n + i];
    }
    true
}
