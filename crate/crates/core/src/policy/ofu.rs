//! Optimistic action selection.
//!
//! The optimistic bonus `β_m ‖G_m^{-1/2} x_m‖_∞` is written as a maximum over
//! a coordinate `i_m` and a sign `γ_m`, which turns the joint problem into
//! one convex subproblem per assignment `{(i_m, γ_m)}_m`. Agents are coupled
//! through the safety rows, so all `(2d)^M` assignments are candidates.
//! Agents with `c_m = 0` or `β_m = 0` have a single assignment.
//!
//! Assignments are indexed in mixed radix with agent 0 most significant and,
//! within an agent, options ordered `(i = 0, +), (i = 0, −), (i = 1, +), …`.
//!
//! Subproblems whose Lagrangian bound (relaxing only the linear rows, with
//! multipliers taken from already solved subproblems) falls below the
//! incumbent are skipped. The bound is
//! `λᵀb + Σ_m K·dist(w_m − (Σ_i λ_i a_im) θ̂_m, E_m)` with the ellipsoid
//! `E_m = {y : yᵀ G_m y <= (Σ_i λ_i |a_im| β_m)²}`.

use nalgebra::{DMatrix, DVector};

use super::socp::{Prepared, SubSolution, GAP_TOL};
use super::{ActionProfile, AgentView, ConservativeSet};
use crate::error::{Error, Result};

/// Values closer than this are ties, resolved by the lower index.
pub const TIE_TOL: f64 = 1e-8;

/// Bound excess under which a later-indexed assignment is not solved.
const PRUNE_SLACK: f64 = TIE_TOL + 3.0 * GAP_TOL;

#[derive(Debug, Clone)]
pub struct OfuChoice {
    pub action: ActionProfile,
    /// Optimistic objective `Σ_m c_m θ̃_mᵀ x_m`.
    pub value: f64,
    /// Enumeration index of the winning assignment.
    pub combo: usize,
    /// Per-agent `(i_m, γ_m)`, or `None` for single-option agents.
    pub assignment: Vec<Option<(usize, f64)>>,
    /// Optimistic parameters `θ̃_m = θ̂_m + γ_m β_m G_m^{-1/2} e_{i_m}` as rows.
    pub theta_tilde: DMatrix<f64>,
    pub multipliers: DVector<f64>,
    /// Number of subproblems actually solved.
    pub solved: usize,
    /// Number of enumerated subproblems.
    pub total: usize,
    /// Whether any solved subproblem needed the fallback method.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveReport {
    pub choice: OfuChoice,
    /// Optimal value of every subproblem, by enumeration index.
    pub values: Vec<f64>,
}

struct Options {
    per_agent: Vec<Vec<Option<(usize, f64)>>>,
    /// `θ̃` per agent per option.
    theta: Vec<Vec<DVector<f64>>>,
    /// `c_m θ̃` per agent per option.
    w: Vec<Vec<DVector<f64>>>,
    total: usize,
}

impl Options {
    fn new(c: &[f64], set: &ConservativeSet) -> Self {
        let d = set.dim();
        let mut per_agent = Vec::new();
        let mut theta = Vec::new();
        let mut w = Vec::new();
        for (cm, agent) in c.iter().zip(set.agents()) {
            let opts: Vec<Option<(usize, f64)>> = if *cm == 0.0 || agent.beta == 0.0 {
                vec![None]
            } else {
                (0..d)
                    .flat_map(|i| [Some((i, 1.0)), Some((i, -1.0))])
                    .collect()
            };
            let th: Vec<DVector<f64>> = opts.iter().map(|o| optimistic(agent, *o)).collect();
            w.push(th.iter().map(|t| t * *cm).collect());
            theta.push(th);
            per_agent.push(opts);
        }
        let total = per_agent.iter().map(|o| o.len()).product();
        Self {
            per_agent,
            theta,
            w,
            total,
        }
    }

    fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.per_agent.len()];
        for m in (0..self.per_agent.len()).rev() {
            let n = self.per_agent[m].len();
            out[m] = idx % n;
            idx /= n;
        }
        out
    }

    fn objective(&self, digits: &[usize]) -> Vec<DVector<f64>> {
        digits
            .iter()
            .enumerate()
            .map(|(m, &o)| self.w[m][o].clone())
            .collect()
    }

    fn choice(&self, idx: usize, sol: SubSolution, solved: usize, fallback: bool) -> OfuChoice {
        let digits = self.decode(idx);
        let d = self.theta[0][0].len();
        let theta_tilde =
            DMatrix::from_fn(digits.len(), d, |m, j| self.theta[m][digits[m]][j]);
        OfuChoice {
            action: sol.action,
            value: sol.value,
            combo: idx,
            assignment: digits
                .iter()
                .enumerate()
                .map(|(m, &o)| self.per_agent[m][o])
                .collect(),
            theta_tilde,
            multipliers: sol.multipliers,
            solved,
            total: self.total,
            fallback,
        }
    }
}

fn optimistic(agent: &AgentView, opt: Option<(usize, f64)>) -> DVector<f64> {
    match opt {
        None => agent.theta_hat.clone(),
        Some((i, gamma)) => &agent.theta_hat + agent.gram_inv_sqrt.column(i) * (gamma * agent.beta),
    }
}

/// Distance from `v` to `{y : yᵀ G y <= μ²}`, never underestimated.
///
/// `G` is given by its eigen-decomposition. The returned value is the
/// distance to a point of the ellipsoid, so rounding only makes it larger.
pub(crate) fn ellipsoid_distance(
    v: &DVector<f64>,
    eig_values: &DVector<f64>,
    eig_vectors: &DMatrix<f64>,
    mu: f64,
) -> f64 {
    if mu <= 0.0 {
        return v.norm();
    }
    let vt = eig_vectors.transpose() * v;
    let g = eig_values;
    let mu2 = mu * mu;
    let h = |tau: f64| -> f64 {
        vt.iter()
            .zip(g.iter())
            .map(|(vi, gi)| gi * vi * vi / (1.0 + tau * gi).powi(2))
            .sum()
    };
    if h(0.0) <= mu2 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = (vt.iter().zip(g.iter()).map(|(vi, gi)| vi * vi / gi).sum::<f64>()).sqrt() / mu;
    let mut tau = 0.0;
    for _ in 0..100 {
        let hv = h(tau);
        if (hv - mu2).abs() <= 1e-15 * mu2 {
            break;
        }
        if hv > mu2 {
            lo = tau;
        } else {
            hi = tau;
        }
        // Newton on 1/√h(τ) − 1/μ, which is close to linear in τ.
        let dh: f64 = -2.0
            * vt.iter()
                .zip(g.iter())
                .map(|(vi, gi)| gi * gi * vi * vi / (1.0 + tau * gi).powi(3))
                .sum::<f64>();
        let phi = 1.0 / hv.sqrt() - 1.0 / mu;
        let dphi = -0.5 * hv.powf(-1.5) * dh;
        let mut next = tau - phi / dphi;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - tau).abs() <= 1e-16 * (1.0 + tau) {
            break;
        }
        tau = next;
    }
    let mut z: Vec<f64> = vt
        .iter()
        .zip(g.iter())
        .map(|(vi, gi)| vi / (1.0 + tau * gi))
        .collect();
    let qz: f64 = z.iter().zip(g.iter()).map(|(zi, gi)| gi * zi * zi).sum();
    if qz > mu2 {
        let s = mu / qz.sqrt();
        z.iter_mut().for_each(|zi| *zi *= s);
    }
    vt.iter()
        .zip(&z)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lagrangian bound of every assignment for multipliers `lambda`.
fn bounds(opts: &Options, set: &ConservativeSet, lambda: &DVector<f64>) -> Vec<f64> {
    let k = set.k();
    let base = lambda.dot(set.b());
    let per_agent: Vec<Vec<f64>> = set
        .agents()
        .iter()
        .enumerate()
        .map(|(m, agent)| {
            let coef: f64 = (0..lambda.len()).map(|i| lambda[i] * set.a()[(i, m)]).sum();
            let mu: f64 = (0..lambda.len())
                .map(|i| lambda[i] * set.a()[(i, m)].abs() * agent.beta)
                .sum();
            opts.w[m]
                .iter()
                .map(|w| {
                    let v = w - &agent.theta_hat * coef;
                    k * ellipsoid_distance(&v, &agent.eig_values, &agent.eig_vectors, mu)
                })
                .collect()
        })
        .collect();
    (0..opts.total)
        .map(|idx| {
            base + opts
                .decode(idx)
                .iter()
                .enumerate()
                .map(|(m, &o)| per_agent[m][o])
                .sum::<f64>()
        })
        .collect()
}

fn check_inputs(c: &[f64], set: &ConservativeSet) -> Result<()> {
    if c.len() != set.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: set.n_agents(),
            got: c.len(),
        });
    }
    if let Some((m, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidSpec(format!(
            "reward weight c[{m}] = {v} must be nonnegative"
        )));
    }
    Ok(())
}

fn better(value: f64, idx: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bv, bi)) => value > bv + TIE_TOL || (value >= bv - TIE_TOL && idx < bi),
    }
}

/// Optimistic selection that remembers the previous round's winner and
/// multipliers to order and prune the enumeration.
#[derive(Debug, Clone, Default)]
pub struct OfuSolver {
    last: Option<(usize, DVector<f64>)>,
}

impl OfuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn select(&mut self, c: &[f64], set: &ConservativeSet) -> Result<OfuChoice> {
        check_inputs(c, set)?;
        let opts = Options::new(c, set);
        let prep = Prepared::new(set)?;
        let mut solved = vec![false; opts.total];
        let mut ub = vec![f64::INFINITY; opts.total];
        let mut best: Option<(f64, usize, SubSolution)> = None;
        let mut n_solved = 0;
        let mut fallback = false;

        let tighten = |ub: &mut Vec<f64>, lambda: &DVector<f64>| {
            for (u, b) in ub.iter_mut().zip(bounds(&opts, set, lambda)) {
                *u = u.min(b);
            }
        };

        let mut first = None;
        if let Some((idx, lambda)) = &self.last {
            if *idx < opts.total {
                first = Some(*idx);
            }
            if lambda.len() == set.b().len() {
                tighten(&mut ub, lambda);
            }
        }
        loop {
            let next = match first.take() {
                Some(i) => Some(i),
                None => {
                    // Highest remaining bound, lowest index among near
                    // equals. A later index whose bound exceeds the incumbent
                    // by less than the tie tolerance plus the solver gap
                    // cannot improve on it by more than that.
                    let incumbent = best.as_ref().map(|(v, i, _)| (*v, *i));
                    let open = |i: usize| {
                        !solved[i]
                            && incumbent.is_none_or(|(bv, bi)| i < bi || ub[i] > bv + PRUNE_SLACK)
                    };
                    let top = (0..opts.total)
                        .filter(|&i| open(i))
                        .map(|i| ub[i])
                        .fold(f64::NEG_INFINITY, f64::max);
                    (0..opts.total).find(|&i| open(i) && ub[i] >= top - TIE_TOL)
                }
            };
            let Some(idx) = next else { break };
            if let Some((bv, _, _)) = &best {
                if ub[idx] < bv - TIE_TOL {
                    break;
                }
            }
            let sol = prep
                .solve(&opts.objective(&opts.decode(idx)))
                .map_err(|e| Error::Solver(format!("subproblem {idx}: {e}")))?;
            solved[idx] = true;
            n_solved += 1;
            fallback |= sol.fallback;
            ub[idx] = f64::NEG_INFINITY;
            if !sol.fallback {
                tighten(&mut ub, &sol.multipliers);
            }
            if better(sol.value, idx, best.as_ref().map(|(v, i, _)| (*v, *i))) {
                best = Some((sol.value, idx, sol));
            }
        }
        let (_, idx, sol) = best.expect("at least one assignment is enumerated");
        self.last = Some((idx, sol.multipliers.clone()));
        Ok(opts.choice(idx, sol, n_solved, fallback))
    }
}

/// Optimistic selection with pruning, without memory of earlier rounds.
pub fn ofu_select(c: &[f64], set: &ConservativeSet) -> Result<OfuChoice> {
    OfuSolver::new().select(c, set)
}

/// Solves every enumerated subproblem; used to audit [`ofu_select`].
pub fn ofu_select_exhaustive(c: &[f64], set: &ConservativeSet) -> Result<ExhaustiveReport> {
    check_inputs(c, set)?;
    let opts = Options::new(c, set);
    let prep = Prepared::new(set)?;
    let mut values = Vec::with_capacity(opts.total);
    let mut best: Option<(f64, usize, SubSolution)> = None;
    let mut fallback = false;
    for idx in 0..opts.total {
        let sol = prep.solve(&opts.objective(&opts.decode(idx)))?;
        fallback |= sol.fallback;
        values.push(sol.value);
        if better(sol.value, idx, best.as_ref().map(|(v, i, _)| (*v, *i))) {
            best = Some((sol.value, idx, sol));
        }
    }
    let (_, idx, sol) = best.expect("at least one assignment is enumerated");
    Ok(ExhaustiveReport {
        choice: opts.choice(idx, sol, opts.total, fallback),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::AgentEstimator;
    use crate::geometry::{build_simplex, Polytope, SimplexSpec};
    use crate::policy::conservative_safe_constraints;
    use crate::rng::{stream, StreamKind};
    use rand::Rng;

    #[test]
    fn ellipsoid_distance_matches_brute_force() {
        let mut rng = stream(1, StreamKind::Exploration, 0);
        for _ in 0..200 {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let g = &a * a.transpose() + DMatrix::identity(2, 2) * 0.2;
            let eig = g.clone().symmetric_eigen();
            let v = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let mu = rng.random_range(0.0..1.0);
            let dist = ellipsoid_distance(&v, &eig.eigenvalues, &eig.eigenvectors, mu);
            // Oracle: boundary parametrisation y = μ G^{-1/2} (cos φ, sin φ).
            let gis = {
                let s = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
            };
            let inside = v.dot(&(&g * &v)) <= mu * mu;
            let brute = if inside {
                0.0
            } else {
                (0..20_000)
                    .map(|k| {
                        let phi = k as f64 / 20_000.0 * std::f64::consts::TAU;
                        let y = &gis * DVector::from_vec(vec![phi.cos(), phi.sin()]) * mu;
                        (&v - y).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            assert!(dist <= brute + 1e-9, "{dist} > {brute}");
            assert!(dist >= brute - 1e-4, "{dist} << {brute}");
        }
    }

    fn random_set(seed: u64) -> (ConservativeSet, Polytope) {
        let poly = build_simplex(&SimplexSpec::new(vec![1.0, 0.25, 0.5]).unwrap());
        let mut rng = stream(seed, StreamKind::Exploration, 0);
        let mut ests: Vec<AgentEstimator> =
            (0..3).map(|_| AgentEstimator::new(3, 0.1, 2.0)).collect();
        let n = rng.random_range(5..400);
        for e in ests.iter_mut() {
            for _ in 0..n {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-0.1..0.1));
                e.update(&x, rng.random_range(-0.05..0.05)).unwrap();
            }
        }
        let betas: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.5)).collect();
        (
            conservative_safe_constraints(&poly, &ests, &betas, 2.0).unwrap(),
            poly,
        )
    }

    #[test]
    fn pruned_matches_exhaustive() {
        let c = [0.8, 0.1, 0.1];
        let mut warm = OfuSolver::new();
        for seed in 0..12 {
            let (set, _) = random_set(seed);
            let full = ofu_select_exhaustive(&c, &set).unwrap();
            assert_eq!(full.values.len(), 216);
            let max = full.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((full.choice.value - max).abs() <= TIE_TOL);
            let pruned = ofu_select(&c, &set).unwrap();
            assert!((pruned.value - max).abs() <= 2.0 * TIE_TOL);
            assert!(set.is_feasible(&pruned.action));
            let w = warm.select(&c, &set).unwrap();
            assert!((w.value - max).abs() <= 2.0 * TIE_TOL);
        }
    }

    #[test]
    fn value_dominates_sampled_feasible_points() {
        let c = [0.1, 0.1, 0.8];
        let (set, _) = random_set(99);
        let choice = ofu_select(&c, &set).unwrap();
        let mut rng = stream(100, StreamKind::Exploration, 0);
        let opts = Options::new(&c, &set);
        for _ in 0..2000 {
            // Random direction, pulled back to a random point of D_t on that ray.
            let dir = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let (mut lo, mut hi) = (0.0, 2.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if set.is_feasible(&ActionProfile::new(&dir * mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = ActionProfile::new(&dir * (lo * rng.random_range(0.0..=1.0)));
            assert!(set.is_feasible(&x));
            // Best assignment for this fixed x.
            let mut obj = 0.0;
            for m in 0..3 {
                let xm = x.agent(m);
                obj += opts.w[m]
                    .iter()
                    .map(|w| w.dot(&xm))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            assert!(choice.value >= obj - 1e-6);
        }
    }

    #[test]
    fn optimistic_value_matches_theta_tilde() {
        let c = [0.1, 0.8, 0.1];
        let (set, _) = random_set(7);
        let ch = ofu_select(&c, &set).unwrap();
        let f: f64 = (0..3)
            .map(|m| c[m] * ch.theta_tilde.row(m).dot(&ch.action.matrix().row(m)))
            .sum();
        assert!((f - ch.value).abs() < 1e-12);
        assert_eq!(ch.total, 216);
    }

    #[test]
    fn zero_radius_is_single_subproblem() {
        let poly = build_simplex(&SimplexSpec::new(vec![1.0, 0.25, 0.5]).unwrap());
        let o = -1.0 / 13.0;
        let theta = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.5, o, o, o, o, o, o]);
        let set = ConservativeSet::exact(&poly, &theta, 2.0).unwrap();
        let ch = ofu_select(&[0.8, 0.1, 0.1], &set).unwrap();
        assert_eq!(ch.total, 1);
        // Best vertex of the simplex for c = (0.8, 0.1, 0.1) is (13/14, −1/14, −1/14).
        let y = ch.action.responses(&theta);
        assert!((y[0] - 13.0 / 14.0).abs() < 1e-6, "{y}");
        assert!((y[1] + 1.0 / 14.0).abs() < 1e-6);
        let zero = ofu_select(&[0.0, 0.0, 0.0], &set).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(set.is_feasible(&zero.action));
    }

    #[test]
    fn rejects_negative_weights() {
        let (set, _) = random_set(3);
        assert!(ofu_select(&[-0.1, 0.5, 0.5], &set).is_err());
        assert!(ofu_select(&[0.5, 0.5], &set).is_err());
    }
}
