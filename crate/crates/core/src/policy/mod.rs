//! Control flow of the safe private learner: the known safe set and its
//! exploration ball, phase planning, the conservative safe set and the
//! optimistic action choice.

mod ofu;
mod socp;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimation::AgentEstimator;
use crate::geometry::Polytope;

pub use ofu::{ofu_select, ofu_select_exhaustive, ExhaustiveReport, OfuChoice, OfuSolver};
pub use socp::{solve_subproblem, SubSolution, GAP_TOL};

/// Slack tolerated by the conservative feasibility test.
pub const CONSERVATIVE_TOL: f64 = 1e-8;
/// Slack tolerated by the ground-truth safety audit.
pub const TRUE_SAFETY_TOL: f64 = 1e-10;

/// Joint action: row `m` is the action `x_m ∈ ℝ^d` of agent `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile {
    x: DMatrix<f64>,
}

impl ActionProfile {
    pub fn new(x: DMatrix<f64>) -> Self {
        Self { x }
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            x: DMatrix::zeros(m, d),
        }
    }

    /// Rebuilds the profile from the stacked vector `X ∈ ℝ^{Md}`.
    pub fn from_flat(flat: &DVector<f64>, m: usize, d: usize) -> Self {
        Self {
            x: DMatrix::from_fn(m, d, |i, j| flat[i * d + j]),
        }
    }

    pub fn from_agents(rows: &[DVector<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        Self {
            x: DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n_agents(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn agent(&self, m: usize) -> DVector<f64> {
        self.x.row(m).transpose()
    }

    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.transpose().iter().copied())
    }

    pub fn max_agent_norm(&self) -> f64 {
        (0..self.n_agents())
            .map(|m| self.x.row(m).norm())
            .fold(0.0, f64::max)
    }

    /// Responses `y_m = θ_mᵀ x_m` for parameters given as rows of `theta`.
    pub fn responses(&self, theta: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n_agents(),
            (0..self.n_agents()).map(|m| self.x.row(m).dot(&theta.row(m))),
        )
    }
}

/// Actions safe for every parameter with `‖θ_m‖ <= S`.
#[derive(Debug, Clone)]
pub struct KnownSafeSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
    s: f64,
    k: f64,
}

impl KnownSafeSet {
    /// Per-row slack `b_i − Σ_m |a_im| S ‖x_m‖`.
    pub fn slacks(&self, x: &ActionProfile) -> DVector<f64> {
        let norms: Vec<f64> = (0..x.n_agents()).map(|m| x.matrix().row(m).norm()).collect();
        DVector::from_iterator(
            self.a.nrows(),
            (0..self.a.nrows()).map(|i| {
                self.b[i]
                    - norms
                        .iter()
                        .enumerate()
                        .map(|(m, n)| self.a[(i, m)].abs() * self.s * n)
                        .sum::<f64>()
            }),
        )
    }

    pub fn contains(&self, x: &ActionProfile) -> bool {
        self.slacks(x).iter().all(|&s| s >= 0.0) && x.max_agent_norm() <= self.k
    }
}

/// Ball `v + B(r/2)` inside the known safe set.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownSafeBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

/// Known safe set of `poly` and an exploration ball centred at the origin
/// with `r = min_i b_i/(S‖a_i‖₁)`, capped so that `r/2 <= K`.
pub fn known_safe_set(
    poly: &Polytope,
    d: usize,
    s: f64,
    k: f64,
) -> Result<(KnownSafeSet, KnownSafeBall)> {
    if let Some((row, &offset)) = poly.b().iter().enumerate().find(|(_, b)| **b <= 0.0) {
        return Err(Error::NoKnownSafeInterior { row, offset });
    }
    let norms = poly.row_l1_norms();
    let mut r = f64::INFINITY;
    for i in 0..poly.n_rows() {
        if norms[i] > 0.0 {
            r = r.min(poly.b()[i] / (s * norms[i]));
        }
    }
    let r = r.min(2.0 * k);
    let set = KnownSafeSet {
        a: poly.a().clone(),
        b: poly.b().clone(),
        s,
        k,
    };
    let ball = KnownSafeBall {
        center: DVector::zeros(poly.dim() * d),
        radius: r,
    };
    Ok((set, ball))
}

/// `λ̌ = r²/(4Md)`, the smallest eigenvalue of each agent's second-moment
/// matrix under uniform sphere sampling of radius `r/2`.
pub fn lambda_check(radius: f64, m: usize, d: usize) -> f64 {
    radius * radius / (4.0 * (m * d) as f64)
}

/// `X = v + (r/2)u` with `u` uniform on the unit sphere of `ℝ^{Md}`.
pub fn pure_explore_action<R: Rng + ?Sized>(
    ball: &KnownSafeBall,
    m: usize,
    d: usize,
    rng: &mut R,
) -> ActionProfile {
    let n = m * d;
    let mut u = loop {
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if u.norm() > 1e-12 {
            break u;
        }
    };
    u.normalize_mut();
    ActionProfile::from_flat(&(&ball.center + u * (ball.radius / 2.0)), m, d)
}

/// Inputs of the pure-exploration length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInputs {
    pub k: f64,
    pub d: usize,
    pub delta_prime: f64,
    pub nu: f64,
    pub lambda_check: f64,
    /// Maximum shrinkage of the scaled safe set.
    pub h_max: f64,
    /// Largest confidence radius at the horizon.
    pub beta_tilde: f64,
}

impl PhaseInputs {
    /// `t_δ' = (8K²/λ̌)·ln(d/δ')`.
    pub fn t_delta_prime(&self) -> f64 {
        8.0 * self.k * self.k / self.lambda_check * (self.d as f64 / self.delta_prime).ln()
    }

    /// `t'_h = 8K²/(λ̌H²) − 2ν/λ̌`.
    pub fn t_h_prime(&self) -> f64 {
        8.0 * self.k * self.k / (self.lambda_check * self.h_max * self.h_max)
            - 2.0 * self.nu / self.lambda_check
    }

    /// `(2/λ̌)(β̃ T)^{2/3}`.
    pub fn t_rate(&self, horizon: usize) -> f64 {
        2.0 / self.lambda_check * (self.beta_tilde * horizon as f64).powf(2.0 / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub horizon: usize,
    pub t_prime: usize,
    pub t_delta_prime: f64,
    pub t_h_prime: f64,
    pub lambda_check: f64,
    /// Set when `t_prime` was supplied by the caller, in which case it need
    /// not dominate `t_delta_prime` and `t_h_prime`.
    pub overridden: bool,
}

/// `T' = ⌈max(t_δ', t'_h, (2/λ̌)(β̃T)^{2/3})⌉`; fails when `T' >= T`.
pub fn plan_phases(horizon: usize, p: &PhaseInputs) -> Result<PhasePlan> {
    if !(p.h_max > 0.0 && p.lambda_check > 0.0) {
        return Err(Error::InvalidSpec(
            "maximum shrinkage and eigenvalue bound must be positive".into(),
        ));
    }
    let t_delta_prime = p.t_delta_prime();
    let t_h_prime = p.t_h_prime();
    let t = t_delta_prime.max(t_h_prime).max(p.t_rate(horizon)).ceil();
    if t >= horizon as f64 {
        return Err(Error::HorizonTooShort {
            t_prime: t,
            horizon,
        });
    }
    Ok(PhasePlan {
        horizon,
        t_prime: t as usize,
        t_delta_prime,
        t_h_prime,
        lambda_check: p.lambda_check,
        overridden: false,
    })
}

/// Plan with a caller-chosen exploration length.
pub fn plan_with_override(horizon: usize, t_prime: usize, p: &PhaseInputs) -> Result<PhasePlan> {
    if t_prime >= horizon {
        return Err(Error::HorizonTooShort {
            t_prime: t_prime as f64,
            horizon,
        });
    }
    Ok(PhasePlan {
        horizon,
        t_prime,
        t_delta_prime: p.t_delta_prime(),
        t_h_prime: p.t_h_prime(),
        lambda_check: p.lambda_check,
        overridden: true,
    })
}

/// Confidence data of one agent as seen by the conservative set.
#[derive(Debug, Clone)]
pub struct AgentView {
    pub theta_hat: DVector<f64>,
    pub beta: f64,
    pub gram_inv: DMatrix<f64>,
    pub gram_inv_sqrt: DMatrix<f64>,
    pub eig_values: DVector<f64>,
    pub eig_vectors: DMatrix<f64>,
}

impl AgentView {
    pub fn from_estimator(est: &AgentEstimator, beta: f64) -> Self {
        let (vals, vecs) = est.gram_eigen();
        Self {
            theta_hat: est.theta_hat().clone(),
            beta,
            gram_inv: est.gram_inv().clone(),
            gram_inv_sqrt: est.gram_inv_sqrt().clone(),
            eig_values: vals.clone(),
            eig_vectors: vecs.clone(),
        }
    }

    /// Exact knowledge of `theta` (zero radius, identity Gram matrix).
    pub fn exact(theta: DVector<f64>) -> Self {
        let d = theta.len();
        Self {
            theta_hat: theta,
            beta: 0.0,
            gram_inv: DMatrix::identity(d, d),
            gram_inv_sqrt: DMatrix::identity(d, d),
            eig_values: DVector::from_element(d, 1.0),
            eig_vectors: DMatrix::identity(d, d),
        }
    }

    /// `‖x‖_{G⁻¹}`.
    pub fn g_inv_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram_inv * x)).max(0.0).sqrt()
    }
}

/// Actions safe for every parameter in the current confidence sets:
/// `Σ_m (a_im θ̂_mᵀx_m + |a_im| β_m ‖x_m‖_{G_m⁻¹}) <= b_i` and `‖x_m‖ <= K`.
#[derive(Debug, Clone)]
pub struct ConservativeSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
    agents: Vec<AgentView>,
    k: f64,
}

impl ConservativeSet {
    pub fn new(poly: &Polytope, agents: Vec<AgentView>, k: f64) -> Result<Self> {
        if agents.len() != poly.dim() {
            return Err(Error::DimensionMismatch {
                expected: poly.dim(),
                got: agents.len(),
            });
        }
        Ok(Self {
            a: poly.a().clone(),
            b: poly.b().clone(),
            agents,
            k,
        })
    }

    /// The true safe set, i.e. zero-radius confidence sets around `theta`.
    pub fn exact(poly: &Polytope, theta: &DMatrix<f64>, k: f64) -> Result<Self> {
        let agents = (0..theta.nrows())
            .map(|m| AgentView::exact(theta.row(m).transpose()))
            .collect();
        Self::new(poly, agents, k)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn agents(&self) -> &[AgentView] {
        &self.agents
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.theta_hat.len())
    }

    pub fn slacks(&self, x: &ActionProfile) -> DVector<f64> {
        let lin: Vec<f64> = (0..self.n_agents())
            .map(|m| x.matrix().row(m).transpose().dot(&self.agents[m].theta_hat))
            .collect();
        let wn: Vec<f64> = (0..self.n_agents())
            .map(|m| self.agents[m].beta * self.agents[m].g_inv_norm(&x.agent(m)))
            .collect();
        DVector::from_iterator(
            self.a.nrows(),
            (0..self.a.nrows()).map(|i| {
                self.b[i]
                    - (0..self.n_agents())
                        .map(|m| self.a[(i, m)] * lin[m] + self.a[(i, m)].abs() * wn[m])
                        .sum::<f64>()
            }),
        )
    }

    pub fn is_feasible(&self, x: &ActionProfile) -> bool {
        self.slacks(x).iter().all(|&s| s >= -CONSERVATIVE_TOL)
            && x.max_agent_norm() <= self.k + CONSERVATIVE_TOL
    }
}

pub fn conservative_safe_constraints(
    poly: &Polytope,
    estimators: &[AgentEstimator],
    betas: &[f64],
    k: f64,
) -> Result<ConservativeSet> {
    if estimators.len() != betas.len() {
        return Err(Error::DimensionMismatch {
            expected: estimators.len(),
            got: betas.len(),
        });
    }
    let agents = estimators
        .iter()
        .zip(betas)
        .map(|(e, &b)| AgentView::from_estimator(e, b))
        .collect();
    ConservativeSet::new(poly, agents, k)
}

/// Ground-truth audit: `A (θ_mᵀx_m)_m <= b` up to [`TRUE_SAFETY_TOL`].
pub fn is_truly_safe(x: &ActionProfile, theta_star: &DMatrix<f64>, poly: &Polytope) -> bool {
    let y = x.responses(theta_star);
    poly.slacks(&y).iter().all(|&s| s >= -TRUE_SAFETY_TOL)
}
