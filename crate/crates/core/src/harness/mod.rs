//! Simulation of the safe private learner against a known environment:
//! per-round regret and audits, the finite-horizon regret bound and the
//! reproduction sweep.

mod config;
mod experiment;
mod output;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimation::{beta, in_confidence_set, AgentEstimator, ConfidenceParams};
use crate::geometry::{self, lp, apply_scaling, Polytope, ScalingTransform};
use crate::policy::{
    self, is_truly_safe, known_safe_set, lambda_check, plan_phases, plan_with_override,
    pure_explore_action, ActionProfile, AgentView, ConservativeSet, OfuSolver, PhaseInputs,
    PhasePlan,
};
use crate::privacy::privatize;
use crate::rng::{stream, StreamKind};

pub use config::{
    experiment_privacy_vectors, vector_id, ExperimentConfig, PrivacyBlock, EXPERIMENT_C,
    EXPERIMENT_LEVELS,
};
pub use experiment::{
    capped_t_prime, normalized_average, reproduce_experiment, run_sweep, summarize,
    thread_count, Normalization, NormalizedCurve, ReproduceOptions, Reproduction, RunSummary, RunTrace,
    THREADS_ENV,
};
pub use output::{write_rounds, write_summary, ROUND_HEADER, SUMMARY_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub phase: Phase,
    pub action: ActionProfile,
    /// Expected responses `θ_{*,m}ᵀ x_m`.
    pub y: DVector<f64>,
    /// Privatized responses shared by the agents.
    pub u: DVector<f64>,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// `f* − f̃_t` in optimistic rounds, the whole regret while exploring.
    pub term1: f64,
    /// `f̃_t − f(Θ*X_t)` in optimistic rounds, zero while exploring.
    pub term2: f64,
    pub safety_violated: bool,
    /// `θ_{*,m} ∈ C_{t,m}` for every agent, for the sets used this round.
    pub covered: bool,
    /// Subproblems solved by the optimistic step (zero while exploring).
    pub solved: usize,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub plan: PhasePlan,
    pub f_star: f64,
    pub records: Vec<RoundRecord>,
}

impl Episode {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| r.safety_violated).count()
    }

    pub fn coverage_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        self.records.iter().filter(|r| r.covered).count() as f64 / self.records.len() as f64
    }

    pub fn covered_throughout(&self) -> bool {
        self.records.iter().all(|r| r.covered)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub action: ActionProfile,
    /// `f(Θ*X*)`.
    pub value: f64,
    /// Optimal value of the response-space LP used as a cross-check.
    pub lp_value: f64,
}

/// Relative agreement required between the two optimum computations.
pub const ORACLE_TOL: f64 = 1e-6;

/// Solves the true problem with the optimistic solver at zero radius and
/// checks it against `max cᵀy` over `Y ∩ Π_m [−K‖θ_m‖, K‖θ_m‖]`.
pub fn oracle_optimum(cfg: &ExperimentConfig) -> Result<OracleOptimum> {
    let set = ConservativeSet::exact(&cfg.safe_set, &cfg.theta_star, cfg.k)?;
    let choice = policy::ofu_select(&cfg.c_reward, &set)?;
    let value = reward(&cfg.c_reward, &choice.action.responses(&cfg.theta_star));

    let m = cfg.m;
    let poly = &cfg.safe_set;
    let mut g = DMatrix::zeros(poly.n_rows() + 2 * m, m);
    let mut h = Vec::with_capacity(poly.n_rows() + 2 * m);
    g.rows_mut(0, poly.n_rows()).copy_from(poly.a());
    h.extend(poly.b().iter().copied());
    for i in 0..m {
        let reach = cfg.k * cfg.theta_star.row(i).norm();
        g[(poly.n_rows() + 2 * i, i)] = 1.0;
        g[(poly.n_rows() + 2 * i + 1, i)] = -1.0;
        h.push(reach);
        h.push(reach);
    }
    let lp_value = match lp::maximize(&cfg.c_reward, &g, &h)? {
        lp::LpOutcome::Optimal { value, .. } => value,
        _ => return Err(Error::InfeasibleSafeSet("true problem has no optimum".into())),
    };
    if (lp_value - value).abs() > ORACLE_TOL * lp_value.abs().max(1.0) {
        return Err(Error::Solver(format!(
            "oracle mismatch: optimistic solver {value}, LP {lp_value}"
        )));
    }
    Ok(OracleOptimum {
        action: choice.action,
        value,
        lp_value,
    })
}

fn reward(c: &[f64], y: &DVector<f64>) -> f64 {
    c.iter().zip(y.iter()).map(|(c, y)| c * y).sum()
}

/// Derived quantities shared by the episode and the bound.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ConfidenceParams,
    pub lambda_check: f64,
    /// `β_{T,m}` at the horizon.
    pub beta_t: Vec<f64>,
    /// Safe set scaled by `diag(1/β_{T,m})`.
    pub scaled: Polytope,
    pub h_max: f64,
    pub plan: PhasePlan,
}

/// Radii, exploration-ball eigenvalue bound and phase plan for `alpha` at
/// horizon `horizon`. An override in the config replaces the planned `T'`.
pub fn setup(cfg: &ExperimentConfig, alpha: &[f64], horizon: usize) -> Result<Setup> {
    if alpha.len() != cfg.m {
        return Err(Error::DimensionMismatch {
            expected: cfg.m,
            got: alpha.len(),
        });
    }
    let params = cfg.confidence_params()?;
    params.validate()?;
    let (_, ball) = known_safe_set(&cfg.safe_set, cfg.d, cfg.s, cfg.k)?;
    let lambda_check = lambda_check(ball.radius, cfg.m, cfg.d);
    let beta_t: Vec<f64> = alpha.iter().map(|&a| beta(horizon, a, &params)).collect();
    let scaled = apply_scaling(&cfg.safe_set, &ScalingTransform::new(beta_t.clone())?)?;
    let h_max = geometry::max_shrinkage(&scaled)?;
    let inputs = PhaseInputs {
        k: cfg.k,
        d: cfg.d,
        delta_prime: cfg.delta_prime,
        nu: cfg.nu,
        lambda_check,
        h_max,
        beta_tilde: beta_t.iter().copied().fold(0.0, f64::max),
    };
    let plan = match cfg.t_prime_override {
        Some(t) => plan_with_override(horizon, t, &inputs)?,
        None => plan_phases(horizon, &inputs)?,
    };
    Ok(Setup {
        params,
        lambda_check,
        beta_t,
        scaled,
        h_max,
        plan,
    })
}

/// Runs one episode of `cfg.horizon` rounds with privacy levels `alpha`.
pub fn run_episode(cfg: &ExperimentConfig, alpha: &[f64], seed: u64) -> Result<Episode> {
    cfg.validate()?;
    let setup = setup(cfg, alpha, cfg.horizon)?;
    let scheme = cfg.privacy.scheme(alpha)?;
    let opt = oracle_optimum(cfg)?;
    let f_star = opt.value;
    let (_, ball) = known_safe_set(&cfg.safe_set, cfg.d, cfg.s, cfg.k)?;

    let (m, d) = (cfg.m, cfg.d);
    let mut explore_rng = stream(seed, StreamKind::Exploration, 0);
    let mut env_rng: Vec<_> = (0..m).map(|i| stream(seed, StreamKind::Environment, i)).collect();
    let mut priv_rng: Vec<_> = (0..m).map(|i| stream(seed, StreamKind::Privacy, i)).collect();
    let mut est: Vec<AgentEstimator> = (0..m).map(|_| AgentEstimator::new(d, cfg.nu, cfg.k)).collect();
    let mut solver = OfuSolver::new();
    let theta_rows: Vec<DVector<f64>> = (0..m).map(|i| cfg.theta_star.row(i).transpose()).collect();

    let mut records = Vec::with_capacity(cfg.horizon);
    let mut cum = 0.0;
    for t in 1..=cfg.horizon {
        let at = |e: Error| Error::AtRound {
            round: t,
            source: Box::new(e),
        };
        let betas: Vec<f64> = (0..m)
            .map(|i| beta(est[i].n_updates(), alpha[i], &setup.params))
            .collect();
        let covered = (0..m).all(|i| in_confidence_set(&theta_rows[i], &est[i], betas[i]));

        let (phase, action, optimistic, solved) = if t <= setup.plan.t_prime {
            (Phase::Explore, pure_explore_action(&ball, m, d, &mut explore_rng), None, 0)
        } else {
            let views = (0..m)
                .map(|i| AgentView::from_estimator(&est[i], betas[i]))
                .collect();
            let set = ConservativeSet::new(&cfg.safe_set, views, cfg.k).map_err(at)?;
            let choice = solver.select(&cfg.c_reward, &set).map_err(at)?;
            (Phase::Exploit, choice.action, Some(choice.value), choice.solved)
        };

        let y = action.responses(&cfg.theta_star);
        let mut u = DVector::zeros(m);
        for i in 0..m {
            let eta: f64 = env_rng[i].sample::<f64, _>(StandardNormal) * cfg.r;
            u[i] = privatize(y[i] + eta, i, t, &scheme, &mut priv_rng[i]).u;
            est[i].update(&action.agent(i), u[i]).map_err(at)?;
        }
        let value = reward(&cfg.c_reward, &y);
        let inst = f_star - value;
        cum += inst;
        let (term1, term2) = match optimistic {
            Some(v) => (f_star - v, v - value),
            None => (inst, 0.0),
        };
        records.push(RoundRecord {
            t,
            phase,
            safety_violated: !is_truly_safe(&action, &cfg.theta_star, &cfg.safe_set),
            action,
            y,
            u,
            inst_regret: inst,
            cum_regret: cum,
            term1,
            term2,
            covered,
            solved,
        });
    }
    Ok(Episode {
        plan: setup.plan,
        f_star,
        records,
    })
}

/// The three terms of the finite-horizon regret bound and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretBound {
    pub t_prime: usize,
    /// `2LKS√M T'`.
    pub exploration: f64,
    /// `Lβ̃_T (T − T') Sharp_{Y'}(2√2K/√(2ν + λ̌T'))`.
    pub sharpness: f64,
    /// `L max(H_{Y'}, 2) √(2d log(1 + TK²/(dν)) (T − T') Σ_m β²_{T,m})`.
    pub elliptic: f64,
    pub total: f64,
}

/// Regret bound `r(T, a)` at horizon `horizon` for privacy levels `alpha`.
///
/// Simplex-family safe sets use the closed-form sharpness, which is
/// evaluated even when its argument exceeds the maximum shrinkage; other
/// polytopes use the vertex computation and fail in that case.
pub fn regret_bound(cfg: &ExperimentConfig, alpha: &[f64], horizon: usize) -> Result<RegretBound> {
    let s = setup(cfg, alpha, horizon)?;
    let t_prime = s.plan.t_prime;
    if t_prime >= horizon {
        return Err(Error::HorizonTooShort {
            t_prime: t_prime as f64,
            horizon,
        });
    }
    let l = cfg.lipschitz();
    let (m, d) = (cfg.m as f64, cfg.d as f64);
    let (tt, tp) = (horizon as f64, t_prime as f64);
    let beta_tilde = s.beta_t.iter().copied().fold(0.0, f64::max);
    let delta = 2.0 * 2f64.sqrt() * cfg.k / (2.0 * cfg.nu + s.lambda_check * tp).sqrt();
    let sharp = match s.scaled.simplex_tag() {
        Some(tag) => geometry::simplex_sharpness(tag, delta),
        None => geometry::sharpness(&s.scaled, delta)?,
    };
    let exploration = 2.0 * l * cfg.k * cfg.s * m.sqrt() * tp;
    let sharpness = l * beta_tilde * (tt - tp) * sharp;
    let sum_sq: f64 = s.beta_t.iter().map(|b| b * b).sum();
    let elliptic = l
        * s.h_max.max(2.0)
        * (2.0 * d * (1.0 + tt * cfg.k * cfg.k / (d * cfg.nu)).ln() * (tt - tp) * sum_sq).sqrt();
    Ok(RegretBound {
        t_prime,
        exploration,
        sharpness,
        elliptic,
        total: exploration + sharpness + elliptic,
    })
}
