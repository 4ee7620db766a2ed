#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

use safepriv::allocator::{BudgetInputs, PrivacyVector};
use safepriv::geometry::{build_simplex, SimplexSpec};
use safepriv::harness::ExperimentConfig;
use safepriv::policy::{known_safe_set, lambda_check};

/// Random simplex configuration in which the finite-horizon bound is close
/// to its limit by `T = 1e7`: the log offset vanishes (`ν = K²M/δ'`), `S√ν`
/// is small against the noise radius, and the noise is small enough that the
/// sharpness term dominates without `t'_h` taking over the exploration length.
pub fn asymptotic_config<R: Rng>(rng: &mut R) -> (ExperimentConfig, Vec<f64>) {
    let m: usize = rng.random_range(2..=3);
    let d: usize = rng.random_range(2..=3);
    let k: f64 = rng.random_range(5.0..7.0);
    let delta_prime: f64 = rng.random_range(0.2..0.45);
    let c: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..3.0)).collect();
    let alpha: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut cfg = ExperimentConfig::experiment(1, 10, vec![1]).unwrap();
    cfg.setup_id = "asymptotic".into();
    cfg.m = m;
    cfg.d = d;
    cfg.k = k;
    cfg.s = rng.random_range(1e-5..1e-4);
    cfg.delta_prime = delta_prime;
    cfg.nu = k * k * m as f64 / delta_prime;
    cfg.r = rng.random_range(0.0..0.01);
    cfg.theta_star = DMatrix::zeros(m, d);
    cfg.c_reward = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    cfg.safe_set = build_simplex(&SimplexSpec::new(c).unwrap());
    cfg.privacy.epsilon = rng.random_range(30.0..60.0);
    cfg.privacy.delta = rng.random_range(0.01..0.5);
    cfg.privacy.alpha = Some(alpha.clone());
    cfg.privacy_vectors = vec![alpha.clone()];
    cfg.validate().unwrap();
    (cfg, alpha)
}

/// Allocator inputs matching a config whose safe set is an unscaled simplex.
pub fn budget_inputs(cfg: &ExperimentConfig, u: f64) -> BudgetInputs {
    let tag = cfg.safe_set.simplex_tag().expect("simplex safe set");
    let (_, ball) = known_safe_set(&cfg.safe_set, cfg.d, cfg.s, cfg.k).unwrap();
    BudgetInputs {
        u,
        l: cfg.lipschitz(),
        k: cfg.k,
        s: cfg.s,
        d: cfg.d,
        m: cfg.m,
        sigma: cfg.sigma().unwrap(),
        r: cfg.r,
        c: tag.c.clone(),
        lambda_check: lambda_check(ball.radius, cfg.m, cfg.d),
    }
}

pub fn privacy_vector(alpha: &[f64]) -> PrivacyVector {
    PrivacyVector::new(alpha.to_vec()).unwrap()
}

/// `bound(T) / (T² ln T)^{1/3}`.
pub fn rate_normalized(bound: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    bound / (t * t * t.ln()).cbrt()
}
